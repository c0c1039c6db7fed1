use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Split};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

const MIN_EXAMPLES: usize = 10;

/// Split sizes: validation and test are floored, the remainder goes to train.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3], DataError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::BadFractions(fractions));
    }
    if n < MIN_EXAMPLES {
        return Err(DataError::TooFewExamples { n, min: MIN_EXAMPLES });
    }
    // the epsilon keeps exact products such as 10 * 0.1 from flooring down
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let validation = floor(fractions[1]);
    let test = floor(fractions[2]);
    Ok([n - validation - test, validation, test])
}

/// Random unstratified assignment, aligned with the input order.
pub fn split_dataset(
    ids: &[String],
    seed: u64,
    fractions: [f64; 3],
) -> Result<Vec<Split>, DataError> {
    let [train, validation, _] = split_sizes(ids.len(), fractions)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + validation {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i}")).collect()
    }

    fn counts(splits: &[Split]) -> [usize; 3] {
        let mut c = [0; 3];
        for s in splits {
            c[*s as usize] += 1;
        }
        c
    }

    #[test]
    fn documented_sizes() {
        assert_eq!(split_sizes(100, DEFAULT_FRACTIONS).unwrap(), [80, 10, 10]);
        assert_eq!(split_sizes(10, DEFAULT_FRACTIONS).unwrap(), [8, 1, 1]);
        assert_eq!(split_sizes(103, DEFAULT_FRACTIONS).unwrap(), [83, 10, 10]);
        assert_eq!(
            counts(&split_dataset(&ids(103), 7, DEFAULT_FRACTIONS).unwrap()),
            [83, 10, 10]
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            split_sizes(100, [0.8, 0.1, 0.2]),
            Err(DataError::BadFractions(_))
        ));
        assert!(matches!(
            split_sizes(9, DEFAULT_FRACTIONS),
            Err(DataError::TooFewExamples { .. })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split_dataset(&ids(50), 3, DEFAULT_FRACTIONS).unwrap();
        let b = split_dataset(&ids(50), 3, DEFAULT_FRACTIONS).unwrap();
        let c = split_dataset(&ids(50), 4, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn partition_is_exhaustive_and_sized(n in 10usize..400, seed in any::<u64>()) {
            let splits = split_dataset(&ids(n), seed, DEFAULT_FRACTIONS).unwrap();
            // one split per id makes the partition disjoint by construction
            prop_assert_eq!(splits.len(), n);
            let c = counts(&splits);
            prop_assert_eq!(c.iter().sum::<usize>(), n);
            prop_assert_eq!(c, split_sizes(n, DEFAULT_FRACTIONS).unwrap());
        }
    }
}
