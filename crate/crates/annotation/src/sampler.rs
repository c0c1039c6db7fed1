//! Quadrant-stratified sampling of annotation tasks.

use std::collections::{BTreeMap, HashSet};

use mmdl_core::disagreement::{Quadrant, QuadrantPartition};
use mmdl_core::{ExampleRecord, Modality};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOTAL: usize = 204;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("total must be a positive multiple of 4, got {0}")]
    BadTotal(usize),
    #[error("quadrant {quadrant} needs {need} distinct examples but only {have} are available")]
    InsufficientQuadrant {
        quadrant: Quadrant,
        need: usize,
        have: usize,
    },
    #[error("no quadrant partition for {0}")]
    MissingPartition(Modality),
    #[error("example `{0}` has no payload reference for its flagged modality")]
    MissingPayload(String),
}

/// One example to be judged twice by every annotator: first from the flagged
/// modality alone, then with everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    /// Opaque (`t000`, `t001`, ...) so the id reveals nothing about the quadrant.
    pub task_id: String,
    pub example_id: String,
    /// The modality whose plot the example was drawn from; pass 1 shows only it.
    pub modality_flag: Modality,
    pub quadrant: Quadrant,
    #[serde(default)]
    pub payload_refs: BTreeMap<Modality, String>,
}

/// Per-modality quotas for one quadrant; the remainder goes to earlier modalities.
fn quotas(per_quadrant: usize) -> [usize; 3] {
    let (base, rem) = (per_quadrant / 3, per_quadrant % 3);
    [0, 1, 2].map(|i| base + usize::from(i < rem))
}

/// Draws `total / 4` tasks per quadrant without replacement, spread over the
/// three modality plots as evenly as integer division allows.
///
/// A modality plot that runs short in a quadrant is topped up from the other
/// plots of that quadrant. No example appears twice in the list.
pub fn sample_for_annotation(
    partitions: &BTreeMap<Modality, QuadrantPartition>,
    total: usize,
    seed: u64,
) -> Result<Vec<AnnotationTask>, SampleError> {
    if total == 0 || !total.is_multiple_of(4) {
        return Err(SampleError::BadTotal(total));
    }
    for m in Modality::ALL {
        if !partitions.contains_key(&m) {
            return Err(SampleError::MissingPartition(m));
        }
    }
    let per_quadrant = total / 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = HashSet::new();
    let mut drawn: Vec<(String, Modality, Quadrant)> = Vec::with_capacity(total);

    for q in Quadrant::ALL {
        let mut pools: Vec<Vec<String>> = Modality::ALL
            .iter()
            .map(|m| {
                let mut ids = partitions[m].group(q).to_vec();
                ids.sort();
                ids.shuffle(&mut rng);
                ids.reverse(); // pop from the back in shuffled order
                ids
            })
            .collect();
        let take = |pool: &mut Vec<String>, used: &mut HashSet<String>| {
            while let Some(id) = pool.pop() {
                if used.insert(id.clone()) {
                    return Some(id);
                }
            }
            None
        };
        let mut picked = 0;
        for (mi, quota) in quotas(per_quadrant).into_iter().enumerate() {
            for _ in 0..quota {
                match take(&mut pools[mi], &mut used) {
                    Some(id) => {
                        drawn.push((id, Modality::ALL[mi], q));
                        picked += 1;
                    }
                    None => break,
                }
            }
        }
        // top up round-robin from plots with spare examples
        while picked < per_quadrant {
            let mut progressed = false;
            for mi in 0..3 {
                if picked == per_quadrant {
                    break;
                }
                if let Some(id) = take(&mut pools[mi], &mut used) {
                    drawn.push((id, Modality::ALL[mi], q));
                    picked += 1;
                    progressed = true;
                }
            }
            if !progressed {
                return Err(SampleError::InsufficientQuadrant {
                    quadrant: q,
                    need: per_quadrant,
                    have: picked,
                });
            }
        }
    }

    drawn.shuffle(&mut rng);
    let width = (total - 1).to_string().len().max(3);
    Ok(drawn
        .into_iter()
        .enumerate()
        .map(|(i, (example_id, modality_flag, quadrant))| AnnotationTask {
            task_id: format!("t{i:0width$}"),
            example_id,
            modality_flag,
            quadrant,
            payload_refs: BTreeMap::new(),
        })
        .collect())
}

/// Copies each task's payload references from the dataset's label records.
pub fn attach_payloads(
    tasks: &mut [AnnotationTask],
    examples: &[ExampleRecord],
) -> Result<(), SampleError> {
    let by_id: BTreeMap<&str, &ExampleRecord> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();
    for task in tasks {
        let refs = by_id
            .get(task.example_id.as_str())
            .map(|e| e.payload_refs.clone())
            .unwrap_or_default();
        if !refs.contains_key(&task.modality_flag) {
            return Err(SampleError::MissingPayload(task.example_id.clone()));
        }
        task.payload_refs = refs;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmdl_core::disagreement::ConfidencePair;

    /// `sizes[q]` examples per quadrant in every modality plot, ids disjoint
    /// across modalities unless `shared`.
    fn partitions(sizes: [usize; 4], shared: bool) -> BTreeMap<Modality, QuadrantPartition> {
        let conf = |q: Quadrant| match q {
            Quadrant::Red => (0.9, 0.1),
            Quadrant::Green => (0.1, 0.9),
            Quadrant::Blue => (0.9, 0.9),
            Quadrant::Yellow => (0.1, 0.1),
        };
        Modality::ALL
            .iter()
            .map(|&m| {
                let mut pairs = Vec::new();
                for (qi, q) in Quadrant::ALL.into_iter().enumerate() {
                    for i in 0..sizes[qi] {
                        let id = if shared { format!("{q}{i}") } else { format!("{m}-{q}{i}") };
                        let (c_uni, c_multi) = conf(q);
                        pairs.push(ConfidencePair { id, modality: m, c_uni, c_multi });
                    }
                }
                (m, QuadrantPartition::from_pairs(m, pairs))
            })
            .collect()
    }

    #[test]
    fn even_split() {
        let tasks = sample_for_annotation(&partitions([60; 4], false), 204, 1).unwrap();
        assert_eq!(tasks.len(), 204);
        for q in Quadrant::ALL {
            let in_q: Vec<_> = tasks.iter().filter(|t| t.quadrant == q).collect();
            assert_eq!(in_q.len(), 51);
            for m in Modality::ALL {
                assert_eq!(in_q.iter().filter(|t| t.modality_flag == m).count(), 17);
            }
        }
        let ids: HashSet<_> = tasks.iter().map(|t| &t.example_id).collect();
        assert_eq!(ids.len(), 204);
        assert_eq!(tasks[0].task_id, "t000");
    }

    #[test]
    fn quotas_favour_earlier_modalities() {
        assert_eq!(quotas(51), [17, 17, 17]);
        assert_eq!(quotas(2), [1, 1, 0]);
        assert_eq!(quotas(1), [1, 0, 0]);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = partitions([5; 4], false);
        assert_eq!(sample_for_annotation(&p, 4, 3), sample_for_annotation(&p, 4, 3));
        assert_ne!(sample_for_annotation(&p, 16, 3), sample_for_annotation(&p, 16, 4));
    }

    #[test]
    fn short_plot_is_topped_up_from_others() {
        let mut p = partitions([10; 4], false);
        // text has only 2 red examples; audio and video cover the rest
        let text_pairs: Vec<ConfidencePair> = p[&Modality::Text]
            .pairs
            .iter()
            .filter(|c| !(c.c_uni > 0.5 && c.c_multi <= 0.5) || c.id.ends_with("red0") || c.id.ends_with("red1"))
            .cloned()
            .collect();
        p.insert(Modality::Text, QuadrantPartition::from_pairs(Modality::Text, text_pairs));
        let tasks = sample_for_annotation(&p, 24, 0).unwrap();
        let red: Vec<_> = tasks.iter().filter(|t| t.quadrant == Quadrant::Red).collect();
        assert_eq!(red.len(), 6);
        assert_eq!(red.iter().filter(|t| t.modality_flag == Modality::Text).count(), 2);
    }

    #[test]
    fn errors() {
        let p = partitions([10, 60, 60, 60], false);
        assert_eq!(sample_for_annotation(&p, 203, 0), Err(SampleError::BadTotal(203)));
        assert_eq!(sample_for_annotation(&p, 0, 0), Err(SampleError::BadTotal(0)));
        // ten red per plot gives 30 distinct red ids, short of 51
        assert_eq!(
            sample_for_annotation(&p, 204, 0),
            Err(SampleError::InsufficientQuadrant { quadrant: Quadrant::Red, need: 51, have: 30 })
        );
        // shared ids across plots count once
        let shared = partitions([10, 60, 60, 60], true);
        assert_eq!(
            sample_for_annotation(&shared, 204, 0),
            Err(SampleError::InsufficientQuadrant { quadrant: Quadrant::Red, need: 51, have: 10 })
        );
        let mut missing = partitions([10; 4], false);
        missing.remove(&Modality::Audio);
        assert_eq!(
            sample_for_annotation(&missing, 4, 0),
            Err(SampleError::MissingPartition(Modality::Audio))
        );
    }
}
