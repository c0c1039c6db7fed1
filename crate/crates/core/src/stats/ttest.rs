use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::StatsError;

/// Which group has the larger mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub feature: String,
    pub group_a: String,
    pub group_b: String,
    pub t_stat: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl TTestResult {
    pub fn direction(&self) -> Direction {
        if self.mean_a > self.mean_b {
            Direction::AGreater
        } else if self.mean_b > self.mean_a {
            Direction::BGreater
        } else {
            Direction::Equal
        }
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    /// `μ_blue > μ_red` style (audio tables).
    pub fn direction_mu(&self) -> String {
        self.render_direction(|g| format!("μ_{g}"))
    }

    /// `red > blue` style (action-unit tables).
    pub fn direction_plain(&self) -> String {
        self.render_direction(|g| g.to_string())
    }

    fn render_direction(&self, name: impl Fn(&str) -> String) -> String {
        let (a, b) = (name(&self.group_a), name(&self.group_b));
        match self.direction() {
            Direction::AGreater => format!("{a} > {b}"),
            Direction::BGreater => format!("{b} > {a}"),
            Direction::Equal => format!("{a} = {b}"),
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Unequal-variance two-sample t-test with a two-sided p-value.
///
/// When both samples are constant but their means differ the statistic is
/// infinite and `p = 0`; `df` then falls back to `n_a + n_b - 2`.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples {
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mean_a, var_a) = mean_var(a);
    let (mean_b, var_b) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (var_a / na, var_b / nb);
    let se2 = sa + sb;
    let result = |t_stat: f64, df: f64, p_value: f64| TTestResult {
        feature: String::new(),
        group_a: "a".into(),
        group_b: "b".into(),
        t_stat,
        df,
        p_value,
        mean_a,
        mean_b,
        n_a: a.len(),
        n_b: b.len(),
    };
    if se2 == 0.0 {
        if mean_a == mean_b {
            return Err(StatsError::ZeroVarianceBoth);
        }
        let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(result(t, na + nb - 2.0, 0.0));
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(result(t, df, student_t_two_sided(t, df)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_case() {
        let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t_stat + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p_value - 0.3466).abs() < 1e-4);
        assert_eq!(r.direction(), Direction::BGreater);
        assert_eq!(r.direction_mu(), "μ_b > μ_a");
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = welch_ttest(&a, &a).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            welch_ttest(&[1.0], &[1.0, 2.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert_eq!(
            welch_ttest(&[3.0, 3.0], &[3.0, 3.0, 3.0]),
            Err(StatsError::ZeroVarianceBoth)
        );
        let r = welch_ttest(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.t_stat, r.p_value), (f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn swapping_negates_t_and_keeps_p() {
        let a = [0.3, 1.9, 2.2, 0.7, 1.1];
        let b = [2.4, 3.1, 1.7, 2.9];
        let ab = welch_ttest(&a, &b).unwrap();
        let ba = welch_ttest(&b, &a).unwrap();
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.df, ba.df);
    }
}
