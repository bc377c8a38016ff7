use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Mean with its standard error (sample standard deviation over √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanSe {
    /// `None` for an empty sample. A single value has zero error.
    pub fn of(values: &[f64]) -> Option<MeanSe> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSe { mean, stderr, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of independence on a rows × columns count table.
/// Columns that are zero in every row are dropped. `None` when fewer than two
/// rows or columns remain.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Option<TestResult> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().any(|&c| c > 0)).collect();
    let width = rows.first()?.len();
    let cols: Vec<usize> = (0..width).filter(|&j| rows.iter().any(|r| r[j] > 0)).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let row_tot: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| r[j] as f64).sum()).collect();
    let col_tot: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j] as f64).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (k, &j) in cols.iter().enumerate() {
            let expected = row_tot[i] * col_tot[k] / total;
            stat += (r[j] as f64 - expected).powi(2) / expected;
        }
    }
    let dof = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    let dist = ChiSquared::new(dof).ok()?;
    Some(TestResult {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}

/// Two-sided Welch t-test. `None` when either sample has fewer than two
/// values or both variances are zero.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TestResult> {
    let (sa, sb) = (MeanSe::of(a)?, MeanSe::of(b)?);
    if sa.n < 2 || sb.n < 2 {
        return None;
    }
    let (va, vb) = (sa.stderr.powi(2), sb.stderr.powi(2));
    let se2 = va + vb;
    if se2 == 0.0 {
        return None;
    }
    let t = (sa.mean - sb.mean) / se2.sqrt();
    let dof = se2.powi(2) / (va.powi(2) / (sa.n - 1) as f64 + vb.powi(2) / (sb.n - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    Some(TestResult {
        statistic: t,
        dof,
        p_value: 2.0 * dist.sf(t.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let m = MeanSe::of(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(m.mean, 4.0);
        assert!((m.stderr - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanSe::of(&[5.0]).unwrap().stderr, 0.0);
        assert!(MeanSe::of(&[]).is_none());
    }

    #[test]
    fn chi_square_two_by_two() {
        // expected counts are all 25; statistic = 4 * 25 / 25 = 4
        let r = chi_square_independence(&[vec![30, 20, 0], vec![20, 30, 0]]).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.dof, 1.0);
        assert!((r.p_value - 0.045500263896).abs() < 1e-9);
        assert!(chi_square_independence(&[vec![3, 4]]).is_none());
    }

    #[test]
    fn welch_matches_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let r = welch_t_test(&a, &b).unwrap();
        // va = 1.6667/4, vb = 10/5
        let (va, vb): (f64, f64) = (5.0 / 12.0, 2.0);
        assert!((r.statistic - (2.5 - 6.0) / (va + vb).sqrt()).abs() < 1e-12);
        let dof = (va + vb).powi(2) / (va * va / 3.0 + vb * vb / 4.0);
        assert!((r.dof - dof).abs() < 1e-12);
        // scipy.stats.ttest_ind(a, b, equal_var=False)
        assert!((r.p_value - 0.06913359319239236).abs() < 1e-9);
    }
}
