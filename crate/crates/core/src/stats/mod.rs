//! Significance testing: test selection, parametric and rank tests, effect
//! sizes, Jensen-Shannon permutation test and activity clustering.
//!
//! All tests are two-sided; the direction of an effect is read from the
//! sign of its effect size, oriented as `a` relative to `b`.

mod cluster;
mod permutation;
mod shapiro;

pub use cluster::{
    activity_clusters, activity_clusters_with, kmeans_1d, ActivityClusters, ClusterScore,
    KMeansFit, DEFAULT_RESTARTS,
};
pub use permutation::{
    permutation_test_jsd, permutation_test_jsd_events, permutation_test_jsd_units,
};
pub use shapiro::shapiro_wilk;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectKind {
    CohenD,
    CliffsDelta,
    CramersV,
    #[serde(rename = "JSD")]
    Jsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub kind: EffectKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub effect_size: EffectSize,
    pub n_a: u64,
    pub n_b: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

impl TestResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Student,
    Welch,
    MannWhitney,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Student => "student_t",
            TestKind::Welch => "welch_t",
            TestKind::MannWhitney => "mann_whitney_u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSelection {
    pub kind: TestKind,
    pub shapiro_p_a: f64,
    pub shapiro_p_b: f64,
    /// Larger sample variance over the smaller one.
    pub variance_ratio: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn select_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestSelection> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "test selection needs at least 3 observations per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (_, pa) = shapiro_wilk(a)?;
    let (_, pb) = shapiro_wilk(b)?;
    let (va, vb) = (variance(a), variance(b));
    let variance_ratio = va.max(vb) / va.min(vb);
    let kind = if pa > alpha && pb > alpha {
        if variance_ratio < 2.0 {
            TestKind::Student
        } else {
            TestKind::Welch
        }
    } else {
        TestKind::MannWhitney
    };
    Ok(TestSelection {
        kind,
        shapiro_p_a: pa,
        shapiro_p_b: pb,
        variance_ratio,
    })
}

/// Runs the test picked by [`select_test`].
pub fn compare(a: &[f64], b: &[f64], alpha: f64) -> Result<(TestSelection, TestResult)> {
    let sel = select_test(a, b, alpha)?;
    let result = match sel.kind {
        TestKind::Student => t_test(a, b, TVariant::Student)?,
        TestKind::Welch => t_test(a, b, TVariant::Welch)?,
        TestKind::MannWhitney => mann_whitney_u(a, b),
    };
    Ok((sel, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TVariant {
    Student,
    Welch,
}

/// Two-sample t-test with Cohen's d. Student's d uses the pooled SD,
/// Welch's uses the root mean of the two variances.
pub fn t_test(a: &[f64], b: &[f64], variant: TVariant) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "t-test needs at least 2 observations per group".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    let diff = mean(a) - mean(b);
    let (se, df, sd) = match variant {
        TVariant::Student => {
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (
                (pooled * (1.0 / na + 1.0 / nb)).sqrt(),
                na + nb - 2.0,
                pooled.sqrt(),
            )
        }
        TVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df, ((va + vb) / 2.0).sqrt())
        }
    };
    if !(se > 0.0) {
        return Err(Error::Degenerate(
            "t-test with zero variance in both groups".into(),
        ));
    }
    let t = diff / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    let name = match variant {
        TVariant::Student => TestKind::Student,
        TVariant::Welch => TestKind::Welch,
    };
    Ok(TestResult {
        test_name: name.name().into(),
        statistic: t,
        p_value: p,
        effect_size: EffectSize {
            kind: EffectKind::CohenD,
            value: diff / sd,
        },
        n_a: a.len() as u64,
        n_b: b.len() as u64,
        df: Some(df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    /// Exact when `n_a * n_b <= 20`, normal approximation otherwise.
    Auto,
    Exact,
    Asymptotic,
}

/// Doubled mid-ranks of `a ++ b`, so ties stay integral.
fn doubled_ranks(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Mid-rank of 1-based positions i+1..=j+1, doubled.
        let r2 = (i + 1 + j + 1) as u64;
        for p in &pooled[i..=j] {
            ranks[p.1] = r2;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Mann-Whitney U with Cliff's delta. `statistic` is U for `a`:
/// `#(a > b) + #(a = b) / 2`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> TestResult {
    mann_whitney_u_with(a, b, MwuMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: MwuMethod) -> TestResult {
    let (na, nb) = (a.len(), b.len());
    let (ranks, ties) = doubled_ranks(a, b);
    let rank_sum2: u64 = ranks[..na].iter().sum();
    // 2U = 2R - na(na + 1)
    let u2 = rank_sum2 as i64 - (na * (na + 1)) as i64;
    let u = u2 as f64 / 2.0;
    let nn = (na * nb) as f64;
    let delta = if nn > 0.0 { 2.0 * u / nn - 1.0 } else { 0.0 };
    let exact = match method {
        MwuMethod::Auto => na * nb <= 20,
        MwuMethod::Exact => true,
        MwuMethod::Asymptotic => false,
    };
    let p = if nn == 0.0 {
        1.0
    } else if exact {
        exact_p(&ranks, na, u2)
    } else {
        let n = (na + nb) as f64;
        let tie_term: f64 = ties
            .iter()
            .map(|&t| (t as f64).powi(3) - t as f64)
            .sum::<f64>()
            / (n * (n - 1.0));
        let var = nn / 12.0 * ((n + 1.0) - tie_term);
        if var <= 0.0 {
            1.0
        } else {
            let z = ((u - nn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
            (2.0 * Normal::standard().sf(z)).min(1.0)
        }
    };
    TestResult {
        test_name: TestKind::MannWhitney.name().into(),
        statistic: u,
        p_value: p,
        effect_size: EffectSize {
            kind: EffectKind::CliffsDelta,
            value: delta,
        },
        n_a: na as u64,
        n_b: nb as u64,
        df: None,
    }
}

/// Exact two-sided p: the share of all `C(N, na)` rank assignments whose
/// doubled U lies at least as far from its mean as the observed one.
fn exact_p(ranks: &[u64], na: usize, u2_obs: i64) -> f64 {
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0.0f64; width]; na + 1];
    ways[0][0] = 1.0;
    for (taken, &r) in ranks.iter().enumerate() {
        let r = r as usize;
        for j in (1..=na.min(taken + 1)).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            let (prev, cur) = (&lo[j - 1], &mut hi[0]);
            for s in (r..width).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let nb = ranks.len() - na;
    let mean2 = (na * nb) as i64;
    let offset = (na * (na + 1)) as i64;
    let observed = (u2_obs - mean2).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (s, &w) in ways[na].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w;
        if (s as i64 - offset - mean2).abs() >= observed {
            extreme += w;
        }
    }
    (extreme / total).min(1.0)
}

/// Pearson chi-squared on a 2 x k table with Cramér's V.
pub fn chi_squared(row_a: &[u64], row_b: &[u64]) -> Result<TestResult> {
    if row_a.len() != row_b.len() {
        return Err(Error::InvalidInput(
            "chi-squared rows differ in length".into(),
        ));
    }
    let k = row_a.len();
    let (ta, tb): (u64, u64) = (row_a.iter().sum(), row_b.iter().sum());
    if ta == 0 || tb == 0 || row_a.iter().zip(row_b).any(|(x, y)| x + y == 0) {
        return Err(Error::Degenerate(
            "chi-squared table has a zero marginal".into(),
        ));
    }
    if k < 2 {
        return Err(Error::Degenerate(
            "chi-squared needs at least two columns".into(),
        ));
    }
    let n = (ta + tb) as f64;
    let mut chi = 0.0;
    for (&x, &y) in row_a.iter().zip(row_b) {
        let col = (x + y) as f64;
        for (obs, row_total) in [(x, ta), (y, tb)] {
            let expected = row_total as f64 * col / n;
            chi += (obs as f64 - expected).powi(2) / expected;
        }
    }
    let df = (k - 1) as f64;
    let p = ChiSquared::new(df)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .sf(chi);
    let v = (chi / n).sqrt().min(1.0);
    Ok(TestResult {
        test_name: "chi_squared".into(),
        statistic: chi,
        p_value: p.clamp(0.0, 1.0),
        effect_size: EffectSize {
            kind: EffectKind::CramersV,
            value: v,
        },
        n_a: ta,
        n_b: tb,
        df: Some(df),
    })
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "{name} is not a normalized distribution (sum {total})"
        )));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, in [0, 1].
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(
            "distributions have different supports".into(),
        ));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(jsd_unchecked(p, q))
}

pub(crate) fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            total += pi * (pi / m).log2();
        }
        if qi > 0.0 {
            total += qi * (qi / m).log2();
        }
    }
    (0.5 * total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal as NormalDist, Uniform};

    fn normals(seed: u64, n: usize, mu: f64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = NormalDist::new(mu, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn t_test_reference_pair() {
        // Closed-form values evaluated at high precision beforehand.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        for variant in [TVariant::Student, TVariant::Welch] {
            let r = t_test(&a, &b, variant).unwrap();
            assert_relative_eq!(r.statistic, -1.0, epsilon = 1e-12);
            assert_relative_eq!(r.df.unwrap(), 8.0, epsilon = 1e-12);
            assert_relative_eq!(r.p_value, 0.346593507087334, epsilon = 1e-9);
            assert_relative_eq!(r.effect_size.value, -0.632455532033676, epsilon = 1e-12);
        }
    }

    #[test]
    fn welch_reference_value() {
        // Independent implementation, frozen.
        let a = [1.2, 3.4, 2.2, 5.1, 4.4, 3.0];
        let b = [2.0, 8.5, 1.1, 9.9, 7.0];
        let r = t_test(&a, &b, TVariant::Welch).unwrap();
        assert_relative_eq!(r.statistic, -1.3391939755238933, epsilon = 1e-10);
        assert_relative_eq!(r.df.unwrap(), 4.872185513763109, epsilon = 1e-9);
        assert_relative_eq!(r.p_value, 0.23958259840451837, epsilon = 1e-8);
    }

    #[test]
    fn t_test_identical_and_degenerate() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = t_test(&a, &a, TVariant::Student).unwrap();
        assert_eq!(
            (r.statistic, r.p_value, r.effect_size.value),
            (0.0, 1.0, 0.0)
        );
        assert!(matches!(
            t_test(&[2.0; 4], &[2.0; 4], TVariant::Welch),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cohen_d_of_one_sd_shift() {
        let b = normals(3, 20_000, 0.0, 1.0);
        let sd = variance(&b).sqrt();
        let a: Vec<f64> = b.iter().map(|v| v + sd).collect();
        let r = t_test(&a, &b, TVariant::Student).unwrap();
        assert!((r.effect_size.value - 1.0).abs() < 0.05);
    }

    #[test]
    fn selection_rules() {
        let a = normals(1, 60, 0.0, 1.0);
        let b = normals(2, 60, 0.0, 1.0);
        assert_eq!(select_test(&a, &b, 0.05).unwrap().kind, TestKind::Student);
        let wide = normals(4, 60, 0.0, 2.0);
        assert_eq!(select_test(&a, &wide, 0.05).unwrap().kind, TestKind::Welch);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let exp = Exp::new(1.0).unwrap();
        let skewed: Vec<f64> = (0..200)
            .map(|_| {
                let v: f64 = exp.sample(&mut rng);
                v * v
            })
            .collect();
        assert_eq!(
            select_test(&a, &skewed, 0.05).unwrap().kind,
            TestKind::MannWhitney
        );
        assert!(select_test(&[1.0, 2.0], &a, 0.05).is_err());
        assert!(select_test(&[1.0; 5], &a, 0.05).is_err());
    }

    #[test]
    fn mwu_exhaustive_small_case() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.effect_size.value, -1.0);
        assert_relative_eq!(r.p_value, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mwu_boundaries() {
        let a = [3.0, 1.0, 2.0];
        let r = mann_whitney_u(&a, &a);
        assert_eq!(r.effect_size.value, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = mann_whitney_u(
            &[10.0, 11.0, 12.0, 13.0, 14.0, 15.0],
            &[1.0, 2.0, 3.0, 4.0, 5.0],
        );
        assert_eq!(r.effect_size.value, 1.0);
        let r = mann_whitney_u(&[2.0; 30], &[2.0; 30]);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mwu_asymptotic_with_ties_reference() {
        // Independent implementation, frozen.
        let a = [1.5, 2.0, 2.0, 3.0, 7.0, 8.0, 8.0, 9.0];
        let b = [2.0, 3.0, 3.0, 4.0, 5.0, 10.0, 11.0, 12.0, 12.0, 13.0];
        let r = mann_whitney_u_with(&a, &b, MwuMethod::Asymptotic);
        assert_eq!(r.statistic, 23.0);
        assert_relative_eq!(r.p_value, 0.14056578797613037, epsilon = 1e-10);
    }

    #[test]
    fn mwu_exact_matches_normal_at_fifteen() {
        let unif = Uniform::new(0.0, 1.0).unwrap();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..15).map(|_| unif.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..15).map(|_| unif.sample(&mut rng) + 0.2).collect();
            let exact = mann_whitney_u_with(&a, &b, MwuMethod::Exact).p_value;
            let approx = mann_whitney_u_with(&a, &b, MwuMethod::Asymptotic).p_value;
            assert!(
                (exact - approx).abs() <= 0.02,
                "seed {seed}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn chi_squared_reference_rows() {
        let r = chi_squared(&[50, 30, 20], &[45, 35, 20]).unwrap();
        assert_relative_eq!(r.statistic, 0.647773279352227, epsilon = 1e-12);
        assert_relative_eq!(r.p_value, 0.723332234908832, epsilon = 1e-10);
        assert_relative_eq!(r.effect_size.value, 0.0569110393224472, epsilon = 1e-12);
    }

    #[test]
    fn chi_squared_boundaries() {
        let r = chi_squared(&[5, 7, 9], &[5, 7, 9]).unwrap();
        assert_eq!(
            (r.statistic, r.p_value, r.effect_size.value),
            (0.0, 1.0, 0.0)
        );
        let r = chi_squared(&[10, 0], &[0, 10]).unwrap();
        assert_relative_eq!(r.effect_size.value, 1.0, epsilon = 1e-12);
        assert!(chi_squared(&[1, 0], &[1, 0]).is_err());
        assert!(chi_squared(&[0, 0], &[1, 2]).is_err());
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(js_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_relative_eq!(
            js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            js_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(),
            0.311278124459133,
            epsilon = 1e-12
        );
        assert!(js_divergence(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(js_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.0005), "***");
        assert_eq!(significance_marker(0.005), "**");
        assert_eq!(significance_marker(0.03), "*");
        assert_eq!(significance_marker(0.05), "");
    }
}
