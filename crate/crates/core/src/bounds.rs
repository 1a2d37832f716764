//! Closed-form sub-optimality bounds with explicit constants.
//!
//! Every evaluator fixes `tau = 1/N`. Logarithms of `N m` appear wherever
//! `ln(m / tau)` would.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::bandit::DataModel;
use crate::error::{Error, Result};
use crate::learner::ConfidenceLevel;
use crate::unlearner::{gamma_threshold_multi, gamma_threshold_single};

/// Parameters for any bound. Each evaluator reads only the fields it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundQuery {
    pub model: Option<DataModel>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub n_a0: Option<usize>,
    pub n_star: Option<usize>,
    pub c_star: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_min: Option<usize>,
    pub k_max: Option<usize>,
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("bound query is missing `{name}`")))
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn log_nm(n: usize, m: usize) -> f64 {
    ((n * m) as f64).ln()
}

fn lcb_rate(l: f64, count: f64) -> f64 {
    (2.0 * l / count).sqrt()
}

fn check_positive_n(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(invalid(format!("need N >= 2 and m >= 2, got N = {n}, m = {m}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(invalid(format!("gamma = {gamma} must be >= 0")));
    }
    Ok(())
}

/// Adaptive single-source unlearning, fixed-sample model.
pub fn upper_bound_fixed_single(q: &BoundQuery) -> Result<f64> {
    let (n, m, n_a0, n_star, k, gamma) = (
        need(q.n, "n")?,
        need(q.m, "m")?,
        need(q.n_a0, "n_a0")?,
        need(q.n_star, "n_star")?,
        need(q.k, "k")?,
        need(q.gamma, "gamma")?,
    );
    check_positive_n(n, m)?;
    check_gamma(gamma)?;
    if k >= n_a0 || n_star == 0 {
        return Err(invalid(format!("need k < n_a0 and n_star > 0, got k = {k}, n_a0 = {n_a0}, n_star = {n_star}")));
    }
    let l = log_nm(n, m);
    let nf = n as f64;
    let threshold = gamma_threshold_single(n_a0, k, m, ConfidenceLevel::for_size(n))?;
    let learn = lcb_rate(l, n_star as f64);
    Ok(if gamma < threshold {
        let gauss = lcb_rate(l, n_a0 as f64) + 3.0 * k as f64 * gamma / (2.0 * (2.0 * PI).sqrt() * n_a0 as f64) + 3.0 / nf;
        gauss.max(learn + 1.0 / nf)
    } else {
        (lcb_rate(l, (n_a0 - k) as f64) + 4.0 / nf).max(learn + 2.0 / nf)
    })
}

/// Minimax lower bound, fixed-sample model.
pub fn lower_bound_fixed_single(q: &BoundQuery) -> Result<f64> {
    let (eps, n_a0, k) = (need(q.epsilon, "epsilon")?, need(q.n_a0, "n_a0")?, need(q.k, "k")?);
    if k >= n_a0 {
        return Err(invalid(format!("need k < n_a0, got k = {k}, n_a0 = {n_a0}")));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(invalid(format!("epsilon = {eps} must be >= 0")));
    }
    Ok((-eps).exp() / 16.0 * (1.0 / (5.0 * E * (n_a0 - k) as f64)).sqrt())
}

/// Adaptive single-source unlearning, distribution model.
pub fn upper_bound_dist_single(q: &BoundQuery) -> Result<f64> {
    let (n, m, c, k, gamma) = (
        need(q.n, "n")?,
        need(q.m, "m")?,
        need(q.c_star, "c_star")?,
        need(q.k, "k")?,
        need(q.gamma, "gamma")?,
    );
    check_positive_n(n, m)?;
    check_gamma(gamma)?;
    let nf = n as f64;
    if !(c > 1.0) {
        return Err(invalid(format!("C* = {c} must exceed 1")));
    }
    if nf <= 8.0 * c * nf.ln() {
        return Err(invalid(format!("need N > 8 C* ln N, got N = {n}, C* = {c}")));
    }
    let l = log_nm(n, m);
    let rollback = (4.0 * c * l / (nf - 2.0 * k as f64 * c).max(1.0)).sqrt();
    let gaussian = (4.0 * c * l / nf).sqrt() + 3.0 * k as f64 * gamma * c / ((2.0 * PI).sqrt() * nf);
    Ok(rollback.min(gaussian) + 5.0 / nf)
}

/// Minimax lower bound, distribution model. Branches at `C* = 2`.
pub fn lower_bound_dist_single(q: &BoundQuery) -> Result<f64> {
    let (eps, c, n, k) = (need(q.epsilon, "epsilon")?, need(q.c_star, "c_star")?, need(q.n, "n")?, need(q.k, "k")?);
    if !(c > 1.0) || k >= n || eps.is_nan() || eps < 0.0 {
        return Err(invalid(format!("need C* > 1, k < N, epsilon >= 0; got C* = {c}, k = {k}, N = {n}, epsilon = {eps}")));
    }
    let r = (n - k) as f64;
    Ok(if c >= 2.0 {
        (-eps).exp() / 16.0 * (c / (5.0 * E * r)).sqrt()
    } else {
        (2.0 - c) / 8.0 * (-eps - r * (2.0 - c) / c * (2.0 / (c - 1.0)).ln()).exp()
    })
}

/// Imitation upper bound. `log_value` is unclamped; `value` is capped at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationBound {
    pub value: f64,
    pub log_value: f64,
    pub clamped: bool,
}

pub fn upper_bound_imitation(q: &BoundQuery) -> Result<ImitationBound> {
    let (n, c, k) = (need(q.n, "n")?, need(q.c_star, "c_star")?, need(q.k, "k")?);
    if !(c > 1.0 && c < 2.0) {
        return Err(invalid(format!("imitation bound needs C* in (1, 2), got {c}")));
    }
    let (nf, kf) = (n as f64, k as f64);
    let limit = (0.75 * nf).min((2.0 - c) * nf / c);
    if kf > limit {
        return Err(invalid(format!("imitation bound needs k <= {limit:.3}, got {k}")));
    }
    let log_value = (nf + kf) / 2.0 * (2.0 / c).ln() - (nf - kf) / 2.0 * (c / (8.0 * (c - 1.0))).ln();
    let clamped = log_value > 0.0;
    Ok(ImitationBound { value: if clamped { 1.0 } else { log_value.exp() }, log_value, clamped })
}

/// Adaptive multi-source unlearning, fixed-sample model.
pub fn upper_bound_fixed_multi(q: &BoundQuery) -> Result<f64> {
    let (n, m, n_min, k_max, n_star, gamma) = (
        need(q.n, "n")?,
        need(q.m, "m")?,
        need(q.n_min, "n_min")?,
        need(q.k_max, "k_max")?,
        need(q.n_star, "n_star")?,
        need(q.gamma, "gamma")?,
    );
    check_positive_n(n, m)?;
    check_gamma(gamma)?;
    if k_max >= n_min || n_star == 0 {
        return Err(invalid(format!("need k_max < n_min and n_star > 0, got k_max = {k_max}, n_min = {n_min}")));
    }
    let l = log_nm(n, m);
    let nf = n as f64;
    let threshold = gamma_threshold_multi(n_min, k_max, m, ConfidenceLevel::for_size(n))?;
    let learn = lcb_rate(l, n_star as f64) + 2.0 / nf;
    Ok(if gamma < threshold {
        let gauss = lcb_rate(l, n_min as f64) + 3.0 * k_max as f64 * gamma / (2.0 * (2.0 * PI).sqrt() * n_min as f64) + 5.0 / nf;
        gauss.max(learn)
    } else {
        (lcb_rate(l, (n_min - k_max) as f64) + 5.0 / nf).max(learn)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    UpperFixedSingle,
    LowerFixedSingle,
    UpperDistSingle,
    LowerDistSingle,
    UpperImitation,
    UpperFixedMulti,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::UpperFixedSingle,
        BoundKind::LowerFixedSingle,
        BoundKind::UpperDistSingle,
        BoundKind::LowerDistSingle,
        BoundKind::UpperImitation,
        BoundKind::UpperFixedMulti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::UpperFixedSingle => "upper-fixed-single",
            BoundKind::LowerFixedSingle => "lower-fixed-single",
            BoundKind::UpperDistSingle => "upper-dist-single",
            BoundKind::LowerDistSingle => "lower-dist-single",
            BoundKind::UpperImitation => "upper-imitation",
            BoundKind::UpperFixedMulti => "upper-fixed-multi",
        }
    }

    pub fn evaluate(self, q: &BoundQuery) -> Result<f64> {
        match self {
            BoundKind::UpperFixedSingle => upper_bound_fixed_single(q),
            BoundKind::LowerFixedSingle => lower_bound_fixed_single(q),
            BoundKind::UpperDistSingle => upper_bound_dist_single(q),
            BoundKind::LowerDistSingle => lower_bound_dist_single(q),
            BoundKind::UpperImitation => upper_bound_imitation(q).map(|b| b.value),
            BoundKind::UpperFixedMulti => upper_bound_fixed_multi(q),
        }
    }
}

/// Which query field a curve sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundParam {
    N,
    K,
    Gamma,
    Epsilon,
    CStar,
}

impl BoundParam {
    pub fn set(self, q: &mut BoundQuery, value: f64) {
        match self {
            BoundParam::N => q.n = Some(value as usize),
            BoundParam::K => q.k = Some(value as usize),
            BoundParam::Gamma => q.gamma = Some(value),
            BoundParam::Epsilon => q.epsilon = Some(value),
            BoundParam::CStar => q.c_star = Some(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub param: f64,
    pub value: f64,
    pub bound_kind: &'static str,
}

/// Evaluates `kinds` along `grid`. Points outside a bound's domain are skipped.
pub fn bound_curve(base: &BoundQuery, param: BoundParam, grid: &[f64], kinds: &[BoundKind]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for &kind in kinds {
        for &x in grid {
            let mut q = base.clone();
            param.set(&mut q, x);
            if let Ok(value) = kind.evaluate(&q) {
                out.push(CurvePoint { param: x, value, bound_kind: kind.name() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixed(n: usize, n_a0: usize, n_star: usize, k: usize, gamma: f64) -> BoundQuery {
        BoundQuery { n: Some(n), m: Some(5), n_a0: Some(n_a0), n_star: Some(n_star), k: Some(k), gamma: Some(gamma), ..Default::default() }
    }

    #[test]
    fn fixed_single_value() {
        let v = upper_bound_fixed_single(&fixed(3000, 600, 600, 80, 0.2)).unwrap();
        assert!((v - 0.19599032772017208).abs() < 1e-12, "{v}");
    }

    #[test]
    fn fixed_single_no_deletion_limit() {
        let v = upper_bound_fixed_single(&fixed(3000, 600, 700, 0, 0.0)).unwrap();
        let l = 15000f64.ln();
        let want = ((2.0 * l / 600.0).sqrt() + 3.0 / 3000.0).max((2.0 * l / 700.0).sqrt() + 1.0 / 3000.0);
        assert!((v - want).abs() < 1e-15);
        assert!(upper_bound_fixed_single(&fixed(3000, 600, 600, 600, 0.2)).is_err());
    }

    #[test]
    fn fixed_lower_values() {
        let q = BoundQuery { epsilon: Some(0.0), n_a0: Some(180), k: Some(80), ..Default::default() };
        assert!((lower_bound_fixed_single(&q).unwrap() - 0.001695304731944052).abs() < 1e-15);
        let q = BoundQuery { epsilon: Some(800.0), ..q };
        assert_eq!(lower_bound_fixed_single(&q).unwrap(), 0.0);
    }

    #[test]
    fn dist_values() {
        let q = BoundQuery { n: Some(3000), m: Some(5), c_star: Some(5.0), k: Some(80), gamma: Some(0.5), ..Default::default() };
        assert!((upper_bound_dist_single(&q).unwrap() - 0.29732933501577063).abs() < 1e-12);
        let small = BoundQuery { n: Some(100), ..q.clone() };
        assert!(upper_bound_dist_single(&small).is_err());
        let lq = BoundQuery { epsilon: Some(0.0), c_star: Some(5.0), n: Some(3000), k: Some(80), ..Default::default() };
        assert!((lower_bound_dist_single(&lq).unwrap() - 0.0007015220895661781).abs() < 1e-15);
    }

    #[test]
    fn dist_lower_branches() {
        let at = |c: f64| lower_bound_dist_single(&BoundQuery { epsilon: Some(0.0), c_star: Some(c), n: Some(50), k: Some(0), ..Default::default() }).unwrap();
        assert!(at(2.0).is_finite() && at(2.0 - 1e-9).is_finite());
        assert!(at(1.0 + 1e-6) < 1e-100);
        assert!(at(1.01) < at(1.2));
    }

    #[test]
    fn imitation_values() {
        let q = BoundQuery { n: Some(1000), c_star: Some(1.3), k: Some(0), ..Default::default() };
        let b = upper_bound_imitation(&q).unwrap();
        assert!((b.log_value - 521.9436944894314).abs() < 1e-9);
        assert!(b.clamped);
        assert_eq!(b.value, 1.0);
        let q = BoundQuery { n: Some(1000), c_star: Some(1.05), k: Some(0), ..Default::default() };
        let b = upper_bound_imitation(&q).unwrap();
        assert!(!b.clamped && b.value < 1e-60);
        let q = BoundQuery { n: Some(1000), c_star: Some(1.3), k: Some(539), ..Default::default() };
        assert!(upper_bound_imitation(&q).is_err());
    }

    #[test]
    fn multi_matches_single_leading_terms() {
        let single = fixed(3000, 600, 600, 80, 0.5);
        let multi = BoundQuery { n_min: Some(600), k_max: Some(80), ..single.clone() };
        let a = upper_bound_fixed_single(&single).unwrap();
        let b = upper_bound_fixed_multi(&multi).unwrap();
        assert!(b >= a && b - a <= 1.0 / 3000.0 + 1e-15);
        let q = BoundQuery { n_min: Some(500), k_max: Some(40), ..fixed(3000, 600, 600, 40, 0.2) };
        let l = 15000f64.ln();
        let want = ((2.0 * l / 500.0).sqrt() + 3.0 * 40.0 * 0.2 / (2.0 * (2.0 * PI).sqrt() * 500.0) + 5.0 / 3000.0).max((2.0 * l / 600.0).sqrt() + 2.0 / 3000.0);
        assert!((upper_bound_fixed_multi(&q).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn curves_skip_invalid_points() {
        let base = fixed(3000, 600, 600, 80, 0.5);
        let pts = bound_curve(&base, BoundParam::K, &[0.0, 80.0, 600.0], &[BoundKind::UpperFixedSingle]);
        assert_eq!(pts.len(), 2);
    }

    #[test]
    fn imitation_slope_in_k_changes_sign_at_five_quarters() {
        // d(log_value)/dk = ln(1 / (4 (C* - 1))) / 2
        for (c, rising) in [(1.2, true), (1.3, false), (1.9, false)] {
            let q = |k| BoundQuery { n: Some(1000), c_star: Some(c), k: Some(k), ..Default::default() };
            let slope = upper_bound_imitation(&q(1)).unwrap().log_value - upper_bound_imitation(&q(0)).unwrap().log_value;
            assert_eq!(slope > 0.0, rising, "C* = {c}");
            assert!((slope - (1.0 / (4.0 * (c - 1.0))).ln() / 2.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn fixed_upper_monotone_in_k(n_a0 in 50usize..2000, k in 0usize..40, gamma in 0.0f64..2.0) {
            let q = |k| fixed(5 * n_a0, n_a0, n_a0, k, gamma);
            let (a, b) = (upper_bound_fixed_single(&q(k)).unwrap(), upper_bound_fixed_single(&q(k + 1)).unwrap());
            // the branch switch can only raise the bound
            prop_assert!(b >= a - 1e-12);
        }

        #[test]
        fn dist_upper_monotone_in_cstar(n in 2000usize..10000, k in 0usize..200, c in 2.0f64..8.0, gamma in 0.0f64..2.0) {
            let q = |c| BoundQuery { n: Some(n), m: Some(5), c_star: Some(c), k: Some(k), gamma: Some(gamma), ..Default::default() };
            prop_assume!(upper_bound_dist_single(&q(c + 0.5)).is_ok());
            prop_assert!(upper_bound_dist_single(&q(c + 0.5)).unwrap() >= upper_bound_dist_single(&q(c)).unwrap());
        }

        #[test]
        fn multi_nonincreasing_in_n_min(n_min in 100usize..2000, k_max in 0usize..50, gamma in 0.0f64..2.0) {
            let q = |nm| BoundQuery { n: Some(5000), m: Some(5), n_min: Some(nm), k_max: Some(k_max), n_star: Some(800), gamma: Some(gamma), ..Default::default() };
            let (a, b) = (upper_bound_fixed_multi(&q(n_min)).unwrap(), upper_bound_fixed_multi(&q(n_min + 1)).unwrap());
            // a threshold crossing may add up to the rollback-minus-gaussian jump
            let t = gamma_threshold_multi(n_min, k_max, 5, ConfidenceLevel::for_size(5000)).unwrap();
            let t1 = gamma_threshold_multi(n_min + 1, k_max, 5, ConfidenceLevel::for_size(5000)).unwrap();
            let crossed = (gamma < t) != (gamma < t1);
            prop_assert!(crossed || b <= a + 1e-12);
        }

        #[test]
        fn imitation_monotone_in_k(n in 100usize..5000, c in 1.01f64..1.25, frac in 0.0f64..1.0) {
            let limit = (0.75 * n as f64).min((2.0 - c) * n as f64 / c).floor() as usize;
            prop_assume!(limit >= 1);
            let k = ((limit - 1) as f64 * frac) as usize;
            let q = |k| BoundQuery { n: Some(n), c_star: Some(c), k: Some(k), ..Default::default() };
            prop_assert!(upper_bound_imitation(&q(k + 1)).unwrap().log_value >= upper_bound_imitation(&q(k)).unwrap().log_value);
        }

        #[test]
        fn lower_below_upper_fixed(n_a0 in 20usize..3000, frac in 0.0f64..0.9, eps in 0.0f64..0.5, gamma in 0.0f64..3.0, extra in 0usize..4) {
            let k = (n_a0 as f64 * frac) as usize;
            let n = n_a0 * (2 + extra);
            let q = BoundQuery { epsilon: Some(eps), ..fixed(n, n_a0, n_a0, k, gamma) };
            prop_assert!(lower_bound_fixed_single(&q).unwrap() <= upper_bound_fixed_single(&q).unwrap());
        }

        #[test]
        fn lower_below_upper_dist(n in 1000usize..20000, frac in 0.0f64..0.2, c in 2.0f64..6.0, eps in 0.0f64..0.5, gamma in 0.0f64..3.0) {
            let k = (n as f64 * frac) as usize;
            let q = BoundQuery { n: Some(n), m: Some(5), c_star: Some(c), k: Some(k), gamma: Some(gamma), epsilon: Some(eps), ..Default::default() };
            prop_assume!(upper_bound_dist_single(&q).is_ok());
            prop_assert!(lower_bound_dist_single(&q).unwrap() <= upper_bound_dist_single(&q).unwrap());
        }
    }
}
