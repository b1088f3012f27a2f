//! Cumulative-link ordinal model: parameters, data and category probabilities.
//!
//! Category `m ∈ {1..M}` has probability `G(δ_m − xᵀβ) − G(δ_{m−1} − xᵀβ)` with
//! the implicit boundaries `δ_0 = −∞` and `δ_M = +∞`. Categories are 1-based in
//! every public type; cutpoint vectors hold only the `M − 1` interior values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkFamily;

/// Floor applied to every category probability before logs or ratios.
pub const PROB_FLOOR: f64 = 1e-300;

/// Regression coefficients and strictly increasing interior cutpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Theta {
    pub fn new(beta: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let theta = Theta { beta, delta };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta.is_empty() {
            return Err(Error::Contract("at least one cutpoint is required".into()));
        }
        if self.beta.iter().chain(&self.delta).any(|v| !v.is_finite()) {
            return Err(Error::Contract("theta has non-finite entries".into()));
        }
        if let Some(k) = self.delta.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Contract(format!(
                "cutpoints must be strictly increasing: delta[{k}]={} >= delta[{}]={}",
                self.delta[k],
                k + 1,
                self.delta[k + 1]
            )));
        }
        Ok(())
    }

    pub fn n_categories(&self) -> usize {
        self.delta.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + self.delta.len()
    }

    /// `(β, δ)` flattened in that order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.delta).copied().collect()
    }

    pub fn from_vec(v: &[f64], p: usize) -> Result<Self> {
        if v.len() <= p {
            return Err(Error::Contract(format!(
                "parameter vector of length {} cannot hold {p} coefficients and a cutpoint",
                v.len()
            )));
        }
        Theta::new(v[..p].to_vec(), v[p..].to_vec())
    }

    /// Cutpoint `δ_m` for `m ∈ 0..=M`, with the infinite boundaries.
    #[inline]
    pub fn cut(&self, m: usize) -> f64 {
        if m == 0 {
            f64::NEG_INFINITY
        } else if m > self.delta.len() {
            f64::INFINITY
        } else {
            self.delta[m - 1]
        }
    }

    pub fn to_unconstrained(&self) -> Result<UnconstrainedTheta> {
        self.validate()?;
        Ok(UnconstrainedTheta {
            beta: self.beta.clone(),
            delta0: self.delta[0],
            log_gaps: self.delta.windows(2).map(|w| (w[1] - w[0]).ln()).collect(),
        })
    }
}

/// Ordering-safe coordinates: first cutpoint plus log-increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedTheta {
    pub beta: Vec<f64>,
    pub delta0: f64,
    pub log_gaps: Vec<f64>,
}

impl UnconstrainedTheta {
    pub fn to_theta(&self) -> Theta {
        let mut delta = Vec::with_capacity(self.log_gaps.len() + 1);
        let mut d = self.delta0;
        delta.push(d);
        for lg in &self.log_gaps {
            d += lg.exp();
            delta.push(d);
        }
        Theta {
            beta: self.beta.clone(),
            delta,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1 + self.log_gaps.len()
    }

    /// `(β, delta0, log_gaps)` flattened in that order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.delta0);
        v.extend_from_slice(&self.log_gaps);
        v
    }

    pub fn from_vec(v: &[f64], p: usize) -> Result<Self> {
        if v.len() <= p {
            return Err(Error::Contract(format!(
                "unconstrained vector of length {} cannot hold {p} coefficients and a cutpoint",
                v.len()
            )));
        }
        Ok(UnconstrainedTheta {
            beta: v[..p].to_vec(),
            delta0: v[p],
            log_gaps: v[p + 1..].to_vec(),
        })
    }
}

/// Ordered responses `y ∈ {1..M}` with a row-major covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<usize>,
    x: Vec<f64>,
    n_categories: usize,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        y: Vec<usize>,
        x: Vec<f64>,
        n_categories: usize,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let p = column_names.len();
        if n == 0 {
            return Err(Error::Contract("dataset needs at least one unit".into()));
        }
        if n_categories < 2 {
            return Err(Error::Contract(format!(
                "need at least 2 categories, got {n_categories}"
            )));
        }
        if x.len() != n * p {
            return Err(Error::Contract(format!(
                "covariate matrix has {} cells, expected {n} x {p}",
                x.len()
            )));
        }
        if let Some(i) = y.iter().position(|&m| m == 0 || m > n_categories) {
            return Err(Error::Contract(format!(
                "unit {i} has category {} outside 1..={n_categories}",
                y[i]
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite covariate at unit {}, column '{}'",
                pos / p.max(1),
                column_names[pos % p.max(1)]
            )));
        }
        if n > 1 {
            for j in 0..p {
                let first = x[j];
                if (1..n).all(|i| x[i * p + j] == first) {
                    return Err(Error::Contract(format!(
                        "column '{}' is constant; the model has no intercept",
                        column_names[j]
                    )));
                }
            }
        }
        Ok(Dataset {
            y,
            x,
            n_categories,
            column_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Copy with unit `i` removed. Skips the intercept check, since dropping a
    /// unit cannot create a constant column unless only one unit remains.
    pub fn without_unit(&self, i: usize) -> Result<Dataset> {
        if i >= self.n() {
            return Err(Error::Contract(format!("unit {i} out of range 0..{}", self.n())));
        }
        if self.n() == 1 {
            return Err(Error::Contract("cannot remove the only unit".into()));
        }
        let p = self.p();
        let mut y = self.y.clone();
        y.remove(i);
        let mut x = self.x.clone();
        x.drain(i * p..(i + 1) * p);
        Ok(Dataset {
            y,
            x,
            n_categories: self.n_categories,
            column_names: self.column_names.clone(),
        })
    }

    /// Same design with one covariate cell replaced.
    pub fn with_cell(&self, unit: usize, covariate: usize, value: f64) -> Result<Dataset> {
        if unit >= self.n() || covariate >= self.p() {
            return Err(Error::Contract(format!(
                "cell ({unit}, {covariate}) out of range for {} x {}",
                self.n(),
                self.p()
            )));
        }
        let mut out = self.clone();
        out.x[unit * self.p() + covariate] = value;
        Ok(out)
    }

    /// Same design with new responses.
    pub fn with_responses(&self, y: Vec<usize>) -> Result<Dataset> {
        Dataset::new(y, self.x.clone(), self.n_categories, self.column_names.clone())
    }

    /// Count of units per category, index 0 ↔ category 1.
    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_categories];
        for &m in &self.y {
            counts[m - 1] += 1;
        }
        counts
    }

    pub fn describe(&self) -> String {
        format!("dataset(n={}, p={}, M={})", self.n(), self.p(), self.n_categories)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-unit evaluation of the category probabilities and link densities at
/// every interior cutpoint. Reused across objectives to avoid repeated link
/// calls.
#[derive(Debug, Clone)]
pub(crate) struct UnitProbs {
    /// Clamped probabilities, index `m − 1`.
    pub probs: Vec<f64>,
    /// Whether `probs[m − 1]` hit the floor.
    pub clamped: Vec<bool>,
    /// `g(δ_k − η)` for the interior cutpoints, index `k − 1`.
    pub dens: Vec<f64>,
}

impl UnitProbs {
    pub fn with_capacity(m: usize) -> Self {
        UnitProbs {
            probs: vec![0.0; m],
            clamped: vec![false; m],
            dens: vec![0.0; m.saturating_sub(1)],
        }
    }

    /// Fill for linear predictor `eta` and cutpoints `delta`.
    pub fn fill(&mut self, link: LinkFamily, delta: &[f64], eta: f64, want_dens: bool) {
        let m = delta.len() + 1;
        debug_assert_eq!(self.probs.len(), m);
        let mut prev_cdf = 0.0;
        let mut prev_sf = 1.0;
        let mut prev_arg = f64::NEG_INFINITY;
        for k in 0..m {
            let (cdf, sf, arg) = if k + 1 < m {
                let t = delta[k] - eta;
                (link.cdf(t), link.sf(t), t)
            } else {
                (1.0, 0.0, f64::INFINITY)
            };
            let raw = if prev_arg >= 0.0 { prev_sf - sf } else { cdf - prev_cdf };
            let clamped = !(raw > PROB_FLOOR);
            self.probs[k] = if clamped { PROB_FLOOR } else { raw.min(1.0) };
            self.clamped[k] = clamped;
            if want_dens && k + 1 < m {
                self.dens[k] = link.pdf(arg);
            }
            prev_cdf = cdf;
            prev_sf = sf;
            prev_arg = arg;
        }
    }
}

/// Category probabilities `f(·|x; θ)`, each floored at [`PROB_FLOOR`].
pub fn category_probs(theta: &Theta, x: &[f64], link: LinkFamily) -> Result<Vec<f64>> {
    theta.validate()?;
    if x.len() != theta.beta.len() {
        return Err(Error::Contract(format!(
            "covariate vector has length {}, theta has {} coefficients",
            x.len(),
            theta.beta.len()
        )));
    }
    let mut up = UnitProbs::with_capacity(theta.n_categories());
    up.fill(link, &theta.delta, dot(x, &theta.beta), false);
    Ok(up.probs)
}

/// Generalized residuals `−(g(δ_y − η) − g(δ_{y−1} − η)) / f(y|x; θ)` at a
/// point estimate, one per unit.
pub fn generalized_residuals(theta: &Theta, data: &Dataset, link: LinkFamily) -> Result<Vec<f64>> {
    check_compatible(theta, data)?;
    let m = data.n_categories();
    let mut up = UnitProbs::with_capacity(m);
    Ok((0..data.n())
        .map(|i| {
            let eta = dot(data.row(i), &theta.beta);
            up.fill(link, &theta.delta, eta, true);
            let y = data.y()[i];
            let upper = if y < m { up.dens[y - 1] } else { 0.0 };
            let lower = if y > 1 { up.dens[y - 2] } else { 0.0 };
            -(upper - lower) / up.probs[y - 1]
        })
        .collect())
}

pub(crate) fn check_compatible(theta: &Theta, data: &Dataset) -> Result<()> {
    theta.validate()?;
    if theta.beta.len() != data.p() {
        return Err(Error::Contract(format!(
            "theta has {} coefficients, data has {} covariates",
            theta.beta.len(),
            data.p()
        )));
    }
    if theta.n_categories() != data.n_categories() {
        return Err(Error::Contract(format!(
            "theta has {} categories, data has {}",
            theta.n_categories(),
            data.n_categories()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn std_normal() -> Normal {
        Normal::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn probit_three_categories() {
        let theta = Theta::new(vec![0.0], vec![-1.0, 1.0]).unwrap();
        let p = category_probs(&theta, &[1.0], LinkFamily::Probit).unwrap();
        // 40-digit reference values, frozen
        let oracle = [0.158_655_253_931_457_05, 0.682_689_492_137_085_9, 0.158_655_253_931_457_05];
        for (a, b) in p.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.15866).abs() < 1e-5 && (p[1] - 0.68269).abs() < 1e-5);
    }

    #[test]
    fn logit_two_categories_symmetric() {
        let theta = Theta::new(vec![], vec![0.0]).unwrap();
        let p = category_probs(&theta, &[], LinkFamily::Logit).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let theta = Theta::new(vec![1.0, 2.0], vec![0.0]).unwrap();
        assert!(matches!(
            category_probs(&theta, &[1.0], LinkFamily::Probit),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn transform_examples() {
        let u = UnconstrainedTheta {
            beta: vec![0.7],
            delta0: -1.6,
            log_gaps: vec![1.6f64.ln(), 1.6f64.ln()],
        };
        let t = u.to_theta();
        let expected = [-1.6, 0.0, 1.6];
        for (a, b) in t.delta.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }

        let theta = Theta::new(vec![2.5, 1.2, 0.7], vec![-3.0, -0.7, 1.6, 3.9]).unwrap();
        let back = theta.to_unconstrained().unwrap().to_theta();
        for (a, b) in back.to_vec().iter().zip(theta.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }

        let u2 = UnconstrainedTheta {
            beta: vec![],
            delta0: 0.3,
            log_gaps: vec![],
        };
        assert_eq!(u2.to_theta().delta, vec![0.3]);
    }

    #[test]
    fn non_increasing_cutpoints_rejected() {
        let bad = Theta {
            beta: vec![0.0],
            delta: vec![1.0, 1.0],
        };
        assert!(matches!(bad.to_unconstrained(), Err(Error::Contract(_))));
        assert!(Theta::new(vec![], vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn residual_examples() {
        let theta = Theta::new(vec![1.0], vec![-1.0, 1.0]).unwrap();
        let data = Dataset::new(vec![2, 2], vec![0.0, 0.5], 3, vec!["x".into()]).unwrap();
        let e = generalized_residuals(&theta, &data, LinkFamily::Probit).unwrap();
        assert!(e[0].abs() < 1e-15);
        // -(φ(0.5) − φ(−1.5)) / (Φ(0.5) − Φ(−1.5)) at 40 digits, frozen
        let oracle = -0.356_272_884_177_059_76;
        assert!((e[1] - oracle).abs() < 1e-12);
        // statrs agrees to its own accuracy
        let n = std_normal();
        let approx = -(n.pdf(0.5) - n.pdf(-1.5)) / (n.cdf(0.5) - n.cdf(-1.5));
        assert!((approx - oracle).abs() < 1e-9);
        assert!((e[1] + 0.3563).abs() < 1e-4);
    }

    #[test]
    fn residual_top_category_uses_zero_upper_density() {
        let theta = Theta::new(vec![1.0], vec![-1.0, 1.0]).unwrap();
        let data = Dataset::new(vec![3, 1], vec![0.2, -0.4], 3, vec!["x".into()]).unwrap();
        let e = generalized_residuals(&theta, &data, LinkFamily::Logit).unwrap();
        let l = LinkFamily::Logit;
        let expected_top = -(0.0 - l.pdf(1.0 - 0.2)) / l.sf(1.0 - 0.2);
        let expected_bottom = -(l.pdf(-1.0 + 0.4) - 0.0) / l.cdf(-1.0 + 0.4);
        assert!((e[0] - expected_top).abs() < 1e-14);
        assert!((e[1] - expected_bottom).abs() < 1e-14);
        assert!(e[0] > 0.0 && e[1] < 0.0);
    }

    #[test]
    fn dataset_validation() {
        let names = vec!["a".to_string()];
        assert!(Dataset::new(vec![1, 3], vec![0.0, 1.0], 2, names.clone()).is_err());
        assert!(Dataset::new(vec![1, 2], vec![1.0, 1.0], 2, names.clone()).is_err());
        assert!(Dataset::new(vec![], vec![], 2, names.clone()).is_err());
        assert!(Dataset::new(vec![1], vec![1.0], 1, names.clone()).is_err());
        assert!(Dataset::new(vec![1], vec![1.0], 2, names).is_ok());
    }

    fn arb_theta_x() -> impl Strategy<Value = (Theta, Vec<f64>, usize)> {
        (1usize..4, 2usize..7, 0usize..5).prop_flat_map(|(p, m, link)| {
            (
                prop::collection::vec(-3.0f64..3.0, p),
                -4.0f64..4.0,
                prop::collection::vec(-3.0f64..1.5, m - 2),
                prop::collection::vec(-5.0f64..5.0, p),
                Just(link),
            )
                .prop_map(|(beta, d0, gaps, x, link)| {
                    let u = UnconstrainedTheta {
                        beta,
                        delta0: d0,
                        log_gaps: gaps,
                    };
                    (u.to_theta(), x, link)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn probabilities_sum_to_one((theta, x, link) in arb_theta_x()) {
            let link = LinkFamily::ALL[link];
            let p = category_probs(&theta, &x, link).unwrap();
            // Nothing in this range reaches the floor, so the sum is exact up to rounding.
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10, "sum {s}");
        }

        #[test]
        fn transform_round_trip((theta, _x, _l) in arb_theta_x()) {
            let back = theta.to_unconstrained().unwrap().to_theta();
            for (a, b) in back.to_vec().iter().zip(theta.to_vec()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn symmetric_link_midpoint_residual_is_zero(lo in -5.0f64..5.0, gap in 0.01f64..6.0, beta in 0.1f64..3.0, which in 0usize..3) {
            let link = [LinkFamily::Probit, LinkFamily::Logit, LinkFamily::Cauchit][which];
            let theta = Theta::new(vec![beta], vec![lo, lo + gap]).unwrap();
            let x = (lo + 0.5 * gap) / beta;
            let data = Dataset::new(vec![2], vec![x], 3, vec!["x".into()]).unwrap();
            let e = generalized_residuals(&theta, &data, link).unwrap();
            prop_assert!(e[0].abs() < 1e-12, "{}", e[0]);
        }
    }
}
