//! Per-unit divergence losses, the full-data kernels they induce, and the
//! Dirichlet-weighted objectives minimized by the weighted likelihood bootstrap.
//!
//! Losses are written as *rewards* `r(y|x;θ)` to be maximized, matching the
//! kernel `exp{R(D|θ)}` of each posterior:
//!
//! | kind              | `r_i`                                         | `R(D|θ)`                         |
//! |-------------------|-----------------------------------------------|----------------------------------|
//! | `loglik`          | `log f_i`                                     | `Σ r_i`                          |
//! | `dp(α)`           | `f_i^α/α − Σ_y f(y)^{1+α}/(1+α)`              | `Σ r_i`                          |
//! | `gamma_synthetic` | `(f_i/‖f‖_{γ+1})^γ / γ`                       | `(n/γ) log{(γ/n) Σ r_i}`         |
//! | `gamma_general`   | `(f_i/‖f‖_{γ+1})^γ / γ`                       | `Σ r_i`                          |
//!
//! The learning rate multiplies `R` and never the prior.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkFamily;
use crate::model::{check_compatible, dot, Dataset, Theta, UnconstrainedTheta, UnitProbs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Loglik,
    Dp,
    GammaSynthetic,
    GammaGeneral,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Loglik => "loglik",
            LossKind::Dp => "dp",
            LossKind::GammaSynthetic => "gamma-syn",
            LossKind::GammaGeneral => "gamma-gen",
        }
    }

    pub fn is_robust(self) -> bool {
        self != LossKind::Loglik
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "loglik" => Ok(LossKind::Loglik),
            "dp" => Ok(LossKind::Dp),
            "gamma-syn" | "gamma-synthetic" => Ok(LossKind::GammaSynthetic),
            "gamma-gen" | "gamma-general" => Ok(LossKind::GammaGeneral),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which posterior to build, with its tuning value (α or γ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// α for `dp`, γ for the two γ kinds; ignored for `loglik`.
    pub tuning: f64,
    pub learning_rate: f64,
}

impl LossSpec {
    pub fn loglik() -> Self {
        LossSpec {
            kind: LossKind::Loglik,
            tuning: 0.0,
            learning_rate: 1.0,
        }
    }

    pub fn dp(alpha: f64) -> Self {
        Self::robust(LossKind::Dp, alpha)
    }

    pub fn gamma_synthetic(gamma: f64) -> Self {
        Self::robust(LossKind::GammaSynthetic, gamma)
    }

    pub fn gamma_general(gamma: f64) -> Self {
        Self::robust(LossKind::GammaGeneral, gamma)
    }

    pub fn new(kind: LossKind, tuning: f64) -> Self {
        match kind {
            LossKind::Loglik => Self::loglik(),
            _ => Self::robust(kind, tuning),
        }
    }

    fn robust(kind: LossKind, tuning: f64) -> Self {
        LossSpec {
            kind,
            tuning,
            learning_rate: 1.0,
        }
    }

    pub fn with_learning_rate(mut self, w: f64) -> Self {
        self.learning_rate = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_robust() && !(self.tuning > 0.0 && self.tuning.is_finite()) {
            return Err(Error::Config(format!(
                "{} needs a positive tuning value, got {}",
                self.kind, self.tuning
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Loglik => write!(f, "loglik")?,
            k => write!(f, "{k}({})", self.tuning)?,
        }
        if self.learning_rate != 1.0 {
            write!(f, "[w={}]", self.learning_rate)?;
        }
        Ok(())
    }
}

/// Independent zero-mean normal prior on the unconstrained coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub sd_beta: f64,
    pub sd_cut: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Prior {
            sd_beta: 10.0,
            sd_cut: 10.0,
        }
    }
}

impl Prior {
    pub fn new(sd_beta: f64, sd_cut: f64) -> Result<Self> {
        let prior = Prior { sd_beta, sd_cut };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sd_beta > 0.0 && self.sd_cut > 0.0 && self.sd_beta.is_finite() && self.sd_cut.is_finite()) {
            return Err(Error::Config(format!(
                "prior standard deviations must be positive, got {} and {}",
                self.sd_beta, self.sd_cut
            )));
        }
        Ok(())
    }
}

fn normal_logpdf(v: f64, sd: f64) -> f64 {
    -0.5 * (v / sd).powi(2) - (sd * (2.0 * PI).sqrt()).ln()
}

/// `log p(θ)`, evaluated on the unconstrained coordinates of `theta`.
pub fn log_prior(theta: &Theta, prior: &Prior) -> Result<f64> {
    Ok(log_prior_unconstrained(&theta.to_unconstrained()?, prior))
}

pub fn log_prior_unconstrained(u: &UnconstrainedTheta, prior: &Prior) -> f64 {
    u.beta.iter().map(|&b| normal_logpdf(b, prior.sd_beta)).sum::<f64>()
        + normal_logpdf(u.delta0, prior.sd_cut)
        + u.log_gaps.iter().map(|&g| normal_logpdf(g, prior.sd_cut)).sum::<f64>()
}

/// Reward of one unit given its (floored) category probabilities. When
/// `dr_df` is provided it receives `∂r/∂f_m`, zeroed at floored entries.
fn unit_reward(kind: LossKind, tuning: f64, up: &UnitProbs, y: usize, dr_df: Option<&mut [f64]>) -> f64 {
    let f = &up.probs;
    let fy = f[y - 1];
    let (r, grad) = match kind {
        LossKind::Loglik => {
            let r = fy.ln();
            if let Some(d) = dr_df {
                d.iter_mut().for_each(|v| *v = 0.0);
                d[y - 1] = 1.0 / fy;
                (r, Some(d))
            } else {
                (r, None)
            }
        }
        LossKind::Dp => {
            let a = tuning;
            let fy_a = (a * fy.ln()).exp();
            let mass: f64 = f.iter().map(|&p| (a * p.ln()).exp() * p).sum();
            let r = fy_a / a - mass / (1.0 + a);
            if let Some(d) = dr_df {
                for (m, v) in d.iter_mut().enumerate() {
                    *v = -(a * f[m].ln()).exp();
                }
                d[y - 1] += fy_a / fy;
                (r, Some(d))
            } else {
                (r, None)
            }
        }
        LossKind::GammaSynthetic | LossKind::GammaGeneral => {
            let g = tuning;
            let s: f64 = f.iter().map(|&p| ((1.0 + g) * p.ln()).exp()).sum();
            let log_s = s.ln();
            let r = (g * fy.ln() - g / (1.0 + g) * log_s).exp() / g;
            if let Some(d) = dr_df {
                for (m, v) in d.iter_mut().enumerate() {
                    *v = -r * g * (g * f[m].ln() - log_s).exp();
                }
                d[y - 1] += r * g / fy;
                (r, Some(d))
            } else {
                (r, None)
            }
        }
    };
    if let Some(d) = grad {
        for (v, &c) in d.iter_mut().zip(&up.clamped) {
            if c {
                *v = 0.0;
            }
        }
    }
    r
}

fn unit_probs_for(theta: &Theta, x: &[f64], y: usize, link: LinkFamily) -> Result<UnitProbs> {
    theta.validate()?;
    if x.len() != theta.beta.len() {
        return Err(Error::Contract(format!(
            "covariate vector has length {}, theta has {} coefficients",
            x.len(),
            theta.beta.len()
        )));
    }
    let m = theta.n_categories();
    if y == 0 || y > m {
        return Err(Error::Contract(format!("category {y} outside 1..={m}")));
    }
    let mut up = UnitProbs::with_capacity(m);
    up.fill(link, &theta.delta, dot(x, &theta.beta), false);
    Ok(up)
}

/// Density-power reward `r_DP(y|x;θ)`.
pub fn unit_dp_loss(theta: &Theta, x: &[f64], y: usize, alpha: f64, link: LinkFamily) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let up = unit_probs_for(theta, x, y, link)?;
    Ok(unit_reward(LossKind::Dp, alpha, &up, y, None))
}

/// γ-divergence reward `r_γ(y|x;θ)`.
pub fn unit_gamma_loss(theta: &Theta, x: &[f64], y: usize, gamma: f64, link: LinkFamily) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let up = unit_probs_for(theta, x, y, link)?;
    Ok(unit_reward(LossKind::GammaGeneral, gamma, &up, y, None))
}

/// Rewards `r_i` for every unit (`log f_i` for `loglik`).
pub fn unit_rewards(spec: &LossSpec, theta: &Theta, data: &Dataset, link: LinkFamily) -> Result<Vec<f64>> {
    spec.validate()?;
    check_compatible(theta, data)?;
    let mut up = UnitProbs::with_capacity(data.n_categories());
    Ok((0..data.n())
        .map(|i| {
            up.fill(link, &theta.delta, dot(data.row(i), &theta.beta), false);
            unit_reward(spec.kind, spec.tuning, &up, data.y()[i], None)
        })
        .collect())
}

fn kernel_from_rewards(spec: &LossSpec, rewards: &[f64], n: usize) -> Result<f64> {
    let sum: f64 = rewards.iter().sum();
    let r = match spec.kind {
        LossKind::GammaSynthetic => {
            if !(sum > 0.0) {
                return Err(Error::DegenerateObjective(
                    "γ-synthetic kernel needs a positive reward sum".into(),
                ));
            }
            let (nf, g) = (n as f64, spec.tuning);
            nf / g * (g / nf * sum).ln()
        }
        _ => sum,
    };
    Ok(spec.learning_rate * r)
}

/// Log of the unnormalized posterior kernel without the prior, `w·R(D|θ)`.
pub fn log_kernel(spec: &LossSpec, theta: &Theta, data: &Dataset, link: LinkFamily) -> Result<f64> {
    let rewards = unit_rewards(spec, theta, data, link)?;
    kernel_from_rewards(spec, &rewards, data.n())
}

/// `log q̃(θ) − log p̃(θ)` where `p̃` is the full-data kernel and `q̃` the
/// kernel with unit `i` left out. The prior cancels. For the γ-synthetic
/// kernel the leading `n` is kept in both terms.
pub fn loo_log_ratio(
    spec: &LossSpec,
    theta: &Theta,
    data: &Dataset,
    i: usize,
    prior: &Prior,
    link: LinkFamily,
) -> Result<f64> {
    prior.validate()?;
    if i >= data.n() {
        return Err(Error::Contract(format!("unit {i} out of range 0..{}", data.n())));
    }
    let rewards = unit_rewards(spec, theta, data, link)?;
    loo_from_rewards(spec, &rewards, i)
}

/// [`loo_log_ratio`] for every unit at once.
pub fn loo_log_ratios(spec: &LossSpec, theta: &Theta, data: &Dataset, link: LinkFamily) -> Result<Vec<f64>> {
    let rewards = unit_rewards(spec, theta, data, link)?;
    (0..data.n()).map(|i| loo_from_rewards(spec, &rewards, i)).collect()
}

fn loo_from_rewards(spec: &LossSpec, rewards: &[f64], i: usize) -> Result<f64> {
    let w = spec.learning_rate;
    match spec.kind {
        LossKind::GammaSynthetic => {
            let total: f64 = rewards.iter().sum();
            let rest: f64 = rewards
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, r)| r)
                .sum();
            if !(rest > 0.0 && total > 0.0) {
                return Err(Error::DegenerateObjective(format!(
                    "γ-synthetic kernel without unit {i} has no positive reward mass"
                )));
            }
            let n = rewards.len() as f64;
            Ok(w * n / spec.tuning * (rest.ln() - total.ln()))
        }
        _ => Ok(-w * rewards[i]),
    }
}

/// A Dirichlet-weighted objective bound to its data; evaluates value and
/// gradient in unconstrained coordinates in a single pass.
#[derive(Debug, Clone)]
pub struct WeightedObjective<'a> {
    spec: LossSpec,
    data: &'a Dataset,
    weights: &'a [f64],
    prior: Prior,
    link: LinkFamily,
}

impl<'a> WeightedObjective<'a> {
    pub fn new(
        spec: LossSpec,
        data: &'a Dataset,
        weights: &'a [f64],
        prior: Prior,
        link: LinkFamily,
    ) -> Result<Self> {
        spec.validate()?;
        prior.validate()?;
        if weights.len() != data.n() {
            return Err(Error::Contract(format!(
                "{} weights for {} units",
                weights.len(),
                data.n()
            )));
        }
        if weights.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::Contract("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("weights sum to {total}, expected 1")));
        }
        Ok(WeightedObjective {
            spec,
            data,
            weights,
            prior,
            link,
        })
    }

    /// Unconstrained dimension `p + M − 1`.
    pub fn dim(&self) -> usize {
        self.data.p() + self.data.n_categories() - 1
    }

    /// Objective at the flattened unconstrained point `v`; fills `grad` when given.
    pub fn eval(&self, v: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let p = self.data.p();
        let m = self.data.n_categories();
        if v.len() != self.dim() {
            return Err(Error::Contract(format!(
                "point has dimension {}, objective has {}",
                v.len(),
                self.dim()
            )));
        }
        let u = UnconstrainedTheta::from_vec(v, p)?;
        let theta = u.to_theta();
        let want = grad.is_some();

        let mut up = UnitProbs::with_capacity(m);
        let mut dr_df = vec![0.0; m];
        let mut g_beta = vec![0.0; p];
        let mut g_delta = vec![0.0; m - 1];
        let mut acc = 0.0;
        for i in 0..self.data.n() {
            let s = self.weights[i];
            if s == 0.0 {
                continue;
            }
            let x = self.data.row(i);
            let y = self.data.y()[i];
            up.fill(self.link, &theta.delta, dot(x, &theta.beta), want);
            let r = unit_reward(
                self.spec.kind,
                self.spec.tuning,
                &up,
                y,
                want.then_some(dr_df.as_mut_slice()),
            );
            acc += s * r;
            if want {
                let mut d_eta = 0.0;
                for k in 0..m - 1 {
                    let dk = up.dens[k] * (dr_df[k] - dr_df[k + 1]);
                    g_delta[k] += s * dk;
                    d_eta -= dk;
                }
                for (gb, &xj) in g_beta.iter_mut().zip(x) {
                    *gb += s * d_eta * xj;
                }
            }
        }

        let n = self.data.n() as f64;
        let w = self.spec.learning_rate;
        // objective = scale(acc) − log p; d objective / d acc = slope
        let (loss, slope) = match self.spec.kind {
            LossKind::Loglik | LossKind::Dp | LossKind::GammaGeneral => (-w * n * acc, -w * n),
            LossKind::GammaSynthetic => {
                if !(acc > 0.0) {
                    return Err(Error::DegenerateObjective(
                        "weighted γ reward sum vanished; every unit has negligible probability".into(),
                    ));
                }
                let g = self.spec.tuning;
                (-w * n / g * (g * acc).ln(), -w * n / (g * acc))
            }
        };
        let value = loss - log_prior_unconstrained(&u, &self.prior);

        if let Some(out) = grad {
            for j in 0..p {
                out[j] = slope * g_beta[j] + u.beta[j] / self.prior.sd_beta.powi(2);
            }
            // δ_k = delta0 + Σ_{j<k} exp(log_gaps[j]); accumulate suffix sums.
            let mut suffix = 0.0;
            for k in (0..m - 1).rev() {
                suffix += slope * g_delta[k];
                if k == 0 {
                    out[p] = suffix + u.delta0 / self.prior.sd_cut.powi(2);
                } else {
                    let lg = u.log_gaps[k - 1];
                    out[p + k] = suffix * lg.exp() + lg / self.prior.sd_cut.powi(2);
                }
            }
        }
        Ok(value)
    }
}

/// Dirichlet-weighted objective in unconstrained coordinates:
/// `loglik`, `dp`, `gamma_general → −w·n·Σ s_i r_i` (with `r_i = log f_i`
/// for `loglik`), `gamma_synthetic → −w·(n/γ)·log{γ Σ s_i r_i}`, each minus `log p(θ)`.
pub fn weighted_objective(
    spec: &LossSpec,
    u: &UnconstrainedTheta,
    data: &Dataset,
    weights: &[f64],
    prior: &Prior,
    link: LinkFamily,
) -> Result<f64> {
    check_unconstrained(u, data)?;
    WeightedObjective::new(*spec, data, weights, *prior, link)?.eval(&u.to_vec(), None)
}

/// Gradient of [`weighted_objective`] in unconstrained coordinates, laid out
/// as `(β, delta0, log_gaps)`.
pub fn weighted_objective_gradient(
    spec: &LossSpec,
    u: &UnconstrainedTheta,
    data: &Dataset,
    weights: &[f64],
    prior: &Prior,
    link: LinkFamily,
) -> Result<Vec<f64>> {
    check_unconstrained(u, data)?;
    let obj = WeightedObjective::new(*spec, data, weights, *prior, link)?;
    let mut g = vec![0.0; obj.dim()];
    obj.eval(&u.to_vec(), Some(&mut g))?;
    Ok(g)
}

fn check_unconstrained(u: &UnconstrainedTheta, data: &Dataset) -> Result<()> {
    if u.beta.len() != data.p() || u.log_gaps.len() + 2 != data.n_categories() {
        return Err(Error::Contract(format!(
            "unconstrained theta (p={}, M={}) does not match {}",
            u.beta.len(),
            u.log_gaps.len() + 2,
            data.describe()
        )));
    }
    if u.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("unconstrained theta has non-finite entries".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::category_probs;
    use proptest::prelude::*;

    fn probit3() -> (Theta, Vec<f64>) {
        (Theta::new(vec![1.0], vec![-1.0, 1.0]).unwrap(), vec![0.0])
    }

    #[test]
    fn dp_direct_summation() {
        let (theta, x) = probit3();
        let f = category_probs(&theta, &x, LinkFamily::Probit).unwrap();
        let oracle = f[1] - f.iter().map(|p| p * p).sum::<f64>() / 2.0;
        let r = unit_dp_loss(&theta, &x, 2, 1.0, LinkFamily::Probit).unwrap();
        assert!((r - oracle).abs() < 1e-14);
        assert!((r - 0.42446).abs() < 1e-4);
    }

    #[test]
    fn gamma_direct_summation() {
        let (theta, x) = probit3();
        let f = category_probs(&theta, &x, LinkFamily::Probit).unwrap();
        let norm = f.iter().map(|p| p * p).sum::<f64>().sqrt();
        let r = unit_gamma_loss(&theta, &x, 2, 1.0, LinkFamily::Probit).unwrap();
        assert!((r - f[1] / norm).abs() < 1e-14);
        assert!((r - 0.94999).abs() < 1e-4);

        let t2 = Theta::new(vec![], vec![0.0]).unwrap();
        for y in [1, 2] {
            let r = unit_gamma_loss(&t2, &[], y, 1.0, LinkFamily::Logit).unwrap();
            assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn outlier_limits() {
        let theta = Theta::new(vec![1.0], vec![-1.6, 0.0, 1.6]).unwrap();
        for alpha in [0.3, 0.5, 1.0] {
            let r = unit_dp_loss(&theta, &[40.0], 1, alpha, LinkFamily::Probit).unwrap();
            assert!((r + 1.0 / (1.0 + alpha)).abs() < 1e-8);
            let r = unit_gamma_loss(&theta, &[40.0], 1, alpha, LinkFamily::Probit).unwrap();
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn dp_small_alpha_tracks_log_likelihood() {
        let t = Theta::new(vec![0.4], vec![-0.5, 0.8]).unwrap();
        let (a, b) = (
            Theta::new(vec![0.9], vec![-1.0, 0.2]).unwrap(),
            Theta::new(vec![-0.3], vec![-0.2, 1.5]).unwrap(),
        );
        let alpha = 1e-6;
        let x = [1.3];
        let d_dp = unit_dp_loss(&a, &x, 2, alpha, LinkFamily::Logit).unwrap()
            - unit_dp_loss(&b, &x, 2, alpha, LinkFamily::Logit).unwrap();
        let fa = category_probs(&a, &x, LinkFamily::Logit).unwrap()[1];
        let fb = category_probs(&b, &x, LinkFamily::Logit).unwrap()[1];
        assert!((d_dp - (fa.ln() - fb.ln())).abs() < 1e-4);
        assert!(unit_dp_loss(&t, &x, 1, 0.0, LinkFamily::Logit).is_err());
    }

    #[test]
    fn prior_examples() {
        let prior = Prior::default();
        let theta = Theta::new(vec![0.0, 0.0], vec![0.0, 1.0, 2.0]).unwrap(); // log gaps 0
        let lp = log_prior(&theta, &prior).unwrap();
        let expected = 5.0 * (1.0 / (10.0 * (2.0 * PI).sqrt())).ln();
        assert!((lp - expected).abs() < 1e-12);

        let wide = Prior { sd_beta: 20.0, ..prior };
        let lp2 = log_prior(&theta, &wide).unwrap();
        assert!((lp2 - (lp - 2.0 * 2f64.ln())).abs() < 1e-12);

        let t1 = Theta::new(vec![0.3, -1.2], vec![0.0, 1.0]).unwrap();
        let t2 = Theta::new(vec![-1.2, 0.3], vec![0.0, 1.0]).unwrap();
        assert!((log_prior(&t1, &prior).unwrap() - log_prior(&t2, &prior).unwrap()).abs() < 1e-15);
    }

    fn toy() -> Dataset {
        Dataset::new(
            vec![1, 3, 2, 3, 1],
            vec![-1.0, 0.5, 2.0, -0.4, 0.1, 1.5, 0.3, 0.3, -2.0, -0.7],
            3,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn uniform_weights_reduce_to_negative_log_posterior() {
        let data = toy();
        let theta = Theta::new(vec![0.4, -0.2], vec![-0.3, 0.9]).unwrap();
        let u = theta.to_unconstrained().unwrap();
        let prior = Prior::default();
        let w = vec![0.2; 5];
        let obj = weighted_objective(&LossSpec::loglik(), &u, &data, &w, &prior, LinkFamily::Probit).unwrap();
        let expected = -log_prior(&theta, &prior).unwrap()
            - log_kernel(&LossSpec::loglik(), &theta, &data, LinkFamily::Probit).unwrap();
        assert!((obj - expected).abs() < 1e-12);

        // γ-synthetic at uniform weights is −R_γ(1) − log p.
        let gs = LossSpec::gamma_synthetic(0.5);
        let obj = weighted_objective(&gs, &u, &data, &w, &prior, LinkFamily::Probit).unwrap();
        let expected = -log_prior(&theta, &prior).unwrap() - log_kernel(&gs, &theta, &data, LinkFamily::Probit).unwrap();
        assert!((obj - expected).abs() < 1e-12);
    }

    #[test]
    fn single_unit_gamma_general() {
        let data = Dataset::new(vec![2], vec![0.7], 3, vec!["x".into()]).unwrap();
        let theta = Theta::new(vec![0.5], vec![-1.0, 1.0]).unwrap();
        let u = theta.to_unconstrained().unwrap();
        let prior = Prior::default();
        let spec = LossSpec::gamma_general(0.5);
        let obj = weighted_objective(&spec, &u, &data, &[1.0], &prior, LinkFamily::Logit).unwrap();
        let r = unit_gamma_loss(&theta, &[0.7], 2, 0.5, LinkFamily::Logit).unwrap();
        assert!((obj - (-r - log_prior(&theta, &prior).unwrap())).abs() < 1e-14);
    }

    #[test]
    fn weight_validation() {
        let data = toy();
        let u = Theta::new(vec![0.0, 0.0], vec![-0.5, 0.5]).unwrap().to_unconstrained().unwrap();
        let prior = Prior::default();
        let spec = LossSpec::dp(0.5);
        for w in [vec![0.2; 4], vec![0.3; 5], vec![-0.2, 0.4, 0.4, 0.2, 0.2]] {
            assert!(weighted_objective(&spec, &u, &data, &w, &prior, LinkFamily::Probit).is_err());
        }
        assert!(weighted_objective(&LossSpec::dp(0.0), &u, &data, &[0.2; 5], &prior, LinkFamily::Probit).is_err());
    }

    #[test]
    fn gamma_synthetic_degenerate_objective() {
        // One unit with y=1 at an extreme covariate: f_y sits at the floor and
        // f_y^γ underflows to 0.
        let data = Dataset::new(vec![1], vec![60.0], 3, vec!["x".into()]).unwrap();
        let u = Theta::new(vec![1.0], vec![-1.0, 1.0]).unwrap().to_unconstrained().unwrap();
        let err = weighted_objective(
            &LossSpec::gamma_synthetic(2.0),
            &u,
            &data,
            &[1.0],
            &Prior::default(),
            LinkFamily::Probit,
        );
        assert!(matches!(err, Err(Error::DegenerateObjective(_))));
    }

    #[test]
    fn zero_weight_unit_has_no_gradient_contribution() {
        let data = toy();
        let theta = Theta::new(vec![0.4, -0.2], vec![-0.3, 0.9]).unwrap();
        let u = theta.to_unconstrained().unwrap();
        let prior = Prior::default();
        let w = [0.25, 0.25, 0.0, 0.25, 0.25];
        let moved = data.with_cell(2, 0, 35.0).unwrap();
        for spec in [LossSpec::dp(0.5), LossSpec::gamma_general(0.5)] {
            let g1 = weighted_objective_gradient(&spec, &u, &data, &w, &prior, LinkFamily::Probit).unwrap();
            let g2 = weighted_objective_gradient(&spec, &u, &moved, &w, &prior, LinkFamily::Probit).unwrap();
            assert_eq!(g1, g2);
        }
    }

    #[test]
    fn loo_ratio_examples() {
        let data = toy();
        let theta = Theta::new(vec![0.4, -0.2], vec![-0.3, 0.9]).unwrap();
        let prior = Prior::default();
        let link = LinkFamily::Cloglog;
        let f = category_probs(&theta, data.row(1), link).unwrap()[2];
        let l = loo_log_ratio(&LossSpec::loglik(), &theta, &data, 1, &prior, link).unwrap();
        assert!((l + f.ln()).abs() < 1e-14);
        let r = unit_dp_loss(&theta, data.row(1), 3, 0.5, link).unwrap();
        let l = loo_log_ratio(&LossSpec::dp(0.5), &theta, &data, 1, &prior, link).unwrap();
        assert!((l + r).abs() < 1e-14);
        assert!(loo_log_ratio(&LossSpec::dp(0.5), &theta, &data, 5, &prior, link).is_err());
    }

    #[test]
    fn loo_gamma_synthetic_matches_kernels() {
        let data = Dataset::new(vec![1, 2, 3], vec![-0.8, 0.1, 1.9], 3, vec!["x".into()]).unwrap();
        let theta = Theta::new(vec![1.1], vec![-0.4, 0.6]).unwrap();
        let link = LinkFamily::Logit;
        let g = 0.5;
        // Direct evaluation of both kernels, each with the full-data n = 3.
        let rs: Vec<f64> = (0..3)
            .map(|i| {
                let f = category_probs(&theta, data.row(i), link).unwrap();
                let norm = f.iter().map(|p| p.powf(1.0 + g)).sum::<f64>().powf(1.0 / (1.0 + g));
                (f[data.y()[i] - 1] / norm).powf(g) / g
            })
            .collect();
        let n = 3.0;
        let full = n / g * (g / n * rs.iter().sum::<f64>()).ln();
        let loo = n / g * (g / n * (rs[0] + rs[2])).ln();
        let l = loo_log_ratio(&LossSpec::gamma_synthetic(g), &theta, &data, 1, &Prior::default(), link).unwrap();
        assert!((l - (loo - full)).abs() < 1e-12);
    }

    fn arb_case() -> impl Strategy<Value = (LossSpec, Theta, Dataset, Vec<f64>, LinkFamily)> {
        (0usize..4, 0usize..5, 2usize..5, 1usize..3, 2usize..8).prop_flat_map(|(kind, link, m, p, n)| {
            (
                prop::collection::vec(-1.5f64..1.5, p),
                -1.5f64..0.0,
                prop::collection::vec(-1.0f64..0.7, m - 2),
                prop::collection::vec(-2.0f64..2.0, n * p),
                prop::collection::vec(1usize..=m, n),
                prop::collection::vec(0.05f64..1.0, n),
                0.2f64..1.2,
            )
                .prop_map(move |(beta, d0, gaps, x, y, w, tuning)| {
                    let kind = [LossKind::Loglik, LossKind::Dp, LossKind::GammaSynthetic, LossKind::GammaGeneral][kind];
                    let theta = UnconstrainedTheta { beta, delta0: d0, log_gaps: gaps }.to_theta();
                    let names = (0..p).map(|j| format!("x{j}")).collect();
                    let data = Dataset::new(y, x, m, names).unwrap();
                    let total: f64 = w.iter().sum();
                    let w = w.iter().map(|v| v / total).collect();
                    (LossSpec::new(kind, tuning), theta, data, w, LinkFamily::ALL[link])
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn rewards_are_bounded((spec, theta, data, _w, link) in arb_case()) {
            prop_assume!(spec.kind.is_robust());
            let rs = unit_rewards(&spec, &theta, &data, link).unwrap();
            let t = spec.tuning;
            for r in rs {
                if spec.kind == LossKind::Dp {
                    prop_assert!(r >= -1.0 / (1.0 + t) - 1e-12 && r <= 1.0 / t + 1e-12);
                } else {
                    prop_assert!(r >= 0.0 && r <= 1.0 / t + 1e-12);
                }
            }
        }

        #[test]
        fn gradient_matches_finite_differences((spec, theta, data, w, link) in arb_case()) {
            let prior = Prior::default();
            let obj = WeightedObjective::new(spec, &data, &w, prior, link).unwrap();
            let v = theta.to_unconstrained().unwrap().to_vec();
            let mut g = vec![0.0; v.len()];
            obj.eval(&v, Some(&mut g)).unwrap();
            let h = 1e-5;
            for j in 0..v.len() {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += h;
                vm[j] -= h;
                let fd = (obj.eval(&vp, None).unwrap() - obj.eval(&vm, None).unwrap()) / (2.0 * h);
                let scale = g[j].abs().max(1e-2);
                prop_assert!((fd - g[j]).abs() / scale < 1e-5, "{spec} {link} coord {j}: {fd} vs {}", g[j]);
            }
        }
    }
}
