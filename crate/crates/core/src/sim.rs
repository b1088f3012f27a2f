//! Synthetic generators and single-cell outlier injection.

use rand::distr::{Bernoulli, Distribution, Open01};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::link::LinkFamily;
use crate::model::{Dataset, Theta};

pub const GRID_LEN: usize = 201;
pub const GRID_STEP: f64 = 0.05;
pub const DEFAULT_GRID_BETA: f64 = 0.7;
pub const DEFAULT_GRID_DELTA: [f64; 3] = [-1.6, 0.0, 1.6];

/// Location of the outlying component of the contaminated covariate.
pub const OUTLIER_MEAN: f64 = 20.0;

fn grid_x(i: usize) -> f64 {
    // exact at both ends: (0 - 100) / 20 = -5, (200 - 100) / 20 = 5
    (i as f64 - 100.0) / 20.0
}

/// Category of a latent value under `y = m ⇔ δ_{m−1} < z ≤ δ_m`.
pub fn threshold(z: f64, delta: &[f64]) -> usize {
    1 + delta.iter().filter(|&&d| z > d).count()
}

/// Standard latent error for `link`, by inversion of a uniform on (0, 1).
pub fn draw_error<R: Rng + ?Sized>(link: LinkFamily, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    link.quantile(u).expect("open-interval uniform")
}

/// The one-covariate grid design: `x` runs from −5 to 5 in steps of 0.05.
pub fn simulate_grid(beta: f64, delta: [f64; 3], link: LinkFamily, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..GRID_LEN).map(|_| draw_error(link, &mut rng)).collect();
    simulate_grid_with_errors(beta, delta, &errors)
}

/// [`simulate_grid`] with caller-supplied latent errors, one per grid point.
pub fn simulate_grid_with_errors(beta: f64, delta: [f64; 3], errors: &[f64]) -> Result<Dataset> {
    Theta::new(vec![beta], delta.to_vec())?;
    if errors.len() != GRID_LEN {
        return Err(Error::Contract(format!(
            "expected {GRID_LEN} errors, got {}",
            errors.len()
        )));
    }
    let x: Vec<f64> = (0..GRID_LEN).map(grid_x).collect();
    let y = x
        .iter()
        .zip(errors)
        .map(|(&xi, &e)| threshold(beta * xi + e, &delta))
        .collect();
    Dataset::new(y, x, 4, vec!["x".into()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDist {
    Normal,
    Logistic,
    Gumbel,
}

impl ErrorDist {
    pub const ALL: [ErrorDist; 3] = [ErrorDist::Normal, ErrorDist::Logistic, ErrorDist::Gumbel];

    /// The link whose cdf is this error's distribution.
    pub fn link(self) -> LinkFamily {
        match self {
            ErrorDist::Normal => LinkFamily::Probit,
            ErrorDist::Logistic => LinkFamily::Logit,
            ErrorDist::Gumbel => LinkFamily::Loglog,
        }
    }

    pub fn true_delta(self) -> [f64; 4] {
        match self {
            ErrorDist::Normal => [-3.0, -0.7, 1.6, 3.9],
            ErrorDist::Logistic => [-3.3, -0.8, 1.7, 4.2],
            ErrorDist::Gumbel => [-2.9, 1.0, 2.9, 4.8],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorDist::Normal => "normal",
            ErrorDist::Logistic => "logistic",
            ErrorDist::Gumbel => "gumbel",
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ErrorDist::Normal),
            "logistic" => Ok(ErrorDist::Logistic),
            "gumbel" => Ok(ErrorDist::Gumbel),
            other => Err(Error::Config(format!("unknown error distribution '{other}'"))),
        }
    }
}

pub const TRUE_BETA: [f64; 3] = [2.5, 1.2, 0.7];

pub fn contaminated_truth(error: ErrorDist) -> Theta {
    Theta {
        beta: TRUE_BETA.to_vec(),
        delta: error.true_delta().to_vec(),
    }
}

/// Three-covariate design `(x, d, x·d)` with `d ~ Bernoulli(0.25)`.
///
/// Responses follow the model at the clean covariate `x ~ N(0, 1)`. A
/// Bernoulli(ρ) subset of units then has its recorded `x` replaced by a draw
/// from `N(20, 1)`, so the observed covariate follows the mixture
/// `(1 − ρ) N(0, 1) + ρ N(20, 1)` while those units' responses no longer agree
/// with it. The interaction column uses the recorded `x`.
pub fn simulate_contaminated(rho: f64, error: ErrorDist, n: usize, seed: u64) -> Result<(Dataset, Theta)> {
    if !(0.0..=0.5).contains(&rho) {
        return Err(Error::Domain(format!("outlier ratio must lie in [0, 0.5], got {rho}")));
    }
    if n < 50 {
        return Err(Error::Domain(format!("need n >= 50, got {n}")));
    }
    let truth = contaminated_truth(error);
    let link = error.link();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coin = Bernoulli::new(rho).expect("rho checked");
    let treat = Bernoulli::new(0.25).expect("constant");

    let mut x = Vec::with_capacity(3 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let clean: f64 = rng.sample(StandardNormal);
        let d = if treat.sample(&mut rng) { 1.0 } else { 0.0 };
        let eps = draw_error(link, &mut rng);
        let z = clean * truth.beta[0] + d * truth.beta[1] + clean * d * truth.beta[2] + eps;
        y.push(threshold(z, &truth.delta));
        let shifted: f64 = OUTLIER_MEAN + rng.sample::<f64, _>(StandardNormal);
        let observed = if coin.sample(&mut rng) { shifted } else { clean };
        x.extend_from_slice(&[observed, d, observed * d]);
    }
    let names = vec!["x".into(), "d".into(), "xd".into()];
    Ok((Dataset::new(y, x, 5, names)?, truth))
}

/// `n` units with iid `N(0, 1)` covariates and responses drawn from the model at `theta`.
pub fn simulate_from_theta(theta: &Theta, n: usize, link: LinkFamily, seed: u64) -> Result<Dataset> {
    theta.validate()?;
    if n == 0 {
        return Err(Error::Domain("need at least one unit".into()));
    }
    let p = theta.beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let eta: f64 = row.iter().zip(&theta.beta).map(|(a, b)| a * b).sum();
        y.push(threshold(eta + draw_error(link, &mut rng), &theta.delta));
        x.extend(row);
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Dataset::new(y, x, theta.n_categories(), names)
}

/// Copy of `data` with covariate `covariate` of `unit` moved by `b·ω`.
///
/// With a positive coefficient on that covariate the linear predictor moves
/// in direction `b`.
pub fn inject_outlier(data: &Dataset, unit: usize, covariate: usize, b: f64, omega: f64) -> Result<Dataset> {
    if b != 1.0 && b != -1.0 {
        return Err(Error::Contract(format!("direction must be +1 or -1, got {b}")));
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::Contract(format!("omega must be finite and nonnegative, got {omega}")));
    }
    if unit >= data.n() || covariate >= data.p() {
        return Err(Error::Contract(format!(
            "cell ({unit}, {covariate}) out of range for {} x {}",
            data.n(),
            data.p()
        )));
    }
    if omega == 0.0 {
        return Ok(data.clone());
    }
    let v = data.row(unit)[covariate];
    data.with_cell(unit, covariate, v + b * omega)
}
