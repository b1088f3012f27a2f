//! Link functions: the cdf `G`, density `g` and quantile `G⁻¹` of the latent error.
//!
//! Every link also exposes an accurate survival function `1 − G`, which the
//! category probabilities use to avoid cancellation in the upper tail.

use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFamily {
    /// Standard normal.
    Probit,
    /// Standard logistic.
    Logit,
    /// Gumbel-max, `exp(−exp(−t))` (right-skewed).
    Loglog,
    /// Complementary log-log, `1 − exp(−exp(t))` (left-skewed).
    Cloglog,
    /// Standard Cauchy.
    Cauchit,
}

impl LinkFamily {
    pub const ALL: [LinkFamily; 5] = [
        LinkFamily::Probit,
        LinkFamily::Logit,
        LinkFamily::Loglog,
        LinkFamily::Cloglog,
        LinkFamily::Cauchit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkFamily::Probit => "probit",
            LinkFamily::Logit => "logit",
            LinkFamily::Loglog => "loglog",
            LinkFamily::Cloglog => "cloglog",
            LinkFamily::Cauchit => "cauchit",
        }
    }

    /// `G(t)`. Defined on the extended line, `G(−∞) = 0`, `G(+∞) = 1`.
    pub fn cdf(self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        match self {
            LinkFamily::Probit => 0.5 * erfc(-t / SQRT_2),
            LinkFamily::Logit => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
            LinkFamily::Loglog => (-(-t).exp()).exp(),
            LinkFamily::Cloglog => -(-t.exp()).exp_m1(),
            LinkFamily::Cauchit => {
                if t < 0.0 {
                    (-1.0 / t).atan() * FRAC_1_PI
                } else {
                    0.5 + t.atan() * FRAC_1_PI
                }
            }
        }
    }

    /// `1 − G(t)`, computed without subtracting from one.
    pub fn sf(self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            return 1.0;
        }
        if t == f64::INFINITY {
            return 0.0;
        }
        match self {
            LinkFamily::Probit | LinkFamily::Logit | LinkFamily::Cauchit => self.cdf(-t),
            LinkFamily::Loglog => -(-(-t).exp()).exp_m1(),
            LinkFamily::Cloglog => (-t.exp()).exp(),
        }
    }

    /// `g(t)`; zero at ±∞.
    pub fn pdf(self, t: f64) -> f64 {
        if t.is_infinite() {
            return 0.0;
        }
        match self {
            LinkFamily::Probit => FRAC_1_SQRT_2PI * (-0.5 * t * t).exp(),
            LinkFamily::Logit => {
                let e = (-t.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LinkFamily::Loglog => (-t - (-t).exp()).exp(),
            LinkFamily::Cloglog => (t - t.exp()).exp(),
            LinkFamily::Cauchit => FRAC_1_PI / (1.0 + t * t),
        }
    }

    /// `(G(t), g(t))`.
    pub fn eval(self, t: f64) -> (f64, f64) {
        (self.cdf(t), self.pdf(t))
    }

    /// `G⁻¹(q)` for `q ∈ (0, 1)`.
    pub fn quantile(self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!(
                "{} quantile requires 0 < q < 1, got {q}",
                self.name()
            )));
        }
        let t = match self {
            LinkFamily::Probit => {
                let mut t = -SQRT_2 * erfc_inv(2.0 * q);
                // Two Newton steps on whichever tail is accurate.
                for _ in 0..2 {
                    let resid = if t > 0.0 {
                        (1.0 - q) - self.sf(t)
                    } else {
                        self.cdf(t) - q
                    };
                    let d = self.pdf(t);
                    if d > 0.0 && resid.is_finite() {
                        t -= resid / d;
                    }
                }
                t
            }
            LinkFamily::Logit => (q / (1.0 - q)).ln(),
            LinkFamily::Loglog => -(-q.ln()).ln(),
            LinkFamily::Cloglog => (-(-q).ln_1p()).ln(),
            LinkFamily::Cauchit => (PI * (q - 0.5)).tan(),
        };
        Ok(t)
    }

    /// `G(hi) − G(lo)` for `lo ≤ hi`, either end possibly infinite.
    ///
    /// When the interval sits in the upper half line the difference is taken
    /// between survival values, which keeps full relative precision for tiny
    /// upper-tail masses.
    pub fn interval_prob(self, lo: f64, hi: f64) -> f64 {
        if lo >= 0.0 {
            self.sf(lo) - self.sf(hi)
        } else {
            self.cdf(hi) - self.cdf(lo)
        }
    }
}

impl fmt::Display for LinkFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(LinkFamily::Probit),
            "logit" => Ok(LinkFamily::Logit),
            "loglog" => Ok(LinkFamily::Loglog),
            "cloglog" => Ok(LinkFamily::Cloglog),
            "cauchit" => Ok(LinkFamily::Cauchit),
            other => Err(Error::Config(format!("unknown link '{other}'"))),
        }
    }
}

/// Standard normal density.
pub(crate) fn normal_pdf(t: f64) -> f64 {
    LinkFamily::Probit.pdf(t)
}

/// Standard normal quantile.
pub(crate) fn normal_quantile(q: f64) -> Result<f64> {
    LinkFamily::Probit.quantile(q)
}
