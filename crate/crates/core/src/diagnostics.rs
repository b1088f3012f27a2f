//! Posterior summaries, the Fisher-Rao robustness index, contamination
//! sweeps, estimate scoring and autocorrelation.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkFamily;
use crate::losses::{loo_log_ratio, loo_log_ratios, LossSpec, Prior};
use crate::model::{Dataset, Theta};
use crate::sim::inject_outlier;
use crate::wlb::{wlb_sample, PosteriorDraws, WlbConfig};

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n − 1)q`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub level: f64,
    pub rows: Vec<SummaryRow>,
    /// Draws summarized (failed draws excluded).
    pub n_used: usize,
    pub n_failed: usize,
}

pub fn parameter_names(p: usize, n_cut: usize, columns: Option<&[String]>) -> Vec<String> {
    let beta = (0..p).map(|j| match columns {
        Some(c) => format!("beta[{}]", c[j]),
        None => format!("beta[{}]", j + 1),
    });
    beta.chain((1..=n_cut).map(|k| format!("delta[{k}]"))).collect()
}

/// Column-wise summaries of usable draws at central credible level `level`.
pub fn summarize(draws: &PosteriorDraws, level: f64) -> Result<SummaryTable> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("credible level must lie in (0, 1), got {level}")));
    }
    let rows = draws.matrix();
    if rows.is_empty() {
        return Err(Error::Contract(format!("all {} draws failed", draws.draws.len())));
    }
    if rows.len() < 2 {
        return Err(Error::Contract("need at least two usable draws to summarize".into()));
    }
    let first = &draws.draws[0];
    let names = parameter_names(first.beta.len(), first.delta.len(), None);
    let a = 1.0 - level;
    let mut col = vec![0.0; rows.len()];
    let out = names
        .into_iter()
        .enumerate()
        .map(|(j, parameter)| {
            for (c, r) in col.iter_mut().zip(&rows) {
                *c = r[j];
            }
            let (mean, var) = mean_var(&col);
            col.sort_by(f64::total_cmp);
            SummaryRow {
                parameter,
                mean,
                median: quantile_sorted(&col, 0.5),
                sd: var.sqrt(),
                lo: quantile_sorted(&col, a / 2.0),
                hi: quantile_sorted(&col, 1.0 - a / 2.0),
            }
        })
        .collect();
    Ok(SummaryTable {
        level,
        rows: out,
        n_used: rows.len(),
        n_failed: draws.n_failed(),
    })
}

impl SummaryTable {
    /// Rename `beta[j]` rows after the dataset's covariates.
    pub fn with_column_names(mut self, columns: &[String]) -> Self {
        for (row, name) in self.rows.iter_mut().zip(columns) {
            if row.parameter.starts_with("beta[") {
                row.parameter = format!("beta[{name}]");
            }
        }
        self
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean).collect()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.lo, r.hi)).collect()
    }

    /// Posterior-mean point estimate, assembled from `beta[..]` and
    /// `delta[..]` rows in table order.
    pub fn point_estimate(&self) -> Result<Theta> {
        let pick = |prefix: &str| -> Vec<f64> {
            self.rows
                .iter()
                .filter(|r| r.parameter.starts_with(prefix))
                .map(|r| r.mean)
                .collect()
        };
        Theta::new(pick("beta["), pick("delta["))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["parameter", "mean", "median", "sd", "lo", "hi"])?;
        for r in &self.rows {
            wtr.write_record([
                r.parameter.clone(),
                r.mean.to_string(),
                r.median.to_string(),
                r.sd.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parse a table written by [`SummaryTable::write_csv`]. The level and
    /// draw counts are not stored in the file and come back as NaN and 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["parameter", "mean", "median", "sd", "lo", "hi"] {
            return Err(Error::Config(format!("unexpected summary header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                let cell = rec.get(j).unwrap_or("");
                cell.trim().parse().map_err(|_| Error::Cell {
                    row: i + 1,
                    column: header[j].clone(),
                    message: format!("'{cell}' is not a number"),
                })
            };
            rows.push(SummaryRow {
                parameter: rec.get(0).unwrap_or("").to_string(),
                mean: num(1)?,
                median: num(2)?,
                sd: num(3)?,
                lo: num(4)?,
                hi: num(5)?,
            });
        }
        Ok(SummaryTable {
            level: f64::NAN,
            rows,
            n_used: 0,
            n_failed: 0,
        })
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Hellinger affinity between the posterior and a reweighted version of it,
/// from per-draw log density ratios `ℓ_b` known up to an additive constant.
///
/// Returns `(affinity, index)` where `index = arccos(affinity)`. Non-finite
/// ratios are dropped; more than half of them is an error.
pub fn fisher_rao_from_log_ratios(log_ratios: &[f64], unit: usize) -> Result<(f64, f64)> {
    let total = log_ratios.len();
    let finite: Vec<f64> = log_ratios.iter().copied().filter(|v| v.is_finite()).collect();
    let non_finite = total - finite.len();
    if total == 0 || 2 * non_finite > total || finite.is_empty() {
        return Err(Error::UnstableIndex { unit, non_finite, total });
    }
    let b = (finite.len() as f64).ln();
    let half = log_sum_exp(finite.iter().map(|v| 0.5 * v)) - b;
    let full = log_sum_exp(finite.iter().copied()) - b;
    let affinity = (half - 0.5 * full).exp().min(1.0);
    Ok((affinity, affinity.acos()))
}

/// Fisher-Rao distance between the posterior and its leave-unit-`i`-out
/// version, estimated from the posterior draws by importance reweighting.
///
/// The prior cancels in the ratio and only enters through validation.
pub fn fisher_rao_index(
    draws: &PosteriorDraws,
    data: &Dataset,
    spec: &LossSpec,
    prior: &Prior,
    link: LinkFamily,
    i: usize,
) -> Result<f64> {
    let ls: Vec<f64> = draws
        .usable()
        .map(|t| loo_log_ratio(spec, t, data, i, prior, link).unwrap_or(f64::NAN))
        .collect();
    if i >= data.n() {
        return Err(Error::Contract(format!("unit {i} out of range 0..{}", data.n())));
    }
    Ok(fisher_rao_from_log_ratios(&ls, i)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// `d_i ∈ [0, π/2]`; NaN where the estimate was unstable.
    pub index: Vec<f64>,
    pub affinity: Vec<f64>,
    /// Count of non-finite log ratios per unit.
    pub non_finite: Vec<usize>,
    pub n_draws: usize,
}

impl RobustnessReport {
    /// First unstable unit as an error, if any.
    pub fn check(&self) -> Result<()> {
        match self.index.iter().position(|v| v.is_nan()) {
            Some(unit) => Err(Error::UnstableIndex {
                unit,
                non_finite: self.non_finite[unit],
                total: self.n_draws,
            }),
            None => Ok(()),
        }
    }
}

/// [`fisher_rao_index`] for every unit, sharing the per-draw reward pass.
pub fn robustness_report(
    draws: &PosteriorDraws,
    data: &Dataset,
    spec: &LossSpec,
    link: LinkFamily,
) -> Result<RobustnessReport> {
    let usable: Vec<&Theta> = draws.usable().collect();
    let n = data.n();
    let per_draw: Vec<Vec<f64>> = usable
        .par_iter()
        .map(|t| match loo_log_ratios(spec, t, data, link) {
            Ok(v) => v,
            Err(Error::DegenerateObjective(_)) => vec![f64::NAN; n],
            Err(e) => panic!("draw incompatible with data: {e}"),
        })
        .collect();
    let mut report = RobustnessReport {
        index: Vec::with_capacity(n),
        affinity: Vec::with_capacity(n),
        non_finite: Vec::with_capacity(n),
        n_draws: usable.len(),
    };
    if let Some(t) = usable.first() {
        crate::model::check_compatible(t, data)?;
    }
    let mut ls = vec![0.0; usable.len()];
    for i in 0..n {
        for (l, row) in ls.iter_mut().zip(&per_draw) {
            *l = row[i];
        }
        let nf = ls.iter().filter(|v| !v.is_finite()).count();
        report.non_finite.push(nf);
        match fisher_rao_from_log_ratios(&ls, i) {
            Ok((a, d)) => {
                report.affinity.push(a);
                report.index.push(d);
            }
            Err(Error::UnstableIndex { .. }) => {
                report.affinity.push(f64::NAN);
                report.index.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub unit: usize,
    pub covariate: usize,
    /// `+1` pushes the unit's `δ_y − xᵀβ` up, `−1` down.
    pub direction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: LossSpec,
    pub omega: f64,
    /// Euclidean distance between the posterior mean and the reference mean.
    pub drift: f64,
    pub mc_se: f64,
    pub mean: Vec<f64>,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Posterior mean on the clean data with the unit removed, per spec.
    pub reference: Vec<Vec<f64>>,
}

fn column_moments(draws: &PosteriorDraws) -> (Vec<f64>, Vec<f64>, usize) {
    let m = draws.matrix();
    let d = draws.dim();
    let mut means = Vec::with_capacity(d);
    let mut vars = Vec::with_capacity(d);
    let mut col = vec![0.0; m.len()];
    for j in 0..d {
        for (c, r) in col.iter_mut().zip(&m) {
            *c = r[j];
        }
        let (mu, v) = mean_var(&col);
        means.push(mu);
        vars.push(v);
    }
    (means, vars, m.len())
}

/// Drift of the posterior mean as one covariate cell is pushed away by `ω`.
///
/// The reference is the posterior on `data_clean` with the unit removed.
/// Every cell reuses `config.seed`, so cells differ only through the data.
pub fn posterior_robustness_sweep(
    data_clean: &Dataset,
    specs: &[LossSpec],
    contamination: &Contamination,
    omegas: &[f64],
    prior: &Prior,
    link: LinkFamily,
    config: &WlbConfig,
) -> Result<SweepTable> {
    if omegas.first() != Some(&0.0) {
        return Err(Error::Config("omega list must start at 0".into()));
    }
    if omegas.windows(2).any(|w| !(w[0] < w[1])) || omegas.iter().any(|w| !w.is_finite()) {
        return Err(Error::Config("omegas must be finite and strictly increasing".into()));
    }
    let Contamination { unit, covariate, direction } = *contamination;
    inject_outlier(data_clean, unit, covariate, -direction, 0.0)?;
    let reduced = data_clean.without_unit(unit)?;
    let datasets: Vec<Dataset> = omegas
        .iter()
        .map(|&w| inject_outlier(data_clean, unit, covariate, -direction, w))
        .collect::<Result<_>>()?;

    let run = || -> Result<SweepTable> {
        let inner = WlbConfig { workers: 0, ..*config };
        let reference: Vec<(Vec<f64>, Vec<f64>, usize)> = specs
            .par_iter()
            .map(|s| wlb_sample(s, &reduced, prior, link, &inner).map(|d| column_moments(&d)))
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, usize)> = (0..specs.len())
            .flat_map(|s| (0..omegas.len()).map(move |k| (s, k)))
            .collect();
        let rows = cells
            .par_iter()
            .map(|&(s, k)| {
                let draws = wlb_sample(&specs[s], &datasets[k], prior, link, &inner)?;
                let (mean, var, used) = column_moments(&draws);
                let (ref_mean, ref_var, ref_used) = &reference[s];
                let diff: Vec<f64> = mean.iter().zip(ref_mean).map(|(a, b)| a - b).collect();
                let drift = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                let cell_var: Vec<f64> = var
                    .iter()
                    .zip(ref_var)
                    .map(|(a, b)| a / used as f64 + b / *ref_used as f64)
                    .collect();
                // delta method for the norm; at zero drift fall back to the largest coordinate
                let mc_se = if drift > 0.0 {
                    diff.iter()
                        .zip(&cell_var)
                        .map(|(d, v)| (d / drift).powi(2) * v)
                        .sum::<f64>()
                        .sqrt()
                } else {
                    cell_var.iter().copied().fold(0.0, f64::max).sqrt()
                };
                Ok(SweepRow {
                    spec: specs[s],
                    omega: omegas[k],
                    drift,
                    mc_se,
                    mean,
                    n_used: used,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepTable {
            rows,
            reference: reference.into_iter().map(|r| r.0).collect(),
        })
    };

    if config.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(run)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mse_beta: f64,
    pub mse_delta: f64,
    /// Fractions in `[0, 1]`.
    pub cp_beta: f64,
    pub cp_delta: f64,
}

/// Block-wise squared error and interval coverage of one replicate.
/// `intervals` follow the `(β, δ)` flattening of [`Theta::to_vec`].
pub fn score_estimates(estimate: &Theta, intervals: &[(f64, f64)], truth: &Theta) -> Result<Score> {
    if estimate.beta.len() != truth.beta.len()
        || estimate.delta.len() != truth.delta.len()
        || intervals.len() != truth.dim()
    {
        return Err(Error::Contract(format!(
            "dimension mismatch: estimate {}+{}, truth {}+{}, {} intervals",
            estimate.beta.len(),
            estimate.delta.len(),
            truth.beta.len(),
            truth.delta.len(),
            intervals.len()
        )));
    }
    let p = truth.beta.len();
    let mse = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    };
    let cp = |t: &[f64], iv: &[(f64, f64)]| -> f64 {
        t.iter().zip(iv).filter(|&(&v, &(lo, hi))| lo <= v && v <= hi).count() as f64 / t.len() as f64
    };
    Ok(Score {
        mse_beta: mse(&estimate.beta, &truth.beta),
        mse_delta: mse(&estimate.delta, &truth.delta),
        cp_beta: cp(&truth.beta, &intervals[..p]),
        cp_delta: cp(&truth.delta, &intervals[p..]),
    })
}

/// Sample autocorrelation at lags `1..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Contract(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::UndefinedAutocorrelation);
    }
    Ok((1..=max_lag)
        .map(|k| c[..c.len() - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}
