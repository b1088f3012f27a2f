//! Weighted likelihood bootstrap.
//!
//! Each posterior draw is the minimizer of a weighted objective whose unit
//! weights are a fresh flat-Dirichlet vector. Draw `b` owns a ChaCha stream
//! keyed by `(seed, b)`, so results do not depend on how draws are scheduled
//! across worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkFamily;
use crate::losses::{LossSpec, Prior, WeightedObjective};
use crate::model::{check_compatible, Dataset, Theta, UnconstrainedTheta};
use crate::optim::{minimize, MinimizeOptions, MinimizeStatus, Minimum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub restart_jitter_sd: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-6,
            restarts: 3,
            restart_jitter_sd: 0.5,
        }
    }
}

/// How unit weights are generated per draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Flat Dirichlet(1, …, 1), the bootstrap proper.
    #[default]
    Dirichlet,
    /// Every weight `1/n`; each draw is then the penalized point estimate.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlbConfig {
    pub n_draws: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    #[serde(default)]
    pub weights: WeightScheme,
}

impl WlbConfig {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        WlbConfig {
            n_draws,
            seed,
            optimizer: OptimizerConfig::default(),
            workers: 0,
            weights: WeightScheme::Dirichlet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("at least one draw is required".into()));
        }
        if !(self.optimizer.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if !(self.optimizer.restart_jitter_sd >= 0.0) {
            return Err(Error::Config("restart jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceFlag {
    Converged,
    MaxIters,
    RestartedOk,
    Failed,
}

impl ConvergenceFlag {
    pub fn is_usable(self) -> bool {
        self != ConvergenceFlag::Failed
    }

    pub fn name(self) -> &'static str {
        match self {
            ConvergenceFlag::Converged => "converged",
            ConvergenceFlag::MaxIters => "max_iters",
            ConvergenceFlag::RestartedOk => "restarted_ok",
            ConvergenceFlag::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<Theta>,
    pub spec: LossSpec,
    pub link: LinkFamily,
    pub seed: u64,
    pub flags: Vec<ConvergenceFlag>,
}

impl PosteriorDraws {
    /// Draws that are not flagged `failed`.
    pub fn usable(&self) -> impl Iterator<Item = &Theta> {
        self.draws
            .iter()
            .zip(&self.flags)
            .filter(|(_, f)| f.is_usable())
            .map(|(t, _)| t)
    }

    pub fn n_failed(&self) -> usize {
        self.flags.iter().filter(|f| !f.is_usable()).count()
    }

    /// Usable draws as flattened `(β, δ)` rows.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.usable().map(Theta::to_vec).collect()
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Theta::dim)
    }
}

/// Flat Dirichlet draw via normalized unit-rate exponentials.
pub fn sample_dirichlet_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("Dirichlet dimension must be at least 1".into()));
    }
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// RNG stream for draw `b` under `seed`.
pub fn draw_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Starting point: `β = 0`, cutpoints at `G⁻¹` of the empirical cumulative
/// category proportions (clipped away from 0 and 1 for empty categories).
pub fn initial_theta(data: &Dataset, link: LinkFamily) -> Result<Theta> {
    let n = data.n() as f64;
    let counts = data.category_counts();
    let eps = 0.5 / n;
    let mut delta = Vec::with_capacity(counts.len() - 1);
    let mut cum = 0usize;
    for &c in &counts[..counts.len() - 1] {
        cum += c;
        let q = (cum as f64 / n).clamp(eps, 1.0 - eps).clamp(1e-6, 1.0 - 1e-6);
        let mut t = link.quantile(q)?;
        if let Some(&prev) = delta.last() {
            if t <= prev + 1e-3 {
                t = prev + 1e-3;
            }
        }
        delta.push(t);
    }
    Theta::new(vec![0.0; data.p()], delta)
}

struct DrawOutcome {
    theta: Theta,
    flag: ConvergenceFlag,
}

fn fit_one(
    obj: &WeightedObjective<'_>,
    starts: &[Vec<f64>],
    p: usize,
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> DrawOutcome {
    let opts = MinimizeOptions {
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        ..MinimizeOptions::default()
    };
    let run = |x0: &[f64]| {
        minimize(
            |v, g| obj.eval(v, Some(g)).unwrap_or(f64::INFINITY),
            x0,
            &opts,
        )
    };
    let rank = |m: &Minimum| match m.status {
        MinimizeStatus::Converged => 0,
        MinimizeStatus::Failed => 2,
        _ => 1,
    };
    let better = |m: &Minimum, best: &Minimum| {
        let finite = m.f.is_finite();
        (rank(m), !finite) < (rank(best), !best.f.is_finite())
            || (rank(m) == rank(best) && finite && (!best.f.is_finite() || m.f < best.f))
    };

    // every start is tried; a second basin from a shared pilot point guards
    // against draws trapped near a high-leverage unit
    let mut best = run(&starts[0]);
    for s in &starts[1..] {
        let m = run(s);
        if better(&m, &best) {
            best = m;
        }
    }
    if best.status == MinimizeStatus::Converged {
        return finish(best.x, p, ConvergenceFlag::Converged);
    }
    for _ in 0..cfg.restarts {
        let x0: Vec<f64> = starts[0]
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + cfg.restart_jitter_sd * z
            })
            .collect();
        let m = run(&x0);
        if m.status == MinimizeStatus::Converged {
            return finish(m.x, p, ConvergenceFlag::RestartedOk);
        }
        if better(&m, &best) {
            best = m;
        }
    }
    let flag = match best.status {
        MinimizeStatus::Failed => ConvergenceFlag::Failed,
        _ if !best.f.is_finite() => ConvergenceFlag::Failed,
        _ => ConvergenceFlag::MaxIters,
    };
    finish(best.x, p, flag)
}

fn finish(x: Vec<f64>, p: usize, flag: ConvergenceFlag) -> DrawOutcome {
    let u = UnconstrainedTheta::from_vec(&x, p).expect("optimizer preserves dimension");
    let theta = u.to_theta();
    // exp of a huge log-gap can overflow or collapse increments to zero
    let flag = if theta.validate().is_err() { ConvergenceFlag::Failed } else { flag };
    DrawOutcome { theta, flag }
}

/// Draw `config.n_draws` approximate posterior samples of θ.
pub fn wlb_sample(
    spec: &LossSpec,
    data: &Dataset,
    prior: &Prior,
    link: LinkFamily,
    config: &WlbConfig,
) -> Result<PosteriorDraws> {
    spec.validate()?;
    prior.validate()?;
    config.validate()?;
    let init = initial_theta(data, link)?;
    check_compatible(&init, data)?;
    if let Some(m) = data.category_counts().iter().position(|&c| c == 0) {
        log::warn!("category {} is never observed in {}", m + 1, data.describe());
    }
    let start = init.to_unconstrained()?.to_vec();
    let p = data.p();
    let n = data.n();
    let uniform = vec![1.0 / n as f64; n];
    let mut starts = vec![start.clone()];
    if let Ok(obj) = WeightedObjective::new(*spec, data, &uniform, *prior, link) {
        let pilot = fit_one(&obj, &[start], p, &config.optimizer, &mut draw_rng(config.seed, u64::MAX));
        if pilot.flag.is_usable() {
            starts.push(pilot.theta.to_unconstrained()?.to_vec());
        }
    }

    let one = |b: usize| -> DrawOutcome {
        let mut rng = draw_rng(config.seed, b as u64);
        let weights = match config.weights {
            WeightScheme::Dirichlet => sample_dirichlet_uniform(n, &mut rng).expect("n >= 1"),
            WeightScheme::Uniform => uniform.clone(),
        };
        match WeightedObjective::new(*spec, data, &weights, *prior, link) {
            Ok(obj) => fit_one(&obj, &starts, p, &config.optimizer, &mut rng),
            Err(_) => DrawOutcome {
                theta: init.clone(),
                flag: ConvergenceFlag::Failed,
            },
        }
    };

    let outcomes: Vec<DrawOutcome> = if config.workers == 0 {
        (0..config.n_draws).into_par_iter().map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(|| (0..config.n_draws).into_par_iter().map(one).collect())
    };

    let (draws, flags): (Vec<Theta>, Vec<ConvergenceFlag>) =
        outcomes.into_iter().map(|o| (o.theta, o.flag)).unzip();
    let failed = flags.iter().filter(|f| !f.is_usable()).count();
    if failed * 10 > config.n_draws {
        return Err(Error::SamplingFailure {
            failed,
            total: config.n_draws,
            spec: spec.to_string(),
            dataset: data.describe(),
        });
    }
    if failed > 0 {
        log::warn!("{failed} of {} draws failed for {spec}", config.n_draws);
    }
    Ok(PosteriorDraws {
        draws,
        spec: *spec,
        link,
        seed: config.seed,
        flags,
    })
}
