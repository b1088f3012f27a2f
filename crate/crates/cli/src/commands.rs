use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ordrobust::data::{load_csv, PreprocessSpec};
use ordrobust::diagnostics::{
    parameter_names, posterior_robustness_sweep, quantile_sorted, robustness_report, summarize, Contamination,
    SummaryTable,
};
use ordrobust::model::generalized_residuals;
use ordrobust::study::{run_study, StudyConfig};
use ordrobust::wlb::wlb_sample;
use ordrobust::{Dataset, LossKind, LossSpec, Prior, WlbConfig};

use crate::args::{
    Command, DataArgs, FitArgs, LossListArgs, ResidualArgs, RobustnessArgs, RobustnessMode, SamplerArgs,
    SimulateArgs,
};

/// Files produced by one command, held in memory until the run finishes.
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub inputs: Vec<PathBuf>,
    pub seed: u64,
}

/// Replace every input path by its canonical absolute form.
pub fn resolve_paths(cmd: &mut Command) -> Result<()> {
    fn canon(p: &mut PathBuf) -> Result<()> {
        *p = fs::canonicalize(&*p).with_context(|| format!("cannot open {}", p.display()))?;
        Ok(())
    }
    fn data(d: &mut DataArgs) -> Result<()> {
        canon(&mut d.data)?;
        canon(&mut d.preprocess)
    }
    match cmd {
        Command::Fit(a) => data(&mut a.input),
        Command::Residuals(a) => {
            data(&mut a.fit.input)?;
            if let Some(s) = a.summary.as_mut() {
                canon(s)?;
            }
            Ok(())
        }
        Command::Robustness(a) => data(&mut a.input),
        Command::Simulate(_) => Ok(()),
        Command::Replay(a) => canon(&mut a.manifest),
    }
}

pub fn execute(cmd: &Command, workers: usize) -> Result<RunOutput> {
    match cmd {
        Command::Fit(a) => fit(a, workers),
        Command::Residuals(a) => residuals(a, workers),
        Command::Simulate(a) => simulate(a, workers),
        Command::Robustness(a) => robustness(a, workers),
        Command::Replay(_) => bail!("a manifest cannot record a replay"),
    }
}

fn loss_spec(kind: LossKind, tuning: Option<f64>, learning_rate: f64) -> Result<LossSpec> {
    let spec = match (kind, tuning) {
        (LossKind::Loglik, t) => {
            if t.is_some() {
                log::warn!("--tuning is ignored for --loss loglik");
            }
            LossSpec::loglik()
        }
        (k, Some(t)) => LossSpec::new(k, t),
        (k, None) => bail!("--tuning is required for --loss {k}"),
    }
    .with_learning_rate(learning_rate);
    spec.validate().context("invalid --tuning or --learning-rate")?;
    Ok(spec)
}

fn loss_specs(args: &LossListArgs, learning_rate: f64) -> Result<Vec<LossSpec>> {
    let mut specs = Vec::new();
    for &kind in &args.losses {
        if kind == LossKind::Loglik {
            specs.push(LossSpec::loglik().with_learning_rate(learning_rate));
            continue;
        }
        if args.tunings.is_empty() {
            bail!("--tunings must list at least one value for --losses {kind}");
        }
        for &t in &args.tunings {
            specs.push(LossSpec::new(kind, t).with_learning_rate(learning_rate));
        }
    }
    if specs.is_empty() {
        bail!("--losses must name at least one loss");
    }
    let mut seen = Vec::with_capacity(specs.len());
    for s in specs {
        s.validate().context("invalid --tunings or --learning-rate")?;
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    Ok(seen)
}

fn prior(sd: f64) -> Result<Prior> {
    Prior::new(sd, sd).context("invalid --prior-sd")
}

fn wlb_config(s: &SamplerArgs, workers: usize) -> WlbConfig {
    WlbConfig {
        workers,
        ..WlbConfig::new(s.draws, s.seed)
    }
}

fn load(input: &DataArgs) -> Result<Dataset> {
    let text = fs::read_to_string(&input.preprocess)
        .with_context(|| format!("cannot read --preprocess {}", input.preprocess.display()))?;
    let spec = PreprocessSpec::from_json(&text).context("invalid --preprocess file")?;
    let data = load_csv(&input.data, &spec).with_context(|| format!("cannot load --data {}", input.data.display()))?;
    log::info!("loaded {}", data.describe());
    Ok(data)
}

fn tuning_cell(spec: &LossSpec) -> String {
    match spec.kind {
        LossKind::Loglik => String::new(),
        _ => spec.tuning.to_string(),
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().context("csv buffer")
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn fit_table(a: &FitArgs, data: &Dataset, workers: usize) -> Result<(SummaryTable, ordrobust::PosteriorDraws)> {
    let spec = loss_spec(a.loss, a.tuning, a.sampler.learning_rate)?;
    let draws = wlb_sample(&spec, data, &prior(a.sampler.prior_sd)?, a.sampler.link, &wlb_config(&a.sampler, workers))?;
    let table = summarize(&draws, a.level)
        .context("invalid --level")?
        .with_column_names(data.column_names());
    Ok((table, draws))
}

fn fit(a: &FitArgs, workers: usize) -> Result<RunOutput> {
    let data = load(&a.input)?;
    let (table, draws) = fit_table(a, &data, workers)?;
    let mut summary = Vec::new();
    table.write_csv(&mut summary)?;
    let mut files = vec![("summary.csv".to_string(), summary)];
    if a.emit_draws {
        let mut header = strings(&["draw", "flag"]);
        header.extend(parameter_names(data.p(), data.n_categories() - 1, Some(data.column_names())));
        let rows: Vec<Vec<String>> = draws
            .draws
            .iter()
            .zip(&draws.flags)
            .enumerate()
            .map(|(b, (t, f))| {
                let mut r = vec![(b + 1).to_string(), f.name().to_string()];
                r.extend(t.to_vec().iter().map(f64::to_string));
                r
            })
            .collect();
        files.push(("draws.csv".into(), csv_bytes(&header, &rows)?));
    }
    Ok(RunOutput {
        files,
        inputs: vec![a.input.data.clone(), a.input.preprocess.clone()],
        seed: a.sampler.seed,
    })
}

fn residuals(a: &ResidualArgs, workers: usize) -> Result<RunOutput> {
    let data = load(&a.fit.input)?;
    let mut inputs = vec![a.fit.input.data.clone(), a.fit.input.preprocess.clone()];
    let theta = match &a.summary {
        Some(path) => {
            inputs.push(path.clone());
            let f = fs::File::open(path).with_context(|| format!("cannot open --summary {}", path.display()))?;
            SummaryTable::read_csv(f)
                .and_then(|t| t.point_estimate())
                .with_context(|| format!("invalid --summary {}", path.display()))?
        }
        None => fit_table(&a.fit, &data, workers)?.0.point_estimate()?,
    };
    let res = generalized_residuals(&theta, &data, a.fit.sampler.link)
        .context("--summary does not match the data")?;
    let mut sorted = res.clone();
    sorted.sort_by(f64::total_cmp);
    let band = [0.005, 0.025, 0.975, 0.995].map(|q| quantile_sorted(&sorted, q));
    let header = strings(&[
        "unit", "y", "residual", "band95_lo", "band95_hi", "band99_lo", "band99_hi", "outside95",
    ]);
    let rows: Vec<Vec<String>> = res
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                (i + 1).to_string(),
                data.y()[i].to_string(),
                e.to_string(),
                band[1].to_string(),
                band[2].to_string(),
                band[0].to_string(),
                band[3].to_string(),
                (*e < band[1] || *e > band[2]).to_string(),
            ]
        })
        .collect();
    Ok(RunOutput {
        files: vec![("residuals.csv".into(), csv_bytes(&header, &rows)?)],
        inputs,
        seed: a.fit.sampler.seed,
    })
}

fn simulate(a: &SimulateArgs, workers: usize) -> Result<RunOutput> {
    if a.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
        bail!("--rho values must lie in [0, 1]");
    }
    let cfg = StudyConfig {
        error: a.error,
        rhos: a.rho.clone(),
        reps: a.reps,
        n: a.n,
        specs: loss_specs(&a.losses, 1.0)?,
        wlb: WlbConfig {
            workers,
            ..WlbConfig::new(a.draws, a.seed)
        },
        level: a.level,
        prior: prior(a.prior_sd)?,
    };
    let rows = run_study(&cfg)?;
    let mse_header = strings(&[
        "loss",
        "tuning",
        "rho",
        "reps",
        "log_mse_beta",
        "log_mse_beta_se",
        "log_mse_delta",
        "log_mse_delta_se",
    ]);
    let cp_header = strings(&["loss", "tuning", "rho", "reps", "cp_beta_pct", "cp_delta_pct", "failed_draws"]);
    let mut mse = Vec::with_capacity(rows.len());
    let mut cp = Vec::with_capacity(rows.len());
    for r in &rows {
        let key = [r.spec.kind.to_string(), tuning_cell(&r.spec), r.rho.to_string(), r.reps.to_string()];
        let mut m = key.to_vec();
        m.extend([r.log_mse_beta, r.log_mse_beta_se, r.log_mse_delta, r.log_mse_delta_se].map(|v| v.to_string()));
        mse.push(m);
        let mut c = key.to_vec();
        c.extend([(100.0 * r.cp_beta).to_string(), (100.0 * r.cp_delta).to_string(), r.failed_draws.to_string()]);
        cp.push(c);
    }
    Ok(RunOutput {
        files: vec![
            ("mse.csv".into(), csv_bytes(&mse_header, &mse)?),
            ("coverage.csv".into(), csv_bytes(&cp_header, &cp)?),
        ],
        inputs: Vec::new(),
        seed: a.seed,
    })
}

fn covariate_index(data: &Dataset, key: &str) -> Result<usize> {
    if let Some(j) = data.column_names().iter().position(|c| c == key) {
        return Ok(j);
    }
    match key.parse::<usize>() {
        Ok(j) if (1..=data.p()).contains(&j) => Ok(j - 1),
        _ => bail!(
            "--covariate '{key}' is neither a design column ({}) nor a position in 1..={}",
            data.column_names().join(", "),
            data.p()
        ),
    }
}

fn robustness(a: &RobustnessArgs, workers: usize) -> Result<RunOutput> {
    let data = load(&a.input)?;
    let specs = loss_specs(&a.losses, a.sampler.learning_rate)?;
    let prior = prior(a.sampler.prior_sd)?;
    let cfg = wlb_config(&a.sampler, workers);
    let link = a.sampler.link;
    let file = match a.mode {
        RobustnessMode::Index => {
            let header = strings(&["unit", "loss", "tuning", "index", "affinity", "non_finite"]);
            let mut rows = Vec::new();
            for spec in &specs {
                let draws = wlb_sample(spec, &data, &prior, link, &cfg)?;
                let report = robustness_report(&draws, &data, spec, link)?;
                for i in 0..data.n() {
                    if report.index[i].is_nan() {
                        log::warn!(
                            "{spec}: index for unit {} is unstable ({} of {} log ratios non-finite)",
                            i + 1,
                            report.non_finite[i],
                            report.n_draws
                        );
                    }
                    rows.push(vec![
                        (i + 1).to_string(),
                        spec.kind.to_string(),
                        tuning_cell(spec),
                        report.index[i].to_string(),
                        report.affinity[i].to_string(),
                        report.non_finite[i].to_string(),
                    ]);
                }
            }
            ("index.csv".to_string(), csv_bytes(&header, &rows)?)
        }
        RobustnessMode::Sweep => {
            let Some(unit) = a.unit else { bail!("--unit is required for --mode sweep") };
            if !(1..=data.n()).contains(&unit) {
                bail!("--unit {unit} is outside 1..={}", data.n());
            }
            let Some(cov) = a.covariate.as_deref() else { bail!("--covariate is required for --mode sweep") };
            if a.direction != 1.0 && a.direction != -1.0 {
                bail!("--direction must be 1 or -1, got {}", a.direction);
            }
            let contamination = Contamination {
                unit: unit - 1,
                covariate: covariate_index(&data, cov)?,
                direction: a.direction,
            };
            let table = posterior_robustness_sweep(&data, &specs, &contamination, &a.omegas, &prior, link, &cfg)
                .context("invalid sweep settings (--omegas, --unit, --covariate)")?;
            let mut header = strings(&["loss", "tuning", "omega", "drift", "mc_se", "n_used"]);
            header.extend(
                parameter_names(data.p(), data.n_categories() - 1, Some(data.column_names()))
                    .into_iter()
                    .map(|n| format!("mean_{n}")),
            );
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut v = vec![
                        r.spec.kind.to_string(),
                        tuning_cell(&r.spec),
                        r.omega.to_string(),
                        r.drift.to_string(),
                        r.mc_se.to_string(),
                        r.n_used.to_string(),
                    ];
                    v.extend(r.mean.iter().map(f64::to_string));
                    v
                })
                .collect();
            ("sweep.csv".to_string(), csv_bytes(&header, &rows)?)
        }
    };
    Ok(RunOutput {
        files: vec![file],
        inputs: vec![a.input.data.clone(), a.input.preprocess.clone()],
        seed: a.sampler.seed,
    })
}

