mod args;
mod commands;
mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::{execute, resolve_paths};
use manifest::{file_digest, read_manifest, sha256_hex, write_atomic, RunManifest, MANIFEST_FILE};

/// Replay reproduced different bytes.
#[derive(Debug, thiserror::Error)]
#[error("replay differs from the manifest in {0}")]
struct ReplayMismatch(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    use ordrobust::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::SamplingFailure { .. } | E::DegenerateObjective(_) | E::UnstableIndex { .. } => 3,
                E::Io(_) => 4,
                E::Csv(c) if c.is_io_error() => 4,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
        if cause.is::<ReplayMismatch>() {
            return 1;
        }
    }
    2
}

fn workers(flag: usize) -> Result<usize> {
    match std::env::var("ORDROBUST_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("ORDROBUST_WORKERS must be a nonnegative integer, got '{v}'")),
        Err(_) => Ok(flag),
    }
}

fn run_and_write(cmd: &Command, cli: &Cli, workers: usize) -> Result<RunManifest> {
    let start = Instant::now();
    let out = execute(cmd, workers)?;
    let mut inputs = BTreeMap::new();
    for p in &out.inputs {
        inputs.insert(p.display().to_string(), file_digest(p)?);
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create --out {}", cli.out.display()))?;
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &out.files {
        write_atomic(&cli.out, name, bytes)?;
        outputs.insert(name.clone(), sha256_hex(bytes));
    }
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        config: cmd.clone(),
        seed: out.seed,
        version: ordrobust::VERSION.to_string(),
        inputs,
        outputs,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_atomic(&cli.out, MANIFEST_FILE, &json)?;
    Ok(manifest)
}

fn run(cli: &Cli) -> Result<()> {
    let workers = workers(cli.workers)?;
    let mut cmd = cli.command.clone();
    resolve_paths(&mut cmd)?;
    let Command::Replay(replay) = &cmd else {
        let m = run_and_write(&cmd, cli, workers)?;
        for name in m.outputs.keys() {
            log::info!("wrote {}", cli.out.join(name).display());
        }
        return Ok(());
    };

    let recorded = read_manifest(&replay.manifest)?;
    if recorded.version != ordrobust::VERSION {
        log::warn!("manifest written by version {}, replaying with {}", recorded.version, ordrobust::VERSION);
    }
    for (path, digest) in &recorded.inputs {
        let now = file_digest(path.as_ref())?;
        if &now != digest {
            bail!("input {path} changed since the manifest was written");
        }
    }
    if matches!(recorded.config, Command::Replay(_)) {
        bail!("a manifest cannot record a replay");
    }
    let fresh = run_and_write(&recorded.config, cli, workers)?;
    for (name, digest) in &recorded.outputs {
        if fresh.outputs.get(name) != Some(digest) {
            return Err(ReplayMismatch(name.clone()).into());
        }
    }
    log::info!("replay reproduced {} output files", recorded.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
