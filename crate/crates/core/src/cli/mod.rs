//! Experiment runner: flags and config files are merged into one validated
//! plan, executed on a sized thread pool, and every output is written
//! atomically together with a `manifest.json`.

pub mod commands;
pub mod config;
pub mod parse;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::SeededStream;
use commands::Params;
use config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "sigres", version, about = "Empirical sigma-field resolution experiments")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
    /// Config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recovery of random box targets by growing empirical sigma-fields.
    Resolve(ResolveArgs),
    /// Lipschitz-loss and diameter-bound rates for the two partition schemes.
    Rates(RatesArgs),
    /// Partition-driven Skorokhod embedding.
    Embed(EmbedArgs),
    /// Random-splitting regression trees and forests.
    Forest(ForestArgs),
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub measure: Option<String>,
    /// corner | ball
    #[arg(long)]
    pub generators: Option<String>,
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub reference: Option<String>,
    /// Number of random cut sets for the adversarial witness check.
    #[arg(long)]
    pub adversarial: Option<String>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// symmetric | asymmetric
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    /// Monte Carlo evaluation points per trial.
    #[arg(long)]
    pub eval: Option<String>,
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub measure: Option<String>,
    /// dubins | randomized
    #[arg(long)]
    pub construction: Option<String>,
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub chains: Option<String>,
    #[arg(long)]
    pub split_source: Option<String>,
    /// Time step of the optional Brownian path output.
    #[arg(long)]
    pub path_dt: Option<String>,
    #[arg(long)]
    pub path_horizon: Option<String>,
    /// Number of independent randomized embeddings on the same path.
    #[arg(long)]
    pub path_series: Option<String>,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    /// symmetric | asymmetric
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub split_source: Option<String>,
    #[arg(long)]
    pub witness: Option<String>,
    /// Split-count schedule m.
    #[arg(long)]
    pub splits: Option<String>,
    #[arg(long)]
    pub trees: Option<String>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Exact conditional means instead of finite training data.
    #[arg(long)]
    pub large_n: bool,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub eval: Option<String>,
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub csv: Option<String>,
    /// 0-based feature column indices.
    #[arg(long)]
    pub features: Option<String>,
    /// 0-based target column index.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<String>,
}

type Flags = Vec<(&'static str, Option<String>)>;

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Resolve(_) => "resolve",
            Command::Rates(_) => "rates",
            Command::Embed(_) => "embed",
            Command::Forest(_) => "forest",
        }
    }

    fn flags(&self) -> Flags {
        match self {
            Command::Resolve(a) => vec![
                ("measure", a.measure.clone()),
                ("generators", a.generators.clone()),
                ("radii", a.radii.clone()),
                ("targets", a.targets.clone()),
                ("schedule", a.schedule.clone()),
                ("trials", a.trials.clone()),
                ("reference", a.reference.clone()),
                ("adversarial", a.adversarial.clone()),
            ],
            Command::Rates(a) => vec![
                ("scheme", a.scheme.clone()),
                ("d", a.d.clone()),
                ("measure", a.measure.clone()),
                ("schedule", a.schedule.clone()),
                ("trials", a.trials.clone()),
                ("eval", a.eval.clone()),
                ("reference", a.reference.clone()),
            ],
            Command::Embed(a) => vec![
                ("measure", a.measure.clone()),
                ("construction", a.construction.clone()),
                ("depth", a.depth.clone()),
                ("chains", a.chains.clone()),
                ("split-source", a.split_source.clone()),
                ("path-dt", a.path_dt.clone()),
                ("path-horizon", a.path_horizon.clone()),
                ("path-series", a.path_series.clone()),
            ],
            Command::Forest(a) => vec![
                ("scheme", a.scheme.clone()),
                ("d", a.d.clone()),
                ("measure", a.measure.clone()),
                ("split-source", a.split_source.clone()),
                ("witness", a.witness.clone()),
                ("splits", a.splits.clone()),
                ("trees", a.trees.clone()),
                ("noise", a.noise.clone()),
                ("n", a.n.clone()),
                ("large-n", a.large_n.then(|| "true".to_string())),
                ("trials", a.trials.clone()),
                ("eval", a.eval.clone()),
                ("reference", a.reference.clone()),
                ("csv", a.csv.clone()),
                ("features", a.features.clone()),
                ("target", a.target.clone()),
                ("test-fraction", a.test_fraction.clone()),
            ],
        }
    }
}

/// Fully merged run parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub params: BTreeMap<String, String>,
}

/// Merges the config file (if any) with flags; flags win.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let command = match (&cli.command, file.get("run", "command")) {
        (Some(c), _) => c.name().to_string(),
        (None, Some(c)) => c.to_string(),
        (None, None) => return Err(Error::config("command: no subcommand given (resolve, rates, embed or forest)")),
    };
    if config::section_keys(&command).is_none() || command == "run" {
        return Err(Error::config(format!("command: unknown subcommand '{command}'")));
    }
    let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get("run", key).map(str::to_string));
    let seed = match pick(&cli.seed, "seed") {
        Some(s) => s.trim().parse().map_err(|_| Error::config(format!("seed: cannot parse '{s}' as u64")))?,
        None => 0,
    };
    let threads = match pick(&cli.threads, "threads") {
        Some(s) => s.trim().parse().map_err(|_| Error::config(format!("threads: cannot parse '{s}'")))?,
        None => 0,
    };
    let out = PathBuf::from(pick(&cli.out, "out").unwrap_or_else(|| "out".to_string()));
    let mut params = file.section(&command);
    if let Some(c) = &cli.command {
        for (key, value) in c.flags() {
            if let Some(v) = value {
                params.insert(key.to_string(), v);
            }
        }
    }
    Ok(RunConfig { command, seed, threads, out, params })
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Validates, executes and writes outputs plus the manifest.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let params = Params::new(&cfg.params);
    let plan = commands::plan(&cfg.command, &params)?;
    let resolved = params.into_resolved();
    let stream = SeededStream::from_seed(cfg.seed).named(&cfg.command);
    let outputs = exec::with_threads(cfg.threads, || commands::execute(&plan, stream))?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut records = Vec::with_capacity(outputs.len());
    for (name, bytes) in &outputs {
        write_atomic(&cfg.out, name, bytes)?;
        records.push(OutputRecord { file: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.clone(),
        seed: cfg.seed,
        threads: cfg.threads,
        config: resolved,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: records,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&cfg.out, "manifest.json", &bytes)?;
    Ok(manifest)
}

/// 2 for configuration problems, 1 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| run(&cfg).map(|m| (cfg, m)));
    match result {
        Ok((cfg, m)) => {
            for o in &m.outputs {
                println!("{}", cfg.out.join(&o.file).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn flag_keys_match_config_keys() {
        let cmds = [
            parse(&["sigres", "resolve"]),
            parse(&["sigres", "rates"]),
            parse(&["sigres", "embed"]),
            parse(&["sigres", "forest"]),
        ];
        for c in cmds {
            let c = c.command.unwrap();
            let keys: Vec<&str> = c.flags().iter().map(|(k, _)| *k).collect();
            assert_eq!(keys, config::section_keys(c.name()).unwrap());
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "command = rates\nseed = 3\n[rates]\nschedule = 4,8\ntrials = 2\n").unwrap();
        let p = path.to_str().unwrap();
        let from_file = resolve_config(&parse(&["sigres", "--config", p])).unwrap();
        assert_eq!((from_file.command.as_str(), from_file.seed), ("rates", 3));
        assert_eq!(from_file.params["schedule"], "4,8");
        let over = resolve_config(&parse(&["sigres", "--config", p, "rates", "--seed", "9", "--trials", "5"])).unwrap();
        assert_eq!(over.seed, 9);
        assert_eq!(over.params["trials"], "5");
        assert_eq!(over.params["schedule"], "4,8");
    }

    #[test]
    fn contradictions_are_config_errors() {
        let cfg = resolve_config(&parse(&["sigres", "forest", "--n", "100", "--large-n"])).unwrap();
        let e = run(&cfg).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("large-n"));
        let cfg = resolve_config(&parse(&["sigres", "rates", "--d", "2", "--measure", "uniform:0:1:3"])).unwrap();
        assert_eq!(exit_code(&run(&cfg).unwrap_err()), 2);
        assert!(resolve_config(&parse(&["sigres", "--seed", "x", "rates"])).is_err());
    }
}
