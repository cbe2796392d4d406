//! Typed plans for each subcommand and their execution.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use serde_json::json;

use super::parse::{parse_bool, parse_list, parse_measure, parse_radii, parse_witness};
use crate::error::{Error, Result};
use crate::forest::{self, RiskConfig};
use crate::geometry::BoxRegion;
use crate::liploss::{rate_experiment, witness_family, LipschitzWitness, RateConfig, Scheme};
use crate::measure::{MeasureSpec, RadiusSpec};
use crate::resolution::{
    adversarial_witness, ball_convergence_trace, monotone_convergence_trace, random_corner_targets, write_traces_csv,
    ConvergenceTrace,
};
use crate::rng::SeededStream;
use crate::skorokhod::{
    dubins_levels, hits_on_path, randomized_levels, run_embedding, wasserstein1, write_path_csv, write_terminal_csv,
    BarrierSequence, BrownianPath, PathSimConfig,
};

/// Named output files and their contents.
pub type Outputs = Vec<(String, Vec<u8>)>;

/// Typed access to merged key/value parameters. Every value read, default
/// or not, is recorded for the manifest.
pub struct Params<'a> {
    map: &'a BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl<'a> Params<'a> {
    pub fn new(map: &'a BTreeMap<String, String>) -> Self {
        Params { map, resolved: RefCell::new(BTreeMap::new()) }
    }

    pub fn given(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn text(&self, key: &str, default: &str) -> String {
        let v = self.map.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        v
    }

    fn opt_text(&self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if let Some(v) = &v {
            self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        }
        v
    }

    fn num<T: FromStr>(&self, key: &str, default: &str) -> Result<T> {
        let v = self.text(key, default);
        v.trim()
            .parse()
            .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
    }

    fn positive(&self, key: &str, default: &str) -> Result<usize> {
        let v: usize = self.num(key, default)?;
        if v == 0 {
            return Err(Error::config(format!("{key}: must be at least 1")));
        }
        Ok(v)
    }

    fn schedule(&self, key: &str, default: &str) -> Result<Vec<usize>> {
        let s: Vec<usize> = parse_list(key, &self.text(key, default))?;
        if s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("{key}: must be strictly increasing")));
        }
        Ok(s)
    }

    fn scheme(&self) -> Result<Scheme> {
        Scheme::from_str(&self.text("scheme", "symmetric")).map_err(|e| Error::config(format!("scheme: {e}")))
    }

    pub fn into_resolved(self) -> BTreeMap<String, String> {
        self.resolved.into_inner()
    }
}

fn powers_of_two(max: usize) -> String {
    let mut v = Vec::new();
    let mut n = 1;
    while n <= max {
        v.push(n.to_string());
        n *= 2;
    }
    v.join(",")
}

fn unit_measure(d: usize) -> MeasureSpec {
    MeasureSpec::unit_cube(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generators {
    Corner,
    Ball,
}

#[derive(Debug, Clone)]
pub struct ResolvePlan {
    pub spec: MeasureSpec,
    pub generators: Generators,
    pub radii: RadiusSpec,
    pub targets: usize,
    pub schedule: Vec<usize>,
    pub trials: usize,
    pub reference: usize,
    pub adversarial: usize,
}

#[derive(Debug, Clone)]
pub struct RatesPlan {
    pub spec: MeasureSpec,
    pub config: RateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    Dubins,
    Randomized,
}

#[derive(Debug, Clone)]
pub struct EmbedPlan {
    pub spec: MeasureSpec,
    pub construction: Construction,
    pub depth: usize,
    pub chains: usize,
    pub split_source: MeasureSpec,
    /// (dt, horizon, series)
    pub path: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone)]
pub enum ForestPlan {
    Synthetic { config: RiskConfig, witness: LipschitzWitness, spec: MeasureSpec, split_source: MeasureSpec },
    Csv {
        path: PathBuf,
        features: Vec<usize>,
        target: usize,
        scheme: Scheme,
        schedule: Vec<usize>,
        trials: usize,
        trees: usize,
        test_fraction: f64,
    },
}

#[derive(Debug, Clone)]
pub enum Plan {
    Resolve(ResolvePlan),
    Rates(RatesPlan),
    Embed(EmbedPlan),
    Forest(ForestPlan),
}

/// Validates every parameter of `command` before anything runs.
pub fn plan(command: &str, p: &Params<'_>) -> Result<Plan> {
    match command {
        "resolve" => plan_resolve(p).map(Plan::Resolve),
        "rates" => plan_rates(p).map(Plan::Rates),
        "embed" => plan_embed(p).map(Plan::Embed),
        "forest" => plan_forest(p).map(Plan::Forest),
        other => Err(Error::config(format!("command: unknown subcommand '{other}'"))),
    }
}

fn plan_resolve(p: &Params<'_>) -> Result<ResolvePlan> {
    let spec = parse_measure("measure", &p.text("measure", "uniform:0:1:2"))?;
    if !spec.is_product() || spec.domain().is_none() {
        return Err(Error::config(format!("measure: recovery runs need a uniform or product measure, got {}", spec.kind_name())));
    }
    let generators = match p.text("generators", "corner").as_str() {
        "corner" => Generators::Corner,
        "ball" => Generators::Ball,
        other => return Err(Error::config(format!("generators: expected corner or ball, got '{other}'"))),
    };
    Ok(ResolvePlan {
        spec,
        generators,
        radii: parse_radii("radii", &p.text("radii", "uniform:0.25"))?,
        targets: p.positive("targets", "10")?,
        schedule: p.schedule("schedule", &powers_of_two(512))?,
        trials: p.positive("trials", "50")?,
        reference: p.positive("reference", "4096")?,
        adversarial: p.num("adversarial", "0")?,
    })
}

fn dimension_and_measure(p: &Params<'_>) -> Result<(usize, MeasureSpec)> {
    let d_given: Option<usize> = match p.opt_text("d") {
        Some(t) => Some(t.trim().parse().map_err(|_| Error::config(format!("d: cannot parse '{t}'")))?),
        None => None,
    };
    if d_given == Some(0) {
        return Err(Error::config("d: must be at least 1"));
    }
    match p.opt_text("measure") {
        Some(m) => {
            let spec = parse_measure("measure", &m)?;
            if let Some(d) = d_given {
                if d != spec.dim() {
                    return Err(Error::config(format!("d: {d} contradicts the {}-dimensional measure", spec.dim())));
                }
            }
            Ok((spec.dim(), spec))
        }
        None => {
            let d = d_given.unwrap_or(2);
            p.resolved.borrow_mut().insert("d".into(), d.to_string());
            p.resolved.borrow_mut().insert("measure".into(), format!("uniform:0:1:{d}"));
            Ok((d, unit_measure(d)))
        }
    }
}

fn plan_rates(p: &Params<'_>) -> Result<RatesPlan> {
    let scheme = p.scheme()?;
    let (_, spec) = dimension_and_measure(p)?;
    if !spec.is_product() || spec.domain().is_none() {
        return Err(Error::config(format!("measure: rate experiments need a uniform or product measure, got {}", spec.kind_name())));
    }
    Ok(RatesPlan {
        spec,
        config: RateConfig {
            scheme,
            schedule: p.schedule("schedule", "16,32,64,128,256,512,1024")?,
            trials: p.positive("trials", "100")?,
            eval_points: p.positive("eval", "4096")?,
            reference_points: p.positive("reference", "4096")?,
        },
    })
}

fn plan_embed(p: &Params<'_>) -> Result<EmbedPlan> {
    let spec = parse_measure("measure", &p.text("measure", "uniform:-0.5:0.5"))?;
    if spec.dim() != 1 {
        return Err(Error::config("measure: embedding targets must be one-dimensional"));
    }
    let mean = spec.mean()[0];
    if mean.abs() > crate::skorokhod::CENTERING_TOL {
        return Err(Error::config(format!("measure: target has mean {mean}; center it before embedding")));
    }
    let construction = match p.text("construction", "dubins").as_str() {
        "dubins" => Construction::Dubins,
        "randomized" => Construction::Randomized,
        other => return Err(Error::config(format!("construction: expected dubins or randomized, got '{other}'"))),
    };
    let split_source = match p.opt_text("split-source") {
        Some(t) => parse_measure("split-source", &t)?,
        None => spec.clone(),
    };
    if construction == Construction::Dubins && p.given("split-source") {
        return Err(Error::config("split-source: only used by the randomized construction"));
    }
    let path = match p.opt_text("path-dt") {
        Some(t) => {
            let dt: f64 = t.trim().parse().map_err(|_| Error::config(format!("path-dt: cannot parse '{t}'")))?;
            if !(dt > 0.0) {
                return Err(Error::config("path-dt: must be positive"));
            }
            let horizon: f64 = p.num("path-horizon", "10")?;
            if !(horizon > 0.0 && horizon.is_finite()) {
                return Err(Error::config("path-horizon: must be positive"));
            }
            let series = p.positive("path-series", "1")?;
            if series > 1 && construction == Construction::Dubins {
                return Err(Error::config("path-series: several series need the randomized construction"));
            }
            Some((dt, horizon, series))
        }
        None => {
            for key in ["path-horizon", "path-series"] {
                if p.given(key) {
                    return Err(Error::config(format!("{key}: requires path-dt")));
                }
            }
            None
        }
    };
    let depth: usize = if construction == Construction::Dubins {
        p.positive("depth", "12")?
    } else {
        p.num("depth", "200")?
    };
    Ok(EmbedPlan { spec, construction, depth, chains: p.positive("chains", "100000")?, split_source, path })
}

fn plan_forest(p: &Params<'_>) -> Result<ForestPlan> {
    let scheme = p.scheme()?;
    let schedule = p.schedule("splits", "16,64,256")?;
    let trials = p.positive("trials", "100")?;
    let trees = p.positive("trees", "1")?;
    if let Some(path) = p.opt_text("csv") {
        for key in ["witness", "measure", "noise", "n", "large-n", "d", "eval", "reference", "split-source"] {
            if p.given(key) {
                return Err(Error::config(format!("{key}: not applicable together with csv")));
            }
        }
        let features: Vec<usize> = parse_list(
            "features",
            &p.opt_text("features").ok_or_else(|| Error::config("features: required with csv"))?,
        )?;
        let target: usize = p
            .opt_text("target")
            .ok_or_else(|| Error::config("target: required with csv"))?
            .trim()
            .parse()
            .map_err(|_| Error::config("target: expected a column index"))?;
        let test_fraction: f64 = p.num("test-fraction", "0.2")?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("test-fraction: must lie in (0, 1)"));
        }
        return Ok(ForestPlan::Csv { path: PathBuf::from(path), features, target, scheme, schedule, trials, trees, test_fraction });
    }
    for key in ["features", "target", "test-fraction"] {
        if p.given(key) {
            return Err(Error::config(format!("{key}: only applicable together with csv")));
        }
    }
    let large_n = match p.opt_text("large-n") {
        Some(t) => parse_bool("large-n", &t)?,
        None => false,
    };
    if large_n && p.given("n") {
        return Err(Error::config("n: contradicts large-n"));
    }
    let n = if large_n { None } else { Some(p.positive("n", "10000")?) };
    let (d, spec) = dimension_and_measure(p)?;
    if spec.domain() != Some(BoxRegion::unit(d)) {
        return Err(Error::config("measure: the data law must live on [0, 1]^d"));
    }
    let split_source = match p.opt_text("split-source") {
        Some(t) => parse_measure("split-source", &t)?,
        None => unit_measure(d),
    };
    if split_source.domain() != Some(BoxRegion::unit(d)) {
        return Err(Error::config("split-source: must live on [0, 1]^d"));
    }
    let centre = vec!["0.5"; d].join(",");
    let witness = parse_witness("witness", &p.text("witness", &format!("distance:{centre}")))?;
    witness.validate(d).map_err(|e| Error::config(format!("witness: {e}")))?;
    let noise: f64 = p.num("noise", "0")?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("noise: must be nonnegative"));
    }
    Ok(ForestPlan::Synthetic {
        config: RiskConfig {
            scheme,
            schedule,
            trials,
            n,
            noise,
            trees,
            eval_points: p.positive("eval", "4096")?,
            reference_points: p.positive("reference", "4096")?,
        },
        witness,
        spec,
        split_source,
    })
}

fn json_bytes(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

pub fn execute(plan: &Plan, stream: SeededStream) -> Result<Outputs> {
    match plan {
        Plan::Resolve(p) => execute_resolve(p, stream),
        Plan::Rates(p) => execute_rates(p, stream),
        Plan::Embed(p) => execute_embed(p, stream),
        Plan::Forest(p) => execute_forest(p, stream),
    }
}

fn execute_resolve(p: &ResolvePlan, stream: SeededStream) -> Result<Outputs> {
    let domain = p.spec.domain().expect("validated");
    let targets = random_corner_targets(&domain, p.targets, stream.named("targets"));
    let traces: Vec<ConvergenceTrace> = match p.generators {
        Generators::Corner => {
            monotone_convergence_trace(&p.spec, &targets, &p.schedule, p.trials, p.reference, stream.named("traces"))?
        }
        Generators::Ball => targets
            .iter()
            .map(|t| ball_convergence_trace(&p.spec, &p.radii, t, &p.schedule, p.trials, p.reference, stream.named("traces")))
            .collect::<Result<_>>()?,
    };
    let mut csv = Vec::new();
    write_traces_csv(&mut csv, &traces)?;
    let mut outputs = vec![("traces.csv".to_string(), csv)];

    let mut summary = json!({
        "generators": match p.generators { Generators::Corner => "corner", Generators::Ball => "ball" },
        "dim": p.spec.dim(),
        "traces": traces.iter().map(|t| json!({
            "target": t.target_id,
            "final_mean": t.mean.last(),
            "final_std_error": t.std_error.last(),
            "nonincreasing_within_3se": t.is_nonincreasing_within(3.0),
            "floor": t.floor,
        })).collect::<Vec<_>>(),
    });
    if p.adversarial > 0 {
        let mut rng = stream.named("adversarial").rng();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case", "cells", "loss", "loss_is_one"])?;
        let mut exact = 0;
        for case in 0..p.adversarial {
            let k = rng.random_range(1..=32);
            let mut cuts: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).filter(|c| *c > 0.0).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let wit = adversarial_witness(&cuts)?;
            let one = wit.loss == num_rational::BigRational::from_integer(1.into());
            exact += one as usize;
            w.write_record([case.to_string(), (cuts.len() + 1).to_string(), wit.loss_f64().to_string(), one.to_string()])?;
        }
        outputs.push(("adversarial.csv".to_string(), w.into_inner().map_err(|e| Error::Io(e.into_error()))?));
        summary["adversarial"] = json!({ "cases": p.adversarial, "loss_exactly_one": exact });
    }
    outputs.push(("summary.json".to_string(), json_bytes(&summary)?));
    Ok(outputs)
}

fn execute_rates(p: &RatesPlan, stream: SeededStream) -> Result<Outputs> {
    let domain = p.spec.domain().expect("validated");
    let witnesses = witness_family(&domain, stream.named("witnesses"));
    let report = rate_experiment(&p.config, &p.spec, &witnesses, stream.named("trials"))?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut summary = report.summary_json();
    summary["witnesses"] = json!(witnesses.iter().map(|w| w.to_string()).collect::<Vec<_>>());
    Ok(vec![("rates.csv".to_string(), csv), ("summary.json".to_string(), json_bytes(&summary)?)])
}

fn build_sequence(p: &EmbedPlan, stream: SeededStream) -> Result<BarrierSequence> {
    match p.construction {
        Construction::Dubins => dubins_levels(&p.spec, p.depth),
        Construction::Randomized => randomized_levels(&p.spec, &p.split_source, p.depth, stream),
    }
}

fn execute_embed(p: &EmbedPlan, stream: SeededStream) -> Result<Outputs> {
    let seq = build_sequence(p, stream.named("cuts").child(0))?;
    let run = run_embedding(&seq, p.chains, stream.named("chains"))?;
    let second = p.spec.second_moment()?;
    let w1 = wasserstein1(&run.terminal, &p.spec)?;
    let mut terminal = Vec::new();
    write_terminal_csv(&mut terminal, &run.terminal)?;
    let mut summary = json!({
        "construction": match p.construction { Construction::Dubins => "dubins", Construction::Randomized => "randomized" },
        "depth": p.depth,
        "chains": p.chains,
        "second_moment": second,
        "mean_duration": run.mean_duration.value,
        "mean_duration_std_error": run.mean_duration.std_error,
        "relative_duration_error": (run.mean_duration.value - second).abs() / second,
        "exact_final_moment": seq.level(seq.depth()).second_moment(),
        "w1_terminal": w1,
        "max_transition_error": run.max_transition_error,
        "steps": run.steps,
        "per_depth": run.per_depth,
    });
    let mut outputs = vec![("terminal.csv".to_string(), terminal)];
    if let Some((dt, horizon, series)) = p.path {
        let path = BrownianPath::simulate(&PathSimConfig { dt, horizon, stream: stream.named("path") })?;
        let mut hits = vec![hits_on_path(&seq, &path)?];
        for s in 1..series {
            let other = build_sequence(p, stream.named("cuts").child(s as u64))?;
            hits.push(hits_on_path(&other, &path)?);
        }
        summary["path_complete"] = json!(hits.iter().map(|h| h.complete).collect::<Vec<_>>());
        let mut csv = Vec::new();
        write_path_csv(&mut csv, &path, &hits)?;
        outputs.push(("path.csv".to_string(), csv));
    }
    outputs.push(("summary.json".to_string(), json_bytes(&summary)?));
    Ok(outputs)
}

fn execute_forest(p: &ForestPlan, stream: SeededStream) -> Result<Outputs> {
    let (report, extra) = match p {
        ForestPlan::Synthetic { config, witness, spec, split_source } => {
            (forest::risk_experiment(config, witness, spec, split_source, stream.named("risk"))?, json!({ "witness": witness.to_string() }))
        }
        ForestPlan::Csv { path, features, target, scheme, schedule, trials, trees, test_fraction } => {
            let data = forest::load_csv(path, features, *target)?;
            let src = MeasureSpec::unit_cube(data.dim());
            let r = forest::holdout_experiment(&data, *scheme, schedule, *trials, *trees, *test_fraction, &src, stream.named("holdout"))?;
            (r, json!({ "rows": data.len(), "provenance": data.provenance }))
        }
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut summary = report.summary_json();
    summary["mean_risk"] = json!(report.mean_risk);
    summary["empty_fraction"] = json!(report.empty_fraction);
    summary["input"] = extra;
    Ok(vec![("risk.csv".to_string(), csv), ("summary.json".to_string(), json_bytes(&summary)?)])
}
