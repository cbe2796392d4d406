//! Random-splitting regression trees and forests.
//!
//! A tree's partition comes from m iid split points: the grid through
//! every split coordinate (symmetric scheme) or the atoms of the corner
//! boxes below the split points (asymmetric scheme). Each cell predicts
//! the mean response of its training points; empty cells fall back to the
//! global training mean.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{dominated, BoxRegion, PointSet};
use crate::liploss::{fit_largest_decade, projected_values, LipschitzWitness, Scheme};
use crate::measure::MeasureSpec;
use crate::partition::{CornerPartition, Generator, GridPartition, SignaturePartition, EXACT_CELL_LIMIT};
use crate::resolution::PartitionRef;
use crate::rng::{set_key, SeededStream};
use crate::stats::{mean_se, Estimate, LogLogFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Provenance {
    Synthetic { witness: LipschitzWitness, noise: f64 },
    Csv { path: PathBuf, columns: Vec<String>, target: String, ranges: Vec<(f64, f64)> },
}

/// Features in [0, 1]^d with one response each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledData {
    #[serde(skip)]
    pub features: PointSet,
    #[serde(skip)]
    pub responses: Vec<f64>,
    pub provenance: Provenance,
}

impl LabeledData {
    pub fn new(features: PointSet, responses: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if features.len() != responses.len() {
            return Err(Error::config(format!(
                "{} feature rows but {} responses",
                features.len(),
                responses.len()
            )));
        }
        if features.as_flat().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("features must lie in [0, 1]^d"));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::config("responses must be finite"));
        }
        Ok(LabeledData { features, responses, provenance })
    }

    /// X ~ spec, Y = f(X) + σ·N(0, 1).
    pub fn synthetic(f: &LipschitzWitness, spec: &MeasureSpec, n: usize, noise: f64, stream: SeededStream) -> Result<Self> {
        if !(noise >= 0.0) {
            return Err(Error::config("noise must be nonnegative"));
        }
        f.validate(spec.dim())?;
        let features = spec.sample(n, stream.named("features"))?;
        let mut rng = stream.named("noise").rng();
        let responses = features
            .iter()
            .map(|x| {
                let e: f64 = rng.sample(StandardNormal);
                f.eval(x) + noise * e
            })
            .collect();
        Self::new(features, responses, Provenance::Synthetic { witness: f.clone(), noise })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Maps normalized features back to the original CSV units.
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        match &self.provenance {
            Provenance::Csv { ranges, .. } => x.iter().zip(ranges).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect(),
            Provenance::Synthetic { .. } => x.to_vec(),
        }
    }
}

/// Reads a headered, comma-separated file. `features` and `target` are
/// 0-based column indices; features are min-max normalized to [0, 1].
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_csv(path: &Path, features: &[usize], target: usize) -> Result<LabeledData> {
    if features.is_empty() {
        return Err(Error::config("at least one feature column is required"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let width = header.len();
    for c in features.iter().chain(std::iter::once(&target)) {
        if *c >= width {
            return Err(Error::config(format!("column {c} is out of range for a file with {width} columns")));
        }
    }
    let d = features.len();
    let mut raw = PointSet::new(d);
    let mut responses = Vec::new();
    let mut row_buf = vec![0.0; d];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let cell = |c: usize| -> Result<f64> {
            let text = rec.get(c).map(str::trim).unwrap_or("");
            if text.is_empty() {
                return Err(Error::Row { row, message: format!("missing value in column '{}'", &header[c]) });
            }
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row { row, message: format!("non-numeric value '{text}' in column '{}'", &header[c]) })
        };
        for (k, c) in features.iter().enumerate() {
            row_buf[k] = cell(*c)?;
        }
        responses.push(cell(target)?);
        raw.push(&row_buf);
    }
    if responses.is_empty() {
        return Err(Error::config(format!("{} has no data rows", path.display())));
    }
    let mut ranges = Vec::with_capacity(d);
    for (k, c) in features.iter().enumerate() {
        let col = raw.column(k);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(Error::DegenerateRange { column: header[*c].to_string(), value: lo });
        }
        ranges.push((lo, hi));
    }
    let mut coords = raw.as_flat().to_vec();
    for (j, v) in coords.iter_mut().enumerate() {
        let (lo, hi) = ranges[j % d];
        *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
    }
    LabeledData::new(
        PointSet::from_flat(d, coords)?,
        responses,
        Provenance::Csv {
            path: path.to_path_buf(),
            columns: features.iter().map(|c| header[*c].to_string()).collect(),
            target: header[target].to_string(),
            ranges,
        },
    )
}

#[derive(Debug, Clone)]
enum CellKey {
    Grid(GridPartition),
    /// Split points; a cell is the set of corner boxes A_G containing x.
    Corner(PointSet),
}

impl CellKey {
    fn key(&self, x: &[f64]) -> u128 {
        match self {
            CellKey::Grid(g) => g.cell_key(x),
            CellKey::Corner(splits) => splits
                .iter()
                .enumerate()
                .filter(|(_, g)| dominated(x, g))
                .fold(0u128, |acc, (k, _)| acc.wrapping_add(set_key(k))),
        }
    }
}

/// Regression tree with a random partition.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    scheme: Scheme,
    cells: CellKey,
    means: HashMap<u128, f64>,
    global_mean: f64,
}

/// Draws `m` split points from `split_source` and averages responses per
/// cell.
pub fn fit_tree(
    data: &LabeledData,
    scheme: Scheme,
    m: usize,
    split_source: &MeasureSpec,
    stream: SeededStream,
) -> Result<RegressionTree> {
    if data.is_empty() {
        return Err(Error::Fit("no training data".into()));
    }
    if split_source.dim() != data.dim() {
        return Err(Error::config("split source and data differ in dimension"));
    }
    let splits = split_source.sample(m, stream)?;
    fit_tree_with_splits(data, scheme, &splits)
}

pub fn fit_tree_with_splits(data: &LabeledData, scheme: Scheme, splits: &PointSet) -> Result<RegressionTree> {
    if data.is_empty() {
        return Err(Error::Fit("no training data".into()));
    }
    let cells = match scheme {
        Scheme::SymmetricGrid => CellKey::Grid(GridPartition::build_symmetric(splits, &BoxRegion::unit(data.dim()))?),
        Scheme::AsymmetricCorner => CellKey::Corner(splits.clone()),
    };
    let mut acc: HashMap<u128, (f64, usize)> = HashMap::new();
    for (x, y) in data.features.iter().zip(&data.responses) {
        let e = acc.entry(cells.key(x)).or_insert((0.0, 0));
        e.0 += y;
        e.1 += 1;
    }
    Ok(RegressionTree {
        scheme,
        cells,
        means: acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        global_mean: data.responses.iter().sum::<f64>() / data.len() as f64,
    })
}

impl RegressionTree {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.means.get(&self.cells.key(x)).copied().unwrap_or(self.global_mean)
    }

    /// Whether x falls in a cell holding at least one training point.
    pub fn is_occupied(&self, x: &[f64]) -> bool {
        self.means.contains_key(&self.cells.key(x))
    }

    pub fn occupied_cells(&self) -> usize {
        self.means.len()
    }
}

/// Average of independently randomized trees.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
}

impl ForestModel {
    pub fn new(trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::config("a forest needs at least one tree"));
        }
        Ok(ForestModel { trees })
    }

    /// `trees` trees, tree b using split stream `stream.child(b)`.
    pub fn fit(
        data: &LabeledData,
        scheme: Scheme,
        m: usize,
        trees: usize,
        split_source: &MeasureSpec,
        stream: SeededStream,
    ) -> Result<Self> {
        let fitted = exec::map_indexed(trees, |b| fit_tree(data, scheme, m, split_source, stream.child(b as u64)));
        Self::new(fitted.into_iter().collect::<Result<Vec<_>>>()?)
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Risk experiment parameters. `n = None` is the large-N limit, where cell
/// means are the exact conditional means of the true function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskConfig {
    pub scheme: Scheme,
    pub schedule: Vec<usize>,
    pub trials: usize,
    pub n: Option<usize>,
    pub noise: f64,
    pub trees: usize,
    pub eval_points: usize,
    /// Reference points for large-N corner partitions too big to enumerate.
    pub reference_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskPoint {
    pub m: usize,
    pub risk: Estimate,
    /// Share of evaluation points whose cell holds no training point
    /// (0 in large-N mode).
    pub empty_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub scheme: Scheme,
    pub d: usize,
    pub schedule: Vec<usize>,
    pub trials: usize,
    pub large_n: bool,
    pub mean_risk: Vec<f64>,
    pub std_err: Vec<f64>,
    pub empty_fraction: Vec<f64>,
    pub fit: Option<LogLogFit>,
    #[serde(skip)]
    pub per_trial: Vec<Vec<RiskPoint>>,
}

impl RiskReport {
    /// CSV with columns `scheme,d,m,mean_risk,std_err,empty_fraction`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scheme", "d", "m", "mean_risk", "std_err", "empty_fraction"])?;
        for k in 0..self.schedule.len() {
            w.write_record([
                self.scheme.to_string(),
                self.d.to_string(),
                self.schedule[k].to_string(),
                self.mean_risk[k].to_string(),
                self.std_err[k].to_string(),
                self.empty_fraction[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scheme": self.scheme,
            "d": self.d,
            "trials": self.trials,
            "large_n": self.large_n,
            "slope": self.fit.map(|f| f.slope),
            "half_width": self.fit.map(|f| f.half_width),
            "final_mean_risk": self.mean_risk.last(),
        })
    }
}

/// For every m and trial: fresh splits, fresh data (unless large-N) and a
/// Monte Carlo estimate of ‖f̂ − f‖ in L¹(spec). Trial t at every m uses
/// `stream.child(t)`, so runs of the two schemes with the same stream share
/// split points, data and evaluation points.
pub fn risk_experiment(
    cfg: &RiskConfig,
    f: &LipschitzWitness,
    spec: &MeasureSpec,
    split_source: &MeasureSpec,
    stream: SeededStream,
) -> Result<RiskReport> {
    let schedule = &cfg.schedule;
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("split schedule must be nonempty and strictly increasing"));
    }
    if cfg.trials == 0 || cfg.trees == 0 || cfg.eval_points == 0 {
        return Err(Error::config("trials, trees and evaluation points must be at least 1"));
    }
    if cfg.n == Some(0) {
        return Err(Error::config("training sample size must be at least 1"));
    }
    let d = spec.dim();
    f.validate(d)?;
    if spec.domain() != Some(BoxRegion::unit(d)) || split_source.domain() != Some(BoxRegion::unit(d)) {
        return Err(Error::config("data law and split source must live on [0, 1]^d"));
    }

    let results = exec::map_indexed(cfg.trials, |t| -> Result<Vec<RiskPoint>> {
        let ts = stream.child(t as u64);
        let eval = spec.sample(cfg.eval_points, ts.named("eval"))?;
        let truth: Vec<f64> = eval.iter().map(|x| f.eval(x)).collect();
        let mut out = Vec::with_capacity(schedule.len());
        for (k, &m) in schedule.iter().enumerate() {
            let ms = ts.child(k as u64);
            let mut pred = vec![0.0; eval.len()];
            let mut empty = 0usize;
            match cfg.n {
                None => {
                    for b in 0..cfg.trees {
                        let splits = split_source.sample(m, ms.named("splits").child(b as u64))?;
                        let vals = large_n_tree_values(
                            cfg.scheme,
                            f,
                            spec,
                            &splits,
                            &eval,
                            cfg.reference_points,
                            ms.named("reference").child(b as u64),
                        )?;
                        pred.iter_mut().zip(vals).for_each(|(p, v)| *p += v);
                    }
                }
                Some(n) => {
                    let data = LabeledData::synthetic(f, spec, n, cfg.noise, ms.named("data"))?;
                    for b in 0..cfg.trees {
                        let splits = split_source.sample(m, ms.named("splits").child(b as u64))?;
                        let tree = fit_tree_with_splits(&data, cfg.scheme, &splits)?;
                        for (p, x) in pred.iter_mut().zip(eval.iter()) {
                            *p += tree.predict(x);
                            if b == 0 && !tree.is_occupied(x) {
                                empty += 1;
                            }
                        }
                    }
                }
            }
            let devs: Vec<f64> =
                pred.iter().zip(&truth).map(|(p, y)| (p / cfg.trees as f64 - y).abs()).collect();
            out.push(RiskPoint { m, risk: mean_se(&devs), empty_fraction: empty as f64 / eval.len() as f64 });
        }
        Ok(out)
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg.scheme, d, schedule, cfg.n.is_none(), per_trial))
}

/// Real-data risk: for every trial, a random train/test split of `data`
/// and, per m, a forest's mean absolute error on the held-out rows.
pub fn holdout_experiment(
    data: &LabeledData,
    scheme: Scheme,
    schedule: &[usize],
    trials: usize,
    trees: usize,
    test_fraction: f64,
    split_source: &MeasureSpec,
    stream: SeededStream,
) -> Result<RiskReport> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("split schedule must be nonempty and strictly increasing"));
    }
    if trials == 0 || trees == 0 {
        return Err(Error::config("trials and trees must be at least 1"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("test fraction must lie in (0, 1)"));
    }
    let n_test = ((data.len() as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= data.len() {
        return Err(Error::config(format!("{} rows cannot be split with test fraction {test_fraction}", data.len())));
    }
    let d = data.dim();
    let results = exec::map_indexed(trials, |t| -> Result<Vec<RiskPoint>> {
        let ts = stream.child(t as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ts.named("holdout").rng());
        let (test_idx, train_idx) = order.split_at(n_test);
        let mut train = PointSet::with_capacity(d, train_idx.len());
        train_idx.iter().for_each(|i| train.push(data.features.point(*i)));
        let train = LabeledData {
            features: train,
            responses: train_idx.iter().map(|i| data.responses[*i]).collect(),
            provenance: data.provenance.clone(),
        };
        let mut out = Vec::with_capacity(schedule.len());
        for (k, &m) in schedule.iter().enumerate() {
            let forest = ForestModel::fit(&train, scheme, m, trees, split_source, ts.child(k as u64))?;
            let first = &forest.trees()[0];
            let mut empty = 0usize;
            let devs: Vec<f64> = test_idx
                .iter()
                .map(|i| {
                    let x = data.features.point(*i);
                    empty += !first.is_occupied(x) as usize;
                    (forest.predict(x) - data.responses[*i]).abs()
                })
                .collect();
            out.push(RiskPoint { m, risk: mean_se(&devs), empty_fraction: empty as f64 / n_test as f64 });
        }
        Ok(out)
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(scheme, d, schedule, false, per_trial))
}

fn summarize(scheme: Scheme, d: usize, schedule: &[usize], large_n: bool, per_trial: Vec<Vec<RiskPoint>>) -> RiskReport {
    let trials = per_trial.len();
    let mut mean_risk = Vec::new();
    let mut std_err = Vec::new();
    let mut empty_fraction = Vec::new();
    for k in 0..schedule.len() {
        let r = mean_se(&per_trial.iter().map(|t| t[k].risk.value).collect::<Vec<_>>());
        mean_risk.push(r.value);
        std_err.push(r.std_error);
        empty_fraction.push(per_trial.iter().map(|t| t[k].empty_fraction).sum::<f64>() / trials as f64);
    }
    RiskReport {
        scheme,
        d,
        schedule: schedule.to_vec(),
        trials,
        large_n,
        fit: fit_largest_decade(schedule, &mean_risk),
        mean_risk,
        std_err,
        empty_fraction,
        per_trial,
    }
}

/// Large-N tree predictions at `eval`: the projection of f onto the tree's
/// partition.
/// Predictions of the N → ∞ tree grown on `splits`: the exact conditional
/// mean of f over each cell. Corner partitions too large for exact cells
/// fall back to signatures over `reference_points` draws.
pub fn large_n_tree_values(
    scheme: Scheme,
    f: &LipschitzWitness,
    spec: &MeasureSpec,
    splits: &PointSet,
    eval: &PointSet,
    reference_points: usize,
    reference_stream: SeededStream,
) -> Result<Vec<f64>> {
    let d = spec.dim();
    match scheme {
        Scheme::SymmetricGrid => {
            let g = GridPartition::build_symmetric(splits, &BoxRegion::unit(d))?;
            projected_values(PartitionRef::Grid(&g), f, spec, eval)
        }
        Scheme::AsymmetricCorner => {
            if (splits.len() as u128 + 1).saturating_pow(d as u32) <= EXACT_CELL_LIMIT as u128 {
                let cp = CornerPartition::build(splits, spec)?;
                projected_values(PartitionRef::Corner(&cp), f, spec, eval)
            } else {
                if reference_points == 0 {
                    return Err(Error::config("reference points must be at least 1"));
                }
                let reference = std::sync::Arc::new(spec.sample(reference_points, reference_stream)?);
                let gens: Vec<Generator> = splits.iter().map(|p| Generator::CornerBox(p.to_vec())).collect();
                let sp = SignaturePartition::with_generators(BoxRegion::unit(d), reference, gens)?;
                projected_values(PartitionRef::Signature(&sp), f, spec, eval)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_1d(xs: &[f64], ys: &[f64]) -> LabeledData {
        LabeledData::new(PointSet::from_scalars(xs), ys.to_vec(), Provenance::Synthetic {
            witness: LipschitzWitness::Constant(0.0),
            noise: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn tree_examples() {
        let data = data_1d(&[0.2, 0.8], &[1.0, 3.0]);
        let src = MeasureSpec::unit_cube(1);
        let t0 = fit_tree(&data, Scheme::SymmetricGrid, 0, &src, SeededStream::from_seed(1)).unwrap();
        assert_eq!((t0.predict(&[0.1]), t0.predict(&[0.9])), (2.0, 2.0));
        let t = fit_tree_with_splits(&data, Scheme::SymmetricGrid, &PointSet::from_scalars(&[0.5])).unwrap();
        assert_eq!((t.predict(&[0.0]), t.predict(&[0.5]), t.predict(&[0.51]), t.predict(&[1.0])), (1.0, 1.0, 3.0, 3.0));
        let empty = LabeledData::new(PointSet::new(1), vec![], data.provenance.clone()).unwrap();
        assert!(matches!(fit_tree(&empty, Scheme::SymmetricGrid, 3, &src, SeededStream::from_seed(1)), Err(Error::Fit(_))));
    }

    #[test]
    fn representable_function_is_fit_exactly() {
        let f = LipschitzWitness::table(vec![0.0, 0.3, 0.300001, 1.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let spec = MeasureSpec::unit_cube(1);
        let xs = spec.sample(2000, SeededStream::from_seed(2)).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| if x[0] <= 0.3 { 0.0 } else { 1.0 }).collect();
        let data = LabeledData::new(xs.clone(), ys.clone(), Provenance::Synthetic { witness: f, noise: 0.0 }).unwrap();
        let t = fit_tree_with_splits(&data, Scheme::SymmetricGrid, &PointSet::from_scalars(&[0.3, 0.7])).unwrap();
        assert!(xs.iter().zip(&ys).all(|(x, y)| t.predict(x) == *y));
    }

    #[test]
    fn forest_examples() {
        let spec = MeasureSpec::unit_cube(2);
        let f = LipschitzWitness::DistanceToPoint(vec![0.5, 0.5]);
        let data = LabeledData::synthetic(&f, &spec, 300, 0.1, SeededStream::from_seed(3)).unwrap();
        let t = fit_tree(&data, Scheme::AsymmetricCorner, 20, &spec, SeededStream::from_seed(4)).unwrap();
        let same = ForestModel::new(vec![t.clone(); 5]).unwrap();
        let pts = spec.sample(100, SeededStream::from_seed(5)).unwrap();
        let forest = ForestModel::fit(&data, Scheme::SymmetricGrid, 10, 7, &spec, SeededStream::from_seed(6)).unwrap();
        let (lo, hi) = data.responses.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(*y), b.max(*y)));
        for x in pts.iter() {
            assert!((same.predict(x) - t.predict(x)).abs() < 1e-12);
            let avg = forest.trees().iter().map(|t| t.predict(x)).sum::<f64>() / 7.0;
            assert!((forest.predict(x) - avg).abs() < 1e-12);
            assert!(t.predict(x) >= lo && t.predict(x) <= hi);
        }
        assert!(ForestModel::new(vec![]).is_err());
    }

    #[test]
    fn forest_variance_shrinks_with_trees() {
        let spec = MeasureSpec::unit_cube(2);
        let f = LipschitzWitness::CoordinateProjection(0);
        let x = [0.37, 0.61];
        let mut variances = Vec::new();
        for b in [1usize, 4, 16] {
            let preds: Vec<f64> = (0..200u64)
                .map(|r| {
                    let s = SeededStream::new(7, r);
                    let data = LabeledData::synthetic(&f, &spec, 200, 0.5, s.named("data")).unwrap();
                    ForestModel::fit(&data, Scheme::SymmetricGrid, 8, b, &spec, s.named("trees")).unwrap().predict(&x)
                })
                .collect();
            let e = mean_se(&preds);
            variances.push(e.std_error.powi(2) * 200.0);
        }
        assert!(variances[1] <= variances[0] && variances[2] <= variances[1], "{variances:?}");
    }

    #[test]
    fn large_n_risk_matches_closed_form() {
        let cfg = RiskConfig {
            scheme: Scheme::SymmetricGrid,
            schedule: vec![10],
            trials: 300,
            n: None,
            noise: 0.0,
            trees: 1,
            eval_points: 2000,
            reference_points: 0,
        };
        let spec = MeasureSpec::unit_cube(1);
        let r = risk_experiment(&cfg, &LipschitzWitness::CoordinateProjection(0), &spec, &spec, SeededStream::from_seed(8))
            .unwrap();
        assert!((r.mean_risk[0] * 24.0 - 1.0).abs() < 0.05, "{}", r.mean_risk[0]);
        let c = risk_experiment(&cfg, &LipschitzWitness::Constant(2.0), &spec, &spec, SeededStream::from_seed(8)).unwrap();
        assert_eq!(c.mean_risk[0], 0.0);
        let finite = RiskConfig { n: Some(50), noise: 0.2, trials: 20, ..cfg };
        let r = risk_experiment(&finite, &LipschitzWitness::Constant(2.0), &spec, &spec, SeededStream::from_seed(8)).unwrap();
        assert!(r.mean_risk[0] > 0.0 && r.mean_risk[0] < 0.2);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("scheme,d,m,mean_risk,std_err,empty_fraction\n"));
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_examples() {
        let f = write("a,b,y\n0,5,1.5\n10,7,2.5\n");
        let data = load_csv(f.path(), &[0, 1], 2).unwrap();
        assert_eq!(data.features.as_flat(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(data.responses, vec![1.5, 2.5]);
        let f = write("a,b,y\n0.3,5,1\n1.7,6,1\n0.9,8,1\n");
        let data = load_csv(f.path(), &[0, 1], 2).unwrap();
        for (i, orig) in [[0.3, 5.0], [1.7, 6.0], [0.9, 8.0]].iter().enumerate() {
            let back = data.denormalize(data.features.point(i));
            assert!((back[0] - orig[0]).abs() < 1e-12 && (back[1] - orig[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn holdout_runs_on_csv_data() {
        let mut text = String::from("a,b,y\n");
        let mut rng = SeededStream::from_seed(9).rng();
        for _ in 0..400 {
            let (a, b): (f64, f64) = (rng.random::<f64>() * 10.0, rng.random::<f64>() * 3.0 - 1.0);
            text.push_str(&format!("{a},{b},{}\n", a + 2.0 * b));
        }
        let f = write(&text);
        let data = load_csv(f.path(), &[0, 1], 2).unwrap();
        let src = MeasureSpec::unit_cube(2);
        let r = holdout_experiment(&data, Scheme::SymmetricGrid, &[1, 8], 5, 4, 0.25, &src, SeededStream::from_seed(10)).unwrap();
        assert!(r.mean_risk[1] < r.mean_risk[0], "{:?}", r.mean_risk);
        assert!(holdout_experiment(&data, Scheme::SymmetricGrid, &[4], 1, 1, 1.0, &src, SeededStream::from_seed(1)).is_err());
    }

    #[test]
    fn csv_errors() {
        let f = write("x,y\n1,1\n2,2\n3,3\n4,4\n5,\n6,6\n");
        match load_csv(f.path(), &[0], 1) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 5),
            other => panic!("{other:?}"),
        }
        let f = write("x,y\n1,1\n2,abc\n");
        assert!(matches!(load_csv(f.path(), &[0], 1), Err(Error::Row { row: 2, .. })));
        let f = write("x,y\n3,1\n3,2\n");
        assert!(matches!(load_csv(f.path(), &[0], 1), Err(Error::DegenerateRange { .. })));
        assert!(matches!(load_csv(f.path(), &[4], 1), Err(Error::Config(_))));
    }
}
