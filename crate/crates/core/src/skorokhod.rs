//! Partition-driven Skorokhod embeddings of centered 1D laws into Brownian
//! motion.
//!
//! A [`BarrierSequence`] holds, for every level k, the cells cut out by the
//! level-k cut points together with the conditional mean (barrier value)
//! of each cell. Brownian motion started at 0 and stopped successively at
//! the barriers bracketing its current value realizes the martingale
//! E[X | F_k]. The embedded chain simulates those stopped values exactly;
//! durations are tracked through the two-barrier exit identity
//! E[τ] = (v − a)(b − v).

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::measure::{MeasureKind, MeasureSpec};
use crate::rng::SeededStream;
use crate::stats::{mean_se, Estimate};

/// Tolerance for the centering precondition.
pub const CENTERING_TOL: f64 = 1e-9;
/// Largest admissible transition-mean error in a chain step.
pub const MARTINGALE_TOL: f64 = 1e-12;

const CHAIN_BLOCK: usize = 2048;

/// One positive-mass cell (lo, hi] of a level and its conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierCell {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierLevel {
    pub cuts: Vec<f64>,
    pub cells: Vec<BarrierCell>,
}

impl BarrierLevel {
    pub fn values(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.value).collect()
    }

    /// Σ mass · value: zero for a centered target.
    pub fn mean(&self) -> f64 {
        self.cells.iter().map(|c| c.mass * c.value).sum()
    }

    /// E[(E[X | F_k])²].
    pub fn second_moment(&self) -> f64 {
        self.cells.iter().map(|c| c.mass * c.value * c.value).sum()
    }
}

/// Per-cell conditional means of a centered 1D law for the cells cut out by
/// `cuts`; zero-mass cells are dropped.
pub fn barriers_from_cuts(spec: &MeasureSpec, cuts: &[f64]) -> Result<BarrierLevel> {
    check_target(spec)?;
    let mut cuts = cuts.to_vec();
    if cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::config("cut points must be finite"));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut cells = Vec::with_capacity(cuts.len() + 1);
    let mut lo = f64::NEG_INFINITY;
    for hi in cuts.iter().copied().chain(std::iter::once(f64::INFINITY)) {
        let mass = spec.mass(lo, hi)?;
        if mass > 0.0 {
            cells.push(BarrierCell { lo, hi, mass, value: spec.conditional_mean(lo, hi)? });
        }
        lo = hi;
    }
    Ok(BarrierLevel { cuts, cells })
}

fn check_target(spec: &MeasureSpec) -> Result<()> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported(format!("embedding targets are 1D, got dimension {}", spec.dim())));
    }
    let mean = spec.mean()[0];
    if mean.abs() > CENTERING_TOL {
        return Err(Error::Validation(format!(
            "target has mean {mean}; center it (subtract the mean) before embedding"
        )));
    }
    if !spec.second_moment()?.is_finite() {
        return Err(Error::Validation("target needs a finite second moment".into()));
    }
    Ok(())
}

/// A transition out of a level-k cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    /// The cell is not split at level k + 1.
    Stay { child: usize },
    Split { down: usize, up: usize, a: f64, b: f64, p_down: f64 },
}

/// Levels 0..=depth of a refining cut sequence; level 0 is the trivial
/// partition with barrier value 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSequence {
    levels: Vec<BarrierLevel>,
    #[serde(skip)]
    children: Vec<Vec<(usize, usize)>>,
    #[serde(skip)]
    target: MeasureSpec,
}

impl BarrierSequence {
    pub fn trivial(spec: &MeasureSpec) -> Result<Self> {
        Self::from_levels(spec, vec![barriers_from_cuts(spec, &[])?])
    }

    fn from_levels(spec: &MeasureSpec, levels: Vec<BarrierLevel>) -> Result<Self> {
        let mut children = Vec::with_capacity(levels.len().saturating_sub(1));
        for w in levels.windows(2) {
            children.push(child_ranges(&w[0], &w[1])?);
        }
        let seq = BarrierSequence { levels, children, target: spec.clone() };
        seq.check_interleaving()?;
        Ok(seq)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[BarrierLevel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &BarrierLevel {
        &self.levels[k]
    }

    pub fn target(&self) -> &MeasureSpec {
        &self.target
    }

    /// Exact E[(E[X | F_k])²] for k = 0..=depth.
    pub fn exact_second_moments(&self) -> Vec<f64> {
        self.levels.iter().map(BarrierLevel::second_moment).collect()
    }

    /// Exact W₁ between the level-k law of E[X | F_k] and the target: each
    /// cell transports its mass to its barrier value.
    pub fn exact_w1(&self, k: usize) -> Result<f64> {
        self.levels[k]
            .cells
            .iter()
            .map(|c| self.target.axis_abs_moment(0, c.lo, c.hi, c.value))
            .sum()
    }

    pub fn transition(&self, level: usize, cell: usize) -> Result<Transition> {
        let (start, end) = *self
            .children
            .get(level)
            .and_then(|c| c.get(cell))
            .ok_or_else(|| Error::Invariant(format!("no cell {cell} at level {level}")))?;
        match end - start {
            1 => Ok(Transition::Stay { child: start }),
            2 => {
                let next = &self.levels[level + 1].cells;
                let v = self.levels[level].cells[cell].value;
                let (a, b) = (next[start].value, next[start + 1].value);
                if !(a < v && v < b) {
                    return Err(Error::Invariant(format!("barriers {a}, {b} do not bracket {v}")));
                }
                Ok(Transition::Split { down: start, up: start + 1, a, b, p_down: (b - v) / (b - a) })
            }
            k => Err(Error::Invariant(format!("cell {cell} at level {level} splits into {k} cells"))),
        }
    }

    fn check_interleaving(&self) -> Result<()> {
        for (k, level) in self.levels.iter().enumerate() {
            for c in &level.cells {
                if !(c.lo < c.value && c.value <= c.hi) {
                    return Err(Error::Invariant(format!(
                        "level {k}: barrier {} outside its cell ({}, {}]",
                        c.value, c.lo, c.hi
                    )));
                }
            }
        }
        Ok(())
    }
}

fn child_ranges(parent: &BarrierLevel, child: &BarrierLevel) -> Result<Vec<(usize, usize)>> {
    let mut ranges = vec![(usize::MAX, 0); parent.cells.len()];
    for (j, c) in child.cells.iter().enumerate() {
        let p = parent.cells.partition_point(|q| q.hi < c.value);
        match parent.cells.get(p) {
            Some(q) if q.lo <= c.lo && c.hi <= q.hi => {
                let r = &mut ranges[p];
                r.0 = r.0.min(j);
                r.1 = r.1.max(j + 1);
            }
            _ => return Err(Error::Invariant(format!("cell ({}, {}] is not nested in the previous level", c.lo, c.hi))),
        }
    }
    if ranges.iter().any(|r| r.0 == usize::MAX) {
        return Err(Error::Invariant("a positive-mass cell vanished between levels".into()));
    }
    Ok(ranges)
}

/// Dubins' construction: level 1 cuts at 0, and each level's barrier values
/// become additional cuts at the next level. A value whose cell would put
/// zero mass on one side (a point-mass cell) is not added.
pub fn dubins_levels(spec: &MeasureSpec, depth: usize) -> Result<BarrierSequence> {
    if depth == 0 {
        return Err(Error::config("Dubins depth must be at least 1"));
    }
    let mut levels = vec![barriers_from_cuts(spec, &[])?];
    let mut cuts = vec![0.0];
    for _ in 0..depth {
        let level = barriers_from_cuts(spec, &cuts)?;
        for c in &level.cells {
            if spec.mass(c.lo, c.value)? > 0.0 && spec.mass(c.value, c.hi)? > 0.0 {
                cuts.push(c.value);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        levels.push(level);
    }
    BarrierSequence::from_levels(spec, levels)
}

/// Randomized construction: level-k cuts are the first k iid draws from
/// `split_source`.
pub fn randomized_levels(
    spec: &MeasureSpec,
    split_source: &MeasureSpec,
    depth: usize,
    stream: SeededStream,
) -> Result<BarrierSequence> {
    check_target(spec)?;
    check_support(spec, split_source)?;
    let draws = split_source.sample(depth, stream)?;
    let mut levels = Vec::with_capacity(depth + 1);
    levels.push(barriers_from_cuts(spec, &[])?);
    for k in 1..=depth {
        levels.push(barriers_from_cuts(spec, &draws.as_flat()[..k])?);
    }
    BarrierSequence::from_levels(spec, levels)
}

fn check_support(spec: &MeasureSpec, split_source: &MeasureSpec) -> Result<()> {
    if split_source.dim() != 1 {
        return Err(Error::config("split source must be 1D"));
    }
    let ok = match (spec.kind(), split_source.kind()) {
        (MeasureKind::DiscreteAtoms { atoms }, MeasureKind::DiscreteAtoms { atoms: split }) => {
            atoms.iter().all(|(x, _)| split.iter().any(|(y, _)| (x - y).abs() <= 1e-12))
        }
        (_, MeasureKind::DiscreteAtoms { .. }) => false,
        _ => {
            let (lo, hi) = spec.support_1d()?;
            let (slo, shi) = split_source.support_1d()?;
            slo <= lo && hi <= shi
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "split source {} does not cover the support of the target {}",
            split_source.kind_name(),
            spec.kind_name()
        )))
    }
}

/// State of the embedded chain (B_{T_0}, B_{T_1}, …).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddedChain {
    pub value: f64,
    pub level: usize,
    pub cell: usize,
    /// Σ (v − a)(b − v) over the transitions so far.
    pub duration: f64,
}

impl EmbeddedChain {
    pub fn start() -> Self {
        EmbeddedChain { value: 0.0, level: 0, cell: 0, duration: 0.0 }
    }
}

/// One step and the error of its transition mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub chain: EmbeddedChain,
    pub mean_error: f64,
    pub split: bool,
}

/// Advance the chain from level k to k + 1.
pub fn chain_step<R: Rng + ?Sized>(chain: EmbeddedChain, seq: &BarrierSequence, rng: &mut R) -> Result<Step> {
    if chain.level >= seq.depth() {
        return Err(Error::Invariant(format!("chain already at the deepest level {}", seq.depth())));
    }
    let v = chain.value;
    if seq.levels[chain.level].cells.get(chain.cell).map(|c| c.value) != Some(v) {
        return Err(Error::Invariant(format!("{v} is not a level-{} barrier value", chain.level)));
    }
    match seq.transition(chain.level, chain.cell)? {
        Transition::Stay { child } => Ok(Step {
            chain: EmbeddedChain { level: chain.level + 1, cell: child, ..chain },
            mean_error: 0.0,
            split: false,
        }),
        Transition::Split { down, up, a, b, p_down } => {
            let mean_error = (p_down * a + (1.0 - p_down) * b - v).abs();
            if mean_error >= MARTINGALE_TOL {
                return Err(Error::Invariant(format!("transition mean off by {mean_error} at {v}")));
            }
            let (value, cell) = if rng.random::<f64>() < p_down { (a, down) } else { (b, up) };
            Ok(Step {
                chain: EmbeddedChain {
                    value,
                    level: chain.level + 1,
                    cell,
                    duration: chain.duration + (v - a) * (b - v),
                },
                mean_error,
                split: true,
            })
        }
    }
}

/// Chain statistics at one depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthSummary {
    pub depth: usize,
    pub mean_duration: f64,
    pub std_error: f64,
    /// E[(E[X | F_k])²].
    pub exact_second_moment: f64,
    pub exact_w1: f64,
    /// Largest |count − N·mass| / binomial std error over the level's cells.
    pub max_count_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingRun {
    #[serde(skip)]
    pub terminal: Vec<f64>,
    #[serde(skip)]
    pub durations: Vec<f64>,
    pub chains: usize,
    pub mean_duration: Estimate,
    pub per_depth: Vec<DepthSummary>,
    pub steps: u64,
    pub split_steps: u64,
    pub max_transition_error: f64,
}

struct BlockStats {
    terminal: Vec<f64>,
    durations: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    counts: Vec<Vec<u64>>,
    steps: u64,
    split_steps: u64,
    max_err: f64,
}

/// Run `chains` independent chains to the deepest level. Chain i uses
/// `stream.child(i)`, so results do not depend on the thread count.
pub fn run_embedding(seq: &BarrierSequence, chains: usize, stream: SeededStream) -> Result<EmbeddingRun> {
    if chains == 0 {
        return Err(Error::config("chains must be at least 1"));
    }
    let depth = seq.depth();
    let blocks = chains.div_ceil(CHAIN_BLOCK);
    let results = exec::map_indexed(blocks, |blk| -> Result<BlockStats> {
        let range = blk * CHAIN_BLOCK..((blk + 1) * CHAIN_BLOCK).min(chains);
        let mut st = BlockStats {
            terminal: Vec::with_capacity(range.len()),
            durations: Vec::with_capacity(range.len()),
            sum: vec![0.0; depth + 1],
            sum_sq: vec![0.0; depth + 1],
            counts: seq.levels.iter().map(|l| vec![0; l.cells.len()]).collect(),
            steps: 0,
            split_steps: 0,
            max_err: 0.0,
        };
        for i in range {
            let mut rng = stream.child(i as u64).rng();
            let mut chain = EmbeddedChain::start();
            st.counts[0][0] += 1;
            for k in 1..=depth {
                let step = chain_step(chain, seq, &mut rng)?;
                chain = step.chain;
                st.steps += 1;
                st.split_steps += step.split as u64;
                st.max_err = st.max_err.max(step.mean_error);
                st.sum[k] += chain.duration;
                st.sum_sq[k] += chain.duration * chain.duration;
                st.counts[k][chain.cell] += 1;
            }
            st.terminal.push(chain.value);
            st.durations.push(chain.duration);
        }
        Ok(st)
    });

    let mut terminal = Vec::with_capacity(chains);
    let mut durations = Vec::with_capacity(chains);
    let mut sum = vec![0.0; depth + 1];
    let mut sum_sq = vec![0.0; depth + 1];
    let mut counts: Vec<Vec<u64>> = seq.levels.iter().map(|l| vec![0; l.cells.len()]).collect();
    let (mut steps, mut split_steps, mut max_err) = (0, 0, 0.0f64);
    for r in results {
        let st = r?;
        terminal.extend(st.terminal);
        durations.extend(st.durations);
        for k in 0..=depth {
            sum[k] += st.sum[k];
            sum_sq[k] += st.sum_sq[k];
            for (c, n) in counts[k].iter_mut().zip(&st.counts[k]) {
                *c += n;
            }
        }
        steps += st.steps;
        split_steps += st.split_steps;
        max_err = max_err.max(st.max_err);
    }

    let n = chains as f64;
    let mut per_depth = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let mean = sum[k] / n;
        let var = if chains > 1 { ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        let max_count_z = seq.levels[k]
            .cells
            .iter()
            .zip(&counts[k])
            .map(|(c, cnt)| {
                let expect = n * c.mass;
                let se = (n * c.mass * (1.0 - c.mass)).sqrt();
                let dev = (*cnt as f64 - expect).abs();
                if se > 0.0 {
                    dev / se
                } else if dev < 0.5 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        per_depth.push(DepthSummary {
            depth: k,
            mean_duration: mean,
            std_error: (var / n).sqrt(),
            exact_second_moment: seq.levels[k].second_moment(),
            exact_w1: seq.exact_w1(k)?,
            max_count_z,
        });
    }
    Ok(EmbeddingRun {
        mean_duration: mean_se(&durations),
        terminal,
        durations,
        chains,
        per_depth,
        steps,
        split_steps,
        max_transition_error: max_err,
    })
}

/// W₁ between the empirical law of `samples` and `spec`, as the average of
/// |x_(i) − Q((i − ½)/n)| over the sorted samples.
pub fn wasserstein1(samples: &[f64], spec: &MeasureSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::config("W1 needs at least one sample"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut total = 0.0;
    for (i, x) in s.iter().enumerate() {
        total += (x - spec.quantile((i as f64 + 0.5) / n)?).abs();
    }
    Ok(total / n)
}

/// Time step, horizon and randomness of a discretized Brownian path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub stream: SeededStream,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianPath {
    pub dt: f64,
    /// B at times 0, dt, 2dt, …
    pub values: Vec<f64>,
}

impl BrownianPath {
    pub fn simulate(cfg: &PathSimConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
            return Err(Error::config("path simulation needs dt > 0 and a finite horizon > 0"));
        }
        let steps = (cfg.horizon / cfg.dt).ceil() as usize;
        let sd = cfg.dt.sqrt();
        let mut rng = cfg.stream.rng();
        let mut values = Vec::with_capacity(steps + 1);
        let mut b = 0.0;
        values.push(b);
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            b += sd * z;
            values.push(b);
        }
        Ok(BrownianPath { dt: cfg.dt, values })
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }
}

/// Hitting of a level's barrier along a discretized path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelHit {
    pub level: usize,
    /// First grid index at or after the previous hit where the path is at or
    /// beyond a barrier.
    pub step: usize,
    /// Crossing time by linear interpolation between grid points.
    pub time: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathHits {
    pub hits: Vec<LevelHit>,
    /// False if the horizon ran out before the deepest level was hit.
    pub complete: bool,
}

/// Successive barrier hits of `seq` along `path`. Unsplit levels are hit
/// at the time of the previous hit.
pub fn hits_on_path(seq: &BarrierSequence, path: &BrownianPath) -> Result<PathHits> {
    let b = &path.values;
    let mut hits = Vec::with_capacity(seq.depth());
    let (mut cell, mut j, mut t) = (0usize, 0usize, 0.0f64);
    for level in 0..seq.depth() {
        match seq.transition(level, cell)? {
            Transition::Stay { child } => {
                cell = child;
                hits.push(LevelHit { level: level + 1, step: j, time: t, barrier: seq.levels[level + 1].cells[cell].value });
            }
            Transition::Split { down, up, a, b: top, .. } => {
                let mut found = None;
                if b[j] <= a || b[j] >= top {
                    found = Some((j, t));
                } else {
                    for i in j + 1..b.len() {
                        if b[i] <= a || b[i] >= top {
                            let edge = if b[i] <= a { a } else { top };
                            let frac = (edge - b[i - 1]) / (b[i] - b[i - 1]);
                            found = Some((i, path.time(i - 1) + frac * path.dt));
                            break;
                        }
                    }
                }
                let Some((i, time)) = found else {
                    return Ok(PathHits { hits, complete: false });
                };
                let (barrier, next) = if b[i] <= a { (a, down) } else { (top, up) };
                cell = next;
                j = i;
                t = time;
                hits.push(LevelHit { level: level + 1, step: i, time, barrier });
            }
        }
    }
    Ok(PathHits { hits, complete: true })
}

/// A Brownian path and the hits of `seq` on it. Detection on the grid
/// biases hitting times by O(√dt).
pub fn simulate_continuous(seq: &BarrierSequence, cfg: &PathSimConfig) -> Result<(BrownianPath, PathHits)> {
    let path = BrownianPath::simulate(cfg)?;
    let hits = hits_on_path(seq, &path)?;
    Ok((path, hits))
}

/// CSV with columns `t,b` and one `hits_<s>` column per hit series, holding
/// the deepest level hit at that grid step (empty if none).
pub fn write_path_csv<W: Write>(out: W, path: &BrownianPath, series: &[PathHits]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "b".to_string()];
    header.extend((0..series.len()).map(|s| format!("hits_{s}")));
    w.write_record(&header)?;
    let marks: Vec<Vec<Option<usize>>> = series
        .iter()
        .map(|h| {
            let mut m = vec![None; path.values.len()];
            for hit in &h.hits {
                m[hit.step] = Some(hit.level);
            }
            m
        })
        .collect();
    for (j, v) in path.values.iter().enumerate() {
        let mut rec = vec![path.time(j).to_string(), v.to_string()];
        rec.extend(marks.iter().map(|m| m[j].map(|l| l.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with a single `value` column.
pub fn write_terminal_csv<W: Write>(out: W, terminal: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value"])?;
    for v in terminal {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif() -> MeasureSpec {
        MeasureSpec::uniform(-0.5, 0.5).unwrap()
    }

    fn pm1() -> MeasureSpec {
        MeasureSpec::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14)
    }

    #[test]
    fn barrier_examples() {
        assert!(close(&barriers_from_cuts(&unif(), &[0.0]).unwrap().values(), &[-0.25, 0.25]));
        assert!(close(&barriers_from_cuts(&pm1(), &[0.0]).unwrap().values(), &[-1.0, 1.0]));
        let v = barriers_from_cuts(&unif(), &[-0.25, 0.0, 0.25]).unwrap().values();
        assert!(close(&v, &[-0.375, -0.125, 0.125, 0.375]));
        let shifted = MeasureSpec::uniform(0.0, 1.0).unwrap();
        assert!(matches!(barriers_from_cuts(&shifted, &[0.5]), Err(Error::Validation(_))));
    }

    #[test]
    fn dubins_examples() {
        let seq = dubins_levels(&unif(), 2).unwrap();
        assert!(close(&seq.level(2).values(), &[-0.375, -0.125, 0.125, 0.375]));
        let atoms = dubins_levels(&pm1(), 2).unwrap();
        assert_eq!(atoms.level(2), atoms.level(1));
        let deep = dubins_levels(&unif(), 8).unwrap();
        for k in 0..=8 {
            assert_eq!(deep.level(k).cells.len(), 1 << k);
            assert!(deep.level(k).mean().abs() < 1e-14);
        }
        for w in deep.levels().windows(2) {
            assert!(w[0].cuts.iter().all(|c| w[1].cuts.contains(c)));
        }
        assert!(dubins_levels(&unif(), 0).is_err());
    }

    #[test]
    fn randomized_examples() {
        let seq = randomized_levels(&unif(), &unif(), 30, SeededStream::from_seed(1)).unwrap();
        assert_eq!(seq.depth(), 30);
        let tg = MeasureSpec::truncated_gaussian(0.0, 1.0, -1.5, 1.5).unwrap();
        for (spec, src) in [(unif(), MeasureSpec::standard_gaussian()), (tg.clone(), tg), (pm1(), pm1())] {
            let seq = randomized_levels(&spec, &src, 40, SeededStream::from_seed(2)).unwrap();
            for l in seq.levels() {
                assert!(l.mean().abs() < 1e-12);
            }
        }
        let one = barriers_from_cuts(&unif(), &[0.2]).unwrap();
        assert!(close(&one.values(), &[-0.15, 0.35]));
        assert!(one.mean().abs() < 1e-15);
        assert!(matches!(
            randomized_levels(&MeasureSpec::standard_gaussian(), &unif(), 3, SeededStream::from_seed(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn chain_step_examples() {
        let seq = dubins_levels(&unif(), 2).unwrap();
        let mut rng = SeededStream::from_seed(3).rng();
        let s = chain_step(EmbeddedChain::start(), &seq, &mut rng).unwrap();
        assert_eq!(s.chain.value.abs(), 0.25);
        assert_eq!(s.chain.duration, 0.0625);
        match seq.transition(1, 1).unwrap() {
            Transition::Split { a, b, p_down, .. } => {
                assert_eq!((a, b, p_down), (0.125, 0.375, 0.5));
                assert_eq!((0.25 - a) * (b - 0.25), 0.015625);
            }
            t => panic!("{t:?}"),
        }
        let atoms = dubins_levels(&pm1(), 1).unwrap();
        let s = chain_step(EmbeddedChain::start(), &atoms, &mut rng).unwrap();
        assert_eq!((s.chain.value.abs(), s.chain.duration), (1.0, 1.0));
        let bad = EmbeddedChain { value: 0.3, ..EmbeddedChain::start() };
        assert!(matches!(chain_step(bad, &seq, &mut rng), Err(Error::Invariant(_))));
    }

    #[test]
    fn run_examples() {
        let atoms = dubins_levels(&pm1(), 1).unwrap();
        let run = run_embedding(&atoms, 100_000, SeededStream::from_seed(4)).unwrap();
        let up = run.terminal.iter().filter(|v| **v == 1.0).count() as f64 / 1e5;
        assert!(run.terminal.iter().all(|v| v.abs() == 1.0));
        assert!((up - 0.5).abs() < 0.005);
        assert_eq!(run.mean_duration.value, 1.0);

        let trivial = BarrierSequence::trivial(&unif()).unwrap();
        let run = run_embedding(&trivial, 10, SeededStream::from_seed(4)).unwrap();
        assert!(run.terminal.iter().all(|v| *v == 0.0) && run.mean_duration.value == 0.0);

        let seq = dubins_levels(&unif(), 6).unwrap();
        let run = run_embedding(&seq, 20_000, SeededStream::from_seed(5)).unwrap();
        for d in &run.per_depth {
            assert!((d.mean_duration - d.exact_second_moment).abs() <= 4.0 * d.std_error + 1e-12);
        }
    }

    #[test]
    fn embedding_is_thread_invariant() {
        let seq = dubins_levels(&unif(), 5).unwrap();
        let a = exec::with_threads(1, || run_embedding(&seq, 5000, SeededStream::from_seed(6)).unwrap());
        let b = exec::with_threads(2, || run_embedding(&seq, 5000, SeededStream::from_seed(6)).unwrap());
        assert_eq!(a.terminal, b.terminal);
        assert_eq!(a.per_depth, b.per_depth);
    }

    #[test]
    fn exact_w1_examples() {
        let seq = dubins_levels(&unif(), 1).unwrap();
        // each half of width 1/2 moved to its midpoint: 2 · ½ · (1/2)/4
        assert!((seq.exact_w1(1).unwrap() - 0.125).abs() < 1e-15);
        assert!((seq.exact_w1(0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_examples() {
        let q: Vec<f64> = (0..1000).map(|i| unif().quantile((i as f64 + 0.5) / 1000.0).unwrap()).collect();
        assert!(wasserstein1(&q, &unif()).unwrap() < 1e-12);
        assert_eq!(wasserstein1(&[0.0; 10], &pm1()).unwrap(), 1.0);
        let s = unif().sample(100_000, SeededStream::from_seed(7)).unwrap();
        assert!(wasserstein1(s.as_flat(), &unif()).unwrap() < 0.005);
    }

    #[test]
    fn path_hits() {
        let seq = dubins_levels(&pm1(), 1).unwrap();
        let cfg = PathSimConfig { dt: 1e-3, horizon: 50.0, stream: SeededStream::from_seed(8) };
        let (path, hits) = simulate_continuous(&seq, &cfg).unwrap();
        assert!(hits.complete);
        let h = hits.hits[0];
        let j = path.values.iter().position(|v| v.abs() >= 1.0).unwrap();
        assert_eq!(h.step, j);
        assert!(h.time > path.time(j - 1) && h.time <= path.time(j));
        assert_eq!(h.barrier, path.values[j].signum());

        let trivial = BarrierSequence::trivial(&pm1()).unwrap();
        assert!(hits_on_path(&trivial, &path).unwrap().hits.is_empty());

        let s1 = randomized_levels(&unif(), &unif(), 10, SeededStream::from_seed(9)).unwrap();
        let s2 = randomized_levels(&unif(), &unif(), 10, SeededStream::from_seed(10)).unwrap();
        let cfg = PathSimConfig { dt: 1e-4, horizon: 5.0, stream: SeededStream::from_seed(11) };
        let path = BrownianPath::simulate(&cfg).unwrap();
        let (h1, h2) = (hits_on_path(&s1, &path).unwrap(), hits_on_path(&s2, &path).unwrap());
        assert_ne!(h1, h2);
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &path, &[h1, h2]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,b,hits_0,hits_1\n"));

        let short = PathSimConfig { dt: 0.1, horizon: 0.1, stream: SeededStream::from_seed(1) };
        let big = dubins_levels(&MeasureSpec::atoms(vec![(-50.0, 0.5), (50.0, 0.5)]).unwrap(), 1).unwrap();
        assert!(!simulate_continuous(&big, &short).unwrap().1.complete);
    }
}
