use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, BoxRegion, PointSet};
use crate::measure::{MeasureSpec, RadiusSpec};
use crate::rng::{set_key, SeededStream};

use super::{CellStats, Generator, Partition};

/// Points retained per cell for diameter estimates.
pub const RETAINED_POINTS: usize = 256;

#[derive(Debug, Clone)]
struct PointSignature {
    bits: Vec<u64>,
    key: u128,
}

/// Atoms of the σ-field generated by a list of sets, seen through a
/// reference sample: two reference points share a cell iff they belong to
/// exactly the same generators.
///
/// Cells are numbered in order of first appearance in the reference
/// sample. Cells are grouped by a 128-bit additive hash of the membership
/// set; the full bit signature is kept for inspection.
#[derive(Debug, Clone)]
pub struct SignaturePartition {
    domain: BoxRegion,
    generators: Vec<Generator>,
    reference: Arc<PointSet>,
    sigs: Vec<PointSignature>,
    point_cell: Vec<u32>,
    cell_of_key: HashMap<u128, u32>,
    cells: Vec<CellStats>,
}

impl SignaturePartition {
    /// The trivial partition (one cell) over a reference sample.
    pub fn new(domain: BoxRegion, reference: Arc<PointSet>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::config("reference sample size must be at least 1"));
        }
        if reference.dim() != domain.dim() {
            return Err(Error::config("reference points and domain differ in dimension"));
        }
        let m = reference.len();
        let mut p = Self {
            domain,
            generators: Vec::new(),
            reference,
            sigs: vec![PointSignature { bits: Vec::new(), key: 0 }; m],
            point_cell: vec![0; m],
            cell_of_key: HashMap::new(),
            cells: Vec::new(),
        };
        p.regroup();
        Ok(p)
    }

    pub fn with_generators(domain: BoxRegion, reference: Arc<PointSet>, generators: Vec<Generator>) -> Result<Self> {
        let mut p = Self::new(domain, reference)?;
        p.extend(&generators)?;
        Ok(p)
    }

    /// Appends generators in place and recomputes the cells.
    pub fn extend(&mut self, generators: &[Generator]) -> Result<()> {
        self.append(generators)?;
        self.regroup();
        Ok(())
    }

    /// A refined copy with `g` appended; every new cell lies inside exactly
    /// one old cell.
    pub fn refine(&self, g: Generator) -> Result<Self> {
        let mut next = self.clone();
        next.extend(&[g])?;
        Ok(next)
    }

    fn append(&mut self, generators: &[Generator]) -> Result<()> {
        for g in generators {
            g.validate(&self.domain)?;
        }
        let start = self.generators.len();
        self.generators.extend_from_slice(generators);
        let total = self.generators.len();
        let words = total.div_ceil(64);
        let gens = &self.generators[start..];
        let reference = &self.reference;
        exec::for_each_mut(&mut self.sigs, |i, sig| {
            let y = reference.point(i);
            sig.bits.resize(words, 0);
            for (off, g) in gens.iter().enumerate() {
                if g.contains(y) {
                    let j = start + off;
                    sig.bits[j / 64] |= 1 << (j % 64);
                    sig.key = sig.key.wrapping_add(set_key(j));
                }
            }
        });
        Ok(())
    }

    fn regroup(&mut self) {
        let m = self.reference.len();
        self.cell_of_key.clear();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for i in 0..m {
            let next = self.cell_of_key.len() as u32;
            let c = *self.cell_of_key.entry(self.sigs[i].key).or_insert(next);
            if c == next {
                members.push(Vec::new());
                counts.push(0);
            }
            self.point_cell[i] = c;
            counts[c as usize] += 1;
            if members[c as usize].len() < RETAINED_POINTS {
                members[c as usize].push(i);
            }
        }
        let exact_boxes = self.domain.dim() == 1 && self.generators.iter().all(Generator::is_box_like)
            || self.generators.iter().all(|g| matches!(g, Generator::Threshold { .. }));
        let reference = &self.reference;
        let sigs = &self.sigs;
        let domain = &self.domain;
        let generators = &self.generators;
        self.cells = exec::map_indexed(members.len(), |c| {
            let pts = &members[c];
            let diameter = if exact_boxes {
                cell_box(domain, generators, &sigs[pts[0]].bits).diameter()
            } else {
                let mut best = 0.0f64;
                for (a, &i) in pts.iter().enumerate() {
                    for &j in &pts[a + 1..] {
                        best = best.max(distance(reference.point(i), reference.point(j)));
                    }
                }
                best
            };
            CellStats {
                mass: counts[c] as f64 / m as f64,
                diameter,
                sample_count: counts[c],
                representative: reference.point(pts[0]).to_vec(),
            }
        });
    }

    pub fn domain(&self) -> &BoxRegion {
        &self.domain
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn reference(&self) -> &PointSet {
        &self.reference
    }

    pub fn cells(&self) -> &[CellStats] {
        &self.cells
    }

    /// Cell of reference point `i`.
    pub fn cell_of_reference(&self, i: usize) -> usize {
        self.point_cell[i] as usize
    }

    /// Stored membership bits of reference point `i`.
    pub fn signature(&self, i: usize) -> &[u64] {
        &self.sigs[i].bits
    }

    /// Membership bits of an arbitrary point.
    pub fn signature_of(&self, x: &[f64]) -> Vec<u64> {
        let mut bits = vec![0u64; self.generators.len().div_ceil(64)];
        for (j, g) in self.generators.iter().enumerate() {
            if g.contains(x) {
                bits[j / 64] |= 1 << (j % 64);
            }
        }
        bits
    }

    fn key_of(&self, x: &[f64]) -> u128 {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.contains(x))
            .fold(0u128, |k, (j, _)| k.wrapping_add(set_key(j)))
    }

    /// Σ estimated mass · estimated diameter.
    pub fn diameter_bound(&self) -> f64 {
        super::diameter_bound_of(&self.cells)
    }

    /// Per-cell average of `f` over the reference points.
    pub fn cell_averages<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut sums = vec![0.0; self.cells.len()];
        for (i, y) in self.reference.iter().enumerate() {
            sums[self.point_cell[i] as usize] += f(y);
        }
        sums.iter().zip(&self.cells).map(|(s, c)| s / c.sample_count as f64).collect()
    }

    /// Per cell, the number of reference points satisfying `pred`.
    pub fn cell_counts<F: Fn(&[f64]) -> bool>(&self, pred: F) -> Vec<usize> {
        let mut counts = vec![0usize; self.cells.len()];
        for (i, y) in self.reference.iter().enumerate() {
            if pred(y) {
                counts[self.point_cell[i] as usize] += 1;
            }
        }
        counts
    }

    /// One row per cell: `cell,mass,diameter,count`, with the signature of
    /// the cell in hexadecimal (lowest generator in the lowest bit).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "mass", "diameter", "count"])?;
        let mut first_point = vec![usize::MAX; self.cells.len()];
        for (i, c) in self.point_cell.iter().enumerate() {
            if first_point[*c as usize] == usize::MAX {
                first_point[*c as usize] = i;
            }
        }
        for (c, stats) in self.cells.iter().enumerate() {
            let bits = &self.sigs[first_point[c]].bits;
            let hex: String = if bits.is_empty() {
                "0".into()
            } else {
                bits.iter().rev().map(|w| format!("{w:016x}")).collect()
            };
            w.write_record([hex, stats.mass.to_string(), stats.diameter.to_string(), stats.sample_count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Partition for SignaturePartition {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn locate(&self, x: &[f64]) -> Option<usize> {
        self.cell_of_key.get(&self.key_of(x)).map(|c| *c as usize)
    }
}

/// The box cut out by thresholds (or 1D corner boxes) for a given
/// membership pattern.
fn cell_box(domain: &BoxRegion, generators: &[Generator], bits: &[u64]) -> BoxRegion {
    let mut b = domain.clone();
    for (j, g) in generators.iter().enumerate() {
        let inside = bits[j / 64] >> (j % 64) & 1 == 1;
        let constraints: Vec<(usize, f64)> = match g {
            Generator::Threshold { axis, value } => vec![(*axis, *value)],
            Generator::CornerBox(x) => x.iter().cloned().enumerate().collect(),
            Generator::Ball { .. } => unreachable!("balls never form exact boxes"),
        };
        for (axis, v) in constraints {
            if inside {
                b.hi[axis] = b.hi[axis].min(v);
            } else {
                b.lo[axis] = b.lo[axis].max(v);
            }
        }
    }
    for i in 0..b.dim() {
        if b.lo[i] > b.hi[i] {
            b.lo[i] = b.hi[i];
        }
    }
    b
}

fn reference_sample(spec: &MeasureSpec, m: usize, stream: SeededStream) -> Result<(BoxRegion, Arc<PointSet>)> {
    if m == 0 {
        return Err(Error::config("reference sample size M must be at least 1"));
    }
    let domain = spec
        .domain()
        .ok_or_else(|| Error::Unsupported(format!("signature partitions need a bounded domain, got {}", spec.kind_name())))?;
    Ok((domain, Arc::new(spec.sample(m, stream)?)))
}

/// Partition generated by the corner boxes of `points`, seen through `m`
/// reference draws of `spec`.
pub fn build_corner_partition(
    points: &PointSet,
    spec: &MeasureSpec,
    m: usize,
    stream: SeededStream,
) -> Result<SignaturePartition> {
    let (domain, reference) = reference_sample(spec, m, stream)?;
    let gens = points.iter().map(|p| Generator::CornerBox(p.to_vec())).collect();
    SignaturePartition::with_generators(domain, reference, gens)
}

/// Partition generated by closed balls, seen through `m` reference draws of
/// `spec`.
pub fn build_ball_partition(
    centers: &PointSet,
    radii: &[f64],
    spec: &MeasureSpec,
    m: usize,
    stream: SeededStream,
) -> Result<SignaturePartition> {
    if centers.len() != radii.len() {
        return Err(Error::config(format!("{} ball centers but {} radii", centers.len(), radii.len())));
    }
    let (domain, reference) = reference_sample(spec, m, stream)?;
    let gens = centers
        .iter()
        .zip(radii)
        .map(|(c, r)| Generator::Ball { center: c.to_vec(), radius: *r })
        .collect();
    SignaturePartition::with_generators(domain, reference, gens)
}

/// Ball centers and radii for the first `n` generators of a sampling path.
pub fn sample_balls(spec: &MeasureSpec, radii: &RadiusSpec, n: usize, stream: SeededStream) -> Result<(PointSet, Vec<f64>)> {
    radii.validate()?;
    let centers = spec.sample(n, stream.named("centers"))?;
    let mut rng = stream.named("radii").rng();
    let r = (0..n).map(|_| radii.draw(&mut rng)).collect();
    Ok((centers, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    const M: usize = 100_000;

    #[test]
    fn no_points_gives_a_single_cell() {
        let p = build_corner_partition(&PointSet::new(2), &MeasureSpec::unit_cube(2), 1000, SeededStream::from_seed(1))
            .unwrap();
        assert_eq!(p.num_cells(), 1);
        assert_eq!(p.cells()[0].mass, 1.0);
    }

    #[test]
    fn zero_reference_size_is_rejected() {
        let r = build_corner_partition(&PointSet::new(1), &MeasureSpec::unit_cube(1), 0, SeededStream::from_seed(1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn half_split_in_one_dimension() {
        let pts = PointSet::from_scalars(&[0.5]);
        let p = build_corner_partition(&pts, &MeasureSpec::unit_cube(1), M, SeededStream::from_seed(2)).unwrap();
        assert_eq!(p.num_cells(), 2);
        for c in p.cells() {
            assert!((c.mass - 0.5).abs() < 0.01);
            // exact interval geometry in 1D
            assert!((c.diameter - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn disk_mass() {
        let centers = PointSet::from_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let p = build_ball_partition(&centers, &[0.25], &MeasureSpec::unit_cube(2), M, SeededStream::from_seed(3))
            .unwrap();
        let inside = p.locate(&[0.5, 0.5]).unwrap();
        let area = std::f64::consts::PI / 16.0;
        assert!((p.cells()[inside].mass - area).abs() < 0.01);
    }

    #[test]
    fn ball_covering_domain_and_disjoint_balls() {
        let spec = MeasureSpec::unit_cube(2);
        let big = PointSet::from_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let p = build_ball_partition(&big, &[1.0], &spec, 10_000, SeededStream::from_seed(4)).unwrap();
        assert_eq!(p.num_cells(), 1);
        let two = PointSet::from_rows(2, &[vec![0.25, 0.25], vec![0.75, 0.75]]).unwrap();
        let p = build_ball_partition(&two, &[0.2, 0.2], &spec, 10_000, SeededStream::from_seed(4)).unwrap();
        assert!(p.num_cells() <= 3);
        assert!(build_ball_partition(&two, &[0.2], &spec, 10, SeededStream::from_seed(4)).is_err());
    }

    #[test]
    fn masses_sum_to_one_and_signatures_are_consistent() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(30, SeededStream::from_seed(5)).unwrap();
        let p = build_corner_partition(&pts, &spec, 5000, SeededStream::from_seed(6)).unwrap();
        let total: f64 = p.cells().iter().map(|c| c.mass).sum();
        assert!((total - 1.0).abs() < 2.0 / (5000f64).sqrt());
        for i in 0..p.reference().len() {
            assert_eq!(p.signature(i), p.signature_of(p.reference().point(i)).as_slice());
            assert_eq!(p.locate(p.reference().point(i)), Some(p.cell_of_reference(i)));
        }
        for c in p.cells() {
            assert!(c.diameter <= 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn incremental_refinement_matches_batch_build() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(20, SeededStream::from_seed(7)).unwrap();
        let batch = build_corner_partition(&pts, &spec, 3000, SeededStream::from_seed(8)).unwrap();
        let (domain, reference) = reference_sample(&spec, 3000, SeededStream::from_seed(8)).unwrap();
        let mut inc = SignaturePartition::new(domain, reference).unwrap();
        let mut prev_cells = 1;
        for p in pts.iter() {
            let before = inc.clone();
            inc = inc.refine(Generator::CornerBox(p.to_vec())).unwrap();
            assert!(inc.num_cells() >= prev_cells);
            prev_cells = inc.num_cells();
            // every new cell lies inside exactly one old cell
            let mut parent: HashMap<usize, usize> = HashMap::new();
            for i in 0..inc.reference().len() {
                let old = before.cell_of_reference(i);
                let new = inc.cell_of_reference(i);
                assert_eq!(*parent.entry(new).or_insert(old), old);
            }
        }
        for i in 0..3000 {
            assert_eq!(inc.cell_of_reference(i), batch.cell_of_reference(i));
            assert_eq!(inc.signature(i), batch.signature(i));
        }
    }

    #[test]
    fn duplicate_generator_changes_nothing() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = PointSet::from_rows(2, &[vec![0.4, 0.6]]).unwrap();
        let p = build_corner_partition(&pts, &spec, 2000, SeededStream::from_seed(9)).unwrap();
        let q = p.refine(Generator::CornerBox(vec![0.4, 0.6])).unwrap();
        assert_eq!(p.num_cells(), q.num_cells());
        for i in 0..2000 {
            assert_eq!(p.cell_of_reference(i), q.cell_of_reference(i));
        }
        let single = SignaturePartition::new(BoxRegion::unit(2), Arc::new(spec.sample(100, SeededStream::from_seed(1)).unwrap()))
            .unwrap();
        assert!(single.refine(Generator::CornerBox(vec![0.5, 0.5])).unwrap().num_cells() <= 2);
    }

    #[test]
    fn threshold_cells_are_exact_boxes() {
        let spec = MeasureSpec::unit_cube(2);
        let (domain, reference) = reference_sample(&spec, 2000, SeededStream::from_seed(10)).unwrap();
        let gens = vec![Generator::Threshold { axis: 0, value: 0.5 }, Generator::Threshold { axis: 1, value: 0.25 }];
        let p = SignaturePartition::with_generators(domain, reference, gens).unwrap();
        let c = p.locate(&[0.1, 0.1]).unwrap();
        assert!((p.cells()[c].diameter - (0.25f64 + 0.0625).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_dump() {
        let pts = PointSet::from_scalars(&[0.5]);
        let p = build_corner_partition(&pts, &MeasureSpec::unit_cube(1), 100, SeededStream::from_seed(2)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell,mass,diameter,count\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
