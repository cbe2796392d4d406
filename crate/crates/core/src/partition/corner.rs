use crate::error::{Error, Result};
use crate::geometry::{BoxRegion, PointSet};
use crate::measure::MeasureSpec;

use super::grid::{AxisTables, GridPartition};
use super::{CellStats, Partition};

/// Exact atoms of σ(A_{x_1}, …, A_{x_n}) for corner boxes A_x = [lo, x].
///
/// Membership in every A_{x_j} is constant on the boxes of the symmetric
/// grid through the sample coordinates, so each atom is a union of grid
/// boxes. An atom with dominator set S is
/// `{y ≤ m} \ ∪_{j∉S} A_{x_j}` where `m = min_{j∈S} x_j` (the domain maximum
/// for S = ∅), and S = {j : x_j ≥ m}; the upper corner m therefore
/// identifies the atom, and it is computed for every grid box by d sweeps of
/// orthant suffix minima over grid ranks.
///
/// Atoms are up-closed inside `[lo, m]`, which makes their diameter
/// `max_{p,q} |m − min(p, q)|` over the lower corners of their boxes; in
/// d ≤ 2 this is the diagonal of the atom's bounding box.
#[derive(Debug, Clone)]
pub struct CornerPartition {
    grid: GridPartition,
    tables: AxisTables,
    box_atom: Vec<u32>,
    atoms: Vec<CornerAtom>,
}

/// One atom of a [`CornerPartition`].
#[derive(Debug, Clone, PartialEq)]
pub struct CornerAtom {
    /// Upper corner m.
    pub upper: Vec<f64>,
    pub mass: f64,
    /// `first[i]` = ∫_atom x_i dμ.
    pub first: Vec<f64>,
    pub diameter: f64,
    pub boxes: usize,
}

impl CornerAtom {
    pub fn mean(&self) -> Vec<f64> {
        self.first.iter().map(|f| f / self.mass).collect()
    }
}

impl CornerPartition {
    pub fn build(points: &PointSet, spec: &MeasureSpec) -> Result<Self> {
        let domain = spec
            .domain()
            .ok_or_else(|| Error::Unsupported(format!("corner partitions need a bounded domain, got {}", spec.kind_name())))?;
        if points.iter().any(|p| !domain.contains(p)) {
            return Err(Error::config("corner points must lie in the measure's domain"));
        }
        let grid = GridPartition::build_symmetric(points, &domain)?;
        if !grid.is_enumerable() {
            return Err(Error::Unsupported(format!(
                "{} grid boxes exceed the exact corner-partition limit",
                grid.cell_count()
            )));
        }
        let tables = grid.tables(spec)?;
        let d = grid.dim();
        let shape = grid.cells_per_axis();
        let cells = grid.num_cells();
        let top: Vec<u32> = shape.iter().map(|k| (*k - 1) as u32).collect();

        // upper[i][box] = rank along axis i of the atom's upper corner
        let mut upper: Vec<Vec<u32>> = top.iter().map(|t| vec![*t; cells]).collect();
        for p in points.iter() {
            let r = grid.cell_of(p);
            if p.iter().zip(&domain.lo).any(|(v, lo)| v <= lo) {
                // A_x is μ-null when x sits on the lower boundary
                continue;
            }
            let lin = grid.linear_index(&r);
            for i in 0..d {
                upper[i][lin] = upper[i][lin].min(r[i] as u32);
            }
        }
        let strides: Vec<usize> = (0..d).map(|i| shape[..i].iter().product()).collect();
        for arr in upper.iter_mut() {
            for a in 0..d {
                suffix_min(arr, &shape, &strides, a);
            }
        }

        let mut atom_of_key = vec![u32::MAX; cells];
        let mut box_atom = vec![0u32; cells];
        let mut atoms: Vec<CornerAtom> = Vec::new();
        let mut lowest: Vec<Vec<f64>> = Vec::new();
        let mut corners: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut idx = vec![0usize; d];
        for lin in 0..cells {
            let key: usize = (0..d).map(|i| upper[i][lin] as usize * strides[i]).sum();
            let id = if atom_of_key[key] == u32::MAX {
                let id = atoms.len() as u32;
                atom_of_key[key] = id;
                let up: Vec<usize> = (0..d).map(|i| upper[i][lin] as usize).collect();
                atoms.push(CornerAtom {
                    upper: grid.upper_corner(&up),
                    mass: 0.0,
                    first: vec![0.0; d],
                    diameter: 0.0,
                    boxes: 0,
                });
                lowest.push(vec![f64::INFINITY; d]);
                corners.push(Vec::new());
                id
            } else {
                atom_of_key[key]
            };
            box_atom[lin] = id;
            let atom = &mut atoms[id as usize];
            atom.boxes += 1;
            let mass = tables.cell_mass(&idx);
            if mass > 0.0 {
                atom.mass += mass;
                for i in 0..d {
                    let others = mass / tables.mass[i][idx[i]];
                    atom.first[i] += others * tables.first[i][idx[i]];
                    let lo = grid.axis_interval(i, idx[i]).0;
                    lowest[id as usize][i] = lowest[id as usize][i].min(lo);
                }
                if d > 2 {
                    corners[id as usize].push(idx.clone());
                }
            }
            increment(&mut idx, &shape);
        }

        for (a, atom) in atoms.iter_mut().enumerate() {
            if atom.mass <= 0.0 {
                continue;
            }
            atom.diameter = if d <= 2 {
                atom.upper.iter().zip(&lowest[a]).map(|(u, l)| (u - l).powi(2)).sum::<f64>().sqrt()
            } else {
                staircase_diameter(&grid, &atom.upper, &corners[a])
            };
        }
        Ok(Self { grid, tables, box_atom, atoms })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn tables(&self) -> &AxisTables {
        &self.tables
    }

    pub fn atoms(&self) -> &[CornerAtom] {
        &self.atoms
    }

    /// Atom containing grid box `lin` (linear index in the grid).
    pub fn atom_of_box(&self, lin: usize) -> usize {
        self.box_atom[lin] as usize
    }

    pub fn cell_stats(&self) -> Vec<CellStats> {
        self.atoms
            .iter()
            .map(|a| CellStats {
                mass: a.mass,
                diameter: a.diameter,
                sample_count: 0,
                representative: a.upper.clone(),
            })
            .collect()
    }

    /// Σ μ(A)·diam(A), exact.
    pub fn diameter_bound(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass * a.diameter).sum()
    }

    /// μ(A ∩ target) for every atom A, with `target` a closed box.
    pub fn masses_within(&self, target: &BoxRegion, spec: &MeasureSpec) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        let overlap: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..self.tables.mass[i].len())
                    .map(|k| {
                        let (a, b) = self.tables.measure_interval(i, k);
                        let lo = a.max(target.lo[i].next_down());
                        let hi = b.min(target.hi[i]);
                        if hi > lo {
                            spec.axis_moments(i, lo, hi).map(|m| m.0)
                        } else {
                            Ok(0.0)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let shape = self.grid.cells_per_axis();
        let mut out = vec![0.0; self.atoms.len()];
        let mut idx = vec![0usize; d];
        for lin in 0..self.box_atom.len() {
            let m: f64 = (0..d).map(|i| overlap[i][idx[i]]).product();
            out[self.box_atom[lin] as usize] += m;
            increment(&mut idx, &shape);
        }
        Ok(out)
    }
}

impl Partition for CornerPartition {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn num_cells(&self) -> usize {
        self.atoms.len()
    }

    fn locate(&self, x: &[f64]) -> Option<usize> {
        let lin = self.grid.linear_index(&self.grid.cell_of(x));
        self.box_atom.get(lin).map(|a| *a as usize)
    }
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for (k, s) in idx.iter_mut().zip(shape) {
        *k += 1;
        if *k < *s {
            return;
        }
        *k = 0;
    }
}

/// In-place suffix minimum along `axis` of a row-major array.
fn suffix_min(arr: &mut [u32], shape: &[usize], strides: &[usize], axis: usize) {
    let stride = strides[axis];
    let len = shape[axis];
    let block = stride * len;
    for start in (0..arr.len()).step_by(block) {
        for off in 0..stride {
            let base = start + off;
            for k in (0..len - 1).rev() {
                let here = base + k * stride;
                let next = here + stride;
                if arr[next] < arr[here] {
                    arr[here] = arr[next];
                }
            }
        }
    }
}

fn staircase_diameter(grid: &GridPartition, upper: &[f64], lower_idx: &[Vec<usize>]) -> f64 {
    let d = upper.len();
    let mut minimal: Vec<&Vec<usize>> = Vec::new();
    let mut sorted: Vec<&Vec<usize>> = lower_idx.iter().collect();
    sorted.sort();
    for c in sorted {
        if !minimal.iter().any(|m| m.iter().zip(c).all(|(a, b)| a <= b)) {
            minimal.push(c);
        }
    }
    let gaps: Vec<Vec<f64>> = minimal
        .iter()
        .map(|c| (0..d).map(|i| upper[i] - grid.axis_interval(i, c[i]).0).collect())
        .collect();
    let mut best = 0.0f64;
    for (a, ga) in gaps.iter().enumerate() {
        for gb in &gaps[a..] {
            let s: f64 = ga.iter().zip(gb).map(|(x, y)| x.max(*y).powi(2)).sum();
            best = best.max(s);
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Generator;
    use crate::rng::SeededStream;
    use std::collections::HashMap;

    /// Brute force: group fine-grid probe points by dominator set.
    fn brute_force_masses(points: &PointSet, res: usize) -> Vec<f64> {
        let d = points.dim();
        let gens: Vec<Generator> = points.iter().map(|p| Generator::CornerBox(p.to_vec())).collect();
        let mut groups: HashMap<Vec<bool>, usize> = HashMap::new();
        let total = res.pow(d as u32);
        for lin in 0..total {
            let mut rem = lin;
            let y: Vec<f64> = (0..d)
                .map(|_| {
                    let k = rem % res;
                    rem /= res;
                    (k as f64 + 0.5) / res as f64
                })
                .collect();
            let sig: Vec<bool> = gens.iter().map(|g| g.contains(&y)).collect();
            *groups.entry(sig).or_default() += 1;
        }
        let mut m: Vec<f64> = groups.values().map(|c| *c as f64 / total as f64).collect();
        m.sort_by(f64::total_cmp);
        m
    }

    #[test]
    fn atoms_match_brute_force_in_2d() {
        // points on a 1/8 grid so the probe lattice resolves atoms exactly
        let pts = PointSet::from_rows(
            2,
            &[vec![0.5, 0.5], vec![0.25, 0.875], vec![0.75, 0.125], vec![0.625, 0.625], vec![0.125, 0.25]],
        )
        .unwrap();
        let cp = CornerPartition::build(&pts, &MeasureSpec::unit_cube(2)).unwrap();
        let mut masses: Vec<f64> = cp.atoms().iter().map(|a| a.mass).filter(|m| *m > 0.0).collect();
        masses.sort_by(f64::total_cmp);
        let brute = brute_force_masses(&pts, 64);
        assert_eq!(masses.len(), brute.len());
        for (a, b) in masses.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn atoms_match_brute_force_in_3d() {
        let pts = PointSet::from_rows(3, &[vec![0.5, 0.75, 0.25], vec![0.25, 0.5, 0.75], vec![0.75, 0.25, 0.5]])
            .unwrap();
        let cp = CornerPartition::build(&pts, &MeasureSpec::unit_cube(3)).unwrap();
        let mut masses: Vec<f64> = cp.atoms().iter().map(|a| a.mass).filter(|m| *m > 0.0).collect();
        masses.sort_by(f64::total_cmp);
        let brute = brute_force_masses(&pts, 16);
        assert_eq!(masses.len(), brute.len());
        for (a, b) in masses.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_agrees_with_dominator_sets() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(12, SeededStream::from_seed(3)).unwrap();
        let cp = CornerPartition::build(&pts, &spec).unwrap();
        let gens: Vec<Generator> = pts.iter().map(|p| Generator::CornerBox(p.to_vec())).collect();
        let probes = spec.sample(2000, SeededStream::from_seed(4)).unwrap();
        let mut sig_of_atom: HashMap<usize, Vec<bool>> = HashMap::new();
        for y in probes.iter() {
            let sig: Vec<bool> = gens.iter().map(|g| g.contains(y)).collect();
            let atom = cp.locate(y).unwrap();
            let prev = sig_of_atom.entry(atom).or_insert_with(|| sig.clone());
            assert_eq!(*prev, sig);
            // the atom's upper corner dominates every member
            assert!(crate::geometry::dominated(y, &cp.atoms()[atom].upper));
        }
        let distinct: std::collections::HashSet<_> = sig_of_atom.values().collect();
        assert_eq!(distinct.len(), sig_of_atom.len());
    }

    #[test]
    fn one_dimensional_atoms_are_intervals() {
        let pts = PointSet::from_scalars(&[0.25, 0.5, 0.75]);
        let cp = CornerPartition::build(&pts, &MeasureSpec::unit_cube(1)).unwrap();
        assert_eq!(cp.num_cells(), 4);
        assert!((cp.diameter_bound() - 0.25).abs() < 1e-15);
        for a in cp.atoms() {
            assert!((a.mean()[0] - (a.upper[0] - 0.125)).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_sample_gives_one_atom() {
        let cp = CornerPartition::build(&PointSet::new(2), &MeasureSpec::unit_cube(2)).unwrap();
        assert_eq!(cp.num_cells(), 1);
        assert_eq!(cp.atoms()[0].mass, 1.0);
        assert!((cp.diameter_bound() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn diameters_bound_probe_distances() {
        let spec = MeasureSpec::unit_cube(3);
        let pts = spec.sample(6, SeededStream::from_seed(21)).unwrap();
        let cp = CornerPartition::build(&pts, &spec).unwrap();
        let probes = spec.sample(4000, SeededStream::from_seed(22)).unwrap();
        let mut members: HashMap<usize, Vec<&[f64]>> = HashMap::new();
        for y in probes.iter() {
            members.entry(cp.locate(y).unwrap()).or_default().push(y);
        }
        for (atom, ys) in members {
            let diam = cp.atoms()[atom].diameter;
            for a in &ys {
                for b in &ys {
                    assert!(crate::geometry::distance(a, b) <= diam + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bound_is_nonincreasing_along_a_sample_path() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(60, SeededStream::from_seed(5)).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..=60 {
            let h = CornerPartition::build(&pts.prefix(n), &spec).unwrap().diameter_bound();
            assert!(h <= prev + 1e-12, "n={n}");
            prev = h;
        }
    }

    #[test]
    fn masses_within_a_box() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = PointSet::from_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let cp = CornerPartition::build(&pts, &spec).unwrap();
        let target = BoxRegion::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        let within = cp.masses_within(&target, &spec).unwrap();
        let inner = cp.locate(&[0.2, 0.2]).unwrap();
        assert!((within[inner] - 0.25).abs() < 1e-15);
        assert!(within.iter().enumerate().all(|(a, m)| a == inner || *m == 0.0));
    }
}
