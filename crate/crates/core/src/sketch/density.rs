use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::interp::make_sketches;
use super::{
    design_pinvs, edge_reports, gauge_factorize, node_factors, solve_core, EdgeFactors, FitConfig, FitReport,
    SketchFamily, SketchSet,
};
use crate::ftn::{Basis, Core, FhtwTree, Ftn};
use crate::{Error, Result, SampleMatrix};

/// Test functions on one side of an edge.
#[derive(Debug, Clone, PartialEq)]
pub enum SideFunctions {
    /// `Φ^β(c) = Π_j K_q(w^β_j, c_j)`; `psi` holds `ψ(w^β_j)` as
    /// `[β][j][i]`.
    Kernel {
        coords: Vec<usize>,
        basis: Basis,
        count: usize,
        psi: Vec<f64>,
    },
    /// `Φ^t(c) = Π_j ψ_{a_{t,j}}(c_{coords_j})` with 0-based Legendre
    /// indices `a`.
    Local {
        coords: Vec<usize>,
        terms: Vec<Vec<usize>>,
        degree: usize,
    },
}

impl SideFunctions {
    pub fn len(&self) -> usize {
        match self {
            SideFunctions::Kernel { count, .. } => *count,
            SideFunctions::Local { terms, .. } => terms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `Φ(x)` into `out`; `scratch` is reused between calls.
    pub fn eval(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        match self {
            SideFunctions::Kernel {
                coords,
                basis,
                count,
                psi,
            } => {
                let n = basis.size();
                let m = coords.len();
                scratch.resize(m * n, 0.0);
                for (j, &c) in coords.iter().enumerate() {
                    basis.eval_into(x[c], &mut scratch[j * n..(j + 1) * n]);
                }
                for (b, o) in out[..*count].iter_mut().enumerate() {
                    let mut prod = 1.0;
                    for j in 0..m {
                        let w = &psi[(b * m + j) * n..(b * m + j + 1) * n];
                        let v = &scratch[j * n..(j + 1) * n];
                        prod *= w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                    }
                    *o = prod;
                }
            }
            SideFunctions::Local { coords, terms, degree } => {
                let n = degree + 1;
                let basis = Basis::new(*degree);
                scratch.resize(coords.len() * n, 0.0);
                for (j, &c) in coords.iter().enumerate() {
                    basis.eval_into(x[c], &mut scratch[j * n..(j + 1) * n]);
                }
                for (t, o) in terms.iter().zip(out.iter_mut()) {
                    *o = t.iter().enumerate().map(|(j, &a)| scratch[j * n + a]).product();
                }
            }
        }
    }
}

/// Exponent tuples over `s` coordinates, each at most `cap`, ordered by
/// total degree and then with larger powers on earlier coordinates.
fn graded_terms(s: usize, cap: usize, count: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            if left <= cap {
                cur[pos] = left;
                out.push(cur.clone());
            }
            return;
        }
        for a in (0..=left.min(cap)).rev() {
            cur[pos] = a;
            rec(pos + 1, left - a, cap, cur, out);
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0; s];
    for g in 0..=s * cap {
        rec(0, g, cap, &mut cur, &mut out);
        if out.len() >= count {
            break;
        }
    }
    out.truncate(count);
    out
}

/// Side coordinates ordered by tree distance from `anchor`, coarse first on
/// ties.
fn nearest_coords(tree: &FhtwTree, anchor: usize, side: &[usize]) -> Vec<usize> {
    let dist = tree.distances_from(anchor);
    let mut out = side.to_vec();
    out.sort_by_key(|&c| (dist[c], c));
    out
}

/// Test functions of edge `e` on the up side (`up = true`) or the down side.
pub fn side_functions(tree: &FhtwTree, cfg: &FitConfig, sketches: &SketchSet, e: usize, up: bool) -> SideFunctions {
    let (coords, points) = if up {
        (&sketches.up_coords[e], &sketches.up[e])
    } else {
        (&sketches.down_coords[e], &sketches.down[e])
    };
    match cfg.sketch {
        SketchFamily::Kernel => {
            let basis = Basis::new(cfg.q);
            let n = basis.size();
            let mut psi = vec![0.0; points.n_rows() * coords.len() * n];
            for (b, row) in points.rows().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    let at = (b * coords.len() + j) * n;
                    basis.eval_into(w, &mut psi[at..at + n]);
                }
            }
            SideFunctions::Kernel {
                coords: coords.clone(),
                basis,
                count: points.n_rows(),
                psi,
            }
        }
        SketchFamily::Local { coords: s } => {
            let anchor = if up { tree.edge_child(e) } else { tree.edge_parent(e) };
            let mut near = nearest_coords(tree, anchor, coords);
            near.truncate(s);
            let terms = graded_terms(near.len(), cfg.q, cfg.edge_sketch_count());
            let degree = terms.iter().flatten().copied().max().unwrap_or(0);
            SideFunctions::Local {
                coords: near,
                terms,
                degree,
            }
        }
    }
}

/// `Z(β, γ) = (1/B) Σ_b Φ_up^β(c_b) Φ_down^γ(c_b)`.
pub fn edge_matrix_from_samples(samples: &SampleMatrix, up: &SideFunctions, down: &SideFunctions) -> Result<DMatrix<f64>> {
    if samples.n_rows() == 0 {
        return Err(Error::InsufficientSamples("no samples".into()));
    }
    let (nu, nd) = (up.len(), down.len());
    let mut z = vec![0.0; nu * nd];
    let (mut fu, mut fd) = (vec![0.0; nu], vec![0.0; nd]);
    let mut scratch = Vec::new();
    for x in samples.rows() {
        up.eval(x, &mut scratch, &mut fu);
        down.eval(x, &mut scratch, &mut fd);
        for (i, &a) in fu.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (zz, &b) in z[i * nd..(i + 1) * nd].iter_mut().zip(&fd) {
                *zz += a * b;
            }
        }
    }
    let inv = 1.0 / samples.n_rows() as f64;
    Ok(DMatrix::from_row_slice(nu, nd, &z) * inv)
}

/// Row-major Kronecker product `a ⊗ b` into `out`.
fn kron_into(a: &[f64], b: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for &x in a {
        out.extend(b.iter().map(|y| x * y));
    }
}

struct Prepared {
    up: Vec<SideFunctions>,
    down: Vec<SideFunctions>,
    /// Rows used for the moments.
    fit: SampleMatrix,
}

fn prepare(samples: &SampleMatrix, tree: &FhtwTree, cfg: &FitConfig) -> Result<Prepared> {
    cfg.validate()?;
    if samples.n_cols() != tree.n_coords() {
        return Err(Error::Shape(format!(
            "samples have {} columns, tree has {} coordinates",
            samples.n_cols(),
            tree.n_coords()
        )));
    }
    let need = cfg.edge_sketch_count();
    if samples.n_rows() < need {
        return Err(Error::InsufficientSamples(format!(
            "{} samples for rank cap {} (need at least {need})",
            samples.n_rows(),
            cfg.rmax
        )));
    }
    let (sketches, fit) = match cfg.sketch {
        SketchFamily::Kernel => {
            // kernel sketches peak at their own point, so those rows must
            // stay out of the moments
            let b = samples.n_rows();
            let hold = need.max(b / 10);
            if b < hold + need {
                return Err(Error::InsufficientSamples(format!(
                    "{b} samples cannot supply {hold} held-out rows plus {need} fitting rows"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            let mut held = sample_indices(&mut rng, b, hold).into_vec();
            held.sort_unstable();
            let mut keep = Vec::with_capacity(b - hold);
            let mut h = held.iter().peekable();
            for i in 0..b {
                if h.peek() == Some(&&i) {
                    h.next();
                } else {
                    keep.push(i);
                }
            }
            let sk = make_sketches(tree, cfg, Some(&samples.select_rows(&held)))?;
            (sk, samples.select_rows(&keep))
        }
        SketchFamily::Local { .. } => (make_sketches(tree, cfg, None)?, samples.clone()),
    };
    let up = (0..tree.n_edges())
        .map(|e| side_functions(tree, cfg, &sketches, e, true))
        .collect();
    let down = (0..tree.n_edges())
        .map(|e| side_functions(tree, cfg, &sketches, e, false))
        .collect();
    Ok(Prepared {
        up,
        down,
        fit,
    })
}

fn edge_factors(p: &Prepared, cfg: &FitConfig) -> Result<Vec<EdgeFactors>> {
    (0..p.up.len())
        .into_par_iter()
        .map(|e| {
            let z = edge_matrix_from_samples(&p.fit, &p.up[e], &p.down[e])?;
            gauge_factorize(&z, e, cfg.rmax, cfg.sv_rel_tol)
        })
        .collect()
}

/// Side functions of the bonds of `node` in core-axis order.
fn bond_sides<'a>(tree: &FhtwTree, p: &'a Prepared, node: usize) -> Vec<&'a SideFunctions> {
    let mut out: Vec<&SideFunctions> = tree
        .node(node)
        .children
        .iter()
        .map(|&c| &p.up[tree.edge_of(c)])
        .collect();
    if node != tree.root() {
        out.push(&p.down[tree.edge_of(node)]);
    }
    out
}

/// Empirical mean of `ψ(x_node) ⊗ T_1(Φ_1(x)) ⊗ …` where `T_j` is either
/// the identity or the given projection.
fn node_moment(
    tree: &FhtwTree,
    basis: Basis,
    node: usize,
    sides: &[&SideFunctions],
    projections: Option<&[DMatrix<f64>]>,
    samples: &SampleMatrix,
) -> Vec<f64> {
    let widths: Vec<usize> = match projections {
        Some(ps) => ps.iter().map(|p| p.nrows()).collect(),
        None => sides.iter().map(|s| s.len()).collect(),
    };
    let phys = if tree.is_external(node) { basis.size() } else { 1 };
    let total = phys * widths.iter().product::<usize>();
    let mut acc = vec![0.0; total];
    let mut scratch = Vec::new();
    let mut phi = Vec::new();
    let (mut cur, mut next) = (Vec::with_capacity(total), Vec::with_capacity(total));
    let mut head = vec![1.0; phys];
    for x in samples.rows() {
        if tree.is_external(node) {
            basis.eval_into(x[node], &mut head);
        }
        cur.clear();
        cur.extend_from_slice(&head);
        for (j, side) in sides.iter().enumerate() {
            phi.resize(side.len(), 0.0);
            side.eval(x, &mut scratch, &mut phi);
            match projections {
                Some(ps) => {
                    let v = &ps[j] * nalgebra::DVector::from_column_slice(&phi);
                    kron_into(&cur, v.as_slice(), &mut next);
                }
                None => kron_into(&cur, &phi, &mut next),
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (a, v) in acc.iter_mut().zip(&cur) {
            *a += v;
        }
    }
    let inv = 1.0 / samples.n_rows() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

fn finish(tree: &FhtwTree, cfg: &FitConfig, p: &Prepared, factors: &[EdgeFactors], solved: Vec<(Core, Option<f64>)>) -> Result<(Ftn, FitReport)> {
    let ranks = factors.iter().map(|f| f.rank).collect();
    let (cores, residuals) = solved.into_iter().unzip();
    let ftn = Ftn::new(tree.clone(), Basis::new(cfg.q), ranks, cores)?;
    let report = FitReport {
        mode: "density".into(),
        edges: edge_reports(factors),
        residuals,
        n_queries: p.fit.n_rows(),
    };
    Ok((ftn, report))
}

/// Estimates an unnormalized density from samples in normalized wavelet
/// coordinates.
///
/// Each core is the empirical mean of `ψ(c_k) ⊗_j A_j^+ Φ_j(c)`, which equals
/// the least-squares solve against the sample right-hand side without ever
/// forming it.
pub fn estimate_density(samples: &SampleMatrix, tree: &FhtwTree, cfg: &FitConfig) -> Result<(Ftn, FitReport)> {
    let p = prepare(samples, tree, cfg)?;
    let factors = edge_factors(&p, cfg)?;
    let basis = Basis::new(cfg.q);
    let solved = (0..tree.n_nodes())
        .into_par_iter()
        .map(|node| {
            let pinvs = design_pinvs(node, &node_factors(tree, &factors, node))?;
            let sides = bond_sides(tree, &p, node);
            let data = node_moment(tree, basis, node, &sides, Some(&pinvs), &p.fit);
            let shape = crate::ftn::core_shape(tree, basis, &factors.iter().map(|f| f.rank).collect::<Vec<_>>(), node);
            Ok((Core::new(shape, data)?, None))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(tree, cfg, &p, &factors, solved)
}

/// Same estimate, forming every right-hand side `B_k` and solving it
/// explicitly. Memory grows as `r̃^{deg k}`, so this is meant for small
/// trees and cross-checks.
pub fn estimate_density_explicit(samples: &SampleMatrix, tree: &FhtwTree, cfg: &FitConfig) -> Result<(Ftn, FitReport)> {
    let p = prepare(samples, tree, cfg)?;
    let factors = edge_factors(&p, cfg)?;
    let basis = Basis::new(cfg.q);
    let solved = (0..tree.n_nodes())
        .into_par_iter()
        .map(|node| {
            let sides = bond_sides(tree, &p, node);
            let data = node_moment(tree, basis, node, &sides, None, &p.fit);
            let mut shape = Vec::new();
            if tree.is_external(node) {
                shape.push(basis.size());
            }
            shape.extend(sides.iter().map(|s| s.len()));
            let rhs = Core::new(shape, data)?;
            let first_bond = usize::from(tree.is_external(node));
            let (g, r) = solve_core(node, &rhs, first_bond, &node_factors(tree, &factors, node))?;
            Ok((g, Some(r)))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(tree, cfg, &p, &factors, solved)
}
