//! Building networks by sketching.
//!
//! Every edge `e` splits the coordinates into the subtree below its child
//! ("up side") and the rest ("down side"). A small set of test functions on
//! each side turns the function (or density) into an `r̃ × r̃` matrix `Z_e`,
//! whose SVD fixes a gauge: the up side keeps the orthonormal factor `U`,
//! the down side absorbs the singular values `VΣ`. Each core then follows
//! from one least-squares solve against the gauge factors of its bonds.
//!
//! [`interpolate`] queries a function at spliced sketch points;
//! [`estimate_density`] replaces every query by an empirical moment.

mod density;
mod interp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use density::{
    edge_matrix_from_samples, estimate_density, estimate_density_explicit, side_functions, SideFunctions,
};
pub use interp::{edge_matrix_from_queries, interpolate, make_sketches, QueryPlan, SketchSet};

use crate::ftn::{Core, FhtwTree};
use crate::linalg::sorted_svd;
use crate::{Error, Result};

/// Half-width of the normalized data cube.
pub const CUBE_HALF_WIDTH: f64 = 0.9;

/// Relative cutoff for the pseudo-inverse of the node sketch `S_k`.
pub const NODE_PINV_CUTOFF: f64 = 1e-12;

/// Designs whose condition number exceeds this are rejected.
const MAX_DESIGN_CONDITION: f64 = 1e13;

/// Test functions used on the two sides of an edge in density mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SketchFamily {
    /// `Φ^β(c) = Π_j K_q(w^β_j, c_j)` over the whole side, with `w^β` a
    /// held-out sample row.
    Kernel,
    /// Products of Legendre functions of the `coords` side coordinates
    /// nearest to the edge in the tree, in graded order.
    Local { coords: usize },
}

impl Default for SketchFamily {
    fn default() -> Self {
        SketchFamily::Local { coords: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Rank cap `r`.
    pub rmax: usize,
    /// Basis degree.
    pub q: usize,
    #[serde(default = "default_oversample")]
    pub oversample_edge: f64,
    #[serde(default = "default_oversample")]
    pub oversample_node: f64,
    #[serde(default = "default_density_tol")]
    pub sv_rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sketch: SketchFamily,
}

fn default_oversample() -> f64 {
    2.0
}

fn default_density_tol() -> f64 {
    1e-3
}

impl FitConfig {
    /// Defaults for function interpolation.
    pub fn interpolation(rmax: usize, q: usize) -> Self {
        Self {
            rmax,
            q,
            oversample_edge: 2.0,
            oversample_node: 2.0,
            sv_rel_tol: 1e-6,
            seed: 0,
            sketch: SketchFamily::default(),
        }
    }

    /// Defaults for density estimation.
    pub fn density(rmax: usize, q: usize) -> Self {
        Self {
            sv_rel_tol: default_density_tol(),
            ..Self::interpolation(rmax, q)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rmax == 0 {
            return Err(Error::Config("rmax must be at least 1".into()));
        }
        if !(self.sv_rel_tol > 0.0 && self.sv_rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "sv_rel_tol must lie in (0, 1), got {}",
                self.sv_rel_tol
            )));
        }
        if !(self.oversample_edge >= 1.0 && self.oversample_node >= 1.0) {
            return Err(Error::Config("oversampling factors must be at least 1".into()));
        }
        if let SketchFamily::Local { coords } = self.sketch {
            if coords == 0 {
                return Err(Error::Config("local sketches need at least one coordinate".into()));
            }
        }
        Ok(())
    }

    /// `r̃ = ⌈oversample_edge · r⌉`.
    pub fn edge_sketch_count(&self) -> usize {
        (self.oversample_edge * self.rmax as f64).ceil() as usize
    }

    /// `ñ = ⌈oversample_node · (q + 1)⌉`.
    pub fn node_sketch_count(&self) -> usize {
        (self.oversample_node * (self.q + 1) as f64).ceil() as usize
    }
}

/// Gauge factors of one edge.
#[derive(Debug, Clone)]
pub struct EdgeFactors {
    pub rank: usize,
    /// `U`, `r̃_up × rank`, orthonormal columns.
    pub up: DMatrix<f64>,
    /// `VΣ`, `r̃_down × rank`.
    pub down: DMatrix<f64>,
    /// Full spectrum of `Z`, decreasing.
    pub singular_values: Vec<f64>,
}

/// Splits `z` (rows: up-side sketches, columns: down-side sketches) by a
/// truncated SVD. The rank is `min(rmax, #{σ_i ≥ tol·σ_1})`.
pub fn gauge_factorize(z: &DMatrix<f64>, edge: usize, rmax: usize, tol: f64) -> Result<EdgeFactors> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant(format!("edge {edge}: sketch matrix is not finite")));
    }
    let (u, s, v) = sorted_svd(z);
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1 <= 0.0 {
        return Err(Error::RankZero { edge });
    }
    let rank = s.iter().filter(|&&x| x >= tol * s1).count().min(rmax).max(1);
    let up = u.columns(0, rank).into_owned();
    let mut down = v.columns(0, rank).into_owned();
    for (j, mut col) in down.column_iter_mut().enumerate() {
        col *= s[j];
    }
    Ok(EdgeFactors {
        rank,
        up,
        down,
        singular_values: s,
    })
}

/// Pseudo-inverse of a full-column-rank factor, with its extreme singular
/// values.
fn factor_pinv(a: &DMatrix<f64>) -> (DMatrix<f64>, f64, f64) {
    let (u, s, v) = sorted_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = if s.len() < a.ncols() {
        0.0
    } else {
        s.last().copied().unwrap_or(0.0)
    };
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > 0.0 {
            out += v.column(k) * u.column(k).transpose() / sk;
        }
    }
    (out, smin, smax)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Pseudo-inverses of the design factors of `node`, or the rank error.
fn design_pinvs(node: usize, factors: &[&DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let mut smin = 1.0;
    let mut smax = 1.0;
    let mut out = Vec::with_capacity(factors.len());
    for a in factors {
        let (p, lo, hi) = factor_pinv(a);
        smin *= lo;
        smax *= hi;
        out.push(p);
    }
    if !(smin > 0.0) || smax / smin > MAX_DESIGN_CONDITION {
        return Err(Error::RankDeficient { node, sigma_min: smin });
    }
    Ok(out)
}

/// Least-squares solution of `(⊗_j A_j) G = B`.
///
/// `b` has the axes `[physical?, sketch_1, …]`; `first_bond` is 1 when a
/// physical axis leads. Returns the core and the relative residual
/// `‖(⊗A)G − B‖ / ‖B‖`.
pub fn solve_core(node: usize, b: &Core, first_bond: usize, factors: &[&DMatrix<f64>]) -> Result<(Core, f64)> {
    if b.shape.len() != first_bond + factors.len() {
        return Err(Error::Shape(format!(
            "node {node}: right-hand side has {} axes for {} factors",
            b.shape.len(),
            factors.len()
        )));
    }
    for (j, a) in factors.iter().enumerate() {
        if a.nrows() != b.shape[first_bond + j] {
            return Err(Error::Shape(format!(
                "node {node}: factor {j} has {} rows, axis has {}",
                a.nrows(),
                b.shape[first_bond + j]
            )));
        }
    }
    let pinvs = design_pinvs(node, factors)?;
    let (mut g, mut gs) = (b.data.clone(), b.shape.clone());
    for (j, p) in pinvs.iter().enumerate() {
        (g, gs) = crate::ftn::mode_product(&g, &gs, first_bond + j, &row_major(p), p.nrows());
    }
    let (mut fit, mut fs) = (g.clone(), gs.clone());
    for (j, a) in factors.iter().enumerate() {
        (fit, fs) = crate::ftn::mode_product(&fit, &fs, first_bond + j, &row_major(a), a.nrows());
    }
    let bn = b.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rn = fit
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let residual = if bn > 0.0 { rn / bn } else { rn };
    Ok((Core::new(gs, g)?, residual))
}

/// Per-edge summary in a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub edge: usize,
    pub rank: usize,
    /// Leading singular values of `Z`, normalized by the first.
    pub spectrum_head: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mode: String,
    pub edges: Vec<EdgeReport>,
    /// Relative residual of each node solve; `None` where the right-hand
    /// side was never formed.
    pub residuals: Vec<Option<f64>>,
    pub n_queries: usize,
}

const SPECTRUM_HEAD: usize = 8;

fn edge_reports(factors: &[EdgeFactors]) -> Vec<EdgeReport> {
    factors
        .iter()
        .enumerate()
        .map(|(edge, f)| {
            let s1 = f.singular_values[0];
            EdgeReport {
                edge,
                rank: f.rank,
                spectrum_head: f.singular_values.iter().take(SPECTRUM_HEAD).map(|s| s / s1).collect(),
            }
        })
        .collect()
}

impl FitReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn max_rank(&self) -> usize {
        self.edges.iter().map(|e| e.rank).max().unwrap_or(0)
    }
}

/// Nodes with their bond factors in core-axis order: children (up factors
/// of their edges), then the parent (down factor of the node's edge).
fn node_factors<'a>(tree: &FhtwTree, factors: &'a [EdgeFactors], node: usize) -> Vec<&'a DMatrix<f64>> {
    let mut out: Vec<&DMatrix<f64>> = tree
        .node(node)
        .children
        .iter()
        .map(|&c| &factors[tree.edge_of(c)].up)
        .collect();
    if node != tree.root() {
        out.push(&factors[tree.edge_of(node)].down);
    }
    out
}
