use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    edge_reports, gauge_factorize, node_factors, solve_core, EdgeFactors, FitConfig, FitReport, CUBE_HALF_WIDTH,
    NODE_PINV_CUTOFF,
};
use crate::ftn::{chebyshev_nodes, mode_product, Basis, Core, FhtwTree, Ftn};
use crate::linalg::pinv;
use crate::{Error, Result, SampleMatrix};

/// Sketch points of every edge side and the node interpolation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSet {
    /// Coordinates below each edge's child.
    pub up_coords: Vec<Vec<usize>>,
    /// Coordinates on the parent side of each edge.
    pub down_coords: Vec<Vec<usize>>,
    /// Per edge: `r̃ × |up side|` points.
    pub up: Vec<SampleMatrix>,
    /// Per edge: `r̃ × |down side|` points.
    pub down: Vec<SampleMatrix>,
    /// Chebyshev grid shared by all external nodes.
    pub nodes: Vec<f64>,
    /// Source rows of the up/down points when drawn from samples.
    pub rows: Option<(Vec<Vec<usize>>, Vec<Vec<usize>>)>,
}

impl SketchSet {
    pub fn edge_count(&self) -> usize {
        self.up.len()
    }
}

/// Draws the sketch points. Without `samples` the side points are uniform
/// in the data cube; with `samples` each side gets distinct held-out rows
/// restricted to its coordinates.
pub fn make_sketches(tree: &FhtwTree, cfg: &FitConfig, samples: Option<&SampleMatrix>) -> Result<SketchSet> {
    cfg.validate()?;
    let r_tilde = cfg.edge_sketch_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_edges = tree.n_edges();
    let up_coords: Vec<Vec<usize>> = (0..n_edges)
        .map(|e| tree.coords_below(tree.edge_child(e)).to_vec())
        .collect();
    let down_coords: Vec<Vec<usize>> = (0..n_edges).map(|e| tree.coords_above(e)).collect();

    let mut up = Vec::with_capacity(n_edges);
    let mut down = Vec::with_capacity(n_edges);
    let rows = match samples {
        None => {
            let mut uniform = |n: usize| {
                let data = (0..r_tilde * n)
                    .map(|_| rng.random_range(-CUBE_HALF_WIDTH..=CUBE_HALF_WIDTH))
                    .collect();
                SampleMatrix::new(n, data)
            };
            for e in 0..n_edges {
                up.push(uniform(up_coords[e].len())?);
                down.push(uniform(down_coords[e].len())?);
            }
            None
        }
        Some(s) => {
            if s.n_cols() != tree.n_coords() {
                return Err(Error::Shape(format!(
                    "samples have {} columns, tree has {} coordinates",
                    s.n_cols(),
                    tree.n_coords()
                )));
            }
            if s.n_rows() < r_tilde {
                return Err(Error::InsufficientSamples(format!(
                    "{} held-out rows for {r_tilde} sketch points per edge",
                    s.n_rows()
                )));
            }
            let mut pick = |coords: &[usize]| {
                let idx = sample_indices(&mut rng, s.n_rows(), r_tilde).into_vec();
                let data = idx
                    .iter()
                    .flat_map(|&i| coords.iter().map(move |&c| s.row(i)[c]))
                    .collect();
                SampleMatrix::new(coords.len(), data).map(|m| (m, idx))
            };
            let (mut ur, mut dr) = (Vec::new(), Vec::new());
            for e in 0..n_edges {
                let (m, i) = pick(&up_coords[e])?;
                up.push(m);
                ur.push(i);
                let (m, i) = pick(&down_coords[e])?;
                down.push(m);
                dr.push(i);
            }
            Some((ur, dr))
        }
    };
    Ok(SketchSet {
        up_coords,
        down_coords,
        up,
        down,
        nodes: chebyshev_nodes(cfg.node_sketch_count(), CUBE_HALF_WIDTH),
        rows,
    })
}

fn splice(buf: &mut [f64], coords: &[usize], values: &[f64]) {
    for (&c, &v) in coords.iter().zip(values) {
        buf[c] = v;
    }
}

#[derive(Debug, Clone)]
enum Block {
    Edge(usize),
    Node { node: usize, shape: Vec<usize> },
}

/// Enumerates every query point needed by one interpolation pass.
///
/// Query `i` is materialized on demand by [`QueryPlan::fill`], so several
/// functions can share one plan and its points.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    tree: FhtwTree,
    sketches: SketchSet,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
}

impl QueryPlan {
    pub fn new(tree: &FhtwTree, sketches: SketchSet) -> Self {
        let mut blocks = Vec::new();
        let mut offsets = vec![0];
        let mut push = |b: Block, n: usize| {
            let last = *offsets.last().unwrap();
            blocks.push(b);
            offsets.push(last + n);
        };
        for e in 0..tree.n_edges() {
            push(Block::Edge(e), sketches.up[e].n_rows() * sketches.down[e].n_rows());
        }
        for node in 0..tree.n_nodes() {
            let mut shape = Vec::new();
            if tree.is_external(node) {
                shape.push(sketches.nodes.len());
            }
            for &c in &tree.node(node).children {
                shape.push(sketches.up[tree.edge_of(c)].n_rows());
            }
            if node != tree.root() {
                shape.push(sketches.down[tree.edge_of(node)].n_rows());
            }
            let n = shape.iter().product();
            push(Block::Node { node, shape }, n);
        }
        Self {
            tree: tree.clone(),
            sketches,
            blocks,
            offsets,
        }
    }

    pub fn tree(&self) -> &FhtwTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes query point `idx` into `buf` (length `d - 1`).
    pub fn fill(&self, idx: usize, buf: &mut [f64]) {
        let b = self.offsets.partition_point(|&o| o <= idx) - 1;
        let local = idx - self.offsets[b];
        let sk = &self.sketches;
        match &self.blocks[b] {
            Block::Edge(e) => {
                let nd = sk.down[*e].n_rows();
                splice(buf, &sk.up_coords[*e], sk.up[*e].row(local / nd));
                splice(buf, &sk.down_coords[*e], sk.down[*e].row(local % nd));
            }
            Block::Node { node, shape } => {
                let mut rem = local;
                let mut index = vec![0; shape.len()];
                for (ax, &n) in shape.iter().enumerate().rev() {
                    index[ax] = rem % n;
                    rem /= n;
                }
                let mut ax = 0;
                if self.tree.is_external(*node) {
                    buf[*node] = sk.nodes[index[0]];
                    ax = 1;
                }
                for &c in &self.tree.node(*node).children {
                    let e = self.tree.edge_of(c);
                    splice(buf, &sk.up_coords[e], sk.up[e].row(index[ax]));
                    ax += 1;
                }
                if *node != self.tree.root() {
                    let e = self.tree.edge_of(*node);
                    splice(buf, &sk.down_coords[e], sk.down[e].row(index[ax]));
                }
            }
        }
    }

    /// Evaluates `f` at every query point, in parallel.
    pub fn evaluate<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let d = self.tree.n_coords();
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |buf, i| {
                    self.fill(i, buf);
                    f(buf)
                },
            )
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("query {i} returned a non-finite value")));
        }
        Ok(values)
    }

    /// Builds the network from the values of one function at every query.
    pub fn assemble(&self, values: &[f64], cfg: &FitConfig) -> Result<(Ftn, FitReport)> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} values for {} queries",
                values.len(),
                self.len()
            )));
        }
        let tree = &self.tree;
        let basis = Basis::new(cfg.q);
        let block = |b: usize| &values[self.offsets[b]..self.offsets[b + 1]];

        let factors: Vec<EdgeFactors> = (0..tree.n_edges())
            .into_par_iter()
            .map(|e| {
                let z = DMatrix::from_row_slice(self.sketches.up[e].n_rows(), self.sketches.down[e].n_rows(), block(e));
                gauge_factorize(&z, e, cfg.rmax, cfg.sv_rel_tol)
            })
            .collect::<Result<_>>()?;

        // S_k(μ, i) = ψ_i(w^μ); external right-hand sides are S_k^+ applied
        // to the node axis
        let grid = &self.sketches.nodes;
        let mut s = DMatrix::zeros(grid.len(), basis.size());
        for (mu, &w) in grid.iter().enumerate() {
            let psi = basis.eval(w);
            for (i, p) in psi.into_iter().enumerate() {
                s[(mu, i)] = p;
            }
        }
        let s_pinv = pinv(&s, NODE_PINV_CUTOFF);
        let s_pinv_rm: Vec<f64> = (0..s_pinv.nrows())
            .flat_map(|i| (0..s_pinv.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| s_pinv[(i, j)])
            .collect();

        let n_edges = tree.n_edges();
        let solved: Vec<(Core, f64)> = (0..tree.n_nodes())
            .into_par_iter()
            .map(|node| {
                let Block::Node { shape, .. } = &self.blocks[n_edges + node] else {
                    unreachable!("node blocks follow edge blocks")
                };
                let mut rhs = Core::new(shape.clone(), block(n_edges + node).to_vec())?;
                let first_bond = usize::from(tree.is_external(node));
                if first_bond == 1 {
                    let (d, s) = mode_product(&rhs.data, &rhs.shape, 0, &s_pinv_rm, basis.size());
                    rhs = Core::new(s, d)?;
                }
                solve_core(node, &rhs, first_bond, &node_factors(tree, &factors, node))
            })
            .collect::<Result<_>>()?;

        let ranks = factors.iter().map(|f| f.rank).collect();
        let mut residuals = Vec::with_capacity(solved.len());
        let mut cores = Vec::with_capacity(solved.len());
        for (c, r) in solved {
            cores.push(c);
            residuals.push(Some(r));
        }
        let ftn = Ftn::new(tree.clone(), basis, ranks, cores)?;
        let report = FitReport {
            mode: "interpolation".into(),
            edges: edge_reports(&factors),
            residuals,
            n_queries: self.len(),
        };
        Ok((ftn, report))
    }
}

/// `Z(β, γ) = M(w^β_up ∪ w^γ_down)` for edge `e`.
pub fn edge_matrix_from_queries<F>(f: F, tree: &FhtwTree, e: usize, sketches: &SketchSet) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let (nu, nd) = (sketches.up[e].n_rows(), sketches.down[e].n_rows());
    let mut buf = vec![0.0; tree.n_coords()];
    DMatrix::from_fn(nu, nd, |b, g| {
        splice(&mut buf, &sketches.up_coords[e], sketches.up[e].row(b));
        splice(&mut buf, &sketches.down_coords[e], sketches.down[e].row(g));
        f(&buf)
    })
}

/// Interpolates `f` on the normalized cube into a network of degree
/// `cfg.q` and ranks at most `cfg.rmax`.
pub fn interpolate<F>(f: F, tree: &FhtwTree, cfg: &FitConfig) -> Result<(Ftn, FitReport)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let sketches = make_sketches(tree, cfg, None)?;
    let plan = QueryPlan::new(tree, sketches);
    let values = plan.evaluate(f)?;
    plan.assemble(&values, cfg)
}
