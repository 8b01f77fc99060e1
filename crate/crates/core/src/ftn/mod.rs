//! Functional tree tensor networks on the FHT-W tree.
//!
//! A network stores one core per tree node. Core axes are ordered as
//! `[physical?, child bonds…, parent bond?]`: external nodes lead with the
//! `q + 1` Legendre coefficients, the root has no parent bond. Contractions
//! run children before parents, so every node sends a single message up.

mod basis;
mod tree;

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{chebyshev_nodes, gauss_legendre, legendre_into, Basis};
pub use tree::{FhtwTree, NodeKind, TreeNode};

use crate::{Error, Result, SampleMatrix};

/// Refuse dense materialization beyond this many entries.
pub const DENSE_LIMIT: usize = 10_000_000;

const FORMAT_NAME: &str = "fhtw-ftn";
const FORMAT_VERSION: u32 = 1;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "core of shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

/// Sum over `axis` against `v`; the axis disappears.
pub(crate) fn contract_vector(data: &[f64], shape: &[usize], axis: usize, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let left: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let right: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; left * right];
    for l in 0..left {
        let o = &mut out[l * right..(l + 1) * right];
        for (i, &vi) in v.iter().enumerate().take(mid) {
            if vi == 0.0 {
                continue;
            }
            let src = &data[(l * mid + i) * right..(l * mid + i + 1) * right];
            for (a, b) in o.iter_mut().zip(src) {
                *a += vi * b;
            }
        }
    }
    let mut s = shape.to_vec();
    s.remove(axis);
    (out, s)
}

/// Mode product: replaces axis `axis` (size `old`) by `new` using the
/// row-major `new × old` matrix `mat`.
pub(crate) fn mode_product(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    mat: &[f64],
    new: usize,
) -> (Vec<f64>, Vec<usize>) {
    let left: usize = shape[..axis].iter().product();
    let old = shape[axis];
    let right: usize = shape[axis + 1..].iter().product();
    debug_assert_eq!(mat.len(), new * old);
    let mut out = vec![0.0; left * new * right];
    for l in 0..left {
        for j in 0..new {
            let o = &mut out[(l * new + j) * right..(l * new + j + 1) * right];
            for i in 0..old {
                let m = mat[j * old + i];
                if m == 0.0 {
                    continue;
                }
                let src = &data[(l * old + i) * right..(l * old + i + 1) * right];
                for (a, b) in o.iter_mut().zip(src) {
                    *a += m * b;
                }
            }
        }
    }
    let mut s = shape.to_vec();
    s[axis] = new;
    (out, s)
}

/// Reorders axes: output axis `i` is input axis `perm[i]`.
pub(crate) fn permute(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let nd = shape.len();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; nd];
    for _ in 0..data.len() {
        let off: usize = idx.iter().zip(&strides).map(|(a, b)| a * b).sum();
        out.push(data[off]);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    (out, out_shape)
}

/// A functional tree tensor network over the FHT-W tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Ftn {
    tree: FhtwTree,
    basis: Basis,
    ranks: Vec<usize>,
    cores: Vec<Core>,
}

/// Expected core shape of `node` for the given ranks.
pub fn core_shape(tree: &FhtwTree, basis: Basis, ranks: &[usize], node: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(4);
    if tree.is_external(node) {
        s.push(basis.size());
    }
    for &c in &tree.node(node).children {
        s.push(ranks[tree.edge_of(c)]);
    }
    if node != tree.root() {
        s.push(ranks[tree.edge_of(node)]);
    }
    s
}

impl Ftn {
    pub fn new(tree: FhtwTree, basis: Basis, ranks: Vec<usize>, cores: Vec<Core>) -> Result<Self> {
        let f = Self {
            tree,
            basis,
            ranks,
            cores,
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.ranks.len() != self.tree.n_edges() {
            return Err(Error::Shape(format!(
                "{} ranks for {} edges",
                self.ranks.len(),
                self.tree.n_edges()
            )));
        }
        if let Some(e) = self.ranks.iter().position(|&r| r == 0) {
            return Err(Error::Shape(format!("edge {e} has rank 0")));
        }
        if self.cores.len() != self.tree.n_nodes() {
            return Err(Error::Shape(format!(
                "{} cores for {} nodes",
                self.cores.len(),
                self.tree.n_nodes()
            )));
        }
        for (n, c) in self.cores.iter().enumerate() {
            let want = core_shape(&self.tree, self.basis, &self.ranks, n);
            if c.shape != want || c.data.len() != want.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "core {n} has shape {:?}, expected {want:?}",
                    c.shape
                )));
            }
            if c.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("core {n} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Network with independent standard normal core entries.
    pub fn random<R: Rng + ?Sized>(tree: FhtwTree, basis: Basis, ranks: Vec<usize>, rng: &mut R) -> Result<Self> {
        let cores = (0..tree.n_nodes())
            .map(|n| {
                let shape = core_shape(&tree, basis, &ranks, n);
                let len = shape.iter().product();
                let data = (0..len)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                Core { shape, data }
            })
            .collect();
        Self::new(tree, basis, ranks, cores)
    }

    /// Rank-one network of the constant function `value`.
    pub fn constant(tree: FhtwTree, basis: Basis, value: f64) -> Self {
        let ranks = vec![1; tree.n_edges()];
        // 1 = Π_j √2 ψ_1(x_j); the value goes on the root
        let cores = (0..tree.n_nodes())
            .map(|n| {
                let mut c = Core::zeros(core_shape(&tree, basis, &ranks, n));
                c.data[0] = if tree.is_external(n) {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                if n == tree.root() {
                    c.data[0] *= value;
                }
                c
            })
            .collect();
        Self {
            tree,
            basis,
            ranks,
            cores,
        }
    }

    pub fn tree(&self) -> &FhtwTree {
        &self.tree
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core_mut(&mut self, node: usize) -> &mut Core {
        &mut self.cores[node]
    }

    pub fn n_coords(&self) -> usize {
        self.tree.n_coords()
    }

    /// Total number of stored parameters.
    pub fn n_params(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Multiplies every entry of one core by `lambda`.
    pub fn scale_node(&mut self, node: usize, lambda: f64) {
        self.cores[node].data.iter_mut().for_each(|v| *v *= lambda);
    }

    /// Evaluates the represented function at `x ∈ R^{d-1}`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut psi = vec![0.0; self.basis.size()];
        let mut msg: Vec<Vec<f64>> = vec![Vec::new(); self.tree.n_nodes()];
        for &n in self.tree.post_order() {
            let core = &self.cores[n];
            let (mut t, mut s) = (core.data.clone(), core.shape.clone());
            if self.tree.is_external(n) {
                self.basis.eval_into(x[n], &mut psi);
                (t, s) = contract_vector(&t, &s, 0, &psi);
            }
            for &c in &self.tree.node(n).children {
                (t, s) = contract_vector(&t, &s, 0, &msg[c]);
                msg[c] = Vec::new();
            }
            msg[n] = t;
        }
        msg[self.tree.root()][0]
    }

    /// Evaluates at every row of `points`, in parallel.
    pub fn evaluate_many(&self, points: &SampleMatrix) -> Vec<f64> {
        let outside = points.as_slice().iter().filter(|v| v.abs() > 1.0).count();
        if outside > 0 {
            log::warn!("{outside} coordinates lie outside [-1, 1]; extrapolating");
        }
        let rows: Vec<&[f64]> = points.rows().collect();
        rows.par_iter().map(|r| self.evaluate(r)).collect()
    }

    /// Full coefficient tensor `D`, row-major with coordinate 0 slowest.
    pub fn materialize_dense(&self) -> Result<Vec<f64>> {
        let n = self.basis.size();
        let total = (n as f64).powi(self.n_coords() as i32);
        if total > DENSE_LIMIT as f64 {
            return Err(Error::TooLarge(total.min(usize::MAX as f64) as usize));
        }
        // per node: tensor with axes [coords in `labels` order…, parent bond?]
        let mut parts: Vec<Option<(Vec<f64>, Vec<usize>, Vec<usize>)>> = vec![None; self.tree.n_nodes()];
        for &node in self.tree.post_order() {
            let core = &self.cores[node];
            let (mut t, mut s) = (core.data.clone(), core.shape.clone());
            let mut labels = Vec::new();
            let mut axis = 0;
            if self.tree.is_external(node) {
                labels.push(node);
                axis = 1;
            }
            for &c in &self.tree.node(node).children {
                let (ct, cs, cl) = parts[c].take().expect("child done first");
                // contract child's last axis (its parent bond) with our `axis`
                let rc = *cs.last().unwrap();
                let cflat = ct.len() / rc;
                let left: usize = s[..axis].iter().product();
                let right: usize = s[axis + 1..].iter().product();
                let mut out = vec![0.0; left * cflat * right];
                for l in 0..left {
                    for a in 0..rc {
                        let src = &t[(l * rc + a) * right..(l * rc + a + 1) * right];
                        for j in 0..cflat {
                            let w = ct[j * rc + a];
                            if w == 0.0 {
                                continue;
                            }
                            let o = &mut out[(l * cflat + j) * right..(l * cflat + j + 1) * right];
                            for (x, y) in o.iter_mut().zip(src) {
                                *x += w * y;
                            }
                        }
                    }
                }
                let mut ns = s[..axis].to_vec();
                ns.extend_from_slice(&cs[..cs.len() - 1]);
                ns.extend_from_slice(&s[axis + 1..]);
                axis += cs.len() - 1;
                labels.extend_from_slice(&cl);
                t = out;
                s = ns;
            }
            parts[node] = Some((t, s, labels));
        }
        let (t, s, labels) = parts[self.tree.root()].take().unwrap();
        let mut perm: Vec<usize> = (0..labels.len()).collect();
        perm.sort_by_key(|&i| labels[i]);
        Ok(permute(&t, &s, &perm).0)
    }

    /// Projection onto degree `q`: keeps the first `q + 1` basis
    /// coefficients of every external core. Inner products against any
    /// degree-`q` network are unchanged.
    pub fn truncated(&self, q: usize) -> Result<Self> {
        if q > self.basis.q {
            return Err(Error::Incompatible(format!(
                "cannot truncate degree {} up to {q}",
                self.basis.q
            )));
        }
        let nb = Basis::new(q);
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(n, c)| {
                if !self.tree.is_external(n) {
                    return c.clone();
                }
                let rest = c.data.len() / c.shape[0];
                let mut shape = c.shape.clone();
                shape[0] = nb.size();
                Core {
                    shape,
                    data: c.data[..nb.size() * rest].to_vec(),
                }
            })
            .collect();
        Ok(Self {
            tree: self.tree.clone(),
            basis: nb,
            ranks: self.ranks.clone(),
            cores,
        })
    }

    /// Same network with the basis raised to degree `q` (zero coefficients).
    pub fn padded(&self, q: usize) -> Result<Self> {
        if q < self.basis.q {
            return Err(Error::Incompatible(format!(
                "cannot pad degree {} down to {q}",
                self.basis.q
            )));
        }
        let nb = Basis::new(q);
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(n, c)| {
                if !self.tree.is_external(n) {
                    return c.clone();
                }
                let rest = c.data.len() / c.shape[0];
                let mut data = c.data.clone();
                data.resize(nb.size() * rest, 0.0);
                let mut shape = c.shape.clone();
                shape[0] = nb.size();
                Core { shape, data }
            })
            .collect();
        Ok(Self {
            tree: self.tree.clone(),
            basis: nb,
            ranks: self.ranks.clone(),
            cores,
        })
    }

    /// `⟨D_self, D_other⟩`, equal to `∫ self · other` over `[-1, 1]^{d-1}`.
    pub fn inner_product(&self, other: &Ftn) -> Result<f64> {
        if self.tree != other.tree {
            return Err(Error::Incompatible("networks live on different trees".into()));
        }
        if self.basis != other.basis {
            return Err(Error::Incompatible(format!(
                "basis degrees differ: {} vs {}",
                self.basis.q, other.basis.q
            )));
        }
        // message of node n: row-major (rank in self) × (rank in other)
        let mut msg: Vec<Vec<f64>> = vec![Vec::new(); self.tree.n_nodes()];
        for &n in self.tree.post_order() {
            let (a, b) = (&self.cores[n], &other.cores[n]);
            let (mut t, mut s) = (b.data.clone(), b.shape.clone());
            let first_child_axis = usize::from(self.tree.is_external(n));
            for (i, &c) in self.tree.node(n).children.iter().enumerate() {
                let e = self.tree.edge_of(c);
                (t, s) = mode_product(&t, &s, first_child_axis + i, &msg[c], self.ranks[e]);
                msg[c] = Vec::new();
            }
            let (ra, rb) = if n == self.tree.root() {
                (1, 1)
            } else {
                let e = self.tree.edge_of(n);
                (self.ranks[e], other.ranks[e])
            };
            let rows = a.data.len() / ra;
            debug_assert_eq!(rows * rb, t.len());
            let mut m = vec![0.0; ra * rb];
            for j in 0..rows {
                let ar = &a.data[j * ra..(j + 1) * ra];
                let br = &t[j * rb..(j + 1) * rb];
                for (x, &av) in ar.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    for (y, &bv) in br.iter().enumerate() {
                        m[x * rb + y] += av * bv;
                    }
                }
            }
            let _ = s;
            msg[n] = m;
        }
        Ok(msg[self.tree.root()][0])
    }

    /// `∫ self` over `[-1, 1]^{d-1}`.
    pub fn integral(&self) -> f64 {
        let one = Ftn::constant(self.tree.clone(), self.basis, 1.0);
        self.inner_product(&one).expect("same tree and basis")
    }

    pub fn to_file(&self) -> FtnFile {
        FtnFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            levels: self.tree.levels(),
            q: self.basis.q,
            ranks: self.ranks.clone(),
            node_order: "externals (l, k), then internals (l, k)".into(),
            cores: self.cores.iter().map(|c| c.data.clone()).collect(),
        }
    }

    pub fn from_file(f: FtnFile) -> Result<Self> {
        if f.format != FORMAT_NAME {
            return Err(Error::Format(format!("not an FTN file: format {:?}", f.format)));
        }
        if f.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported FTN format version {}", f.version)));
        }
        let tree = FhtwTree::new(f.levels)?;
        let basis = Basis::new(f.q);
        if f.ranks.len() != tree.n_edges() || f.cores.len() != tree.n_nodes() {
            return Err(Error::Format("rank or core count does not match the tree".into()));
        }
        let cores = f
            .cores
            .into_iter()
            .enumerate()
            .map(|(n, data)| Core::new(core_shape(&tree, basis, &f.ranks, n), data))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tree, basis, f.ranks, cores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let file: FtnFile = serde_json::from_reader(std::io::BufReader::new(f))?;
        Self::from_file(file)
    }
}

/// Versioned on-disk form of an [`Ftn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtnFile {
    pub format: String,
    pub version: u32,
    pub levels: usize,
    pub q: usize,
    /// Rank of edge `e`, which joins node `e + 1` to its parent.
    pub ranks: Vec<usize>,
    pub node_order: String,
    /// Row-major cores with axes `[physical?, child bonds…, parent bond?]`.
    pub cores: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests;
