//! Small dense linear-algebra helpers shared by the simulator and the fitter.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Factorized periodic tridiagonal system with constant bands:
/// `diag` on the diagonal and `off` on both off-diagonals and both corners.
///
/// Solved by the Sherman–Morrison correction of a Thomas factorization, so a
/// solve costs O(n) and the factorization is shared across all right-hand sides.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    n: usize,
    diag: f64,
    off: f64,
    // Thomas factorization of the corner-modified tridiagonal matrix.
    gam: Vec<f64>,
    bet: Vec<f64>,
    // Sherman–Morrison vector z = T^{-1} u.
    z: Vec<f64>,
    gamma: f64,
}

impl CyclicTridiagonal {
    pub fn new(n: usize, diag: f64, off: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::UnsupportedSize(format!(
                "cyclic tridiagonal system needs n >= 3, got {n}"
            )));
        }
        let gamma = -diag;
        let mut main = vec![diag; n];
        main[0] = diag - gamma;
        main[n - 1] = diag - off * off / gamma;
        let mut gam = vec![0.0; n];
        let mut bet = vec![0.0; n];
        bet[0] = main[0];
        for j in 1..n {
            gam[j] = off / bet[j - 1];
            bet[j] = main[j] - off * gam[j];
            if bet[j] == 0.0 {
                return Err(Error::Invariant("zero pivot in cyclic tridiagonal factorization".into()));
            }
        }
        let mut s = Self {
            n,
            diag,
            off,
            gam,
            bet,
            z: vec![0.0; n],
            gamma,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        let mut z = vec![0.0; n];
        s.thomas(&u, &mut z);
        s.z = z;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn thomas(&self, r: &[f64], x: &mut [f64]) {
        let n = self.n;
        x[0] = r[0] / self.bet[0];
        for j in 1..n {
            x[j] = (r[j] - self.off * x[j - 1]) / self.bet[j];
        }
        for j in (0..n - 1).rev() {
            x[j] -= self.gam[j + 1] * x[j + 1];
        }
    }

    /// Solves `A x = rhs`.
    pub fn solve_into(&self, rhs: &[f64], x: &mut [f64]) {
        self.thomas(rhs, x);
        let n = self.n;
        let vy = x[0] + self.off * x[n - 1] / self.gamma;
        let vz = self.z[0] + self.off * self.z[n - 1] / self.gamma;
        let scale = vy / (1.0 + vz);
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= scale * zi;
        }
    }

    /// `A x` for the residual check.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let l = x[(j + n - 1) % n];
            let r = x[(j + 1) % n];
            out[j] = self.diag * x[j] + self.off * (l + r);
        }
    }
}

/// Moore–Penrose pseudo-inverse through the SVD, discarding singular values
/// below `rel_cutoff` times the largest.
pub fn pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (u, s, v) = sorted_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > rel_cutoff * smax && sk > 0.0 {
            out += (v.column(k) * u.column(k).transpose()) / sk;
        }
    }
    out
}

/// Singular values sorted in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let m = to_faer(a);
    match m.singular_values() {
        Ok(s) => s,
        Err(_) => sorted_svd(a).1,
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD with singular values sorted in decreasing order: `(U, s, V)` with
/// `a = U diag(s) Vᵀ`.
///
/// Backed by faer: nalgebra's bidiagonal QR returns wrong factors for some
/// exactly rank-one inputs.
pub fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (DMatrix::zeros(m, 0), Vec::new(), DMatrix::zeros(n, 0));
    }
    let svd = to_faer(a).thin_svd().expect("SVD did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| fs[j].partial_cmp(&fs[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut us = DMatrix::zeros(m, k);
    let mut vs = DMatrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..m {
            us[(i, dst)] = fu[(i, src)];
        }
        for i in 0..n {
            vs[(i, dst)] = fv[(i, src)];
        }
        s.push(fs[src]);
    }
    (us, s, vs)
}
