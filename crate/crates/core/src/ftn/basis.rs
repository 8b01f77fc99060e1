use std::f64::consts::PI;

/// Orthonormal Legendre functions `ψ_i = sqrt((2i - 1)/2) P_{i-1}` on
/// `[-1, 1]`, `i = 1..=q+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub q: usize,
}

impl Basis {
    pub fn new(q: usize) -> Self {
        Self { q }
    }

    /// Number of basis functions `n = q + 1`.
    pub fn size(&self) -> usize {
        self.q + 1
    }

    /// Writes `ψ_1(x), …, ψ_{q+1}(x)` into `out[..q+1]` by the three-term
    /// recurrence.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        legendre_into(x, &mut out[..self.size()]);
        for (i, v) in out[..self.size()].iter_mut().enumerate() {
            *v *= (i as f64 + 0.5).sqrt();
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out);
        out
    }

    /// `K_q(w, x) = Σ_i ψ_i(w) ψ_i(x)`.
    pub fn kernel(&self, w: f64, x: f64) -> f64 {
        let a = self.eval(w);
        let b = self.eval(x);
        a.iter().zip(&b).map(|(u, v)| u * v).sum()
    }
}

/// Plain Legendre polynomials `P_0..P_{n-1}` at `x`.
pub fn legendre_into(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = x;
    }
    for k in 2..n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// `n`-point Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut p = vec![0.0; n + 1];
    for i in 0..(n + 1) / 2 {
        // Newton from the Chebyshev-like initial guess
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            legendre_into(z, &mut p);
            let (pn, pn1) = (p[n], p[n - 1]);
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        legendre_into(z, &mut p);
        let (pn, pn1) = (p[n], p[n - 1]);
        dp = if (z * z - 1.0).abs() > 0.0 {
            n as f64 * (z * pn - pn1) / (z * z - 1.0)
        } else {
            dp
        };
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    (x, w)
}

/// Chebyshev–Gauss nodes `half_width · cos((2μ - 1)π / 2n)`, descending.
pub fn chebyshev_nodes(n: usize, half_width: f64) -> Vec<f64> {
    (1..=n)
        .map(|mu| half_width * ((2 * mu - 1) as f64 * PI / (2 * n) as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_value() {
        let b = Basis::new(4);
        assert!((b.eval(0.3)[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-16);
        // degree-zero kernel is 1/2
        assert!((Basis::new(0).kernel(0.2, -0.7) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        for n in [1, 2, 5, 13, 40] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // exact for x^{2n-2}
            let k = 2 * n - 2;
            let approx: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(k as i32)).sum();
            assert!((approx - 2.0 / (k as f64 + 1.0)).abs() < 1e-13, "n = {n}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for q in [0, 3, 10, 25, 40] {
            let b = Basis::new(q);
            let (x, w) = gauss_legendre(q + 1);
            let vals: Vec<Vec<f64>> = x.iter().map(|&xi| b.eval(xi)).collect();
            for i in 0..=q {
                for j in 0..=q {
                    let g: f64 = (0..=q).map(|m| w[m] * vals[m][i] * vals[m][j]).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g - e).abs() <= 1e-12, "q={q} ({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn chebyshev_nodes_are_symmetric() {
        let x = chebyshev_nodes(8, 0.9);
        assert_eq!(x.len(), 8);
        for i in 0..8 {
            assert!((x[i] + x[7 - i]).abs() < 1e-15);
            assert!(x[i].abs() < 0.9);
        }
    }
}
