//! Coordinates on the open simplex.
//!
//! A cell-mass vector `π` goes through the centered log-ratio map to a
//! zero-sum vector `s`, then through an orthonormal Haar cascade to `d - 1`
//! detail coefficients (the scaling coefficient is identically zero and is
//! dropped), and finally through a per-coordinate affine box onto
//! `[-0.9, 0.9]`. Every step is invertible.
//!
//! Coefficients are stored level by level, `c_{1,0}, c_{1,1}, c_{2,1}, …`, so
//! `c_{k,l}` lives at index `2^l - 1 + (k - 1)`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SampleMatrix};

/// Largest tolerated `|y₀|` after the forward cascade.
pub const Y0_TOLERANCE: f64 = 1e-10;

/// Half-width of the normalized cube.
pub const BOX_TARGET: f64 = 0.9;

/// Fraction of the sample spread added on each side of a coordinate's range.
pub const BOX_MARGIN: f64 = 0.025;

/// Half-width of the interval given to a coordinate with no sample spread.
pub const DEGENERATE_HALF_WIDTH: f64 = 1e-6;

/// `s_i = log π_i - mean(log π)`. Scale invariant, so `π` need not be exactly
/// normalized.
pub fn clr_forward(pi: &[f64]) -> Result<Vec<f64>> {
    let mut s = Vec::with_capacity(pi.len());
    for (index, &value) in pi.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Boundary { index, value });
        }
        s.push(value.ln());
    }
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    s.iter_mut().for_each(|v| *v -= mean);
    Ok(s)
}

/// Softmax with max-subtraction.
pub fn clr_inverse(s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    clr_inverse_into(s, &mut out);
    out
}

pub fn clr_inverse_into(s: &[f64], out: &mut Vec<f64>) {
    let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(s.iter().map(|v| (v - mx).exp()));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
}

/// Position of `c_{k,l}` (1-based `k`) in the coefficient vector.
pub fn coeff_index(k: usize, l: usize) -> usize {
    (1 << l) - 1 + (k - 1)
}

/// CSV column names `c_{k}_{l}` in storage order.
pub fn wavelet_header(levels: usize) -> Vec<String> {
    (0..levels)
        .flat_map(|l| (1..=(1usize << l)).map(move |k| format!("c_{k}_{l}")))
        .collect()
}

fn levels_of(d: usize, spatial_dim: usize) -> Result<usize> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!("{d} is not a power of two >= 2")));
    }
    let l = d.trailing_zeros() as usize;
    match spatial_dim {
        1 => Ok(l),
        2 if l % 2 == 0 => Ok(l),
        2 => Err(Error::UnsupportedSize(format!("{d} cells do not form a square grid"))),
        _ => Err(Error::UnsupportedSize(format!("spatial dimension {spatial_dim}"))),
    }
}

/// One Haar split of `src` into averages (front half) and details (back half).
fn haar_split(src: &[f64], dst: &mut [f64]) {
    let half = src.len() / 2;
    for j in 0..half {
        let (a, b) = (src[2 * j], src[2 * j + 1]);
        dst[j] = (a + b) * FRAC_1_SQRT_2;
        dst[half + j] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn haar_merge(src: &[f64], dst: &mut [f64]) {
    let half = src.len() / 2;
    for j in 0..half {
        let (y, c) = (src[j], src[half + j]);
        dst[2 * j] = (y + c) * FRAC_1_SQRT_2;
        dst[2 * j + 1] = (y - c) * FRAC_1_SQRT_2;
    }
}

/// Full cascade including the scaling coefficient: index 0 holds `y₀`, the
/// rest follows the `c_{k,l}` layout. This is the orthogonal matrix `W`.
pub fn haar_full(s: &[f64], spatial_dim: usize) -> Result<Vec<f64>> {
    levels_of(s.len(), spatial_dim)?;
    Ok(if spatial_dim == 1 { haar1d(s) } else { haar2d(s) })
}

/// Inverse of [`haar_full`].
pub fn haar_full_inverse(w: &[f64], spatial_dim: usize) -> Result<Vec<f64>> {
    levels_of(w.len(), spatial_dim)?;
    Ok(if spatial_dim == 1 {
        ihaar1d(w)
    } else {
        ihaar2d(w)
    })
}

fn haar1d(s: &[f64]) -> Vec<f64> {
    // In place the cascade leaves [y0, c_{1,0}, c_{1,1}, c_{2,1}, ...].
    let mut buf = s.to_vec();
    let mut tmp = vec![0.0; s.len()];
    let mut n = s.len();
    while n > 1 {
        haar_split(&buf[..n], &mut tmp[..n]);
        buf[..n].copy_from_slice(&tmp[..n]);
        n /= 2;
    }
    buf
}

fn ihaar1d(w: &[f64]) -> Vec<f64> {
    let mut buf = w.to_vec();
    let mut tmp = vec![0.0; w.len()];
    let mut n = 2;
    while n <= w.len() {
        haar_merge(&buf[..n], &mut tmp[..n]);
        buf[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
    buf
}

/// One separable level on the top-left `n × n` block of an `m × m` row-major
/// grid: rows first, then columns. Afterwards the block holds
/// `[[LL, LH], [HL, HH]]` where the first letter is the filter along the row
/// index `i` and the second along the column index `j`.
fn split2d(g: &mut [f64], m: usize, n: usize) {
    let mut src = vec![0.0; n];
    let mut dst = vec![0.0; n];
    for i in 0..n {
        haar_split(&g[i * m..i * m + n], &mut dst);
        g[i * m..i * m + n].copy_from_slice(&dst);
    }
    for j in 0..n {
        for i in 0..n {
            src[i] = g[i * m + j];
        }
        haar_split(&src, &mut dst);
        for i in 0..n {
            g[i * m + j] = dst[i];
        }
    }
}

fn merge2d(g: &mut [f64], m: usize, n: usize) {
    let mut src = vec![0.0; n];
    let mut dst = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            src[i] = g[i * m + j];
        }
        haar_merge(&src, &mut dst);
        for i in 0..n {
            g[i * m + j] = dst[i];
        }
    }
    for i in 0..n {
        src.copy_from_slice(&g[i * m..i * m + n]);
        haar_merge(&src, &mut dst);
        g[i * m..i * m + n].copy_from_slice(&dst);
    }
}

/// Grid positions of the detail bands, coarse to fine, each band LH, HL, HH
/// in raster order. Position 0 of the output is the scaling coefficient.
fn band_order(m: usize) -> Vec<usize> {
    let mut order = vec![0];
    let mut h = 1;
    while h < m {
        for (oi, oj) in [(0, h), (h, 0), (h, h)] {
            for i in 0..h {
                for j in 0..h {
                    order.push((oi + i) * m + oj + j);
                }
            }
        }
        h *= 2;
    }
    order
}

fn haar2d(s: &[f64]) -> Vec<f64> {
    let m = (s.len() as f64).sqrt().round() as usize;
    let mut g = s.to_vec();
    let mut n = m;
    while n > 1 {
        split2d(&mut g, m, n);
        n /= 2;
    }
    band_order(m).into_iter().map(|p| g[p]).collect()
}

fn ihaar2d(w: &[f64]) -> Vec<f64> {
    let m = (w.len() as f64).sqrt().round() as usize;
    let mut g = vec![0.0; w.len()];
    for (v, p) in w.iter().zip(band_order(m)) {
        g[p] = *v;
    }
    let mut n = 2;
    while n <= m {
        merge2d(&mut g, m, n);
        n *= 2;
    }
    g
}

/// Zero-sum `s` to its `d - 1` detail coefficients.
pub fn dwt_forward(s: &[f64], spatial_dim: usize) -> Result<Vec<f64>> {
    let mut w = haar_full(s, spatial_dim)?;
    let y0 = w[0];
    if y0.abs() > Y0_TOLERANCE {
        return Err(Error::ZeroSumViolation(y0));
    }
    w.remove(0);
    Ok(w)
}

/// Detail coefficients back to `s`, with `y₀ = 0`.
pub fn dwt_inverse(c: &[f64], spatial_dim: usize) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(c.len() + 1);
    w.push(0.0);
    w.extend_from_slice(c);
    haar_full_inverse(&w, spatial_dim)
}

/// Per-coordinate affine map of `[lo, hi]` onto `[-target, target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub target: f64,
}

impl AffineBox {
    /// Sample min/max per column widened by [`BOX_MARGIN`] of the spread on
    /// each side. Columns without spread get `v ± 1e-6`.
    pub fn fit(samples: &SampleMatrix) -> Result<Self> {
        if samples.n_rows() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "fitting a box needs at least 2 samples, got {}",
                samples.n_rows()
            )));
        }
        let n = samples.n_cols();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for r in samples.rows() {
            for j in 0..n {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        for j in 0..n {
            if !lo[j].is_finite() || !hi[j].is_finite() {
                return Err(Error::Format(format!("non-finite value in column {j}")));
            }
            let spread = hi[j] - lo[j];
            if spread > 0.0 {
                lo[j] -= BOX_MARGIN * spread;
                hi[j] += BOX_MARGIN * spread;
            } else {
                log::warn!("coordinate {j} has no spread; using a {DEGENERATE_HALF_WIDTH:e} interval");
                lo[j] -= DEGENERATE_HALF_WIDTH;
                hi[j] += DEGENERATE_HALF_WIDTH;
            }
        }
        Ok(Self {
            lo,
            hi,
            target: BOX_TARGET,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| {
                let mid = 0.5 * (self.lo[j] + self.hi[j]);
                let half = 0.5 * (self.hi[j] - self.lo[j]);
                self.target * (v - mid) / half
            })
            .collect()
    }

    pub fn invert(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.len()];
        self.invert_into(c, &mut out);
        out
    }

    pub fn invert_into(&self, c: &[f64], out: &mut [f64]) {
        for j in 0..c.len() {
            let mid = 0.5 * (self.lo[j] + self.hi[j]);
            let half = 0.5 * (self.hi[j] - self.lo[j]);
            out[j] = mid + c[j] * half / self.target;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() {
            return Err(Error::Shape("box lo/hi lengths differ".into()));
        }
        if !(self.target > 0.0) {
            return Err(Error::Format(format!("box target {} is not positive", self.target)));
        }
        if let Some(j) = (0..self.lo.len()).find(|&j| !(self.hi[j] > self.lo[j])) {
            return Err(Error::Format(format!("box coordinate {j} has hi <= lo")));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let b: Self = serde_json::from_reader(std::io::BufReader::new(f))?;
        b.validate()?;
        Ok(b)
    }
}

/// Full map between cell masses and normalized wavelet coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    pub spatial_dim: usize,
    pub bounds: AffineBox,
}

/// Raw (un-normalized) wavelet coefficients of every row of a batch.
pub fn wavelet_samples(batch: &SampleMatrix, spatial_dim: usize) -> Result<SampleMatrix> {
    let d = batch.n_cols();
    levels_of(d, spatial_dim)?;
    batch.map_rows(d - 1, |pi, out| {
        let c = dwt_forward(&clr_forward(pi)?, spatial_dim)?;
        out.copy_from_slice(&c);
        Ok(())
    })
}

impl CoordinateMap {
    /// Fits the box on `batch` and returns the map with the normalized samples.
    pub fn fit(batch: &SampleMatrix, spatial_dim: usize) -> Result<(Self, SampleMatrix)> {
        let raw = wavelet_samples(batch, spatial_dim)?;
        let bounds = AffineBox::fit(&raw)?;
        let map = Self {
            spatial_dim,
            bounds,
        };
        let c = raw.map_rows(raw.n_cols(), |y, out| {
            out.copy_from_slice(&map.bounds.apply(y));
            Ok(())
        })?;
        Ok((map, c))
    }

    /// Number of cells `d`.
    pub fn cells(&self) -> usize {
        self.bounds.dim() + 1
    }

    pub fn forward(&self, pi: &[f64]) -> Result<Vec<f64>> {
        let y = dwt_forward(&clr_forward(pi)?, self.spatial_dim)?;
        Ok(self.bounds.apply(&y))
    }

    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        let s = dwt_inverse(&self.bounds.invert(c), self.spatial_dim)?;
        Ok(clr_inverse(&s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQ2: f64 = std::f64::consts::SQRT_2;

    fn random_simplex(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    #[test]
    fn clr_closed_forms() {
        let s = clr_forward(&[0.25; 4]).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
        let s = clr_forward(&[0.5, 0.25, 0.25]).unwrap();
        let l2 = 2f64.ln();
        let expect = [2.0 * l2 / 3.0, -l2 / 3.0, -l2 / 3.0];
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clr_goes_to_minus_infinity_at_the_boundary() {
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let e = 10f64.powi(-k);
            let s = clr_forward(&[e, (1.0 - e) / 3.0, 2.0 * (1.0 - e) / 3.0]).unwrap();
            assert!(s[0] < prev);
            prev = s[0];
        }
        assert!(prev < -15.0);
        match clr_forward(&[0.5, 0.0, 0.5]) {
            Err(Error::Boundary { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_uniform_at_zero() {
        let s = [0.3, -1.2, 0.9];
        let a = clr_inverse(&s);
        let b = clr_inverse(&s.map(|v| v + 700.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(clr_inverse(&[0.0; 8]).iter().all(|v| (v - 0.125).abs() < 1e-16));
    }

    #[test]
    fn hand_cascade_example() {
        let c = dwt_forward(&[SQ2, -SQ2, 0.0, 0.0], 1).unwrap();
        let expect = [0.0, 2.0, 0.0];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = dwt_inverse(&[0.0, 2.0, 0.0], 1).unwrap();
        for (a, b) in s.iter().zip([SQ2, -SQ2, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(dwt_inverse(&[0.0; 7], 1).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn nonzero_sum_is_rejected() {
        assert!(matches!(
            dwt_forward(&[1.0, 0.0, 0.0, 0.0], 1),
            Err(Error::ZeroSumViolation(_))
        ));
    }

    #[test]
    fn coefficient_layout() {
        assert_eq!(coeff_index(1, 0), 0);
        assert_eq!(coeff_index(2, 1), 2);
        assert_eq!(coeff_index(1, 2), 3);
        assert_eq!(wavelet_header(2), vec!["c_1_0", "c_1_1", "c_2_1"]);
        // c_{k,l} is the detail of the pair (2k-1, 2k) at level l+1
        let mut s = vec![0.0; 8];
        s[4] = 1.0;
        s[5] = -1.0;
        let c = dwt_forward(&s, 1).unwrap();
        let nz: Vec<usize> = (0..7).filter(|&i| c[i].abs() > 1e-14).collect();
        assert_eq!(nz, vec![coeff_index(3, 2)]);
    }

    fn materialize(d: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                haar_full(&e, dim).unwrap()
            })
            .collect()
    }

    #[test]
    fn cascade_matrix_is_orthogonal() {
        for (d, dim) in [(4, 1), (16, 1), (64, 1), (4, 2), (16, 2), (64, 2)] {
            let cols = materialize(d, dim);
            for a in 0..d {
                for b in 0..d {
                    let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - e).abs() <= 1e-12, "d={d} dim={dim}");
                }
            }
        }
    }

    #[test]
    fn two_d_matches_explicit_row_column_matrix() {
        // m = 4: build the level-1 transform as explicit Kronecker products of
        // 1D Haar rows, then the level-2 transform on the LL block.
        let m = 4;
        let h = FRAC_1_SQRT_2;
        let h4 = [
            [h, h, 0.0, 0.0],
            [0.0, 0.0, h, h],
            [h, -h, 0.0, 0.0],
            [0.0, 0.0, h, -h],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        // level 1: A = H4 G H4ᵀ
        let mut a = [[0.0; 4]; 4];
        for i in 0..m {
            for j in 0..m {
                for p in 0..m {
                    for q in 0..m {
                        a[i][j] += h4[i][p] * g[p * m + q] * h4[j][q];
                    }
                }
            }
        }
        // level 2 on the 2×2 LL block
        let (w, x, y, z) = (a[0][0], a[0][1], a[1][0], a[1][1]);
        let ll = 0.5 * (w + x + y + z);
        let lh = 0.5 * (w - x + y - z);
        let hl = 0.5 * (w + x - y - z);
        let hh = 0.5 * (w - x - y + z);
        let expect = [
            ll, lh, hl, hh, a[0][2], a[0][3], a[1][2], a[1][3], a[2][0], a[2][1], a[3][0], a[3][1],
            a[2][2], a[2][3], a[3][2], a[3][3],
        ];
        let got = haar_full(&g, 2).unwrap();
        for (u, v) in got.iter().zip(expect) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn box_margin_and_round_trip() {
        let s = SampleMatrix::from_rows(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let b = AffineBox::fit(&s).unwrap();
        assert!((b.lo[0] - 1.95).abs() < 1e-15 && (b.hi[0] - 4.05).abs() < 1e-15);
        assert!((b.hi[1] - b.lo[1] - 2e-6).abs() < 1e-15);
        let c = b.apply(&[2.0, 5.0]);
        assert!((c[0] - (-0.9 * 1.0 / 1.05)).abs() < 1e-14);
        assert!(c[1].abs() < 1e-9);
        for r in s.rows() {
            let c = b.apply(r);
            assert!(c.iter().all(|v| v.abs() <= 0.9));
            let back = b.invert(&c);
            for (x, y) in back.iter().zip(r) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
        assert!(AffineBox::fit(&SampleMatrix::from_rows(&[vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn box_is_shift_equivariant() {
        let s = SampleMatrix::from_rows(&[vec![-1.0, 0.5], vec![1.5, 2.0]]).unwrap();
        let t = s.map_rows(2, |r, o| {
            o[0] = r[0] + 3.0;
            o[1] = r[1] + 3.0;
            Ok(())
        })
        .unwrap();
        let (a, b) = (AffineBox::fit(&s).unwrap(), AffineBox::fit(&t).unwrap());
        for j in 0..2 {
            assert!((b.lo[j] - a.lo[j] - 3.0).abs() < 1e-12);
            assert!((b.hi[j] - a.hi[j] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_json_uses_documented_keys() {
        let b = AffineBox {
            lo: vec![-1.0],
            hi: vec![1.0],
            target: 0.9,
        };
        let v: serde_json::Value = serde_json::to_value(&b).unwrap();
        assert!(v.get("lo").is_some() && v.get("hi").is_some());
        assert_eq!(v["target"], 0.9);
    }

    #[test]
    fn full_pipeline_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, dim) in [(4, 1), (16, 1), (64, 1), (16, 2), (64, 2)] {
            let rows: Vec<Vec<f64>> = (0..50).map(|_| random_simplex(&mut rng, d)).collect();
            let batch = SampleMatrix::from_rows(&rows).unwrap();
            let (map, c) = CoordinateMap::fit(&batch, dim).unwrap();
            for (pi, cc) in rows.iter().zip(c.rows()) {
                let back = map.inverse(cc).unwrap();
                for (a, b) in back.iter().zip(pi) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn zero_sum(v: Vec<f64>) -> Vec<f64> {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.into_iter().map(|x| x - m).collect()
        }

        proptest! {
            #[test]
            fn parseval_and_inverse(v in prop::collection::vec(-5.0f64..5.0, 16), dim in 1usize..=2) {
                let s = zero_sum(v);
                let w = haar_full(&s, dim).unwrap();
                prop_assert!(w[0].abs() <= 1e-12);
                let c = dwt_forward(&s, dim).unwrap();
                let ns: f64 = s.iter().map(|x| x * x).sum();
                let nc: f64 = c.iter().map(|x| x * x).sum();
                prop_assert!((ns - nc).abs() <= 1e-12 * ns.max(1.0));
                let back = dwt_inverse(&c, dim).unwrap();
                for (a, b) in back.iter().zip(&s) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
                prop_assert!(back.iter().sum::<f64>().abs() <= 1e-12);
            }

            #[test]
            fn any_coefficients_land_in_the_simplex(c in prop::collection::vec(-30.0f64..30.0, 15)) {
                let pi = clr_inverse(&dwt_inverse(&c, 1).unwrap());
                prop_assert!(pi.iter().all(|&p| p > 0.0));
                prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn clr_round_trip(raw in prop::collection::vec(0.01f64..1.0, 64)) {
                let z: f64 = raw.iter().sum();
                let pi: Vec<f64> = raw.iter().map(|v| v / z).collect();
                let s = clr_forward(&pi).unwrap();
                prop_assert!(s.iter().sum::<f64>().abs() <= 1e-12 * 64.0);
                let back = clr_inverse(&s);
                for (a, b) in back.iter().zip(&pi) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
