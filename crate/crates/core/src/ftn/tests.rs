use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_ranks<R: Rng>(tree: &FhtwTree, max: usize, rng: &mut R) -> Vec<usize> {
    (0..tree.n_edges()).map(|_| rng.random_range(1..=max)).collect()
}

/// Value of a dense coefficient tensor at `x`, contracting one axis at a time
/// from the last coordinate.
fn dense_eval(d: &[f64], basis: Basis, x: &[f64]) -> f64 {
    let n = basis.size();
    let mut t = d.to_vec();
    for j in (0..x.len()).rev() {
        let psi = basis.eval(x[j]);
        t = t.chunks_exact(n).map(|c| c.iter().zip(&psi).map(|(a, b)| a * b).sum()).collect();
    }
    t[0]
}

#[test]
fn rank_one_constant_core() {
    let tree = FhtwTree::new(3).unwrap();
    let basis = Basis::new(2);
    let ranks = vec![1; tree.n_edges()];
    let cores = (0..tree.n_nodes())
        .map(|n| {
            let mut c = Core::zeros(core_shape(&tree, basis, &ranks, n));
            c.data[0] = 1.0;
            c
        })
        .collect();
    let f = Ftn::new(tree, basis, ranks, cores).unwrap();
    let expect = std::f64::consts::FRAC_1_SQRT_2.powi(7);
    assert!((f.evaluate(&[0.3, -0.2, 0.9, 0.0, 0.1, -0.5, 0.7]) - expect).abs() < 1e-15);
}

#[test]
fn constant_network_is_constant() {
    let f = Ftn::constant(FhtwTree::new(3).unwrap(), Basis::new(4), 2.5);
    assert!((f.evaluate(&[0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7]) - 2.5).abs() < 1e-13);
    assert!((f.integral() - 2.5 * 2f64.powi(7)).abs() < 1e-10);
}

#[test]
fn evaluate_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tree = FhtwTree::new(3).unwrap();
    let basis = Basis::new(3);
    let ranks = random_ranks(&tree, 3, &mut rng);
    let f = Ftn::random(tree, basis, ranks, &mut rng).unwrap();
    let d = f.materialize_dense().unwrap();
    assert_eq!(d.len(), 4usize.pow(7));
    // relative error in the max norm over the sample points
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = dense_eval(&d, basis, &x);
        err = err.max((f.evaluate(&x) - b).abs());
        scale = scale.max(b.abs());
    }
    assert!(err <= 1e-12 * scale, "{err} vs scale {scale}");
}

#[test]
fn zero_core_zeroes_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tree = FhtwTree::new(3).unwrap();
    let ranks = random_ranks(&tree, 3, &mut rng);
    let mut f = Ftn::random(tree, Basis::new(2), ranks, &mut rng).unwrap();
    f.scale_node(8, 0.0);
    for _ in 0..5 {
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(f.evaluate(&x), 0.0);
    }
}

#[test]
fn rank_one_network_is_an_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = FhtwTree::new(2).unwrap();
    let basis = Basis::new(2);
    let f = Ftn::random(tree, basis, vec![1; 3], &mut rng).unwrap();
    let d = f.materialize_dense().unwrap();
    let scale = f.cores()[3].data[0];
    let leaf = |n: usize| f.cores()[n].data.clone();
    let (a, b, c) = (leaf(0), leaf(1), leaf(2));
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let expect = scale * a[i] * b[j] * c[k];
                assert!((d[(i * 3 + j) * 3 + k] - expect).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn dense_matches_naive_index_loop() {
    // L = 2: D(i0, i1, i2) = Σ_{a,b,c} G0[i0, c] G1[i1, a] G2[i2, b] G3[a, b, c]
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tree = FhtwTree::new(2).unwrap();
    let ranks = vec![2, 1, 2];
    let f = Ftn::random(tree, Basis::new(2), ranks.clone(), &mut rng).unwrap();
    let g = |n: usize| &f.cores()[n].data;
    let (ra, rb, rc) = (ranks[0], ranks[1], ranks[2]);
    let d = f.materialize_dense().unwrap();
    for i0 in 0..3 {
        for i1 in 0..3 {
            for i2 in 0..3 {
                let mut s = 0.0;
                for a in 0..ra {
                    for b in 0..rb {
                        for c in 0..rc {
                            s += g(0)[i0 * rc + c] * g(1)[i1 * ra + a] * g(2)[i2 * rb + b] * g(3)[(a * rb + b) * rc + c];
                        }
                    }
                }
                assert!((d[(i0 * 3 + i1) * 3 + i2] - s).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn swapping_siblings_permutes_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tree = FhtwTree::new(2).unwrap();
    let f = Ftn::random(tree.clone(), Basis::new(2), vec![2, 2, 2], &mut rng).unwrap();
    let mut cores = f.cores().to_vec();
    cores.swap(1, 2);
    // w's child axes swap too
    let w = &f.cores()[3];
    let (sw, _) = permute(&w.data, &w.shape, &[1, 0, 2]);
    cores[3] = Core::new(vec![2, 2, 2], sw).unwrap();
    let g = Ftn::new(tree, Basis::new(2), vec![2, 2, 2], cores).unwrap();
    let (df, dg) = (f.materialize_dense().unwrap(), g.materialize_dense().unwrap());
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                assert!((df[(i * 3 + j) * 3 + k] - dg[(i * 3 + k) * 3 + j]).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn dense_size_guard() {
    let f = Ftn::constant(FhtwTree::new(6).unwrap(), Basis::new(1), 1.0);
    assert!(matches!(f.materialize_dense(), Err(Error::TooLarge(_))));
}

#[test]
fn inner_product_matches_dense_and_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for q in 0..=3 {
        let tree = FhtwTree::new(2).unwrap();
        let basis = Basis::new(q);
        let p = Ftn::random(tree.clone(), basis, random_ranks(&tree, 3, &mut rng), &mut rng).unwrap();
        let m = Ftn::random(tree.clone(), basis, random_ranks(&tree, 3, &mut rng), &mut rng).unwrap();
        let pm = p.inner_product(&m).unwrap();
        let mp = m.inner_product(&p).unwrap();
        assert!((pm - mp).abs() <= 1e-12 * pm.abs().max(1.0));
        let (dp, dm) = (p.materialize_dense().unwrap(), m.materialize_dense().unwrap());
        let dense: f64 = dp.iter().zip(&dm).map(|(a, b)| a * b).sum();
        assert!((pm - dense).abs() <= 1e-12 * dense.abs().max(1.0));
        let pp = p.inner_product(&p).unwrap();
        assert!(pp >= 0.0);
        assert!((pp - dp.iter().map(|v| v * v).sum::<f64>()).abs() <= 1e-12 * pp.max(1.0));
        // the product has degree 2q per axis: q + 1 nodes integrate it exactly
        let (x, w) = gauss_legendre(q + 1);
        let mut quad = 0.0;
        for a in 0..=q {
            for b in 0..=q {
                for c in 0..=q {
                    let pt = [x[a], x[b], x[c]];
                    quad += w[a] * w[b] * w[c] * p.evaluate(&pt) * m.evaluate(&pt);
                }
            }
        }
        assert!((pm - quad).abs() <= 1e-10 * quad.abs().max(1.0), "q={q}: {pm} vs {quad}");
    }
}

#[test]
fn inner_product_with_constant_is_the_dense_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tree = FhtwTree::new(2).unwrap();
    let basis = Basis::new(2);
    let p = Ftn::random(tree.clone(), basis, vec![2, 3, 2], &mut rng).unwrap();
    let one = Ftn::constant(tree, basis, 1.0);
    let d = p.materialize_dense().unwrap();
    // the constant's coefficient tensor is √2 ⊗ √2 ⊗ √2 on the first entry
    let expect = d[0] * 2f64.sqrt().powi(3);
    assert!((p.inner_product(&one).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn mismatched_networks_are_rejected() {
    let a = Ftn::constant(FhtwTree::new(2).unwrap(), Basis::new(2), 1.0);
    let b = Ftn::constant(FhtwTree::new(2).unwrap(), Basis::new(3), 1.0);
    let c = Ftn::constant(FhtwTree::new(3).unwrap(), Basis::new(2), 1.0);
    assert!(matches!(a.inner_product(&b), Err(Error::Incompatible(_))));
    assert!(matches!(a.inner_product(&c), Err(Error::Incompatible(_))));
    let padded = a.padded(3).unwrap();
    assert!((padded.inner_product(&b).unwrap() - a.inner_product(&a).unwrap()).abs() < 1e-12);
}

#[test]
fn padding_keeps_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tree = FhtwTree::new(3).unwrap();
    let ranks = random_ranks(&tree, 3, &mut rng);
    let f = Ftn::random(tree, Basis::new(2), ranks, &mut rng).unwrap();
    let g = f.padded(6).unwrap();
    let x = [0.1, -0.4, 0.8, 0.3, -0.9, 0.5, 0.0];
    assert!((f.evaluate(&x) - g.evaluate(&x)).abs() < 1e-12);
}

#[test]
fn truncation_preserves_low_degree_inner_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let tree = FhtwTree::new(3).unwrap();
    let ranks = random_ranks(&tree, 3, &mut rng);
    let hi = Ftn::random(tree.clone(), Basis::new(5), ranks, &mut rng).unwrap();
    let ranks = random_ranks(&tree, 2, &mut rng);
    let lo = Ftn::random(tree, Basis::new(2), ranks, &mut rng).unwrap();
    let full = hi.inner_product(&lo.padded(5).unwrap()).unwrap();
    let cut = hi.truncated(2).unwrap().inner_product(&lo).unwrap();
    assert!((full - cut).abs() <= 1e-12 * full.abs().max(1.0));
    assert!(lo.truncated(3).is_err());
}

#[test]
fn file_round_trip_and_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tree = FhtwTree::new(3).unwrap();
    let ranks = random_ranks(&tree, 3, &mut rng);
    let f = Ftn::random(tree, Basis::new(3), ranks, &mut rng).unwrap();
    let json = serde_json::to_string(&f.to_file()).unwrap();
    let back = Ftn::from_file(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, f);
    let mut bad = f.to_file();
    bad.cores[4].pop();
    assert!(Ftn::from_file(bad).is_err());
    let mut bad = f.to_file();
    bad.version = 99;
    assert!(Ftn::from_file(bad).is_err());
}

#[test]
fn evaluate_many_is_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tree = FhtwTree::new(3).unwrap();
    let ranks = random_ranks(&tree, 2, &mut rng);
    let f = Ftn::random(tree, Basis::new(2), ranks, &mut rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let pts = SampleMatrix::from_rows(&rows).unwrap();
    let vals = f.evaluate_many(&pts);
    for (r, v) in rows.iter().zip(vals) {
        assert_eq!(f.evaluate(r), v);
    }
}
