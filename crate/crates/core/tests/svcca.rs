use biascope_core::svcca::{
    cca_correlations, svcca_batch, svcca_distance, svd_reduce, ActivationMatrix, SvccaOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn layer(id: &str, m: DMatrix<f64>) -> ActivationMatrix<f64> {
    ActivationMatrix::new(id, m).unwrap()
}

/// Invertible matrix `U·diag(σ)·Vᵀ` with condition number `cond`.
fn conditioned(dim: usize, cond: f64, seed: u64) -> DMatrix<f64> {
    let u = gaussian(dim, dim, seed).qr().q();
    let v = gaussian(dim, dim, seed + 1000).qr().q();
    let sigma = DVector::from_fn(dim, |i, _| cond.powf(-(i as f64) / (dim - 1) as f64));
    u * DMatrix::from_diagonal(&sigma) * v.transpose()
}

/// Canonical correlations through explicit covariances: Cholesky-whiten
/// each block and take the singular values of the whitened cross-covariance.
fn covariance_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let center = |m: &DMatrix<f64>| {
        let mut c = m.clone();
        for mut col in c.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        c
    };
    let (a, b) = (center(a), center(b));
    let saa = a.transpose() * &a;
    let sbb = b.transpose() * &b;
    let sab = a.transpose() * &b;
    let la = saa.cholesky().unwrap().l();
    let lb = sbb.cholesky().unwrap().l();
    let la_inv = la.try_inverse().unwrap();
    let lb_inv = lb.try_inverse().unwrap();
    let t = la_inv * sab * lb_inv.transpose();
    let mut s: Vec<f64> = t.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

#[test]
fn correlations_match_covariance_oracle() {
    for seed in 0..5 {
        let x = gaussian(300, 6, seed);
        let mixing = gaussian(6, 4, seed + 50);
        let y = &x * mixing + gaussian(300, 4, seed + 100) * 0.7;
        let ra = svd_reduce(&layer("x", x.clone()), 1.0).unwrap();
        let rb = svd_reduce(&layer("y", y.clone()), 1.0).unwrap();
        let got = cca_correlations(&ra, &rb, None).unwrap();
        let want = covariance_oracle(&x, &y);
        assert_eq!(got.correlations.len(), want.len());
        for (g, w) in got.correlations.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "seed {seed}: {g} vs {w}");
        }
    }
}

#[test]
fn full_rank_gaussian_keeps_every_dimension() {
    let m = layer("g", gaussian(100, 10, 7));
    assert_eq!(svd_reduce(&m, 1.0).unwrap().kept_dims, 10);
}

#[test]
fn self_distance_and_result_shape() {
    let x = layer("x", gaussian(500, 12, 3));
    let r = svcca_distance(&x, &x, &SvccaOptions::with_threshold(0.99)).unwrap();
    assert!(r.distance <= 1e-6, "{}", r.distance);
    assert_eq!(r.distance, 1.0 - r.mean_rho);
    assert_eq!(r.correlations.len(), r.kept_dims_a.min(r.kept_dims_b));
    assert!(r.correlations.windows(2).all(|w| w[0] >= w[1]));
    assert!(r.correlations.iter().all(|c| (0.0..=1.0).contains(c)));
}

#[test]
fn invariant_under_invertible_maps() {
    let x = gaussian(2000, 8, 11);
    for seed in 0..5 {
        let a = conditioned(8, 1e3, 200 + seed);
        for threshold in [0.99, 1.0] {
            let opts = SvccaOptions::with_threshold(threshold);
            let r = svcca_distance(&layer("x", x.clone()), &layer("xa", &x * &a), &opts).unwrap();
            assert!(r.distance <= 1e-4, "seed {seed}, threshold {threshold}: {}", r.distance);
        }
    }
}

#[test]
fn orthogonal_rotation_at_default_threshold() {
    let x = gaussian(1000, 10, 5) * DMatrix::from_diagonal(&DVector::from_fn(10, |i, _| 1.0 / (1.0 + i as f64)));
    let q = gaussian(10, 10, 6).qr().q();
    let r = svcca_distance(&layer("x", x.clone()), &layer("xq", &x * q), &SvccaOptions::default()).unwrap();
    assert!(r.distance <= 1e-4, "{}", r.distance);
}

#[test]
fn symmetric() {
    for seed in 0..4 {
        let a = layer("a", gaussian(400, 7, seed));
        let b = layer("b", gaussian(400, 5, seed + 9) + gaussian(400, 7, seed).columns(0, 5) * 0.5);
        let opts = SvccaOptions::default();
        let ab = svcca_distance(&a, &b, &opts).unwrap().distance;
        let ba = svcca_distance(&b, &a, &opts).unwrap().distance;
        assert!((ab - ba).abs() <= 1e-8, "{ab} vs {ba}");
        assert!((0.0..=1.0).contains(&ab));
    }
}

#[test]
fn per_column_affine_invariance() {
    let x = gaussian(800, 6, 21);
    let mut y = x.clone();
    for (j, mut col) in y.column_iter_mut().enumerate() {
        let scale = if j % 2 == 0 { -3.5 } else { 0.02 } * (j + 1) as f64;
        col.iter_mut().for_each(|v| *v = *v * scale + 100.0 * j as f64);
    }
    let (x, y) = (layer("x", x), layer("y", y));
    for threshold in [0.99, 1.0] {
        let r = svcca_distance(&x, &y, &SvccaOptions::with_threshold(threshold)).unwrap();
        assert!(r.distance <= 1e-6, "threshold {threshold}: {}", r.distance);
    }
}

#[test]
fn independent_noise_is_distant() {
    for seed in 0..2 {
        let x = layer("x", gaussian(10_000, 10, 300 + seed));
        let y = layer("y", gaussian(10_000, 10, 400 + seed));
        let r = svcca_distance(&x, &y, &SvccaOptions::default()).unwrap();
        assert!(r.distance >= 0.7, "{}", r.distance);
    }
}

#[test]
fn distance_grows_with_noise() {
    let x = gaussian(2000, 8, 77);
    let noise = gaussian(2000, 8, 78);
    let base = layer("x", x.clone());
    let mut last = -1.0;
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mixed = &x * (1.0 - alpha) + &noise * alpha;
        let d = svcca_distance(&base, &layer("mix", mixed), &SvccaOptions::default()).unwrap().distance;
        assert!(d >= last, "alpha {alpha}: {d} < {last}");
        last = d;
    }
}

#[test]
fn batch_matches_individual_calls() {
    let layers: Vec<ActivationMatrix<f64>> = (0..4).map(|s| layer(&format!("l{s}"), gaussian(300, 6, s))).collect();
    let pairs: Vec<(&ActivationMatrix<f64>, &ActivationMatrix<f64>)> =
        vec![(&layers[0], &layers[1]), (&layers[2], &layers[3]), (&layers[1], &layers[1])];
    let opts = SvccaOptions::default();
    let batch = svcca_batch(&pairs, &opts);
    for ((a, b), got) in pairs.iter().zip(batch) {
        let ra = svd_reduce(a, opts.variance_threshold).unwrap();
        let rb = svd_reduce(b, opts.variance_threshold).unwrap();
        let want = cca_correlations(&ra, &rb, None).unwrap();
        let got = got.unwrap();
        assert_eq!(got, want);
        assert_eq!(got.distance.to_bits(), want.distance.to_bits());
    }
}

#[test]
fn single_precision_path() {
    let x = gaussian(400, 5, 1).map(|v| v as f32);
    let a = ActivationMatrix::<f32>::new("x", x.clone()).unwrap();
    let r = svcca_distance(&a, &a, &SvccaOptions::<f32>::default()).unwrap();
    assert!(r.distance <= 1e-4);
}
