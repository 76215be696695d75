mod common;

use cross_impact::diagnostics::{asymmetry, diagnose};
use cross_impact::equilibrium::{solve_equilibrium, solve_equilibrium_with, whitening_rotation, ModelParams};
use cross_impact::estimators::{fit_elm, fit_kyle, fit_kyle_with, fit_mle, CovarianceTriple, LossConfig};
use cross_impact::io::{read_moments_csv, write_moments_csv};
use cross_impact::linalg::{commutator_norm, factorize, relative_frobenius, spd_sqrt};
use cross_impact::synthetic::{fabricate_correlation, fabricate_liquidity, normalize_to_block, random_bases};
use cross_impact::{FactorKind, SymMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `A Aᵀ / n + floor·I` from raw entries in `[-1, 1]`.
fn spd(n: usize, floor: f64) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = DMatrix::from_row_slice(n, n, &v);
        SymMatrix::new(&a * a.transpose() / n as f64 + DMatrix::identity(n, n) * floor).unwrap()
    })
}

fn orthogonal(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = DMatrix::from_row_slice(n, n, &v) + DMatrix::identity(n, n) * 3.0;
        nalgebra::linalg::QR::new(a).q()
    })
}

fn params(n: usize) -> impl Strategy<Value = ModelParams> {
    (spd(n, 0.1), spd(n, 0.1)).prop_map(|(s, o)| ModelParams::centered(s, o).unwrap())
}

fn sized_params() -> impl Strategy<Value = ModelParams> {
    (1usize..=6).prop_flat_map(params)
}

/// A triple cut from a random PD block covariance of `(Δp, y)`.
fn triple(n: usize) -> impl Strategy<Value = CovarianceTriple> {
    spd(2 * n, 0.05).prop_map(move |c| {
        CovarianceTriple::new(
            SymMatrix::new(c.view((0, 0), (n, n)).into_owned()).unwrap(),
            SymMatrix::new(c.view((n, n), (n, n)).into_owned()).unwrap(),
            c.view((0, n), (n, n)).into_owned(),
            vec![],
        )
        .unwrap()
    })
}

/// Triples whose response has a positive projection on `Σ̂`, so that `k* > 0`.
fn kyle_triple(n: usize) -> impl Strategy<Value = CovarianceTriple> {
    triple(n).prop_filter("k* must be positive", |t| {
        fit_kyle(t, &LossConfig::identity(t.dim()), None).is_ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sqrt_squares_back(m in (1usize..=6).prop_flat_map(|n| spd(n, 0.01))) {
        let s = spd_sqrt(&m).unwrap();
        prop_assert!(relative_frobenius(&(s.as_matrix() * s.as_matrix()), &m) < 1e-12);
        prop_assert!(s.eigen().unwrap().min() > 0.0);
    }

    #[test]
    fn factorizations_reconstruct(m in (1usize..=6).prop_flat_map(|n| spd(n, 0.01))) {
        for kind in [FactorKind::Cholesky, FactorKind::PrincipalComponent] {
            let f = factorize(&m, kind).unwrap();
            prop_assert!(relative_frobenius(&f.reconstruct(), &m) < 1e-13);
            prop_assert_eq!(&f.right, &f.left.transpose());
            let eye = DMatrix::identity(m.dim(), m.dim());
            prop_assert!((f.left_inverse() * &f.left - &eye).norm() < 1e-10);
        }
    }

    #[test]
    fn equilibrium_is_the_pd_fixed_point(p in sized_params()) {
        let eq = solve_equilibrium(&p).unwrap();
        let l = eq.lambda.as_matrix();
        let lhs = l * p.omega().as_matrix() * l;
        prop_assert!(relative_frobenius(&lhs, &(p.sigma0().as_matrix() * 0.25)) < 1e-10);
        prop_assert!(eq.lambda.eigen().unwrap().min() > 0.0);
        let gain = eq.it_gain.as_matrix() * l;
        prop_assert!((gain - DMatrix::identity(p.dim(), p.dim()) * 0.5).norm() < 1e-10);
    }

    #[test]
    fn equilibrium_is_rotation_equivariant((p, u) in (1usize..=5).prop_flat_map(|n| (params(n), orthogonal(n)))) {
        let rotated = ModelParams::centered(p.sigma0().congruence(&u).unwrap(), p.omega().congruence(&u).unwrap()).unwrap();
        let base = solve_equilibrium(&p).unwrap().lambda.congruence(&u).unwrap();
        let turned = solve_equilibrium(&rotated).unwrap().lambda;
        prop_assert!(relative_frobenius(&turned, &base) < 1e-9);
    }

    #[test]
    fn equilibrium_scales_as_square_root_ratio(p in sized_params(), a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let scaled = ModelParams::centered(p.sigma0().scaled(a), p.omega().scaled(b)).unwrap();
        let expect = solve_equilibrium(&p).unwrap().lambda.scaled((a / b).sqrt());
        prop_assert!(relative_frobenius(&solve_equilibrium(&scaled).unwrap().lambda, &expect) < 1e-10);
    }

    #[test]
    fn factor_choice_does_not_matter(p in sized_params()) {
        let a = solve_equilibrium_with(&p, FactorKind::Cholesky).unwrap().lambda;
        let b = solve_equilibrium_with(&p, FactorKind::PrincipalComponent).unwrap().lambda;
        prop_assert!(relative_frobenius(&a, &b) < 1e-9);
    }

    #[test]
    fn whitening_rotation_reassembles_lambda(p in sized_params()) {
        for kind in [FactorKind::Cholesky, FactorKind::PrincipalComponent] {
            let o = whitening_rotation(&p, kind).unwrap();
            let n = p.dim();
            prop_assert!((&o * o.transpose() - DMatrix::identity(n, n)).norm() < 1e-9);
            let g = factorize(p.sigma0(), kind).unwrap();
            let l = factorize(p.omega(), kind).unwrap();
            let lambda = g.left * o * l.left_inverse() * 0.5;
            prop_assert!(relative_frobenius(&lambda, &solve_equilibrium(&p).unwrap().lambda) < 1e-9);
        }
    }

    #[test]
    fn mle_minimises_loss_and_ignores_m(t in (1usize..=5).prop_flat_map(triple), seed in any::<u64>()) {
        let n = t.dim();
        let m = {
            use rand::SeedableRng;
            common::random_spd(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), n, 0.2)
        };
        let cfg = LossConfig::new(m).unwrap();
        let a = fit_mle(&t, &LossConfig::identity(n)).unwrap();
        let b = fit_mle(&t, &cfg).unwrap();
        prop_assert_eq!(&a.lambda_hat, &b.lambda_hat);
        let elm = fit_elm(&t, &cfg).unwrap();
        prop_assert!(b.loss <= elm.loss + 1e-12);
        if let Ok(kyle) = fit_kyle(&t, &cfg, None) {
            prop_assert!(b.loss <= kyle.loss + 1e-12);
        }
    }

    #[test]
    fn elm_commutes_with_sigma(t in (1usize..=5).prop_flat_map(triple)) {
        let r = fit_elm(&t, &LossConfig::identity(t.dim())).unwrap();
        prop_assert_eq!(&r.lambda_hat, &r.lambda_hat.transpose());
        prop_assert!(commutator_norm(&r.lambda_hat, &t.sigma_hat).unwrap() < 1e-9);
    }

    #[test]
    fn kyle_is_linear_in_k(t in (1usize..=5).prop_flat_map(kyle_triple), k in 0.01f64..10.0) {
        let cfg = LossConfig::identity(t.dim());
        let unit = fit_kyle(&t, &cfg, Some(1.0)).unwrap();
        let scaled = fit_kyle(&t, &cfg, Some(k)).unwrap();
        prop_assert_eq!(scaled.lambda_hat, unit.lambda_hat * k);
    }

    #[test]
    fn kyle_shape_is_independent_of_m(t in (1usize..=5).prop_flat_map(kyle_triple), seed in any::<u64>()) {
        use rand::SeedableRng;
        let n = t.dim();
        let cfg = LossConfig::new(common::random_spd(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), n, 0.2)).unwrap();
        let a = fit_kyle(&t, &LossConfig::identity(n), None).unwrap();
        if let Ok(b) = fit_kyle(&t, &cfg, None) {
            let na = &a.lambda_hat / a.k_star.unwrap();
            let nb = &b.lambda_hat / b.k_star.unwrap();
            prop_assert!(relative_frobenius(&nb, &na) < 1e-10);
        }
    }

    #[test]
    fn kyle_reproduces_sigma_and_ignores_factor(t in (1usize..=5).prop_flat_map(kyle_triple)) {
        let cfg = LossConfig::identity(t.dim());
        let r = fit_kyle(&t, &cfg, None).unwrap();
        let k = r.k.unwrap();
        let pred = &r.lambda_hat * t.omega_d_hat.as_matrix() * &r.lambda_hat;
        prop_assert!(relative_frobenius(&pred, &(t.sigma_hat.as_matrix() * (k * k))) < 1e-9);
        let pc = fit_kyle_with(&t, &cfg, None, FactorKind::PrincipalComponent).unwrap();
        prop_assert!(relative_frobenius(&pc.lambda_hat, &r.lambda_hat) < 1e-9);
        let d = diagnose(&r, &t, &cfg).unwrap();
        prop_assert!(d.commutator_kappa <= 1e-10);
        prop_assert!(d.min_eig_lambda_star > 0.0);
    }

    #[test]
    fn asymmetry_is_transpose_invariant(v in prop::collection::vec(-5.0f64..5.0, 9)) {
        let m = DMatrix::from_row_slice(3, 3, &v);
        let a = asymmetry(&m);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - asymmetry(&m.transpose())).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_idempotent(t in (1usize..=4).prop_flat_map(triple)) {
        let once = normalize_to_block(&t).unwrap();
        let twice = normalize_to_block(&once.to_triple()).unwrap();
        prop_assert_eq!(once.matrix(), twice.matrix());
        for i in 0..2 * t.dim() {
            prop_assert_eq!(once.matrix()[(i, i)], 1.0);
        }
    }

    #[test]
    fn fabrications_preserve_psd(seed in any::<u64>(), eps in 0.001f64..=1.0, rho in -0.99f64..0.99) {
        let base = random_bases(1, seed).unwrap().remove(0);
        let liq = fabricate_liquidity(&base, eps).unwrap();
        prop_assert!(liq.block_psd_warning().unwrap().is_none());
        prop_assert_eq!(&liq.sigma_hat, &base.to_triple().sigma_hat);
        let cor = fabricate_correlation(&base, rho).unwrap();
        prop_assert!(cor.block_psd_warning().unwrap().is_none());
        let target = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        prop_assert!(relative_frobenius(&cor.sigma_hat, &target) < 1e-10);
        prop_assert!((cor.omega_d_hat[(0, 0)] - cor.omega_d_hat[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn moments_file_round_trip(t in (1usize..=4).prop_flat_map(triple)) {
        let text = write_moments_csv(&t);
        let back = read_moments_csv(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(write_moments_csv(&back), text);
    }
}

/// Near-unit correlation: Kyle commutes with the return covariance, and both
/// Kyle and ELM are unaffected by the target correlation, since the transform
/// rescales return and volume covariances by the same factor per eigen-direction.
#[test]
fn correlation_sweep_leaves_kyle_and_elm_unchanged() {
    let cfg = LossConfig::identity(2);
    for base in random_bases(50, 21).unwrap() {
        let reference = fabricate_correlation(&base, 0.5).unwrap();
        let elm_ref = fit_elm(&reference, &cfg).unwrap().lambda_hat;
        let kyle_ref = fit_kyle(&reference, &cfg, Some(1.0)).unwrap().lambda_hat;
        let t = fabricate_correlation(&base, 0.99).unwrap();
        let elm = fit_elm(&t, &cfg).unwrap().lambda_hat;
        let kyle = fit_kyle(&t, &cfg, Some(1.0)).unwrap().lambda_hat;
        assert_eq!(commutator_norm(&kyle, &t.sigma_hat).unwrap(), 0.0);
        assert!(relative_frobenius(&kyle, &kyle_ref) < 1e-9);
        assert!(relative_frobenius(&elm, &elm_ref) < 1e-9);
    }
}
