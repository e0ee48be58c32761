use nalgebra::{DMatrix, DVector};
use polylab_core::cotype::{avg_sign_norm, cotype_constant, dyadic_bands, Euclidean, LqDirectSum, SupNorm};
use polylab_core::geometry::{compressibility_distance, inradius_lower, inradius_upper};
use polylab_core::grassmann::{random_subspace, subspace_distance};
use polylab_core::numerics::eigh;
use polylab_core::rng::SplitMix64;
use polylab_core::{sample_ensemble, EnsembleConfig, L1Solver, NormOracle, SignMode, Subspace};
use proptest::prelude::*;

fn solver(n: usize, big_n: usize, seed: u64) -> L1Solver {
    L1Solver::new(&sample_ensemble(&EnsembleConfig::new(n, big_n, seed)).unwrap()).unwrap()
}

fn gaussian(rng: &mut SplitMix64, n: usize) -> DVector<f64> {
    DVector::from_vec(rng.gaussian_vec(n))
}

fn family(seed: u64, k: usize, n: usize) -> Vec<DVector<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..k).map(|_| gaussian(&mut rng, n)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn polytope_norm_axioms(seed in any::<u64>(), n in 2usize..6, extra in 0usize..6, lambda in -5.0f64..5.0) {
        let s = solver(n, n + 1 + extra, seed);
        let mut rng = SplitMix64::new(seed ^ 1);
        let (x, y) = (gaussian(&mut rng, n), gaussian(&mut rng, n));
        let (nx, ny) = (s.norm(&x).unwrap(), s.norm(&y).unwrap());
        let tol = 1e-8 * (1.0 + nx + ny);
        prop_assert!(nx > 0.0);
        prop_assert!((s.norm(&(&x * lambda)).unwrap() - lambda.abs() * nx).abs() <= tol * (1.0 + lambda.abs()));
        prop_assert!((s.norm(&-&x).unwrap() - nx).abs() <= tol);
        prop_assert!(s.norm(&(&x + &y)).unwrap() <= nx + ny + tol);
    }

    #[test]
    fn norm_sandwich(seed in any::<u64>(), n in 2usize..5, extra in 1usize..6) {
        let e = sample_ensemble(&EnsembleConfig::new(n, n + extra, seed)).unwrap();
        let s = L1Solver::new(&e).unwrap();
        let lower = inradius_lower(&e).unwrap();
        let upper = inradius_upper(&e, 64);
        prop_assert!(lower <= upper + 1e-12);
        let longest = (0..e.big_n()).map(|j| e.column(j).norm()).fold(0.0, f64::max);
        let mut rng = SplitMix64::new(seed ^ 2);
        let y = gaussian(&mut rng, n);
        let v = s.norm(&y).unwrap();
        prop_assert!(v >= y.norm() / longest - 1e-9);
        prop_assert!(v <= y.norm() / lower + 1e-9);
    }

    #[test]
    fn compressibility_monotone_in_delta(beta in prop::collection::vec(-10.0f64..10.0, 2..40), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        prop_assume!(beta.iter().any(|x| *x != 0.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let d_lo = compressibility_distance(&beta, lo).unwrap();
        let d_hi = compressibility_distance(&beta, hi).unwrap();
        prop_assert!(d_hi <= d_lo + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d_lo));
    }

    #[test]
    fn distance_ignores_basis_choice(seed in any::<u64>(), n in 2usize..7, d in 1usize..3, angle in 0.0f64..6.3) {
        prop_assume!(d < n);
        let mut rng = SplitMix64::new(seed);
        let e = random_subspace(&mut rng, n, d);
        let f = random_subspace(&mut rng, n, d);
        let rot = if d == 2 {
            DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
        } else {
            DMatrix::from_element(1, 1, if angle > 3.0 { -1.0 } else { 1.0 })
        };
        let f2 = Subspace::from_orthonormal(f.basis() * rot).unwrap();
        let d1 = subspace_distance(&e, &f).unwrap();
        let d2 = subspace_distance(&e, &f2).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9);
        prop_assert!((d1 - subspace_distance(&f, &e).unwrap()).abs() < 1e-9);
        prop_assert!(subspace_distance(&f, &f2).unwrap() < 1e-7);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d1));
        prop_assert!((f.projector() - f2.projector()).amax() < 1e-12);
    }

    #[test]
    fn band_traces_bracket_eigenvalues(seed in any::<u64>(), n in 2usize..7, k in 1usize..12) {
        let ys: Vec<DVector<f64>> = family(seed, k, n).into_iter().map(|y| y.normalize()).collect();
        let bands = dyadic_bands(&ys).unwrap();
        let cov = &bands.covariance;
        let eig = eigh(cov).unwrap();
        let positive = eig.values.iter().filter(|&&v| v > 1e-12).count();
        prop_assert_eq!(bands.rank, positive);
        let total: f64 = bands.bands.values().map(|s| (s.basis().transpose() * cov * s.basis()).trace()).sum();
        prop_assert!((total - k as f64).abs() < 1e-8);
        for (&p, s) in &bands.bands {
            let t = (s.basis().transpose() * cov * s.basis()).trace();
            let dim = s.dim() as f64;
            prop_assert!(t > dim * (p as f64).exp2() * (1.0 - 1e-9));
            prop_assert!(t <= dim * (p as f64 + 1.0).exp2() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cotype_ratio_is_scale_invariant(seed in any::<u64>(), k in 1usize..6, scale in 0.01f64..100.0, q in 2.0f64..6.0) {
        let s = solver(4, 8, seed);
        let ys = family(seed ^ 3, k, 4);
        let scaled: Vec<DVector<f64>> = ys.iter().map(|y| y * scale).collect();
        let a = cotype_constant(&s, &ys, q, SignMode::Exact).unwrap();
        let b = cotype_constant(&s, &scaled, q, SignMode::Exact).unwrap();
        prop_assert!((a.family_ratio - b.family_ratio).abs() < 1e-8 * a.family_ratio);
        prop_assert!(a.constant >= 1.0);
    }

    #[test]
    fn direct_sum_ratio_below_components(seed in any::<u64>(), k in 1usize..6, q in 2.0f64..5.0) {
        let (n1, n2) = (3, 4);
        let s = solver(n2, 8, seed);
        let left = family(seed ^ 4, k, n1);
        let right = family(seed ^ 5, k, n2);
        let sum = LqDirectSum::new(vec![Box::new(SupNorm { dim: n1 }), Box::new(s.clone())], q).unwrap();
        let joined: Vec<DVector<f64>> = left
            .iter()
            .zip(&right)
            .map(|(a, b)| DVector::from_iterator(n1 + n2, a.iter().chain(b.iter()).copied()))
            .collect();
        let whole = cotype_constant(&sum, &joined, q, SignMode::Exact).unwrap().family_ratio;
        let l = cotype_constant(&SupNorm { dim: n1 }, &left, q, SignMode::Exact).unwrap().family_ratio;
        let r = cotype_constant(&s, &right, q, SignMode::Exact).unwrap().family_ratio;
        prop_assert!(whole <= l.max(r) * (1.0 + 1e-9), "{} > max({}, {})", whole, l, r);
    }

    #[test]
    fn sign_average_dominates_each_vector(seed in any::<u64>(), k in 1usize..7) {
        let s = solver(5, 10, seed);
        let ys = family(seed ^ 6, k, 5);
        for oracle in [&s as &dyn NormOracle, &Euclidean { dim: 5 }, &SupNorm { dim: 5 }] {
            let (avg, _) = avg_sign_norm(oracle, &ys, SignMode::Exact).unwrap();
            for y in &ys {
                prop_assert!(avg >= oracle.norm(y).unwrap() * (1.0 - 1e-9));
            }
        }
    }
}
