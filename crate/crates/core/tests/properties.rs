use garch_tail::clusters::{delta_breiman, pava_nonincreasing, signed_transforms};
use garch_tail::sre::simulate_scalar;
use garch_tail::stats::ks_against;
use garch_tail::{
    simulate, Domain, GarchSpec, Innovation, ModelFile, ParticleEnsemble, SeedStream,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// GARCH(p,q) coefficients with `φ < 0.98`, `p ≤ 3`, `1 ≤ q ≤ 3`.
fn coefficients() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=3, 0usize..=3)
        .prop_flat_map(|(q, p)| {
            (
                prop::collection::vec(0.01f64..1.0, q),
                prop::collection::vec(0.01f64..1.0, p),
                0.05f64..0.98,
            )
        })
        .prop_map(|(a, b, phi)| {
            let total: f64 = a.iter().chain(&b).sum();
            let s = phi / total;
            (
                a.iter().map(|x| x * s).collect(),
                b.iter().map(|x| x * s).collect(),
            )
        })
}

fn innovations() -> impl Strategy<Value = Innovation> {
    prop_oneof![
        Just(Innovation::gaussian()),
        (2.5f64..12.0).prop_map(|nu| Innovation::scaled_t(nu).unwrap()),
        (2.5f64..12.0, -3.0f64..3.0).prop_map(|(nu, xi)| Innovation::skew_t(nu, xi).unwrap()),
    ]
}

fn specs() -> impl Strategy<Value = GarchSpec> {
    (0.1f64..5.0, coefficients(), innovations())
        .prop_map(|(a0, (a, b), inn)| GarchSpec::new(a0, a, b, inn).unwrap())
}

fn to_nalgebra(spec: &GarchSpec, z2: f64) -> DMatrix<f64> {
    let d = spec.dim();
    let m = spec.build_matrix(z2).unwrap().a;
    DMatrix::from_fn(d, d, |i, j| m.row(i)[j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursion_and_scalar_paths_agree(spec in specs(), seed in any::<u64>()) {
        let seeds = SeedStream::new(seed);
        let a = simulate(&spec, 10_000, 1, seeds.rng(Domain::Simulate, 0)).unwrap();
        let b = simulate_scalar(&spec, 10_000, seeds.rng(Domain::Simulate, 0)).unwrap();
        for t in 0..10_000 {
            let scale = a.x2[t].abs().max(1e-300);
            prop_assert!((a.x2[t] - b.x2[t]).abs() <= 1e-12 * scale, "x² at {}", t);
            prop_assert!((a.sigma2[t] - b.sigma2[t]).abs() <= 1e-12 * a.sigma2[t], "σ² at {}", t);
        }
    }

    #[test]
    fn apply_is_the_matrix_product(spec in specs(), z2 in 0.0f64..50.0,
                                    y in prop::collection::vec(0.0f64..10.0, 6)) {
        let d = spec.dim();
        let y = &y[..d.min(6)];
        prop_assume!(y.len() == d);
        let mut out = vec![0.0; d];
        spec.apply(z2, y, &mut out);
        let want = spec.build_matrix(z2).unwrap().a.mul_vec(y);
        for i in 0..d {
            prop_assert!((out[i] - want[i]).abs() <= 1e-12 * (1.0 + want[i].abs()));
        }
        let (c, dd) = spec.norm_parts(y);
        let norm: f64 = out.iter().sum();
        prop_assert!((spec.apply_norm(z2, y) - norm).abs() <= 1e-12 * (1.0 + norm));
        prop_assert!(((z2 + spec.sigma_flag()) * c + dd - norm).abs() <= 1e-12 * (1.0 + norm));
    }

    #[test]
    fn lambda_is_the_dominant_eigenvalue(spec in specs(), z2 in 0.0f64..20.0) {
        let r = to_nalgebra(&spec, z2)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let l = spec.lambda(z2);
        prop_assert!((l - r).abs() <= 1e-8 * (1.0 + r), "{} vs {}", l, r);
    }

    #[test]
    fn ensembles_live_on_the_simplex(d in 1usize..6, pts in prop::collection::vec(0.001f64..100.0, 1..200),
                                     w in prop::collection::vec(0.01f64..5.0, 200)) {
        let n = pts.len() / d;
        prop_assume!(n > 0);
        let pts = pts[..n * d].to_vec();
        let ens = ParticleEnsemble::from_points(d, pts, Some(w[..n].to_vec())).unwrap();
        prop_assert_eq!(ens.len(), n);
        let total: f64 = ens.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for j in 0..n {
            let s: f64 = ens.particle(j).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(ens.particle(j).iter().all(|x| *x >= 0.0));
        }
        prop_assert!(ens.ess() <= n as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn signed_functionals_split_the_squared_ones(
        chi in prop::collection::vec(0.0f64..1.0, 1..30),
        pi in prop::collection::vec(0.001f64..1.0, 1..40),
        delta in 0.0f64..=1.0,
    ) {
        let total: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
        let mean: f64 = pi.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let theta = 1.0 / mean;
        let mut chi = chi;
        chi.insert(0, 1.0);
        let (up, lo) = signed_transforms(&chi, &pi, theta, delta).unwrap();
        for t in 1..chi.len() {
            prop_assert!((up.chi[t] + lo.chi[t] - chi[t]).abs() < 1e-12);
        }
        for s in [&up, &lo] {
            let sum: f64 = s.pi.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "π sums to {}", sum);
            prop_assert!(s.pi.iter().all(|p| *p >= -1e-15));
            let m: f64 = s.pi.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
            prop_assert!((s.theta * m - 1.0).abs() < 1e-8, "θ Σ iπ = {}", s.theta * m);
            prop_assert!(s.theta >= theta - 1e-12 && s.theta <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn tail_skewness_is_antisymmetric_in_xi(nu in 2.5f64..15.0, xi in -4.0f64..4.0, k in 0.2f64..3.0) {
        prop_assume!(2.0 * k < nu);
        let a = delta_breiman(&Innovation::skew_t(nu, xi).unwrap(), k);
        let b = delta_breiman(&Innovation::skew_t(nu, -xi).unwrap(), k);
        prop_assert!((a + b - 1.0).abs() < 1e-8, "{} + {}", a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn standardized_innovations(inn in innovations()) {
        let rule = inn.z2_rule();
        let m2 = rule.expect(|s| s);
        prop_assert!((m2 - 1.0).abs() < 1e-6, "E Z² = {}", m2);
        let mean = garch_tail::quad::integrate_real(|z| z * inn.density(z), 1e-12, 1e-10).0;
        prop_assert!(mean.abs() < 1e-6, "E Z = {}", mean);
    }

    #[test]
    fn pava_is_monotone_and_mean_preserving(y in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let f = pava_nonincreasing(&y);
        prop_assert!(f.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let (a, b): (f64, f64) = (y.iter().sum(), f.iter().sum());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn model_files_round_trip(spec in specs()) {
        let text = ModelFile::from_spec(Some("m".into()), &spec).to_toml();
        let back = ModelFile::parse(&text, "round trip").unwrap().spec().unwrap();
        prop_assert_eq!(back.alpha, spec.alpha.clone());
        prop_assert_eq!(back.beta, spec.beta.clone());
        prop_assert_eq!(back.innovation, spec.innovation);
    }

    #[test]
    fn seeds_separate_streams(seed in any::<u64>(), i in 0u64..1000) {
        use rand::RngCore;
        let s = SeedStream::new(seed);
        let a = s.rng(Domain::Simulate, i).next_u64();
        prop_assert_eq!(a, s.rng(Domain::Simulate, i).next_u64());
        prop_assert_ne!(a, s.rng(Domain::Simulate, i + 1).next_u64());
        prop_assert_ne!(a, s.rng(Domain::TailChain, i).next_u64());
        prop_assert_ne!(s.child(Domain::Kappa, i).seed(), s.child(Domain::Kappa, i + 1).seed());
    }
}

#[test]
fn ks_against_own_cdf_is_small() {
    let inn = Innovation::gaussian();
    let mut rng = SeedStream::new(1).rng(Domain::Simulate, 0);
    let z = inn.sample(20_000, &mut rng);
    let w = vec![1.0 / z.len() as f64; z.len()];
    let d = ks_against(&z, &w, |x| inn.cdf(x));
    assert!(d < 1.63 / (z.len() as f64).sqrt(), "KS {d}");
}
