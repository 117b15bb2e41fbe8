use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stokes_lab::greens::{solve_greens, GreensCase, GreensKind};
use stokes_lab::regularization::{delta_test_field, DeltaFunction, WeightSigma};
use stokes_lab::report::emit::num;
use stokes_lab::report::svg::emit_plot;
use stokes_lab::report::config::ExperimentSection;
use stokes_lab::report::RunConfig;
use stokes_lab::space::{FeSpace, FieldKind};
use stokes_lab::stokes::{SaddleSystem, Solution};
use stokes_lab::verification::assumptions::random_field;
use stokes_lab::verification::series::RatioSeries;
use stokes_lab::{Domain, Mesh};

struct GreenFixture {
    sys: SaddleSystem,
    case: GreensCase,
    sol: Solution,
}

fn fixture() -> &'static GreenFixture {
    static F: OnceLock<GreenFixture> = OnceLock::new();
    F.get_or_init(|| {
        let domain = Domain::unit_square();
        let mesh = Arc::new(Mesh::structured(&domain, 6).unwrap());
        let space = FeSpace::taylor_hood(mesh, 2).unwrap();
        let sys = SaddleSystem::assemble(&space).unwrap();
        let case = GreensCase::new(&space, GreensKind::G0 { i: 0 }, [0.43, 0.61], &domain).unwrap();
        let sol = solve_greens(&sys, &case).unwrap();
        GreenFixture { sys, case, sol }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn centroids_locate_their_element(n in 1usize..12, pick in 0.0f64..1.0) {
        let mesh = Mesh::structured(&Domain::unit_square(), n).unwrap();
        let t = ((pick * mesh.n_elements() as f64) as usize).min(mesh.n_elements() - 1);
        prop_assert_eq!(mesh.locate_point(mesh.centroid(t)).unwrap(), t);
    }

    #[test]
    fn sigma_grows_along_rays(
        x in 0.0f64..1.0, y in 0.0f64..1.0, angle in 0.0f64..6.3,
        t1 in 0.0f64..1.0, dt in 0.0f64..1.0, kappa in 1.1f64..8.0,
    ) {
        let s = WeightSigma::new([x, y], kappa, 0.05);
        let at = |t: f64| s.eval([x + t * angle.cos(), y + t * angle.sin()]);
        prop_assert!(at(t1) <= at(t1 + dt));
        prop_assert!(at(0.0) == kappa * 0.05);
    }

    #[test]
    fn delta_reproduces_the_local_basis(n in 3usize..8, x in 0.05f64..0.95, y in 0.05f64..0.95) {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
        let space = FeSpace::taylor_hood(mesh, 2).unwrap();
        let delta = DeltaFunction::build(&space, [x, y]).unwrap();
        for &node in space.velocity().element_nodes(delta.element) {
            for comp in 0..2 {
                let v = delta_test_field(&space, node, comp);
                let exact = v.eval_in(delta.element, [x, y]).value;
                for (i, e) in exact.iter().enumerate() {
                    prop_assert!((delta.pair_component(&v, i) - e).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn green_pair_is_galerkin_orthogonal(seed in any::<u64>()) {
        let f = fixture();
        let space = f.sys.space().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_field(&space, FieldKind::Velocity, &mut rng);
        let q = random_field(&space, FieldKind::Pressure, &mut rng);
        let lhs = f.sys.a_form(&f.sol.velocity, &f.sol.pressure, &v, &q);
        let rhs = f.case.delta.pair_component(&v, 0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{} {}", lhs, rhs);
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn config_snapshots_round_trip(
        degree in 2usize..5, kappa in 1.1f64..10.0, seed in 0..=i64::MAX as u64,
        first in 4usize..20, jobs in 1usize..8, r in 0.05f64..0.3,
    ) {
        let c = RunConfig {
            degree,
            kappa,
            seed,
            levels: vec![first, 2 * first],
            jobs,
            experiment: ExperimentSection { r, ..Default::default() },
            ..Default::default()
        };
        prop_assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn plots_are_deterministic(ratios in prop::collection::vec(0.01f64..100.0, 2..6)) {
        let levels: Vec<(f64, f64, f64)> = ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| (0.5f64.powi(i as i32 + 2), r, 1.0))
            .collect();
        let s = RatioSeries::new("p", &levels).unwrap();
        let a = emit_plot(&s).unwrap();
        prop_assert_eq!(&a, &emit_plot(&s.clone()).unwrap());
        prop_assert_eq!(a.matches("<circle").count(), ratios.len());
    }
}
