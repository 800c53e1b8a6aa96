use gwlimit::coupling::{CouplingModel, TimeGrid};
use gwlimit::diagnostics::{
    check_hmom, iterate_smoothing_map, kesten_stigum_check, tightness_scan, wasserstein_contraction_test, ContractionConfig,
    Report, TightnessConfig,
};
use gwlimit::fixedpoint::{iterate_transform, LatticeSpec, TransformConfig};
use gwlimit::forest::{simulate_paths, SimConfig};
use gwlimit::partition::{moment_system, solve_moments, Horizon, Monomial};
use gwlimit::suite::{run_criterion, SuiteSize};
use num_complex::Complex64;

fn ensemble(model: &CouplingModel, grid: &[f64], gens: usize, reps: usize, seed: u64) -> gwlimit::forest::PathEnsemble {
    simulate_paths(model, &TimeGrid::new(grid.to_vec()).unwrap(), &SimConfig::new(gens, reps, seed)).unwrap()
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let e = ensemble(&CouplingModel::Poisson, &[1.5, 2.5], 12, 2000, 7);
            let mut buf = Vec::new();
            e.write_csv(&mut buf).unwrap();
            buf
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
    assert_ne!(one, {
        let mut buf = Vec::new();
        ensemble(&CouplingModel::Poisson, &[1.5, 2.5], 12, 2000, 8).write_csv(&mut buf).unwrap();
        buf
    });
}

#[test]
fn coupled_populations_are_ordered_in_lambda() {
    for model in CouplingModel::builtins() {
        let e = ensemble(&model, &[1.2, 1.6, 1.9], 10, 500, 3);
        for r in 0..e.replicates() {
            for &n in e.recorded() {
                let z: Vec<u64> = (0..3).map(|j| e.z(r, n, j).unwrap()).collect();
                assert!(z[0] <= z[1] && z[1] <= z[2], "{model:?} replicate {r} generation {n}: {z:?}");
            }
        }
    }
}

#[test]
fn binary_at_two_is_deterministic() {
    let e = ensemble(&CouplingModel::Binary, &[2.0], 10, 5, 1);
    for r in 0..5 {
        for n in 0..=10 {
            assert_eq!(e.w(r, n, 0).unwrap(), 1.0);
        }
    }
    let k = kesten_stigum_check(&e, &CouplingModel::Binary).unwrap();
    assert!(k.passed);
    assert_eq!(k.points[0].mean_w.se, 0.0);
}

#[test]
fn second_moments_match_the_exact_recursion() {
    // E[W_n(λ₁)W_n(λ₂)] and E[ΔW_n(λ₂)²] from simulation against the engine.
    let n = 8;
    for model in CouplingModel::builtins() {
        let grid = if model == CouplingModel::Binary { [1.3, 1.8] } else { [1.5, 2.5] };
        let e = ensemble(&model, &grid, n, 40_000, 11);
        let g = e.grid.clone();
        for (target, f) in [
            ("W1:1,W2:1", Box::new(|w: &[f64]| w[0] * w[1]) as Box<dyn Fn(&[f64]) -> f64>),
            ("dW2:2", Box::new(|w: &[f64]| (w[1] - w[0]).powi(2))),
        ] {
            let sys = moment_system(&model, &g, &Monomial::parse(target, 2).unwrap()).unwrap();
            let exact = solve_moments(&sys, Horizon::Generation(n)).unwrap().value;
            let est = e.expect(n, f).unwrap();
            assert!(est.within(exact, 4.0), "{model:?} {target}: {} ± {} vs {exact}", est.mean, est.se);
        }
    }
}

#[test]
fn moments_are_stable_over_a_compact() {
    // sup_n is reached and M_40 agrees with M_50 on a compact away from 1.
    for model in [CouplingModel::Geometric, CouplingModel::Poisson] {
        let grid = TimeGrid::new(vec![2.0, 2.5, 3.0]).unwrap();
        for target in ["W1:2", "W1:1,W2:1,W3:2", "W3:4", "W2:2,W3:2"] {
            let sys = moment_system(&model, &grid, &Monomial::parse(target, 3).unwrap()).unwrap();
            let tr = sys.trajectory(50);
            assert!(tr.iter().all(|v| v.is_finite()));
            assert!((tr[40] - tr[50]).abs() <= 1e-9 * tr[50].abs(), "{target}: {} vs {}", tr[40], tr[50]);
        }
    }
}

#[test]
fn increment_moments_shrink_with_the_triple() {
    // |E[ΔW(λ₂)·W(λ₃)²]| ≤ C(λ₃−λ₁)^κ with a constant that does not blow up.
    let kappa = 0.9;
    let target = Monomial::parse("dW2:1,W3:2", 3).unwrap();
    let mut ratios = Vec::new();
    for k in 0..5 {
        let w: f64 = 0.4 / 2f64.powi(k);
        let grid = TimeGrid::new(vec![2.0 - w / 2.0, 2.0, 2.0 + w / 2.0]).unwrap();
        let sys = moment_system(&CouplingModel::Poisson, &grid, &target).unwrap();
        let sup = sys.trajectory(60).iter().map(|v| v.abs()).fold(0.0, f64::max);
        ratios.push(sup / w.powf(kappa));
    }
    assert!(ratios.iter().all(|r| r.is_finite()));
    assert!(ratios.last().unwrap() <= &(2.0 * ratios[0]), "{ratios:?}");
}

#[test]
fn transform_of_the_geometric_limit() {
    let grid = TimeGrid::single(2.0).unwrap();
    let cfg = TransformConfig::new(100).lattice(LatticeSpec::self_similar(20.0));
    let t = iterate_transform(&CouplingModel::Geometric, &grid, &cfg).unwrap();
    let i = Complex64::i();
    let err = t.sup_error(|x| (1.0 - 2.0 + i * x[0]) / (1.0 - 2.0 + i * x[0] * 2.0));
    assert!(err < 1e-6, "{err}");
    assert!(t.hermitian_defect() < 1e-12);
    assert!(t.max_modulus() <= 1.0 + 1e-12);
}

#[test]
fn two_point_transform_restricts_to_one_point() {
    let model = CouplingModel::Poisson;
    let spec = LatticeSpec::self_similar(10.0);
    let joint = iterate_transform(&model, &TimeGrid::new(vec![1.8, 2.6]).unwrap(), &TransformConfig::new(60).lattice(spec.clone()).refine(false)).unwrap();
    let single = iterate_transform(&model, &TimeGrid::single(2.6).unwrap(), &TransformConfig::new(60).lattice(spec).refine(false)).unwrap();
    for (k, &x) in single.lattice.axis(0).iter().enumerate() {
        assert!((joint.at(&[0.0, x]).unwrap() - single.values[k]).norm() < 1e-7);
    }
}

#[test]
fn certificates_and_reports_serialize() {
    let cert = check_hmom(&CouplingModel::Poisson, 1.2, 3.0, 0.9, 50, 2).unwrap();
    assert!(cert.passed);
    let json = cert.to_json();
    assert_eq!(json["kappa"], 0.9);
    let mut csv = Vec::new();
    cert.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn tightness_on_the_binary_coupling() {
    let mut cfg = TightnessConfig::new(1.2, 1.8, 0.9);
    cfg.replicates = 5000;
    let r = tightness_scan(&CouplingModel::Binary, &cfg).unwrap();
    assert!(r.passed, "slope {}", r.slope);
}

#[test]
fn contraction_of_identical_laws_and_in_two_dimensions() {
    let model = CouplingModel::Geometric;
    let r = wasserstein_contraction_test(&model, &TimeGrid::single(2.0).unwrap(), &ContractionConfig::new(20_000, 4)).unwrap();
    assert!(r.passed);
    let r2 = wasserstein_contraction_test(&model, &TimeGrid::new(vec![1.5, 2.5]).unwrap(), &ContractionConfig::new(20_000, 5)).unwrap();
    assert!(r2.ratio_sorted.is_none());
    assert!(r2.passed, "{:?}", r2.ratio_paired);
    // ν = μ: a binary ensemble at λ = 2 is the point mass itself.
    let r3 = wasserstein_contraction_test(&CouplingModel::Binary, &TimeGrid::single(2.0).unwrap(), &ContractionConfig::new(10_000, 6)).unwrap();
    assert_eq!(r3.before.mean, 0.0);
    assert_eq!(r3.ratio_sorted.unwrap().mean, 0.0);
}

#[test]
fn smoothing_map_converges_to_the_second_moment() {
    let r = iterate_smoothing_map(&CouplingModel::Poisson, &TimeGrid::single(2.0).unwrap(), 20_000, 10, 9).unwrap();
    assert!(r.passed, "{:?} vs {:?}", r.second_moments, r.limit);
}

#[test]
fn quick_criteria_are_reproducible() {
    for id in [1, 4, 5] {
        let a = run_criterion(id, SuiteSize::Quick).unwrap();
        let b = run_criterion(id, SuiteSize::Quick).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.passed, "{}", a.summary());
    }
}
