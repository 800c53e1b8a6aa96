use gwlimit::coupling::{multi_indices, CouplingModel, Kind, TimeGrid};
use gwlimit::diagnostics::{brute_force_s_product, random_tabular, MomentAssignment};
use gwlimit::fixedpoint::{conditioned_moments, conditioned_offspring_law, extinction_probability, solve_extinction};
use gwlimit::partition::{
    all_partitions, bell, enumerate_partitions, expand_s_product, moment_system, solve_moments, stirling2, Atom, Horizon,
    Monomial,
};
use gwlimit::scalar::Scalar;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn builtin() -> impl Strategy<Value = CouplingModel> {
    prop_oneof![Just(CouplingModel::Binary), Just(CouplingModel::Geometric), Just(CouplingModel::Poisson)]
}

/// Sorted distinct grid of `d` points in the coupling's working range.
fn grid_for(model: &CouplingModel, d: usize, raw: &[f64]) -> Vec<f64> {
    let (a, b) = if model.kind() == Kind::Binary { (1.05, 2.0) } else { (1.05, 4.0) };
    let mut v: Vec<f64> = raw.iter().take(d).map(|u| a + (b - a) * u).collect();
    v.sort_by(f64::total_cmp);
    for i in 1..v.len() {
        if v[i] <= v[i - 1] + 1e-3 {
            v[i] = v[i - 1] + 1e-3;
        }
    }
    v.retain(|&x| x <= b);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_are_counted_by_bell_and_stirling(n in 1usize..7) {
        let ground: Vec<usize> = (0..n).collect();
        let all = all_partitions(&ground);
        prop_assert_eq!(all.len() as u64, bell(n));
        for k in 1..=n {
            prop_assert_eq!(enumerate_partitions(&ground, k).len() as u64, stirling2(n, k));
        }
        for p in &all {
            let mut seen: Vec<usize> = p.blocks.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(&seen, &ground);
        }
    }

    #[test]
    fn pgf_is_one_at_one_and_bounded(model in builtin(), raw in prop::collection::vec(0.0f64..1.0, 3), d in 1usize..4,
                                     phases in prop::collection::vec(-3.0f64..3.0, 3)) {
        let g = grid_for(&model, d, &raw);
        let grid = TimeGrid::new(g.clone()).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); g.len()];
        prop_assert!((model.pgf_increments(&grid, &ones).unwrap() - 1.0).norm() < 1e-12);
        let z: Vec<Complex64> = phases.iter().take(g.len()).map(|&t| Complex64::from_polar(1.0, t)).collect();
        prop_assert!(model.pgf_increments(&grid, &z).unwrap().norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn marginal_mean_is_lambda(model in builtin(), u in 0.0f64..1.0) {
        let l = grid_for(&model, 1, &[u])[0];
        let (f1, df1) = model.marginal_pgf(l, 1.0).unwrap();
        prop_assert!((f1 - 1.0).abs() < 1e-12);
        prop_assert!((df1 - l).abs() < 1e-12 * l);
        let first = model.factorial_moment(&TimeGrid::single(l).unwrap(), &[1]).unwrap();
        prop_assert!((first - l).abs() < 1e-12 * l);
    }

    #[test]
    fn factorial_moments_agree_across_scalars(model in builtin(), ks in prop::collection::vec(1100i64..1900, 3)) {
        let mut ks = ks;
        ks.sort_unstable();
        ks.dedup();
        let lams: Vec<BigRational> = ks.iter().map(|&k| BigRational::new(BigInt::from(k), BigInt::from(1000))).collect();
        let grid = TimeGrid::new(lams.iter().map(Scalar::to_f64).collect()).unwrap();
        for beta in multi_indices(lams.len(), 4) {
            let exact = model.factorial_moment_exact(&lams, &beta).unwrap().to_f64();
            let float = model.factorial_moment(&grid, &beta).unwrap();
            prop_assert!((exact - float).abs() <= 1e-12 * exact.abs().max(1.0), "{:?}: {} vs {}", beta, exact, float);
        }
    }

    #[test]
    fn sampled_increments_are_nonnegative_and_cumulate(model in builtin(), raw in prop::collection::vec(0.0f64..1.0, 3), seed in any::<u64>()) {
        let grid = TimeGrid::new(grid_for(&model, 3, &raw)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inc = model.sample_increments(&grid, &mut rng).unwrap();
        let x = inc.prefix_sums();
        prop_assert_eq!(x.len(), grid.d());
        prop_assert!(x.windows(2).all(|w| w[0] <= w[1]));
        if model.kind() == Kind::Binary {
            prop_assert!(x.iter().all(|&v| v == 0 || v == 2));
        }
    }

    #[test]
    fn extinction_is_a_fixed_point(model in builtin(), u in 0.0f64..1.0) {
        let l = grid_for(&model, 1, &[u])[0];
        let sol = solve_extinction(&model, l, 1e-14).unwrap();
        let (f, _) = model.marginal_pgf(l, sol.q).unwrap();
        prop_assert!((0.0..1.0).contains(&sol.q));
        prop_assert!((f - sol.q).abs() < 1e-12);
    }

    #[test]
    fn extinction_decreases_with_lambda(model in builtin(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let g = grid_for(&model, 2, &[u, v]);
        prop_assume!(g.len() == 2);
        let q1 = extinction_probability(&model, g[0], 1e-14).unwrap();
        let q2 = extinction_probability(&model, g[1], 1e-14).unwrap();
        prop_assert!(q2 <= q1 + 1e-12);
    }

    #[test]
    fn conditioned_law_has_mean_lambda(model in builtin(), u in 0.0f64..1.0) {
        let l = grid_for(&model, 1, &[u])[0];
        let q = extinction_probability(&model, l, 1e-14).unwrap();
        let law = conditioned_offspring_law(&model, l, q, 400).unwrap();
        let mass: f64 = law.weights.iter().sum();
        prop_assert!((mass + law.truncation_mass - 1.0).abs() < 1e-9);
        prop_assert!((law.mean() - l).abs() < 1e-8 * l);
        let mu = conditioned_moments(&model, l, q, 2).unwrap();
        prop_assert!((mu[1] * (1.0 - q) - 1.0).abs() < 1e-10);
        // Jensen: E[W²|W>0] ≥ E[W|W>0]².
        prop_assert!(mu[2] >= mu[1] * mu[1] * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expansion_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tabular(2, 3, 3, &mut rng);
        let facs = CouplingModel::Tabular(t.clone()).factorial_table(&t.grid, 4).unwrap();
        let moments = MomentAssignment::random(2, 4, &mut rng);
        let layouts = [
            vec![vec![Atom::W(1), Atom::W(2)], vec![Atom::D(2)]],
            vec![vec![Atom::W(2), Atom::W(2)], vec![Atom::W(2), Atom::D(2)]],
            vec![vec![Atom::W(1), Atom::W(1), Atom::W(1)], vec![Atom::D(2)]],
            vec![vec![], vec![Atom::D(2), Atom::D(2), Atom::W(2), Atom::W(2)]],
        ];
        for blocks in layouts {
            let terms = expand_s_product(&blocks, &facs).unwrap();
            let total: usize = blocks.iter().map(Vec::len).sum();
            prop_assert!(terms.iter().all(|t| t.degree() == total));
            let fast = moments.evaluate(&terms).unwrap();
            let slow = brute_force_s_product(&t.outcomes, &blocks, &moments).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{:?}: {} vs {}", blocks, fast, slow);
        }
    }

    #[test]
    fn limit_is_reached_by_the_trajectory(model in builtin(), raw in prop::collection::vec(0.0f64..1.0, 2),
                                          target in prop_oneof![Just("W1:2"), Just("W1:1,W2:1"), Just("dW2:2"), Just("W1:1,dW2:2"), Just("W2:3")]) {
        let g = grid_for(&model, 2, &raw);
        prop_assume!(g.len() == 2 && g[0] >= 1.5);
        let grid = TimeGrid::new(g).unwrap();
        let m = Monomial::parse(target, 2).unwrap();
        let sys = moment_system(&model, &grid, &m).unwrap();
        let limit = solve_moments(&sys, Horizon::Limit).unwrap();
        let far = solve_moments(&sys, Horizon::Generation(400)).unwrap();
        prop_assert!((limit.value - far.value).abs() <= 1e-9 * limit.value.abs().max(1.0));
        prop_assert!(limit.spectral_radius.unwrap() < 1.0);
        // Initial values: W_0 = 1, ΔW_0(λ_2) = 0.
        let tr = sys.trajectory(0);
        prop_assert_eq!(tr[0], if m.has_increment() { 0.0 } else { 1.0 });
    }
}
