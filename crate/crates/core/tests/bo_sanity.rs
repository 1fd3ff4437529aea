use orthobo_core::engine::{run_bo, Method, RunConfig};

/// On a 1-d quadratic the loop should improve on its initial design in most
/// seeds.
#[test]
fn one_dimensional_quadratic_improves() {
    for method in [Method::OrthEi, Method::McEi] {
        let mut improved = 0;
        for seed in 0..16 {
            let cfg = RunConfig { objective: "quadratic:1".into(), method, budget: 20, n_init: 3, mc_samples: 64, seed, ..RunConfig::default() };
            let trace = run_bo(&cfg).unwrap();
            let curve = trace.regret_by_iteration();
            assert_eq!(curve.len(), 21);
            assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            improved += usize::from(curve[20] < curve[0]);
        }
        assert!(improved >= 14, "{method}: {improved}/16 seeds improved");
    }
}
