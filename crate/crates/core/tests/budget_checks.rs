mod oracles;

use atomnum_core::budget::{
    estimator_variance, min_fano, min_variance, optimal_nsc, optimal_squeezing, squeezing, squeezing_threshold_ok,
    BudgetParams,
};
use oracles::{golden_section, slope_bisection};

fn variance_at(n_sc: f64, n_atoms: f64, n_loss: f64) -> f64 {
    estimator_variance(&BudgetParams {
        prior_var: f64::INFINITY,
        q: 0.4,
        alpha_at: 0.024,
        n_atoms,
        n_loss,
        n_sc,
    })
    .unwrap()
}

#[test]
fn variance_is_convex_with_minimum_at_optimum() {
    for (n_atoms, n_loss) in [(1000.0, 56.0), (1606.0, 30.0), (2500.0, 56.0)] {
        let opt = optimal_nsc(n_atoms, 0.4, 0.024, n_loss).unwrap();
        let grid: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
        let values: Vec<f64> = grid.iter().map(|&x| variance_at(x, n_atoms, n_loss)).collect();
        for w in values.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9 * w[1]);
        }
        let (i_min, _) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((grid[i_min] - opt).abs() <= 0.01, "grid min {} vs {opt}", grid[i_min]);

        let h = 1e-5 * opt;
        let slope = (variance_at(opt + h, n_atoms, n_loss) - variance_at(opt - h, n_atoms, n_loss)) / (2.0 * h);
        assert!(slope.abs() < 1e-6 * variance_at(opt, n_atoms, n_loss) / opt, "slope {slope}");

        let vmin = min_variance(n_atoms, 0.4, 0.024, n_loss).unwrap();
        assert!((variance_at(opt, n_atoms, n_loss) / vmin - 1.0).abs() < 1e-12);
        let fano = min_fano(n_atoms, 0.4, 0.024, n_loss).unwrap().fano;
        assert!((fano - vmin / n_atoms).abs() < 1e-12 * fano);
    }
}

#[test]
fn golden_section_agrees_with_closed_forms() {
    let x = golden_section(|n| variance_at(n, 1606.0, 56.0), 0.0, 10.0, 1e-10);
    let opt = optimal_nsc(1606.0, 0.4, 0.024, 56.0).unwrap();
    assert!((x - opt).abs() < 1e-6, "{x} vs {opt}");

    for (q, d0) in [(0.4, 60.0), (0.5, 20.0), (1.0, 8.0), (0.9, 400.0)] {
        let best = optimal_squeezing(q, d0).unwrap();
        let x = golden_section(|n| squeezing(n, q, d0).unwrap().xi, 0.0, 5.0, 1e-12);
        let xi = squeezing(x, q, d0).unwrap().xi;
        assert!((xi - best.xi).abs() < 1e-9, "q={q} d0={d0}: {xi} vs {}", best.xi);
        assert!((x - best.n_sc).abs() < 1e-5);
        let x = slope_bisection(|n| squeezing(n, q, d0).unwrap().xi, 1e-4, 5.0, 1e-5, 1e-13);
        assert!((x - best.n_sc).abs() < 1e-9, "q={q} d0={d0}: n_sc {x} vs {}", best.n_sc);
    }
}

#[test]
fn squeezing_threshold_scan() {
    for i in 1..=200 {
        let qd0 = i as f64 * 0.05;
        let (q, d0) = (0.4, qd0 / 0.4);
        let any_below_one = (0..=2000).any(|j| squeezing(j as f64 * 0.001, q, d0).unwrap().xi < 1.0);
        assert_eq!(any_below_one, qd0 > 4.0 + 1e-9, "q·d0 = {qd0}");
        assert_eq!(squeezing_threshold_ok(q, d0), qd0 > 4.0 + 1e-9);
    }
    let s = optimal_squeezing(0.4, 60.0).unwrap();
    assert!((s.xi_db + 4.16).abs() < 0.01);
}
