use mda_core::optimizers::{
    sgdm_params_from_spa, spa_params_from_sgdm, DaState, MdaState, RegSgdState, SgdmState, SpaState,
};
use mda_core::problems::{Logistic, Problem, Quadratic};
use mda_core::schedules::{alpha_prop1, alpha_reg, beta, lambda, nesterov_betas, ScheduleSpec};
use mda_core::{RngStream, Vector};
use proptest::prelude::*;

fn close(a: &Vector, b: &Vector, rel: f64) -> bool {
    let scale = a.iter().chain(b.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) <= rel * scale
}

fn quad(n: usize, seed: u64) -> Quadratic {
    Quadratic::new(n, 4.0, 0.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn da_equals_regularized_sgd(eta in 0.01f64..0.4, n in 1usize..8, seed in 0u64..1000, steps in 1usize..200) {
        let q = quad(n, seed);
        let x0 = Vector::from(vec![1.0; n]);
        let mut da = DaState::new(x0.clone());
        let mut reg = RegSgdState::new(x0);
        for k in 0..steps {
            let g = q.full_grad(&da.x);
            let gr = q.full_grad(&reg.x);
            da.step(&g, lambda(k, eta), beta(k)).unwrap();
            let step_eta = lambda(k, eta) / beta(k);
            let a = alpha_prop1(k, beta, |j| lambda(j, eta));
            reg.step(&gr, step_eta, a).unwrap();
            prop_assert!(close(&da.x, &reg.x, 1e-10), "k={} {:?} {:?}", k, da.x, reg.x);
        }
    }

    #[test]
    fn da_equals_regularized_sgd_arbitrary_schedules(
        betas in prop::collection::vec(0.1f64..3.0, 2..40),
        lambdas in prop::collection::vec(0.05f64..2.0, 40),
        seed in 0u64..1000,
    ) {
        // any nondecreasing β and positive λ
        let mut b = betas.clone();
        for i in 1..b.len() { b[i] += b[i - 1]; }
        let mut rng = RngStream::new(seed);
        let x0 = Vector::from([0.5, -1.0, 2.0]);
        let mut da = DaState::new(x0.clone());
        let mut reg = RegSgdState::new(x0);
        for k in 0..b.len() {
            let g: Vector = (0..3).map(|_| rng.normal()).collect();
            da.step(&g, lambdas[k], b[k]).unwrap();
            let a = alpha_prop1(k, |j| b[j], |j| lambdas[j]);
            reg.step(&g, lambdas[k] / b[k], a).unwrap();
            prop_assert!(close(&da.x, &reg.x, 1e-10));
        }
    }

    #[test]
    fn sgdm_equals_spa(alpha in 0.001f64..0.2, mom in 0.0f64..0.99, n in 1usize..6, seed in 0u64..1000, steps in 1usize..150) {
        let q = quad(n, seed);
        let (eta, c) = spa_params_from_sgdm(alpha, mom).unwrap();
        let (a2, b2) = sgdm_params_from_spa(eta, c);
        prop_assert!((a2 - alpha).abs() <= 1e-14 * alpha.max(1.0));
        prop_assert!((b2 - mom).abs() <= 1e-14);
        let x0 = Vector::from(vec![1.0; n]);
        let mut m = SgdmState::new(x0.clone());
        let mut s = SpaState::new(x0);
        for _ in 0..steps {
            let gm = q.full_grad(&m.x);
            let gs = q.full_grad(&s.x);
            m.step(&gm, alpha, mom).unwrap();
            s.step(&gs, eta, c).unwrap();
            prop_assert!(close(&m.x, &s.x, 1e-9), "{:?} {:?}", m.x, s.x);
        }
    }

    #[test]
    fn mda_without_averaging_is_da(eta in 0.01f64..0.5, seed in 0u64..1000, steps in 1usize..100) {
        let mut rng = RngStream::new(seed);
        let x0 = Vector::from([1.0, -2.0, 0.0, 3.0]);
        let mut mda = MdaState::new(x0.clone());
        let mut da = DaState::new(x0);
        for k in 0..steps {
            let g: Vector = (0..4).map(|_| rng.normal()).collect();
            mda.step(&g, eta, 1.0).unwrap();
            da.step(&g, lambda(k, eta), beta(k)).unwrap();
            prop_assert!(close(&mda.x, &da.x, 1e-12));
            prop_assert!(close(&mda.z, &da.x, 1e-12));
        }
    }

    #[test]
    fn mda_iterate_in_hull_of_dual_iterates(eta in 0.01f64..1.0, c in 0.01f64..1.0, seed in 0u64..1000, steps in 1usize..100) {
        let mut rng = RngStream::new(seed);
        let x0 = Vector::from([0.0, 1.0, -1.0]);
        let mut st = MdaState::new(x0.clone());
        let mut lo = x0.clone();
        let mut hi = x0;
        for _ in 0..steps {
            let g: Vector = (0..3).map(|_| rng.normal()).collect();
            st.step(&g, eta, c).unwrap();
            for i in 0..3 {
                lo[i] = lo[i].min(st.z[i]);
                hi[i] = hi[i].max(st.z[i]);
                let slack = 1e-12 * (1.0 + hi[i].abs().max(lo[i].abs()));
                prop_assert!(st.x[i] >= lo[i] - slack && st.x[i] <= hi[i] + slack);
            }
        }
    }

    #[test]
    fn schedule_inequalities(k in 0usize..100_000, eta in 1e-4f64..10.0) {
        prop_assert!(beta(k + 1) > beta(k));
        let a = alpha_reg(k, eta);
        prop_assert!(a > 0.0);
        prop_assert!(alpha_reg(k + 1, eta) < a);
        prop_assert!(a * eta <= 1.0);
        let p1 = alpha_prop1(k + 1, beta, |j| lambda(j, eta));
        prop_assert!((p1 - a).abs() <= 1e-9 * a);
        prop_assert!((lambda(k, eta) / beta(k) - eta).abs() <= 1e-12 * eta);
    }

    #[test]
    fn momentum_schedule_in_unit_interval(base in 1e-3f64..1.0, c0 in 0.01f64..1.0, k in 0usize..1000) {
        let mut spec = ScheduleSpec::flat(base, c0, 1000);
        spec.compensate_momentum = true;
        let c = spec.momentum(k);
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert!((c - c0).abs() <= 1e-15);
    }

    #[test]
    fn nesterov_betas_grow(beta0 in 0.1f64..5.0, n in 2usize..200) {
        let b = nesterov_betas(beta0, n);
        prop_assert_eq!(b.len(), n);
        for w in b.windows(2) {
            prop_assert!(w[1] * w[1] >= w[0] * w[0] + 2.0 - 1e-12);
        }
    }
}

fn mean_gradient(p: &dyn Problem, x: &Vector, samples: usize, seed: u64) -> (Vector, Vector) {
    let mut rng = RngStream::new(seed);
    let n = p.dim();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for _ in 0..samples {
        let g = p.stoch_grad(x, &mut rng);
        for i in 0..n {
            sum[i] += g[i];
            sq[i] += g[i] * g[i];
        }
    }
    let m = samples as f64;
    let mean: Vector = sum.iter().map(|s| s / m).collect();
    let se: Vector = sq
        .iter()
        .zip(mean.iter())
        .map(|(q, mu)| ((q / m - mu * mu).max(0.0) / m).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn quadratic_noise_is_unbiased() {
    let q = Quadratic::new(6, 10.0, 1.0, 3).unwrap();
    let x = Vector::from([0.3, -0.1, 0.7, 1.0, -2.0, 0.0]);
    let (mean, se) = mean_gradient(&q, &x, 40_000, 11);
    let exact = q.full_grad(&x);
    for i in 0..6 {
        assert!((mean[i] - exact[i]).abs() < 5.0 * se[i], "coord {i}");
    }
}

#[test]
fn logistic_minibatch_is_unbiased() {
    let p = Logistic::new(100, 4, 5, 9).unwrap();
    let x = Vector::from([0.2, -0.4, 0.1, 0.0]);
    let (mean, se) = mean_gradient(&p, &x, 40_000, 12);
    let exact = p.full_grad(&x);
    for i in 0..4 {
        assert!((mean[i] - exact[i]).abs() < 5.0 * se[i], "coord {i}");
    }
}
