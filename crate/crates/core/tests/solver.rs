use ksos::geometry::{sample_halton, sample_uniform, Domain, PointSet};
use ksos::kernels::KernelSpec;
use ksos::rng;
use ksos::solver::{
    barrier_schedule, iteration_budget, model_eval, model_eval_kernel_form, model_eval_many, power_function, solve, DualState,
    Factorization, SampleSet, CONTINUATION_FACTOR, SolveStatus, SolverConfig,
};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use rand::Rng;

fn wavy(x: &[f64]) -> f64 {
    (3.0 * x[0]).sin() + (2.0 * x[1]).cos() + 0.5 * x[0] * x[1]
}

fn instance(n: usize, seed: u64, nu: f64, sigma: f64) -> SampleSet {
    let dom = Domain::cube(2, 1.0).unwrap();
    let pts = sample_uniform(&dom, n, seed).unwrap();
    let k = KernelSpec::matern(2, nu, sigma).unwrap();
    SampleSet::from_fn(pts, k, wavy).unwrap().with_domain(dom).unwrap()
}

fn random_alpha(n: usize, seed: u64) -> Array1<f64> {
    let mut r = rng::from_seed(seed);
    let a: Array1<f64> = (0..n).map(|_| 0.2 + r.random::<f64>()).collect();
    let s = a.sum();
    a / s
}

/// `sum_i alpha_i Phi_i Phi_i^T + lambda I` from explicit outer products.
fn dense_m(data: &SampleSet, alpha: &Array1<f64>, lambda: f64) -> Array2<f64> {
    let r = data.gram().factor();
    let n = data.len();
    let mut m = Array2::<f64>::eye(n) * lambda;
    for i in 0..n {
        let phi = r.column(i);
        for a in 0..n {
            for b in 0..n {
                m[[a, b]] += alpha[i] * phi[a] * phi[b];
            }
        }
    }
    m
}

fn dense_objective(data: &SampleSet, cfg: &SolverConfig, alpha: &Array1<f64>) -> f64 {
    let n = data.len() as f64;
    let t = cfg.eps_barrier / n;
    let (eig, _) = dense_m(data, alpha, cfg.lambda).eigh(UPLO::Lower).unwrap();
    let logdet: f64 = eig.iter().map(|v| v.ln()).sum();
    alpha.dot(data.values()) - t * logdet + t * t.ln() - cfg.eps_barrier
}

fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let num = (a - b).mapv(|v| v * v).sum().sqrt();
    let den = b.mapv(|v| v * v).sum().sqrt().max(1e-300);
    num / den
}

#[test]
fn single_point_objective_is_scalar_logdet() {
    let pts = PointSet::from_rows(&[vec![0.3, -0.2]]).unwrap();
    let k = KernelSpec::matern(2, 0.5, 1.0).unwrap();
    let data = SampleSet::new(pts, Array1::from(vec![2.5]), k).unwrap();
    let eps = 1e-3;
    let lambda = 0.1;
    let cfg = SolverConfig::new(lambda).with_eps(eps);
    let s = DualState::new(&data, &cfg, Array1::from(vec![1.0])).unwrap();
    let eta = data.gram().jitter();
    let expect = 2.5 - eps * (1.0 + eta + lambda).ln() + eps * eps.ln() - eps;
    assert!((s.objective() - expect).abs() < 1e-14);
    let h = s.hessian(&data, &cfg);
    let expect_h = eps * (1.0 + eta).powi(2) / (1.0 + eta + lambda).powi(2);
    assert!((h[[0, 0]] - expect_h).abs() < 1e-16);
}

#[test]
fn constant_shift_moves_objective_by_the_constant() {
    let data = instance(12, 1, 0.5, 0.5);
    let shifted = SampleSet::new(data.points().clone(), data.values() + 7.25, data.kernel().clone()).unwrap();
    let cfg = SolverConfig::new(1e-3);
    let alpha = random_alpha(12, 3);
    let a = DualState::new(&data, &cfg, alpha.clone()).unwrap().objective();
    let b = DualState::new(&shifted, &cfg, alpha).unwrap().objective();
    assert!((b - a - 7.25).abs() < 1e-12);
}

#[test]
fn objective_matches_dense_oracle() {
    let data = instance(8, 7, 1.5, 0.7);
    for &lambda in &[0.0, 1e-3, 0.5] {
        let cfg = SolverConfig::new(lambda).with_eps(1e-2);
        for s in 0..20 {
            let alpha = random_alpha(8, 100 + s);
            let got = DualState::new(&data, &cfg, alpha.clone()).unwrap().objective();
            let want = dense_objective(&data, &cfg, &alpha);
            assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "lambda {lambda}: {got} vs {want}");
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..10 {
        let data = instance(10, seed, 0.5, 0.5);
        let cfg = SolverConfig::new(1e-3).with_eps(1e-2);
        let alpha = random_alpha(10, seed + 50);
        let g = DualState::new(&data, &cfg, alpha.clone()).unwrap().gradient(&data, &cfg);
        let h = 1e-6;
        let fd: Array1<f64> = (0..10)
            .map(|i| {
                let mut p = alpha.clone();
                let mut m = alpha.clone();
                p[i] += h;
                m[i] -= h;
                let fp = DualState::new(&data, &cfg, p).unwrap().objective();
                let fm = DualState::new(&data, &cfg, m).unwrap().objective();
                (fp - fm) / (2.0 * h)
            })
            .collect();
        assert!(rel_err(&fd, &g) <= 1e-4, "seed {seed}: {}", rel_err(&fd, &g));
    }
}

#[test]
fn hessian_matches_differences_of_the_gradient() {
    for seed in 0..5 {
        let data = instance(8, seed, 1.5, 0.5);
        let cfg = SolverConfig::new(1e-3).with_eps(1e-2);
        let alpha = random_alpha(8, seed + 10);
        let hess = DualState::new(&data, &cfg, alpha.clone()).unwrap().hessian(&data, &cfg);
        let h = 1e-6;
        for j in 0..8 {
            let mut p = alpha.clone();
            let mut m = alpha.clone();
            p[j] += h;
            m[j] -= h;
            let gp = DualState::new(&data, &cfg, p).unwrap().gradient(&data, &cfg);
            let gm = DualState::new(&data, &cfg, m).unwrap().gradient(&data, &cfg);
            let col = (gp - gm) / (2.0 * h);
            assert!(rel_err(&col, &hess.column(j).to_owned()) <= 1e-3);
        }
        for i in 0..8 {
            assert!(hess[[i, i]] >= 0.0);
            for j in 0..8 {
                assert_eq!(hess[[i, j]], hess[[j, i]]);
            }
        }
    }
}

#[test]
fn gradient_tends_to_values_for_large_lambda() {
    let data = instance(10, 4, 0.5, 0.5);
    let cfg = SolverConfig::new(1e9);
    let g = DualState::new(&data, &cfg, random_alpha(10, 1)).unwrap().gradient(&data, &cfg);
    for (gi, fi) in g.iter().zip(data.values()) {
        assert!((gi - fi).abs() < 1e-12);
    }
}

#[test]
fn gradient_agrees_with_kernel_form() {
    let data = instance(10, 9, 0.5, 0.5);
    let lambda = 1e-2;
    let cfg = SolverConfig::new(lambda);
    let alpha = random_alpha(10, 2);
    let g = DualState::new(&data, &cfg, alpha.clone()).unwrap().gradient(&data, &cfg);
    let mut k = data.gram().kernel_matrix().clone();
    k.diag_mut().mapv_inplace(|v| v + data.gram().jitter());
    let mut a = k.clone();
    for i in 0..10 {
        a[[i, i]] += lambda / alpha[i];
    }
    let p = k.dot(&a.inv().unwrap());
    let t = cfg.eps_barrier / 10.0;
    for i in 0..10 {
        let other = data.values()[i] - t / alpha[i] * p[[i, i]];
        assert!((other - g[i]).abs() <= 1e-8);
    }
}

#[test]
fn factorization_routes_agree() {
    let data = instance(30, 5, 1.5, 0.5);
    let base = SolverConfig::new(1e-3).with_kappa(1e-10);
    let direct = base.clone().with_factorization(Factorization::Direct);
    let reduced = base.with_factorization(Factorization::Reduced);
    let alpha = random_alpha(30, 8);
    let a = DualState::new(&data, &direct, alpha.clone()).unwrap();
    let b = DualState::new(&data, &reduced, alpha).unwrap();
    assert!((a.objective() - b.objective()).abs() < 1e-12);
    assert!(rel_err(&b.gradient(&data, &reduced), &a.gradient(&data, &direct)) < 1e-10);
    let oa = solve(&data, &direct).unwrap();
    let ob = solve(&data, &reduced).unwrap();
    assert!((oa.c_hat - ob.c_hat).abs() < 1e-7);
    assert!((oa.trace_b - ob.trace_b).abs() < 1e-6 * oa.trace_b);
}

#[test]
fn newton_direction_stays_on_the_slice() {
    for seed in 0..10 {
        let data = instance(15, seed, 0.5, 0.4);
        let cfg = SolverConfig::new(1e-3);
        let s = DualState::new(&data, &cfg, random_alpha(15, seed)).unwrap();
        let step = s.newton_step(&data, &cfg).unwrap();
        assert!(step.direction.sum().abs() <= 1e-10);
        assert!(step.decrement >= 0.0);
    }
}

#[test]
fn damped_step_never_leaves_the_barrier_domain() {
    for seed in 0..50 {
        let data = instance(20, seed, 0.5, 0.5);
        let cfg = SolverConfig::new(1e-4);
        let mut s = DualState::new(&data, &cfg, Array1::from_elem(20, 0.05)).unwrap();
        for _ in 0..5 {
            let step = s.newton_step(&data, &cfg).unwrap();
            let next = s.alpha() - &(step.direction / (1.0 + step.scaled_decrement));
            s = DualState::new(&data, &cfg, next).expect("damped step left the domain");
        }
    }
}

#[test]
fn converged_iterate_is_a_fixed_point() {
    let data = instance(25, 3, 0.5, 0.5);
    let cfg = SolverConfig::new(1e-3);
    let out = solve(&data, &cfg).unwrap();
    assert_eq!(out.status, SolveStatus::Converged);
    let s = DualState::new(&data, &cfg, out.alpha.clone()).unwrap();
    let step = s.newton_step(&data, &cfg).unwrap();
    assert!(step.scaled_decrement <= cfg.kappa);
    assert!(step.direction.iter().all(|v| v.abs() < 1e-8));
    assert!((out.alpha.sum() - 1.0).abs() <= 1e-12);
}

#[test]
fn zero_lambda_recovers_the_sample_minimum() {
    let eps = 1e-4;
    for seed in 0..5 {
        let data = instance(50, seed, 0.5, 0.5);
        let out = solve(&data, &SolverConfig::new(0.0).with_eps(eps)).unwrap();
        assert!((out.c_hat - data.min_value()).abs() <= 10.0 * eps);
    }
}

#[test]
fn constant_function_gives_the_constant() {
    let dom = Domain::cube(2, 1.0).unwrap();
    let pts = sample_uniform(&dom, 30, 2).unwrap();
    let k = KernelSpec::matern(2, 0.5, 0.5).unwrap();
    let data = SampleSet::from_fn(pts, k, |_| 0.75).unwrap();
    let eps = 1e-3;
    for &lambda in &[0.0, 1e-3] {
        let out = solve(&data, &SolverConfig::new(lambda).with_eps(eps)).unwrap();
        assert!((out.c_hat - 0.75).abs() <= 10.0 * eps, "{}", out.c_hat);
    }
}

#[test]
fn objective_never_increases() {
    for seed in 0..5 {
        let data = instance(40, seed, 1.5, 0.5);
        let out = solve(&data, &SolverConfig::new(1e-4)).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-13 * (1.0 + w[0].objective.abs()));
        }
        if let Some(last) = out.history.last() {
            assert!(out.objective <= last.objective + 1e-13 * (1.0 + last.objective.abs()));
        }
    }
}

#[test]
fn recovered_quantities_are_consistent() {
    let eps = 1e-3;
    for seed in 0..4 {
        let data = instance(40, seed, 0.5, 0.5);
        let cfg = SolverConfig::new(1e-3).with_eps(eps);
        let out = solve(&data, &cfg).unwrap();
        assert!(out.c_hat - cfg.lambda * out.trace_b <= data.min_value() + 10.0 * eps);
        let b = out.b_hat.to_dense();
        let (eig, _) = b.eigh(UPLO::Lower).unwrap();
        let norm = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(eig.iter().all(|&v| v >= -1e-10 * norm));
        assert!((b.diag().sum() - out.trace_b).abs() <= 1e-8 * out.trace_b);
        let r = data.gram().factor();
        for i in 0..40 {
            let phi = r.column(i);
            assert!((out.b_hat.quad_form(phi) - out.phi_b_phi[i]).abs() <= 1e-8 * (1.0 + out.phi_b_phi[i]));
        }
        assert!(out.residual_max <= 1e-3 * data.range());
        assert!(out.c_feas <= out.c_hat + out.residual_max + 1e-15);
        let budget = iteration_budget(&data, &cfg, out.trace_b).unwrap();
        assert!((out.iterations as f64) <= budget);
    }
}

#[test]
fn shifting_values_shifts_the_estimate() {
    let data = instance(30, 11, 0.5, 0.5);
    let shifted = SampleSet::new(data.points().clone(), data.values() - 3.0, data.kernel().clone()).unwrap();
    let cfg = SolverConfig::new(1e-3).with_kappa(1e-10);
    let a = solve(&data, &cfg).unwrap();
    let b = solve(&shifted, &cfg).unwrap();
    assert!((b.c_hat - (a.c_hat - 3.0)).abs() < 1e-8, "{} {}", a.c_hat, b.c_hat);
}

#[test]
fn model_is_nonnegative_and_interpolates() {
    let data = instance(60, 2, 0.5, 0.5);
    let cfg = SolverConfig::new(1e-3);
    let out = solve(&data, &cfg).unwrap();
    let dom = Domain::cube(2, 1.0).unwrap();
    let probes = sample_uniform(&dom, 1000, 99).unwrap();
    let g = model_eval_many(&out, &data, probes.points()).unwrap();
    assert!(g.iter().all(|&v| v >= -1e-10));
    for i in 0..60 {
        let x = data.points().point(i).to_vec();
        let gi = model_eval(&out, &data, &x).unwrap();
        assert!((gi - (data.values()[i] - out.c_hat)).abs() <= 1e-3 * data.range());
    }
}

#[test]
fn model_forms_agree_on_samples_and_differ_by_the_power_function() {
    let data = instance(40, 6, 1.5, 0.5);
    let cfg = SolverConfig::new(1e-2);
    let out = solve(&data, &cfg).unwrap();
    assert!(out.alpha.iter().all(|&a| a != 0.0));
    for i in 0..40 {
        let x = data.points().point(i).to_vec();
        let a = model_eval(&out, &data, &x).unwrap();
        let b = model_eval_kernel_form(&out, &data, &x).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12) + 1e-12, "{a} vs {b}");
    }
    let t = cfg.eps_barrier / (40.0 * cfg.lambda);
    let probes = sample_uniform(&Domain::cube(2, 1.0).unwrap(), 50, 3).unwrap();
    for x in probes.rows() {
        let a = model_eval(&out, &data, x).unwrap();
        let b = model_eval_kernel_form(&out, &data, x).unwrap();
        let p = power_function(&data, x).unwrap();
        assert!((b - a - t * p).abs() <= 1e-8 * b.abs().max(1e-9));
    }
}

#[test]
fn quadratic_on_the_square() {
    let dom = Domain::cube(2, 1.0).unwrap();
    let pts = sample_halton(&dom, 200, 0).unwrap();
    let k = KernelSpec::matern(2, 2.5, 1.0).unwrap();
    let data = SampleSet::from_fn(pts, k, |x| x[0] * x[0] + x[1] * x[1]).unwrap().with_domain(dom).unwrap();
    let out = solve(&data, &SolverConfig::new(1e-3)).unwrap();
    assert!(out.c_hat >= -0.05 && out.c_hat <= 0.01, "{}", out.c_hat);
    let z = (out.z_hat[0].powi(2) + out.z_hat[1].powi(2)).sqrt();
    assert!(z <= 0.2, "{z}");
}

#[test]
fn summary_round_trips_through_toml() {
    let data = instance(10, 1, 0.5, 0.5);
    let out = solve(&data, &SolverConfig::new(1e-3)).unwrap();
    let s = out.summary();
    let text = toml::to_string(&s).unwrap();
    let back: ksos::solver::SolveSummary = toml::from_str(&text).unwrap();
    assert_eq!(back, s);
}

#[test]
fn invalid_configs_are_rejected() {
    let data = instance(5, 1, 0.5, 0.5);
    assert!(solve(&data, &SolverConfig::new(-1.0)).is_err());
    assert!(solve(&data, &SolverConfig::new(1e-3).with_eps(0.0)).is_err());
    assert!(solve(&data, &SolverConfig::new(1e-3).with_max_iters(0)).is_err());
    assert!(solve(&data, &SolverConfig::new(1e-3).with_nu(-1.0)).is_err());
    let cfg: SolverConfig = toml::from_str("lambda = 0.5\nnu = 0.25").unwrap();
    assert_eq!(cfg.lambda, 0.5);
    assert_eq!(cfg.eps_barrier, 1e-3);
    assert!(toml::from_str::<SolverConfig>("lamda = 0.5").is_err());
}

#[test]
fn continuation_reaches_the_same_optimum() {
    let data = instance(40, 12, 0.5, 0.5);
    let cfg = SolverConfig::new(1e-3).with_kappa(1e-9);
    let a = solve(&data, &cfg).unwrap();
    let b = solve(&data, &cfg.clone().with_continuation(false)).unwrap();
    assert_eq!(a.status, SolveStatus::Converged);
    assert_eq!(b.status, SolveStatus::Converged);
    assert!((a.c_hat - b.c_hat).abs() <= 1e-8, "{} {}", a.c_hat, b.c_hat);
    let gap = (&a.alpha - &b.alpha).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap <= 1e-6, "{gap}");
    let schedule = barrier_schedule(&data, &cfg);
    assert_eq!(*schedule.last().unwrap(), cfg.eps_barrier);
    assert!(schedule.windows(2).all(|w| w[1] < w[0] && w[0] / w[1] <= CONTINUATION_FACTOR * (1.0 + 1e-12)));
    assert_eq!(barrier_schedule(&data, &cfg.with_continuation(false)), vec![1e-3]);
}
