use ksos::geometry::{sample_uniform, Domain};
use ksos::kernels::KernelSpec;
use ksos::localizer::{sample_in_ball, solve_parabola, warm_restart, LocalizeStatus, RestartSchedule};
use ksos::solver::{solve, DualState, SampleSet, SolverConfig};
use ndarray::Array1;

const X0: [f64; 2] = [0.3, -0.2];

fn bowl(x: &[f64]) -> f64 {
    (x[0] - X0[0]).powi(2) + (x[1] - X0[1]).powi(2)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn bowl_data(n: usize, seed: u64) -> SampleSet {
    let dom = Domain::ball(X0.to_vec(), 1.0).unwrap();
    let pts = sample_uniform(&dom, n, seed).unwrap();
    let k = KernelSpec::matern(2, 2.5, 0.5).unwrap();
    SampleSet::from_fn(pts, k, bowl).unwrap().with_domain(dom).unwrap()
}

#[test]
fn zero_nu_is_the_plain_solve() {
    let data = bowl_data(60, 1);
    let cfg = SolverConfig::new(1e-3);
    let a = solve(&data, &cfg).unwrap();
    let b = solve_parabola(&data, &cfg).unwrap();
    assert_eq!(a.c_hat.to_bits(), b.c_hat.to_bits());
    assert_eq!(a.alpha, b.last.alpha);
    assert_eq!(a.z_hat, b.z_hat);
    assert_eq!(a.history, b.last.history);
}

#[test]
fn parabola_terms_vanish_at_zero_nu() {
    let data = bowl_data(20, 2);
    let alpha = Array1::from_elem(20, 0.05);
    let plain = SolverConfig::new(1e-3);
    let with_zero = SolverConfig::new(1e-3).with_nu(0.0);
    let a = DualState::new(&data, &plain, alpha.clone()).unwrap();
    let b = DualState::new(&data, &with_zero, alpha).unwrap();
    assert_eq!(a.objective(), b.objective());
    assert_eq!(a.gradient(&data, &plain), b.gradient(&data, &with_zero));
}

#[test]
fn parabola_derivatives_match_finite_differences() {
    let data = bowl_data(10, 3);
    let cfg = SolverConfig::new(1e-3).with_nu(0.7).with_eps(1e-2);
    let alpha: Array1<f64> = (0..10).map(|i| 0.05 + 0.01 * i as f64).collect();
    let alpha = &alpha / alpha.sum();
    let s = DualState::new(&data, &cfg, alpha.clone()).unwrap();
    let g = s.gradient(&data, &cfg);
    let hess = s.hessian(&data, &cfg);
    let h = 1e-6;
    for i in 0..10 {
        let mut p = alpha.clone();
        let mut m = alpha.clone();
        p[i] += h;
        m[i] -= h;
        let sp = DualState::new(&data, &cfg, p).unwrap();
        let sm = DualState::new(&data, &cfg, m).unwrap();
        let fd = (sp.objective() - sm.objective()) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-3));
        let col = (sp.gradient(&data, &cfg) - sm.gradient(&data, &cfg)) / (2.0 * h);
        let err = (&col - &hess.column(i)).mapv(|v| v * v).sum().sqrt();
        let scale = hess.column(i).mapv(|v| v * v).sum().sqrt();
        assert!(err <= 1e-3 * scale);
    }
}

#[test]
fn vertex_value_identity() {
    let data = bowl_data(80, 4);
    let cfg = SolverConfig::new(1e-3).with_nu(0.5);
    let out = solve_parabola(&data, &cfg).unwrap();
    let sq: f64 = out.z_hat.iter().map(|v| v * v).sum();
    assert_eq!(out.vertex_value, out.c_hat - 0.25 * sq);
    assert!(out.vertex_value <= out.c_hat);
    assert_eq!(out.evaluations, 80);
    assert_eq!(out.status, LocalizeStatus::Complete);
}

#[test]
fn parabola_locates_the_bowl_minimizer() {
    let data = bowl_data(200, 5);
    let out = solve_parabola(&data, &SolverConfig::new(1e-3).with_nu(0.5)).unwrap();
    assert!(dist(&out.z_hat, &X0) <= 0.1, "{:?}", out.z_hat);
    assert!(out.vertex_value.abs() <= 0.05, "{}", out.vertex_value);
}

#[test]
fn single_stage_is_one_parabola_solve() {
    let dom = Domain::ball(X0.to_vec(), 1.0).unwrap();
    let k = KernelSpec::matern(2, 2.5, 0.5).unwrap();
    let cfg = SolverConfig::new(1e-3).with_nu(0.5);
    let sched = RestartSchedule::new(1, 80);
    let w = warm_restart(bowl, &dom, &k, &cfg, &sched, 9).unwrap();
    let pts = sample_in_ball(&dom, &dom.center(), 1.0, 80, ksos::rng::derive_seed(9, 0)).unwrap();
    let data = SampleSet::from_fn(pts, k, bowl).unwrap().with_domain(dom).unwrap();
    let p = solve_parabola(&data, &cfg).unwrap();
    assert_eq!(w.c_hat, p.c_hat);
    assert_eq!(w.z_hat, p.z_hat);
    assert_eq!(w.stage_log.len(), 1);
    assert_eq!(w.evaluations, 80);
}

#[test]
fn warm_restart_shrinks_geometrically() {
    let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let k = KernelSpec::matern(2, 2.5, 0.5).unwrap();
    let cfg = SolverConfig::new(1e-3).with_nu(0.5);
    let sched = RestartSchedule::new(4, 150);
    let mut hits = 0;
    for seed in 0..5 {
        let out = warm_restart(bowl, &dom, &k, &cfg, &sched, seed).unwrap();
        assert_eq!(out.evaluations, 600);
        assert_eq!(out.stage_log.len(), 4);
        for (t, s) in out.stage_log.iter().enumerate() {
            assert!((s.radius - (-(t as f64)).exp()).abs() <= 1e-15);
        }
        let err = dist(&out.z_hat, &X0);
        eprintln!("seed {seed}: {err:.3e} {:?}", out.stage_log.iter().map(|s| dist(&s.z, &X0)).collect::<Vec<_>>());
        if err <= (-3.0f64).exp() {
            hits += 1;
        }
    }
    assert!(hits >= 4);
}

#[test]
fn function_values_decrease_across_stages() {
    let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let k = KernelSpec::matern(2, 2.5, 0.5).unwrap();
    let cfg = SolverConfig::new(1e-3).with_nu(0.5);
    let sched = RestartSchedule::new(4, 100);
    let mut per_stage: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for seed in 0..5 {
        let out = warm_restart(bowl, &dom, &k, &cfg, &sched, 100 + seed).unwrap();
        for s in &out.stage_log {
            per_stage[s.stage].push(bowl(&s.z));
        }
    }
    let medians: Vec<f64> = per_stage
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn invalid_schedules_are_rejected() {
    let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let k = KernelSpec::matern(2, 2.5, 0.5).unwrap();
    let cfg = SolverConfig::new(1e-3);
    for s in [
        RestartSchedule::new(0, 10),
        RestartSchedule::new(2, 0),
        RestartSchedule::new(2, 10).with_shrink(1.0),
        RestartSchedule::new(2, 10).with_ball(vec![5.0, 5.0], 1.0),
    ] {
        assert!(warm_restart(bowl, &dom, &k, &cfg, &s, 0).is_err());
    }
}

#[test]
fn off_center_minimizer_is_found() {
    let zeta = [0.2, -0.1];
    let f = move |x: &[f64]| (x[0] - zeta[0]).powi(2) + 2.0 * (x[1] - zeta[1]).powi(2);
    let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let pts = sample_uniform(&dom, 200, 2000).unwrap();
    let data = SampleSet::from_fn(pts, KernelSpec::matern(2, 3.5, 0.5).unwrap(), f).unwrap().with_domain(dom).unwrap();
    let out = solve_parabola(&data, &SolverConfig::new(1e-3).with_nu(0.5)).unwrap();
    assert_eq!(out.last.status, ksos::solver::SolveStatus::Converged);
    assert!(dist(&out.z_hat, &zeta) <= 0.01, "{:?}", out.z_hat);
}
