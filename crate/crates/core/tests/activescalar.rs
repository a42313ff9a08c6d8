use fa_core::activescalar::{
    active_sobolev_check, axis_kernel, collapse_verdict, markers, ribbon_velocity, slit_rhs, slit_velocity,
    solve_ribbon, solve_slit, MollifiedKernel, SolverConfig,
};
use fa_core::{Vec2, Vec3};

#[test]
fn two_particles_by_hand() {
    let a = 0.2;
    let m = MollifiedKernel::build(1e-3).unwrap();
    let mut out = [0.0; 2];
    slit_rhs(&[-a, a], &m, 1.0, &mut out);
    assert!((out[1] - m.eval(2.0 * a)).abs() < 1e-15);
    assert!((out[1] + (2.0 * a).sqrt()).abs() < 1e-2, "{}", out[1]);
    assert_eq!(out[0], -out[1]);
}

#[test]
fn mollified_kernel_tends_to_the_axis_kernel() {
    let mut prev = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3] {
        let m = MollifiedKernel::build(eps).unwrap();
        let err = (0..200)
            .map(|i| 2.5 * i as f64 / 199.0)
            .map(|s| (m.eval(s) - axis_kernel(s)).abs())
            .fold(0.0, f64::max);
        assert!(err < prev, "eps {eps}: {err:e}");
        prev = err;
    }
    assert!((MollifiedKernel::build(1e-3).unwrap().eval(1.0) + 1.0).abs() < 1e-3);
}

#[test]
fn velocity_on_the_axis_matches_the_rhs() {
    // the gap between the unmollified velocity at the particles and the
    // mollified right-hand side shrinks as N grows with eps = 2/N
    let mut prev = f64::INFINITY;
    for n in [50, 100, 200] {
        let y: Vec<f64> = markers(n).iter().map(|a| a * (1.0 - 0.3 * a * a)).collect();
        let m = MollifiedKernel::build(2.0 / n as f64).unwrap();
        let mut rhs = vec![0.0; n];
        slit_rhs(&y, &m, 1.0, &mut rhs);
        let gap = y
            .iter()
            .zip(&rhs)
            .map(|(&yi, r)| (slit_velocity(&y, Vec2::new(yi, 0.0)).x - r).abs())
            .fold(0.0, f64::max);
        assert!(gap < prev, "n {n}: {gap:e}");
        prev = gap;
    }
}

#[test]
fn velocity_symmetry_and_support() {
    let y = markers(40);
    for x2 in [-1.0, 0.3, 2.0] {
        assert!(slit_velocity(&y, Vec2::new(0.0, x2)).x.abs() < 1e-14);
    }
    assert_eq!(slit_velocity(&y, Vec2::new(5.0, 0.0)), Vec2::zeros());
    assert_eq!(slit_velocity(&y, Vec2::new(0.0, 3.5)), Vec2::zeros());
}

#[test]
fn ribbon_velocity_on_the_ribbon() {
    let n = 60;
    let y: Vec<f64> = markers(n).iter().map(|a| 0.8 * a).collect();
    for i in [0, 17, 45] {
        let axial = 2.0 * slit_velocity(&y, Vec2::new(y[i], 0.0)).x;
        for b in [-0.9, 0.0, 0.6] {
            let u = ribbon_velocity(&y, 6, Vec3::new(0.0, b, y[i]));
            assert_eq!(u.x, 0.0);
            assert_eq!(u.y, 0.0);
            assert!((u.z - axial).abs() < 1e-12, "{} vs {axial}", u.z);
        }
    }
}

#[test]
fn slit_run_respects_invariants() {
    let h = solve_slit(&SolverConfig::new(80, None, 1e-2, 1.0)).unwrap();
    assert!(h.log.max_oddness <= 1e-10);
    assert!(h.log.min_gap > 0.0);
    assert!(h.log.max_growth <= 1e-12);
    for (t, y) in h.outer_trace() {
        assert!(y <= (1.0 - t / 2.0).powi(2) + 0.05, "t {t}: {y}");
    }
}

#[test]
fn ribbon_runs_at_twice_the_rate() {
    // half the step over half the time
    let s = solve_slit(&SolverConfig::new(40, None, 1e-2, 0.1)).unwrap();
    let r = solve_ribbon(&SolverConfig::new(40, None, 5e-3, 0.05)).unwrap();
    let (ys, yr) = (s.states.last().unwrap(), r.inner.states.last().unwrap());
    for (a, b) in ys.iter().zip(yr) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
}

#[test]
fn odd_particle_counts_are_rejected() {
    assert!(solve_slit(&SolverConfig::new(7, None, 1e-2, 0.1)).is_err());
}

#[test]
fn slit_gradient_norm_is_stable_for_p_one() {
    let y = markers(40);
    let v: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| active_sobolev_check(&y, 1.0, h).unwrap().value)
        .collect();
    assert!(((v[2] - v[1]) / v[1]).abs() < 0.05, "{v:?}");
    assert!(((v[1] - v[0]) / v[0]).abs() < 0.05, "{v:?}");
    assert!(active_sobolev_check(&y, 2.5, 0.1).is_err());
}

#[test]
fn collapse_verdict_on_a_coarse_run() {
    let mut cfg = SolverConfig::new(40, None, 1e-2, 2.05);
    cfg.record_every = 5;
    let v = collapse_verdict(&solve_slit(&cfg).unwrap());
    assert!(v.reached && v.passed, "{v:?}");
    cfg.t_end = 1.0;
    let v = collapse_verdict(&solve_ribbon(&cfg).unwrap().inner);
    assert_eq!(v.collapse_time, 1.0);
    assert!(v.reached && v.passed, "{v:?}");
    cfg.t_end = 0.5;
    let v = collapse_verdict(&solve_slit(&cfg).unwrap());
    assert!(!v.reached && v.passed, "{v:?}");
}
