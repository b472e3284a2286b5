use chaosjump::integrator::{simulate_conditioned_particle, simulate_finite_system, SimConfig};
use chaosjump::model::{build_independent_ou, build_systemic_risk, InitialLaw, SystemicRiskParams};
use chaosjump::noise::{common_base_field, SeedSpec};
use chaosjump::poisson::thin;

const SEEDS: SeedSpec = SeedSpec { common_seed: 21, idiosyncratic_seed: 22 };

#[test]
fn deterministic_drift_matches_the_ode_to_first_order() {
    let a = 1.5;
    let x0 = 2.0;
    let horizon = 1.0;
    let model = build_independent_ou(a, 0.0, 1, InitialLaw::Constant { value: vec![x0] }).unwrap();
    let base = common_base_field(&SEEDS, 0, horizon, &model.marks, model.intensity.bound()).unwrap();
    let exact = x0 * (-a * horizon).exp();
    let err = |dt: f64| {
        let cfg = SimConfig::new(horizon, 3, SEEDS).with_dt(dt);
        let (traj, _) = simulate_finite_system(&model, &cfg, &base).unwrap();
        (traj.terminal(0)[0] - exact).abs()
    };
    let (e1, e2, e3) = (err(0.01), err(0.005), err(0.0025));
    assert!(e1 < 0.01, "{e1}");
    assert!((e1 / e2 - 2.0).abs() < 0.05 && (e2 / e3 - 2.0).abs() < 0.05, "{e1} {e2} {e3}");
}

#[test]
fn common_constant_start_is_a_fixed_point() {
    let p = SystemicRiskParams { vol: 0.0, jump_scale: 0.0, ..SystemicRiskParams::default() };
    let model = build_systemic_risk(p, 4.0, InitialLaw::Constant { value: vec![0.7] }).unwrap();
    let base = common_base_field(&SEEDS, 0, 2.0, &model.marks, model.intensity.bound()).unwrap();
    let (traj, _) = simulate_finite_system(&model, &SimConfig::new(2.0, 5, SEEDS), &base).unwrap();
    assert!(traj.states.iter().all(|v| *v == 0.7));
}

/// Thinning the recorded measure path offline reproduces the jumps accepted
/// while stepping.
#[test]
fn recorded_path_reproduces_the_accepted_jumps() {
    let model = build_systemic_risk(SystemicRiskParams::default(), 4.0, InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 })
        .unwrap();
    for r in 0..20 {
        let base = common_base_field(&SEEDS, r, 3.0, &model.marks, model.intensity.bound()).unwrap();
        let cfg = SimConfig::new(3.0, 8, SEEDS).with_dt(0.05).with_replication(r);
        let (traj, path) = simulate_finite_system(&model, &cfg, &base).unwrap();
        let offline = thin(&base, &model.intensity, &path).unwrap();
        assert_eq!(offline, traj.jumps);
    }
}

#[test]
fn jumps_hit_every_particle_at_the_same_time() {
    let model = build_systemic_risk(SystemicRiskParams::default(), 4.0, InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 })
        .unwrap();
    let base = common_base_field(&SEEDS, 3, 5.0, &model.marks, model.intensity.bound()).unwrap();
    let (traj, _) = simulate_finite_system(&model, &SimConfig::new(5.0, 6, SEEDS).with_dt(0.1), &base).unwrap();
    assert!(!traj.jumps.is_empty());
    let jump_times: Vec<f64> = traj.grid.iter().zip(&traj.is_jump).filter(|(_, j)| **j).map(|(t, _)| *t).collect();
    assert_eq!(jump_times, traj.jumps.times());
    for (g, _) in &traj.pre_jump {
        for i in 0..6 {
            assert_ne!(traj.state(*g, i), traj.left_limit(*g, i));
        }
    }
}

#[test]
fn particle_paths_do_not_depend_on_population_size_without_interaction() {
    let model = build_independent_ou(1.0, 1.0, 2, InitialLaw::Gaussian { mean: vec![0.0, 0.0], std: 1.0 }).unwrap();
    let base = common_base_field(&SEEDS, 0, 1.0, &model.marks, model.intensity.bound()).unwrap();
    let (small, _) = simulate_finite_system(&model, &SimConfig::new(1.0, 2, SEEDS).with_dt(0.01), &base).unwrap();
    let (large, _) = simulate_finite_system(&model, &SimConfig::new(1.0, 9, SEEDS).with_dt(0.01), &base).unwrap();
    for g in 0..small.grid.len() {
        assert_eq!(small.state(g, 1), large.state(g, 1));
    }
}

#[test]
fn conditioned_particle_in_own_environment_is_bit_exact() {
    let model = build_systemic_risk(SystemicRiskParams::default(), 4.0, InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 })
        .unwrap();
    let cfg = SimConfig::new(2.0, 6, SEEDS).with_dt(0.02).with_replication(4);
    let base = common_base_field(&SEEDS, 4, 2.0, &model.marks, model.intensity.bound()).unwrap();
    let (traj, path) = simulate_finite_system(&model, &cfg, &base).unwrap();
    for i in 0..6 {
        let solo = simulate_conditioned_particle(&model, &path, i as u64, &base, &cfg).unwrap();
        assert_eq!(solo.grid, traj.grid);
        for g in 0..traj.grid.len() {
            assert_eq!(solo.state(g, 0), traj.state(g, i));
        }
    }
}
