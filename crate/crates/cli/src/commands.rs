//! The five subcommands. Each returns its summary and files; the caller writes
//! them together with the manifest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use chaosjump::chaos::{
    convergence_study, envelope_check, run_synchronous_coupling, ConvergenceStudy, CouplingRunResult, EnvelopeReport,
    ExperimentSettings,
};
use chaosjump::integrator::{
    regime_base_field, simulate_finite_system, simulate_regime_switching, TrajectorySet,
};
use chaosjump::model::validate::{validate_fourth_moment, validate_growth, validate_lipschitz, ValidationReport};
use chaosjump::model::{CoefficientSet, DeclaredConstants, RegimeModel};
use chaosjump::noise::common_base_field;
use chaosjump::stats::Estimate;
use chaosjump::Measure;

use crate::config::{ExperimentConfig, ModelKind};
use crate::output::{fmt_f64, Csv, REGIME_HEADER, STUDY_HEADER, TRAJECTORY_HEADER};
use crate::CliError;

/// Everything a command produces.
pub struct CommandOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
    pub exit_code: i32,
    pub messages: Vec<String>,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("summary serialises")
}

fn jump_model(cfg: &ExperimentConfig) -> Result<CoefficientSet, CliError> {
    cfg.coefficients()?.ok_or_else(|| {
        CliError::Usage(format!("model `{:?}` has no common jump noise; use the regime subcommand", cfg.model.name))
    })
}

fn regime_model(cfg: &ExperimentConfig) -> Result<RegimeModel, CliError> {
    cfg.regime_model()?
        .ok_or_else(|| CliError::Usage("the regime subcommand needs model.name = \"regime_switching\"".into()))
}

fn push_trajectories(csv: &mut Csv, replication: u64, traj: &TrajectorySet) {
    for i in 0..traj.particles() {
        for (g, &t) in traj.grid.iter().enumerate() {
            let jump = if traj.is_jump[g] { "1" } else { "0" };
            for (c, v) in traj.state(g, i).iter().enumerate() {
                csv.row(&[
                    replication.to_string(),
                    traj.particle_ids[i].to_string(),
                    fmt_f64(t),
                    c.to_string(),
                    fmt_f64(*v),
                    jump.to_string(),
                ]);
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct ReplicationSummary {
    replication: u64,
    jumps: usize,
    terminal_mean: Vec<f64>,
    terminal_variance: f64,
}

fn replication_summary(replication: u64, traj: &TrajectorySet) -> Result<ReplicationSummary, CliError> {
    let last = traj.grid.len() - 1;
    let flat: Vec<f64> = (0..traj.particles()).flat_map(|i| traj.state(last, i).to_vec()).collect();
    let nu = Measure::from_flat(traj.dim, flat)?;
    Ok(ReplicationSummary {
        replication,
        jumps: traj.is_jump.iter().filter(|j| **j).count(),
        terminal_mean: nu.mean().to_vec(),
        terminal_variance: nu.variance(),
    })
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    command: &'static str,
    model: ModelKind,
    settings: &'a ExperimentSettings,
    n: usize,
    jumps_per_replication: Estimate,
    terminal_variance: Estimate,
    replications: Vec<ReplicationSummary>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let settings = cfg.settings();
    let n = cfg.sim.n;
    let runs: Vec<Result<TrajectorySet, CliError>> = (0..settings.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sim = settings.sim(n, r);
            match cfg.model.name {
                ModelKind::RegimeSwitching => {
                    let model = regime_model(cfg)?;
                    let base = regime_base_field(&settings.seeds, r, settings.horizon, &model)?;
                    Ok(simulate_regime_switching(&model, &sim, &base)?)
                }
                _ => {
                    let model = jump_model(cfg)?;
                    let base = common_base_field(&settings.seeds, r, settings.horizon, &model.marks, model.intensity.bound())?;
                    Ok(simulate_finite_system(&model, &sim, &base)?.0)
                }
            }
        })
        .collect();
    let mut csv = cfg.output.trajectories.then(|| Csv::new(TRAJECTORY_HEADER));
    let mut regime_csv = (cfg.model.name == ModelKind::RegimeSwitching).then(|| Csv::new(REGIME_HEADER));
    let mut reps = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let traj = run?;
        if let Some(csv) = csv.as_mut() {
            push_trajectories(csv, r as u64, &traj);
        }
        if let (Some(rc), Some(path)) = (regime_csv.as_mut(), traj.regime_path.as_ref()) {
            push_regime(rc, r as u64, path);
        }
        reps.push(replication_summary(r as u64, &traj)?);
    }
    let jumps: Vec<f64> = reps.iter().map(|s| s.jumps as f64).collect();
    let vars: Vec<f64> = reps.iter().map(|s| s.terminal_variance).collect();
    let summary = SimulateSummary {
        command: "simulate",
        model: cfg.model.name,
        settings: &settings,
        n,
        jumps_per_replication: Estimate::from_samples(&jumps),
        terminal_variance: Estimate::from_samples(&vars),
        replications: reps,
    };
    let mut files = Vec::new();
    if let Some(csv) = csv {
        files.push(("trajectories.csv".into(), csv.bytes().to_vec()));
    }
    if let Some(rc) = regime_csv {
        files.push(("regime.csv".into(), rc.bytes().to_vec()));
    }
    Ok(CommandOutput { files, summary: to_value(&summary), exit_code: 0, messages: Vec::new() })
}

fn study_csv(rows: &[CouplingRunResult]) -> Vec<u8> {
    let mut csv = Csv::new(STUDY_HEADER);
    for r in rows {
        csv.row(&[
            r.n.to_string(),
            r.replications.to_string(),
            fmt_f64(r.path_err_sq),
            fmt_f64(r.path_err_se),
            fmt_f64(r.w2_err_sq),
            fmt_f64(r.w2_err_se),
        ]);
    }
    csv.bytes().to_vec()
}

fn row_message(r: &CouplingRunResult) -> String {
    format!(
        "n = {:>6}  path_err_sq = {:.6e} ± {:.2e}  w2_err_sq = {:.6e} ± {:.2e}",
        r.n, r.path_err_sq, r.path_err_se, r.w2_err_sq, r.w2_err_se
    )
}

#[derive(Debug, Serialize)]
struct CoupleSummary<'a> {
    command: &'static str,
    model: ModelKind,
    settings: &'a ExperimentSettings,
    result: &'a CouplingRunResult,
}

pub fn couple(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let model = jump_model(cfg)?;
    let settings = cfg.settings();
    let result = run_synchronous_coupling(&model, cfg.sim.n, &settings)?;
    let summary = CoupleSummary { command: "couple", model: cfg.model.name, settings: &settings, result: &result };
    Ok(CommandOutput {
        files: vec![("study.csv".into(), study_csv(std::slice::from_ref(&result)))],
        summary: to_value(&summary),
        exit_code: 0,
        messages: vec![row_message(&result)],
    })
}

#[derive(Debug, Serialize)]
struct StudySummary<'a> {
    command: &'static str,
    model: ModelKind,
    settings: &'a ExperimentSettings,
    constants: DeclaredConstants,
    study: &'a ConvergenceStudy,
    envelope: &'a EnvelopeReport,
}

pub fn study(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let model = jump_model(cfg)?;
    let settings = cfg.settings();
    let study = convergence_study(&model, &cfg.sim.n_grid, &settings)?;
    let envelope = envelope_check(&study, cfg.envelope.k, cfg.envelope.eps);
    let mut messages: Vec<String> = study.rows.iter().map(row_message).collect();
    if let Some(fit) = study.slope_path {
        messages.push(format!("slope(path) = {:.4} ± {:.4}", fit.slope, fit.slope_std_err));
    }
    if let Some(fit) = study.slope_w2 {
        messages.push(format!("slope(w2)   = {:.4} ± {:.4}", fit.slope, fit.slope_std_err));
    }
    messages.push(format!("envelope (k = {}, eps = {}): all hold = {}", envelope.k, envelope.eps, envelope.all_hold()));
    let summary = StudySummary {
        command: "study",
        model: cfg.model.name,
        settings: &settings,
        constants: model.constants,
        study: &study,
        envelope: &envelope,
    };
    Ok(CommandOutput {
        files: vec![("study.csv".into(), study_csv(&study.rows))],
        summary: to_value(&summary),
        exit_code: 0,
        messages,
    })
}

fn push_regime(csv: &mut Csv, replication: u64, path: &chaosjump::integrator::RegimePath) {
    for (t, s) in path.times.iter().zip(&path.states) {
        csv.row(&[replication.to_string(), fmt_f64(*t), s.to_string()]);
    }
}

#[derive(Debug, Serialize)]
struct RegimeSummary<'a> {
    command: &'static str,
    settings: &'a ExperimentSettings,
    states: &'a [f64],
    /// Generator off-diagonals, row-major.
    generator: Vec<Vec<f64>>,
    /// Pooled `transitions(i → j) / time in i`, row-major.
    empirical_rates: Vec<Vec<f64>>,
    occupation_fraction: Vec<f64>,
    switches_per_replication: Estimate,
}

pub fn regime(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let model = regime_model(cfg)?;
    let settings = cfg.settings();
    let m = model.spec.len();
    let runs: Vec<Result<TrajectorySet, CliError>> = (0..settings.replications as u64)
        .into_par_iter()
        .map(|r| {
            let base = regime_base_field(&settings.seeds, r, settings.horizon, &model)?;
            Ok(simulate_regime_switching(&model, &settings.sim(cfg.sim.n, r), &base)?)
        })
        .collect();
    let mut csv = Csv::new(REGIME_HEADER);
    let mut traj_csv = cfg.output.trajectories.then(|| Csv::new(TRAJECTORY_HEADER));
    let mut counts = vec![0usize; m * m];
    let mut occupation = vec![0.0; m];
    let mut switches = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let traj = run?;
        let path = traj.regime_path.as_ref().expect("regime simulation records its path");
        push_regime(&mut csv, r as u64, path);
        for (c, v) in counts.iter_mut().zip(path.transition_counts(m)) {
            *c += v;
        }
        for (o, v) in occupation.iter_mut().zip(path.occupation_times(m)) {
            *o += v;
        }
        switches.push(path.switches() as f64);
        if let Some(tc) = traj_csv.as_mut() {
            push_trajectories(tc, r as u64, &traj);
        }
    }
    let total: f64 = occupation.iter().sum();
    let empirical_rates = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| if i == j || occupation[i] <= 0.0 { 0.0 } else { counts[i * m + j] as f64 / occupation[i] })
                .collect()
        })
        .collect();
    let summary = RegimeSummary {
        command: "regime",
        settings: &settings,
        states: model.spec.states(),
        generator: (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { cfg.model.rates[i][j] }).collect())
            .collect(),
        empirical_rates,
        occupation_fraction: occupation.iter().map(|o| o / total).collect(),
        switches_per_replication: Estimate::from_samples(&switches),
    };
    let mut files = vec![("regime.csv".into(), csv.bytes().to_vec())];
    if let Some(tc) = traj_csv {
        files.push(("trajectories.csv".into(), tc.bytes().to_vec()));
    }
    Ok(CommandOutput { files, summary: to_value(&summary), exit_code: 0, messages: Vec::new() })
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    command: &'static str,
    model: ModelKind,
    /// One entry per coefficient set (one per regime for regime switching).
    sets: Vec<ValidatedSet>,
    failing: Vec<String>,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct ValidatedSet {
    name: String,
    constants: DeclaredConstants,
    reports: Vec<ValidationReport>,
}

pub fn validate(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let sets: Vec<(String, CoefficientSet)> = match cfg.model.name {
        ModelKind::RegimeSwitching => {
            let model = regime_model(cfg)?;
            (0..model.spec.len())
                .map(|i| Ok((format!("regime {i}"), model.coefficients_for(i)?)))
                .collect::<Result<_, CliError>>()?
        }
        _ => {
            let set = jump_model(cfg)?;
            vec![(set.name.clone(), set)]
        }
    };
    let samples = cfg.validate.samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.common_seed);
    let mut out = Vec::new();
    let mut failing = Vec::new();
    let mut messages = Vec::new();
    for (name, set) in sets {
        let reports = vec![
            validate_lipschitz(&set, samples, &mut rng)?,
            validate_growth(&set, samples, cfg.validate.growth_form, &mut rng)?,
            validate_fourth_moment(&set, samples, &mut rng)?,
        ];
        for r in &reports {
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            messages.push(format!("{verdict} {name}: {} (max ratio {:.6})", r.check, r.max_ratio));
            if !r.pass {
                failing.push(format!("{name}: {}", r.check));
            }
        }
        out.push(ValidatedSet { name, constants: set.constants, reports });
    }
    let pass = failing.is_empty();
    let summary = ValidateSummary { command: "validate", model: cfg.model.name, sets: out, failing, pass };
    Ok(CommandOutput { files: Vec::new(), summary: to_value(&summary), exit_code: if pass { 0 } else { 1 }, messages })
}
