//! Propagation-of-chaos experiments: synchronous coupling against a reference
//! population, tests of conditional exchangeability and independence, and
//! the nonlinear Gronwall envelope.

pub mod coupling;
pub mod gronwall;
pub mod independence;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::SimConfig;
use crate::noise::SeedSpec;
use crate::wasserstein::DEFAULT_EXACT_CAP;

pub use coupling::{convergence_study, run_synchronous_coupling, ConvergenceStudy, CouplingRunResult, RowContrast};
pub use gronwall::{envelope_check, gronwall_envelope, gronwall_g, gronwall_g_inv, EnvelopeReport, EnvelopeRow};
pub use independence::{
    test_conditional_independence, test_exchangeability, ExchangeabilityReport, IndependenceReport,
};

/// Time discretisation, seeds and sample sizes shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub horizon: f64,
    pub dt: f64,
    pub noise_dt: Option<f64>,
    pub seeds: SeedSpec,
    /// Reference population size.
    pub n_ref: usize,
    /// Replications (common-noise draws).
    pub replications: usize,
    /// Coupled index set `I = {0, ..., m-1}`; all particles when unset.
    pub coupled: Option<usize>,
    /// Also compare the reference with an independent half-size reference.
    pub proxy_sensitivity: bool,
    pub exact_cap: usize,
}

impl ExperimentSettings {
    /// `dt = T / 1000`, `N_ref = 2048`, `R = 64`.
    pub fn new(horizon: f64, seeds: SeedSpec) -> Self {
        ExperimentSettings {
            horizon,
            dt: horizon / 1000.0,
            noise_dt: None,
            seeds,
            n_ref: 2048,
            replications: 64,
            coupled: None,
            proxy_sensitivity: false,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }

    pub fn sim(&self, n: usize, replication: u64) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            dt: self.dt,
            noise_dt: self.noise_dt,
            n,
            replication,
            seeds: self.seeds,
            particle_offset: 0,
            bias: None,
        }
    }

    pub(crate) fn check_replications(&self, min: usize) -> Result<()> {
        if self.replications < min {
            return Err(Error::config(format!("at least {min} replications required, got {}", self.replications)));
        }
        Ok(())
    }
}
