//! Analytic gradient against central finite differences on small seeded
//! instances (3 BSs, 4 antennas, 5 UTs, clusters of 2).

use super::config::ScenarioConfig;
use super::experiment::Instance;
use crate::baselines::random_init;
use crate::objective::relative_error;
use crate::{Error, Result};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-6;

/// The small instance family used by the check.
pub fn gradcheck_scenario() -> ScenarioConfig {
    ScenarioConfig {
        gnb_count: 3,
        sectors_per_gnb: 1,
        antennas: 4,
        users: 5,
        cluster_size: 2,
        ..ScenarioConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Relative L2 error per trial, in seed order.
    pub errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Trial `s` builds the instance for seed `s` at 24 dBm and evaluates both
/// gradients at a random feasible precoder.
pub fn gradient_check(trials: usize, eps: f64) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "gradcheck needs at least one trial".into(),
        ));
    }
    let cfg = gradcheck_scenario();
    let errors = (0..trials as u64)
        .map(|seed| {
            let inst = Instance::build(&cfg, seed, 24.0)?;
            let p = random_init(inst.objective.layout().clone(), &inst.rho, seed)?;
            let analytic = inst.objective.gradient(&p)?;
            let fd = inst.objective.fd_gradient(&p, eps)?;
            Ok(relative_error(analytic.as_slice(), fd.as_slice()))
        })
        .collect::<Result<_>>()?;
    Ok(GradCheckReport { errors })
}
