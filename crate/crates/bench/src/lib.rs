//! Fixtures shared by the solver benchmarks.

use ucn_precode::baselines::rzf_init;
use ucn_precode::harness::{Instance, ScenarioConfig};
use ucn_precode::BlockVector;

/// Desk scenario instance for `seed` at 24 dBm with its RZF starting point.
pub fn desk_instance(seed: u64) -> (ScenarioConfig, Instance, BlockVector) {
    let cfg = ScenarioConfig::default();
    let inst = Instance::build(&cfg, seed, 24.0).expect("desk scenario builds");
    let init = rzf_init(&inst.objective, &inst.rho, None).expect("rzf init");
    (cfg, inst, init)
}
