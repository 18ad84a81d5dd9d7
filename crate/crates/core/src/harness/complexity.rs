//! Multiply-add counts per gradient evaluation against the analytic model
//! `K M_t sum_k |B_k|^2 + M_t (K - 1) sum_t |B_t|`.

use std::fmt::Write as _;

use super::config::ScenarioConfig;
use super::experiment::Instance;
use crate::baselines::rzf_init;
use crate::channel::ClusterMap;
use crate::Result;

pub const PROBE_ANTENNAS: [usize; 3] = [4, 8, 16];
pub const PROBE_USERS: [usize; 3] = [5, 10, 20];
pub const PROBE_CLUSTERS: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub antennas: usize,
    pub users: usize,
    pub cluster_size: usize,
    pub measured: u64,
    pub interference: u64,
    pub predicted: f64,
}

impl ProbeRow {
    pub fn ratio(&self) -> f64 {
        self.measured as f64 / self.predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub rows: Vec<ProbeRow>,
}

impl ComplexityReport {
    /// Largest `max(ratio, 1 / ratio)` over the grid.
    pub fn max_factor(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ratio().max(1.0 / r.ratio()))
            .fold(1.0, f64::max)
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(ProbeRow::ratio)
            .fold(f64::MIN, f64::max)
    }

    pub fn min_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(ProbeRow::ratio)
            .fold(f64::MAX, f64::min)
    }

    pub fn row(&self, antennas: usize, users: usize, cluster_size: usize) -> Option<&ProbeRow> {
        self.rows
            .iter()
            .find(|r| r.antennas == antennas && r.users == users && r.cluster_size == cluster_size)
    }

    /// Largest relative deviation from exact doubling when `M_t` doubles.
    pub fn antenna_linearity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            if let Some(d) = self.row(2 * r.antennas, r.users, r.cluster_size) {
                worst = worst.max((d.measured as f64 / r.measured as f64 / 2.0 - 1.0).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("M_t,K,B_sc,measured,interference,predicted,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.6}",
                r.antennas,
                r.users,
                r.cluster_size,
                r.measured,
                r.interference,
                r.predicted,
                r.ratio()
            );
        }
        s
    }
}

/// The analytic per-gradient count for a cluster map.
pub fn predicted_multiply_adds(clusters: &ClusterMap, antennas: usize) -> f64 {
    let k = clusters.num_ut() as f64;
    let m = antennas as f64;
    let sizes = (0..clusters.num_ut()).map(|t| clusters.serving_bs(t).len() as f64);
    let (sum, sum_sq) = sizes.fold((0.0, 0.0), |(s, q), b| (s + b, q + b * b));
    k * m * sum_sq + m * (k - 1.0) * sum
}

/// Evaluates one gradient per grid point (first configured seed and power)
/// and records the counted multiply-adds.
pub fn complexity_probe(cfg: &ScenarioConfig) -> Result<ComplexityReport> {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let power = cfg.tx_power_dbm.first().copied().unwrap_or(24.0);
    let mut rows = Vec::new();
    for &antennas in &PROBE_ANTENNAS {
        for &users in &PROBE_USERS {
            for &cluster_size in &PROBE_CLUSTERS {
                let point = ScenarioConfig {
                    antennas,
                    users,
                    cluster_size: cluster_size.min(cfg.num_bs()),
                    weights: None,
                    ..cfg.clone()
                };
                let inst = Instance::build(&point, seed, power)?;
                let p = rzf_init(&inst.objective, &inst.rho, None)?;
                let counter = inst.objective.counter();
                counter.reset();
                inst.objective.gradient(&p)?;
                let ops = counter.snapshot();
                rows.push(ProbeRow {
                    antennas,
                    users,
                    cluster_size: point.cluster_size,
                    measured: ops.multiply_adds,
                    interference: ops.interference_multiply_adds,
                    predicted: predicted_multiply_adds(inst.objective.clusters(), antennas),
                });
            }
        }
    }
    Ok(ComplexityReport { rows })
}
