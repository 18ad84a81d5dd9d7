//! Seeded batch runs over solvers, with CSV traces and summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{InitKind, ScenarioConfig};
use crate::baselines::{
    gd_solve, nagd_solve, random_init, rzf_init, wmmse_iterate, BaselineRecord,
};
use crate::channel::{
    build_clusters, compute_rsrp, dbm_to_watts, generate_channels, generate_topology, ChannelSet,
};
use crate::embedding::{BlockVector, PowerBudget};
use crate::objective::{OpCounts, Weights, WsrObjective};
use crate::symplectic::{self, SymplecticStepRecord};
use crate::{Error, Result};

/// Seed offset that separates random initial points from channel draws.
const INIT_SEED_OFFSET: u64 = 0x5eed_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Symplectic,
    Wmmse,
    Rzf,
    Gd,
    Nagd,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        Self::Symplectic,
        Self::Wmmse,
        Self::Rzf,
        Self::Gd,
        Self::Nagd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Symplectic => "symplectic",
            Self::Wmmse => "wmmse",
            Self::Rzf => "rzf",
            Self::Gd => "gd",
            Self::Nagd => "nagd",
        }
    }

    /// Parses a comma-separated list, keeping order and dropping repeats.
    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: Self = name.parse()?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        if out.is_empty() {
            return Err(Error::UnknownSolver(list.into()));
        }
        Ok(out)
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownSolver(s.into()))
    }
}

/// One channel realization with its clusters and objective.
#[derive(Debug)]
pub struct Instance {
    pub channels: ChannelSet,
    pub objective: WsrObjective,
    pub rho: PowerBudget,
}

impl Instance {
    /// Draws topology, channels and clusters for `seed` at one transmit power.
    pub fn build(cfg: &ScenarioConfig, seed: u64, tx_power_dbm: f64) -> Result<Self> {
        let topo = generate_topology(cfg, seed)?;
        let channels = generate_channels(&topo, &cfg.channel_model(), seed)?;
        let clusters = build_clusters(&compute_rsrp(&channels)?, cfg.cluster_size)?;
        let weights = match &cfg.weights {
            Some(w) => Weights::new(w.clone())?,
            None => Weights::uniform(cfg.users),
        };
        let objective = WsrObjective::new(&channels, clusters, weights)?;
        let rho = PowerBudget::uniform(channels.num_bs(), dbm_to_watts(tx_power_dbm))?;
        Ok(Self {
            channels,
            objective,
            rho,
        })
    }

    /// Initial precoder per the configured convention.
    pub fn init(&self, cfg: &ScenarioConfig, seed: u64) -> Result<BlockVector> {
        match cfg.init {
            InitKind::Rzf => rzf_init(&self.objective, &self.rho, None),
            InitKind::Random => random_init(
                self.objective.layout().clone(),
                &self.rho,
                seed.wrapping_add(INIT_SEED_OFFSET),
            ),
        }
    }
}

/// Per-iteration trace of any solver.
#[derive(Debug, Clone)]
pub enum Trace {
    Symplectic(Vec<SymplecticStepRecord>),
    Baseline(Vec<BaselineRecord>),
}

/// Outcome of one (solver, power, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub precoder: BlockVector,
    pub final_wsr_bits: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Trace>,
    pub ops: OpCounts,
}

/// Runs one solver on an instance from `init`; the objective's operation
/// counter is reset first.
pub fn run_solver(
    kind: SolverKind,
    inst: &Instance,
    init: &BlockVector,
    cfg: &ScenarioConfig,
) -> Result<RunOutcome> {
    let obj = &inst.objective;
    obj.counter().reset();
    let (precoder, wsr, iterations, converged, trace) = match kind {
        SolverKind::Symplectic => {
            let r = symplectic::solve(obj, &inst.rho, init, &cfg.solver)?;
            (
                r.precoder,
                r.best_wsr_bits,
                r.iterations,
                r.converged,
                Some(Trace::Symplectic(r.trace)),
            )
        }
        SolverKind::Wmmse => {
            let r =
                wmmse_iterate(obj, &inst.rho, init, cfg.solver.max_iters, cfg.bisect_tol)?.solve;
            (
                r.precoder,
                r.best_wsr_bits,
                r.iterations,
                r.converged,
                Some(Trace::Baseline(r.trace)),
            )
        }
        SolverKind::Gd | SolverKind::Nagd => {
            let mu = if kind == SolverKind::Gd {
                0.0
            } else {
                cfg.nagd_momentum
            };
            let r = if mu == 0.0 {
                gd_solve(obj, &inst.rho, init, &cfg.line_search, &cfg.stop_rule())?
            } else {
                nagd_solve(obj, &inst.rho, init, mu, &cfg.line_search, &cfg.stop_rule())?
            };
            (
                r.precoder,
                r.best_wsr_bits,
                r.iterations,
                r.converged,
                Some(Trace::Baseline(r.trace)),
            )
        }
        SolverKind::Rzf => {
            let p = rzf_init(obj, &inst.rho, None)?;
            let w = obj.wsr(&p)?;
            (p, w, 0, true, None)
        }
    };
    Ok(RunOutcome {
        precoder,
        final_wsr_bits: wsr,
        iterations,
        converged,
        trace,
        ops: obj.counter().snapshot(),
    })
}

/// One summary row; `error` is set when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: SolverKind,
    pub tx_power_dbm: f64,
    pub seed: u64,
    pub final_wsr_bits: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_evals: u64,
    pub multiply_adds: u64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    /// Deterministic CSV (no wall times).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "solver,tx_power_dbm,seed,status,final_wsr_bits,iterations,converged,gradient_evals,multiply_adds,error\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.solver.name(),
                r.tx_power_dbm,
                r.seed,
                if r.error.is_some() { "failed" } else { "ok" },
                r.final_wsr_bits
                    .map(|w| format!("{w:.12e}"))
                    .unwrap_or_default(),
                r.iterations,
                r.converged,
                r.gradient_evals,
                r.multiply_adds,
                r.error.as_deref().map(csv_field).unwrap_or_default(),
            );
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("solver,tx_power_dbm,seed,wall_time_s\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6}",
                r.solver.name(),
                r.tx_power_dbm,
                r.seed,
                r.wall_time_s
            );
        }
        s
    }

    /// Final WSRs of one solver at one power, in seed order; failed runs are skipped.
    pub fn final_wsr(&self, solver: SolverKind, tx_power_dbm: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.solver == solver && r.tx_power_dbm == tx_power_dbm)
            .filter_map(|r| r.final_wsr_bits)
            .collect()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Trace CSV with columns `iter, wsr_bits, hamiltonian, h_used, delta,
/// constraint_residual, hidden_residual, lambda_min, lambda_max`; values a
/// solver does not produce are left empty. Row 0 is the initial point.
pub fn trace_csv(initial_wsr_bits: f64, trace: &Trace) -> String {
    let mut s = String::from(
        "iter,wsr_bits,hamiltonian,h_used,delta,constraint_residual,hidden_residual,lambda_min,lambda_max\n",
    );
    let _ = writeln!(s, "0,{initial_wsr_bits:.12e},,,,,,,");
    match trace {
        Trace::Symplectic(recs) => {
            for (i, r) in recs.iter().enumerate() {
                let lmin = r.lambda.iter().cloned().reduce(f64::min);
                let lmax = r.lambda.iter().cloned().reduce(f64::max);
                let _ = writeln!(
                    s,
                    "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{},{}",
                    i + 1,
                    r.wsr_bits,
                    r.hamiltonian,
                    r.h_used,
                    r.delta,
                    r.constraint_residual,
                    r.hidden_residual,
                    opt(lmin),
                    opt(lmax)
                );
            }
        }
        Trace::Baseline(recs) => {
            for (i, r) in recs.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{:.12e},,{},,{:.6e},,{},{}",
                    i + 1,
                    r.wsr_bits,
                    opt(r.step),
                    r.constraint_residual,
                    opt(r.lambda_min),
                    opt(r.lambda_max)
                );
            }
        }
    }
    s
}

fn trace_path(out_dir: &Path, solver: SolverKind, tx_power_dbm: f64, seed: u64) -> PathBuf {
    out_dir.join(format!(
        "trace_{}_p{}_s{}.csv",
        solver.name(),
        tx_power_dbm,
        seed
    ))
}

fn failed(solver: SolverKind, tx_power_dbm: f64, seed: u64, err: &Error, wall: f64) -> SummaryRow {
    SummaryRow {
        solver,
        tx_power_dbm,
        seed,
        final_wsr_bits: None,
        iterations: 0,
        converged: false,
        gradient_evals: 0,
        multiply_adds: 0,
        wall_time_s: wall,
        error: Some(format!("{}: {}", err.kind(), err)),
    }
}

/// Runs every requested solver for every (power, seed) in the config and
/// writes `summary.csv`, `timing.csv` and one trace CSV per iterative run
/// into `out_dir`. Seeds run in parallel; each run is sequential. A failing
/// run is recorded in its row and the batch continues.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    solvers: &[SolverKind],
    out_dir: &Path,
) -> Result<RunSummary> {
    cfg.validate()?;
    if solvers.is_empty() {
        return Err(Error::InvalidArgument("no solvers requested".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let jobs: Vec<(f64, u64)> = cfg
        .tx_power_dbm
        .iter()
        .flat_map(|&p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();

    let per_job: Vec<Result<Vec<SummaryRow>>> = jobs
        .par_iter()
        .map(|&(power, seed)| -> Result<Vec<SummaryRow>> {
            let setup = Instance::build(cfg, seed, power).and_then(|inst| {
                let init = inst.init(cfg, seed)?;
                Ok((inst, init))
            });
            let (inst, init) = match setup {
                Ok(v) => v,
                Err(e) => {
                    return Ok(solvers
                        .iter()
                        .map(|&s| failed(s, power, seed, &e, 0.0))
                        .collect())
                }
            };
            let mut rows = Vec::with_capacity(solvers.len());
            for &solver in solvers {
                let start = Instant::now();
                let outcome = run_solver(solver, &inst, &init, cfg);
                let wall = start.elapsed().as_secs_f64();
                match outcome {
                    Ok(o) => {
                        if let Some(trace) = &o.trace {
                            let initial = inst.objective.wsr(&init)?;
                            std::fs::write(
                                trace_path(out_dir, solver, power, seed),
                                trace_csv(initial, trace),
                            )?;
                        }
                        rows.push(SummaryRow {
                            solver,
                            tx_power_dbm: power,
                            seed,
                            final_wsr_bits: Some(o.final_wsr_bits),
                            iterations: o.iterations,
                            converged: o.converged,
                            gradient_evals: o.ops.gradient_evals,
                            multiply_adds: o.ops.multiply_adds,
                            wall_time_s: wall,
                            error: None,
                        });
                    }
                    Err(e) => rows.push(failed(solver, power, seed, &e, wall)),
                }
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len() * solvers.len());
    for job in per_job {
        rows.extend(job?);
    }
    let summary = RunSummary { rows };
    std::fs::write(out_dir.join("summary.csv"), summary.to_csv())?;
    std::fs::write(out_dir.join("timing.csv"), summary.timing_csv())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            gnb_count: 3,
            antennas: 4,
            users: 5,
            cluster_size: 2,
            seeds: vec![0, 1],
            solver: symplectic::SolverConfig {
                max_iters: 15,
                ..Default::default()
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert_eq!(
            SolverKind::parse_list("rzf, wmmse,rzf").unwrap(),
            vec![SolverKind::Rzf, SolverKind::Wmmse]
        );
        assert!(matches!(
            SolverKind::parse_list("adam"),
            Err(Error::UnknownSolver(_))
        ));
    }

    #[test]
    fn rzf_only_run_has_no_traces() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&small(), &[SolverKind::Rzf], dir.path()).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s
            .rows
            .iter()
            .all(|r| r.iterations == 0 && r.final_wsr_bits.is_some()));
        let files: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(files.iter().all(|f| !f.starts_with("trace_")));
    }

    #[test]
    fn trace_csv_has_schema_and_blank_columns() {
        let rec = BaselineRecord {
            wsr_bits: 1.0,
            best_wsr_bits: 1.0,
            step: None,
            lambda_min: Some(0.5),
            lambda_max: Some(2.0),
            constraint_residual: 0.0,
            max_power_ratio: 1.0,
        };
        let csv = trace_csv(0.5, &Trace::Baseline(vec![rec]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        for l in &lines {
            assert_eq!(l.split(',').count(), 9);
        }
        assert!(lines[2].starts_with("1,"));
    }
}
