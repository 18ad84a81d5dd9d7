//! Flat `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored and
//! unknown keys are rejected. Every key is optional; an empty file gives the
//! desk scenario of [`ScenarioConfig::default`].
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `gnb_count` | 7 | gNB sites on the hex grid |
//! | `sectors_per_gnb` | 1 | co-located sector BSs per site |
//! | `M_t` | 16 | antennas per BS |
//! | `K` | 20 | UTs |
//! | `B_sc` | 3 | serving cluster size per UT |
//! | `deployment_radius_m` | 500 | UT drop disk radius |
//! | `isd_m` | auto | inter-site distance; auto fits the rings in the disk |
//! | `bs_height_m` / `ut_height_m` | 25 / 1.5 | antenna heights |
//! | `carrier_freq_hz` | 6.7e9 | carrier |
//! | `noise_dbm` | -104 | receiver noise power |
//! | `tx_power_dbm` | 24 | per-BS power; a comma list sweeps several |
//! | `weights` | uniform | `uniform` or K comma-separated positive values |
//! | `pathloss_exponent` | 3 | distance exponent |
//! | `pl0_db` | free space | pathloss at 1 m |
//! | `sector_beamwidth_deg` / `sector_backlobe_db` | 65 / 30 | sector pattern |
//! | `seeds` | `0..5` | comma list and/or half-open ranges `a..b` |
//! | `init` | rzf | `rzf` or `random` |
//! | `gamma`, `h0`, `r_ctrl`, `theta`, `h_min`, `h_max` | 8, 0.006, 1, 0.5, 1e-5, 0.006 | symplectic solver, see [`SolverConfig`] |
//! | `max_iters`, `rel_tol`, `window` | 200, 1e-5, 3 | iteration budget and stopping rule, all iterative solvers |
//! | `project_positions` | true | renormalize positions after each drift |
//! | `alpha0`, `backtrack`, `c1`, `max_backtracks` | 1, 0.5, 1e-4, 40 | Armijo search (GD/NAGD) |
//! | `warm_start` | true | start each search from the previous step (GD/NAGD) |
//! | `nagd_momentum` | 0.9 | NAGD extrapolation factor |
//! | `bisect_tol` | 1e-12 | WMMSE bisection tolerance (relative power) |

use std::path::Path;

use crate::baselines::{LineSearchConfig, StopRule};
use crate::channel::ChannelModel;
use crate::symplectic::SolverConfig;
use crate::{Error, Result};

/// How iterative solvers are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Rzf,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub gnb_count: usize,
    pub sectors_per_gnb: usize,
    /// `M_t`.
    pub antennas: usize,
    /// `K`.
    pub users: usize,
    /// `B_sc`.
    pub cluster_size: usize,
    pub deployment_radius_m: f64,
    pub isd_m: Option<f64>,
    pub bs_height_m: f64,
    pub ut_height_m: f64,
    pub carrier_freq_hz: f64,
    pub noise_dbm: f64,
    pub tx_power_dbm: Vec<f64>,
    /// `None` means every weight is 1.
    pub weights: Option<Vec<f64>>,
    pub pathloss_exponent: f64,
    pub pl0_db: Option<f64>,
    pub sector_beamwidth_deg: f64,
    pub sector_backlobe_db: f64,
    pub seeds: Vec<u64>,
    pub init: InitKind,
    pub solver: SolverConfig,
    pub line_search: LineSearchConfig,
    pub nagd_momentum: f64,
    pub bisect_tol: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            gnb_count: 7,
            sectors_per_gnb: 1,
            antennas: 16,
            users: 20,
            cluster_size: 3,
            deployment_radius_m: 500.0,
            isd_m: None,
            bs_height_m: 25.0,
            ut_height_m: 1.5,
            carrier_freq_hz: 6.7e9,
            noise_dbm: -104.0,
            tx_power_dbm: vec![24.0],
            weights: None,
            pathloss_exponent: 3.0,
            pl0_db: None,
            sector_beamwidth_deg: 65.0,
            sector_backlobe_db: 30.0,
            seeds: (0..5).collect(),
            init: InitKind::Rzf,
            solver: SolverConfig::default(),
            line_search: LineSearchConfig::default(),
            nagd_momentum: 0.9,
            bisect_tol: 1e-12,
        }
    }
}

impl ScenarioConfig {
    /// Number of BSs, `gnb_count * sectors_per_gnb`.
    pub fn num_bs(&self) -> usize {
        self.gnb_count * self.sectors_per_gnb
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            pl0_db: self.pl0_db,
            exponent: self.pathloss_exponent,
            sector_beamwidth_deg: self.sector_beamwidth_deg,
            sector_backlobe_db: self.sector_backlobe_db,
            noise_dbm: self.noise_dbm,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iters: self.solver.max_iters,
            rel_tol: self.solver.rel_tol,
            window: self.solver.window,
        }
    }

    /// Checks cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, value: String, reason: &str| {
            Err(Error::ConfigRange {
                key: key.into(),
                value,
                reason: reason.into(),
            })
        };
        for (key, v) in [
            ("gnb_count", self.gnb_count),
            ("sectors_per_gnb", self.sectors_per_gnb),
            ("M_t", self.antennas),
            ("K", self.users),
            ("B_sc", self.cluster_size),
        ] {
            if v == 0 {
                return range(key, v.to_string(), "must be positive");
            }
        }
        if self.cluster_size > self.num_bs() {
            return range(
                "B_sc",
                self.cluster_size.to_string(),
                &format!("exceeds the {} BSs of the scenario", self.num_bs()),
            );
        }
        if let Some(w) = &self.weights {
            if w.len() != self.users {
                return range(
                    "weights",
                    format!("{} entries", w.len()),
                    &format!("need K = {}", self.users),
                );
            }
        }
        if self.tx_power_dbm.is_empty() {
            return range("tx_power_dbm", String::new(), "needs at least one value");
        }
        if self.seeds.is_empty() {
            return range("seeds", String::new(), "needs at least one seed");
        }
        self.solver.validate().map_err(|e| Error::ConfigRange {
            key: "solver".into(),
            value: String::new(),
            reason: e.to_string(),
        })?;
        self.line_search.validate().map_err(|e| Error::ConfigRange {
            key: "line_search".into(),
            value: String::new(),
            reason: e.to_string(),
        })
    }

    /// Parses configuration text; see the module docs for keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let s = &mut self.solver;
        let ls = &mut self.line_search;
        match key {
            "gnb_count" => self.gnb_count = count(key, value, line)?,
            "sectors_per_gnb" => self.sectors_per_gnb = count(key, value, line)?,
            "M_t" => self.antennas = count(key, value, line)?,
            "K" => self.users = count(key, value, line)?,
            "B_sc" => self.cluster_size = count(key, value, line)?,
            "deployment_radius_m" => self.deployment_radius_m = positive(key, value, line)?,
            "isd_m" => {
                self.isd_m = if value == "auto" {
                    None
                } else {
                    Some(positive(key, value, line)?)
                }
            }
            "bs_height_m" => self.bs_height_m = nonneg(key, value, line)?,
            "ut_height_m" => self.ut_height_m = nonneg(key, value, line)?,
            "carrier_freq_hz" => self.carrier_freq_hz = positive(key, value, line)?,
            "noise_dbm" => self.noise_dbm = real(value, line)?,
            "tx_power_dbm" => {
                self.tx_power_dbm = value
                    .split(',')
                    .map(|v| real(v.trim(), line))
                    .collect::<Result<_>>()?
            }
            "weights" => {
                self.weights = if value == "uniform" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|v| positive(key, v.trim(), line))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "pathloss_exponent" => self.pathloss_exponent = positive(key, value, line)?,
            "pl0_db" => {
                self.pl0_db = if value == "auto" {
                    None
                } else {
                    Some(real(value, line)?)
                }
            }
            "sector_beamwidth_deg" => self.sector_beamwidth_deg = positive(key, value, line)?,
            "sector_backlobe_db" => self.sector_backlobe_db = nonneg(key, value, line)?,
            "seeds" => self.seeds = seeds(value, line)?,
            "init" => {
                self.init = match value {
                    "rzf" => InitKind::Rzf,
                    "random" => InitKind::Random,
                    other => {
                        return Err(Error::ConfigRange {
                            key: key.into(),
                            value: other.into(),
                            reason: "expected `rzf` or `random`".into(),
                        })
                    }
                }
            }
            "gamma" => s.gamma = positive(key, value, line)?,
            "h0" => s.h0 = positive(key, value, line)?,
            "r_ctrl" => s.r_ctrl = positive(key, value, line)?,
            "theta" => s.theta = nonneg(key, value, line)?,
            "h_min" => s.h_min = positive(key, value, line)?,
            "h_max" => s.h_max = positive(key, value, line)?,
            "max_iters" => s.max_iters = count(key, value, line)?,
            "rel_tol" => s.rel_tol = positive(key, value, line)?,
            "window" => s.window = count(key, value, line)?,
            "project_positions" => s.project_positions = boolean(value, line)?,
            "alpha0" => ls.alpha0 = positive(key, value, line)?,
            "backtrack" => ls.backtrack = open_unit(key, value, line)?,
            "c1" => ls.c1 = open_unit(key, value, line)?,
            "max_backtracks" => ls.max_backtracks = parse(value, line)?,
            "warm_start" => ls.warm_start = boolean(value, line)?,
            "nagd_momentum" => {
                let v = real(value, line)?;
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::ConfigRange {
                        key: key.into(),
                        value: value.into(),
                        reason: "must lie in [0, 1)".into(),
                    });
                }
                self.nagd_momentum = v;
            }
            "bisect_tol" => self.bisect_tol = positive(key, value, line)?,
            other => {
                return Err(Error::ConfigParse {
                    line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::parse(&std::fs::read_to_string(path)?)
}

fn parse<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::ConfigParse {
        line,
        message: format!("cannot parse `{value}`"),
    })
}

fn real(value: &str, line: usize) -> Result<f64> {
    let v: f64 = parse(value, line)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ConfigParse {
            line,
            message: format!("`{value}` is not finite"),
        })
    }
}

fn checked(
    key: &str,
    value: &str,
    line: usize,
    ok: impl Fn(f64) -> bool,
    reason: &str,
) -> Result<f64> {
    let v = real(value, line)?;
    if ok(v) {
        Ok(v)
    } else {
        Err(Error::ConfigRange {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        })
    }
}

fn positive(key: &str, value: &str, line: usize) -> Result<f64> {
    checked(key, value, line, |v| v > 0.0, "must be > 0")
}

fn nonneg(key: &str, value: &str, line: usize) -> Result<f64> {
    checked(key, value, line, |v| v >= 0.0, "must be >= 0")
}

fn open_unit(key: &str, value: &str, line: usize) -> Result<f64> {
    checked(
        key,
        value,
        line,
        |v| v > 0.0 && v < 1.0,
        "must lie in (0, 1)",
    )
}

fn count(key: &str, value: &str, line: usize) -> Result<usize> {
    let v: usize = parse(value, line)?;
    if v == 0 {
        return Err(Error::ConfigRange {
            key: key.into(),
            value: value.into(),
            reason: "must be positive".into(),
        });
    }
    Ok(v)
}

fn boolean(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::ConfigParse {
            line,
            message: format!("expected a boolean, got `{value}`"),
        }),
    }
}

fn seeds(value: &str, line: usize) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (parse(a.trim(), line)?, parse(b.trim(), line)?);
            if b <= a {
                return Err(Error::ConfigParse {
                    line,
                    message: format!("empty seed range `{part}`"),
                });
            }
            out.extend(a..b);
        } else {
            out.push(parse(part, line)?);
        }
    }
    Ok(out)
}
