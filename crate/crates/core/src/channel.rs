//! Synthetic network topologies, flat-fading channels, RSRP and user-centric
//! serving clusters.
//!
//! The channel between BS `l` and UT `k` is `h = sqrt(g) * c`, where `c` has
//! i.i.d. CN(0, 1) entries and `g` is a linear path gain from a log-distance
//! law plus a parabolic sector pattern:
//!
//! ```text
//! PL [dB] = PL0 + 10 n log10(d_3d / 1 m) + min(12 (phi / phi_3db)^2, A_max)
//! PL0     = 32.4 + 20 log10(f / 1 GHz)   (unless overridden)
//! ```

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::harness::ScenarioConfig;
use crate::{Error, Result, C64};

const TOPOLOGY_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;

/// Positions and array parameters of every BS and UT in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub bs_positions: Vec<[f64; 2]>,
    /// Sector boresight azimuth per BS, radians.
    pub bs_orientations: Vec<f64>,
    /// `false` for omnidirectional sites (one sector per gNB).
    pub sectorized: bool,
    pub ut_positions: Vec<[f64; 2]>,
    pub bs_height: f64,
    pub ut_height: f64,
    /// Antennas per BS.
    pub antennas: usize,
    pub carrier_freq_hz: f64,
    pub deployment_radius: f64,
}

impl Topology {
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn num_ut(&self) -> usize {
        self.ut_positions.len()
    }

    /// 3-D distance between BS `l` and UT `k`.
    pub fn distance_3d(&self, l: usize, k: usize) -> f64 {
        let [bx, by] = self.bs_positions[l];
        let [ux, uy] = self.ut_positions[k];
        let dz = self.bs_height - self.ut_height;
        ((ux - bx).powi(2) + (uy - by).powi(2) + dz * dz).sqrt()
    }

    /// Azimuth offset of UT `k` from the boresight of BS `l`, wrapped to [0, pi].
    pub fn off_boresight(&self, l: usize, k: usize) -> f64 {
        let [bx, by] = self.bs_positions[l];
        let [ux, uy] = self.ut_positions[k];
        let az = (uy - by).atan2(ux - bx);
        let mut diff = (az - self.bs_orientations[l]).rem_euclid(2.0 * PI);
        if diff > PI {
            diff = 2.0 * PI - diff;
        }
        diff
    }
}

/// Large-scale propagation constants and receiver noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Pathloss at 1 m in dB; `None` uses the free-space value at the carrier.
    pub pl0_db: Option<f64>,
    pub exponent: f64,
    /// Half-power beamwidth of the sector pattern, degrees.
    pub sector_beamwidth_deg: f64,
    /// Maximum sector attenuation (backlobe floor), dB.
    pub sector_backlobe_db: f64,
    pub noise_dbm: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            pl0_db: None,
            exponent: 3.0,
            sector_beamwidth_deg: 65.0,
            sector_backlobe_db: 30.0,
            noise_dbm: -104.0,
        }
    }
}

impl ChannelModel {
    pub fn pl0(&self, carrier_freq_hz: f64) -> f64 {
        self.pl0_db
            .unwrap_or_else(|| 32.4 + 20.0 * (carrier_freq_hz / 1e9).log10())
    }

    /// Pathloss in dB at a 3-D distance with the given off-boresight angle.
    /// `off_boresight = None` means an omnidirectional element.
    pub fn pathloss_db(&self, carrier_freq_hz: f64, d3d: f64, off_boresight: Option<f64>) -> f64 {
        let sector = off_boresight
            .map(|phi| {
                let ratio = phi.to_degrees() / self.sector_beamwidth_deg;
                (12.0 * ratio * ratio).min(self.sector_backlobe_db)
            })
            .unwrap_or(0.0);
        self.pl0(carrier_freq_hz) + 10.0 * self.exponent * d3d.log10() + sector
    }

    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Linear path gain between BS `l` and UT `k`.
    pub fn path_gain(&self, topo: &Topology, l: usize, k: usize) -> Result<f64> {
        let d = topo.distance_3d(l, k);
        if d <= 0.0 {
            return Err(Error::CoincidentNodes { bs: l, ut: k });
        }
        let phi = topo.sectorized.then(|| topo.off_boresight(l, k));
        Ok(10f64.powf(-self.pathloss_db(topo.carrier_freq_hz, d, phi) / 10.0))
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Axial hex-grid sites in spiral order (center, ring 1, ring 2, ...).
fn hex_sites(count: usize, isd: f64) -> Vec<[f64; 2]> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut sites = vec![[0.0, 0.0]];
    let mut ring = 1i64;
    while sites.len() < count {
        let (mut q, mut r) = (-ring, ring);
        for &(dq, dr) in &DIRS {
            for _ in 0..ring {
                let x = isd * (q as f64 + r as f64 / 2.0);
                let y = isd * (3f64.sqrt() / 2.0 * r as f64);
                sites.push([x, y]);
                q += dq;
                r += dr;
            }
        }
        ring += 1;
    }
    sites.truncate(count);
    sites
}

/// Number of hex rings needed to place `count` sites around a center site.
fn rings_for(count: usize) -> usize {
    let mut n = 0;
    while 1 + 3 * n * (n + 1) < count {
        n += 1;
    }
    n
}

/// Places gNB sites on a hexagonal grid (`sectors_per_gnb` co-located BSs
/// per site at equal azimuth offsets) and drops UTs uniformly in the disk.
pub fn generate_topology(scenario: &ScenarioConfig, seed: u64) -> Result<Topology> {
    if scenario.gnb_count == 0 || scenario.sectors_per_gnb == 0 {
        return Err(Error::Scenario("B = 0: no base stations".into()));
    }
    if scenario.users == 0 {
        return Err(Error::Scenario("K = 0: no user terminals".into()));
    }
    if !(scenario.deployment_radius_m > 0.0) {
        return Err(Error::Scenario(format!(
            "deployment radius must be positive, got {}",
            scenario.deployment_radius_m
        )));
    }
    if scenario.antennas == 0 {
        return Err(Error::Scenario("M_t = 0".into()));
    }

    let radius = scenario.deployment_radius_m;
    let isd = scenario
        .isd_m
        .unwrap_or_else(|| 2.0 * radius / (2 * rings_for(scenario.gnb_count) + 1) as f64);
    let sites = hex_sites(scenario.gnb_count, isd);

    let sectors = scenario.sectors_per_gnb;
    let mut bs_positions = Vec::with_capacity(sites.len() * sectors);
    let mut bs_orientations = Vec::with_capacity(sites.len() * sectors);
    for site in &sites {
        for s in 0..sectors {
            bs_positions.push(*site);
            bs_orientations.push(2.0 * PI * s as f64 / sectors as f64);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOPOLOGY_STREAM);
    let ut_positions = (0..scenario.users)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let theta = 2.0 * PI * rng.gen::<f64>();
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();

    Ok(Topology {
        bs_positions,
        bs_orientations,
        sectorized: sectors > 1,
        ut_positions,
        bs_height: scenario.bs_height_m,
        ut_height: scenario.ut_height_m,
        antennas: scenario.antennas,
        carrier_freq_hz: scenario.carrier_freq_hz,
        deployment_radius: radius,
    })
}

/// Dense table of per-(BS, UT) channel vectors plus the noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    num_bs: usize,
    num_ut: usize,
    antennas: usize,
    /// Row-major over (l, k), `antennas` entries each.
    entries: Vec<C64>,
    noise_power: f64,
}

impl ChannelSet {
    pub fn new(
        num_bs: usize,
        num_ut: usize,
        antennas: usize,
        entries: Vec<C64>,
        noise_power: f64,
    ) -> Result<Self> {
        if num_bs == 0 || num_ut == 0 || antennas == 0 {
            return Err(Error::InvalidArgument("empty channel set".into()));
        }
        let expected = num_bs * num_ut * antennas;
        if entries.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: entries.len(),
            });
        }
        if !(noise_power > 0.0) || !noise_power.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite channel entry".into()));
        }
        Ok(Self {
            num_bs,
            num_ut,
            antennas,
            entries,
            noise_power,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ut(&self) -> usize {
        self.num_ut
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Channel vector from BS `l` to UT `k`.
    pub fn get(&self, l: usize, k: usize) -> &[C64] {
        let start = (l * self.num_ut + k) * self.antennas;
        &self.entries[start..start + self.antennas]
    }

    pub fn energy(&self, l: usize, k: usize) -> f64 {
        self.get(l, k).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Binary export: little-endian header `B, K, M_t` (u64) and `noise`
    /// (f64), then one row per (l, k) in row-major order holding `l, k`
    /// (u64) followed by `M_t` (re, im) f64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for n in [self.num_bs, self.num_ut, self.antennas] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&self.noise_power.to_le_bytes())?;
        for l in 0..self.num_bs {
            for k in 0..self.num_ut {
                w.write_all(&(l as u64).to_le_bytes())?;
                w.write_all(&(k as u64).to_le_bytes())?;
                for z in self.get(l, k) {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let num_bs = read_u64(&mut r)? as usize;
        let num_ut = read_u64(&mut r)? as usize;
        let antennas = read_u64(&mut r)? as usize;
        let noise = read_f64(&mut r)?;
        let total = num_bs
            .checked_mul(num_ut)
            .and_then(|n| n.checked_mul(antennas))
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        let mut entries = Vec::with_capacity(total);
        for l in 0..num_bs {
            for k in 0..num_ut {
                let (rl, rk) = (read_u64(&mut r)? as usize, read_u64(&mut r)? as usize);
                if (rl, rk) != (l, k) {
                    return Err(Error::Format(format!(
                        "expected row ({l}, {k}), found ({rl}, {rk})"
                    )));
                }
                for _ in 0..antennas {
                    let re = read_f64(&mut r)?;
                    let im = read_f64(&mut r)?;
                    entries.push(C64::new(re, im));
                }
            }
        }
        Self::new(num_bs, num_ut, antennas, entries, noise)
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated input: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated input: {e}")))?;
    Ok(f64::from_le_bytes(buf))
}

/// Draws `h_{l,k} = sqrt(g_{l,k}) c_{l,k}` for every pair.
pub fn generate_channels(topo: &Topology, model: &ChannelModel, seed: u64) -> Result<ChannelSet> {
    let (nb, nu, m) = (topo.num_bs(), topo.num_ut(), topo.antennas);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CHANNEL_STREAM);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut entries = Vec::with_capacity(nb * nu * m);
    for l in 0..nb {
        for k in 0..nu {
            let amp = model.path_gain(topo, l, k)?.sqrt();
            for _ in 0..m {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                entries.push(C64::new(re, im) * (amp * scale));
            }
        }
    }
    ChannelSet::new(nb, nu, m, entries, model.noise_power_w())
}

/// RSRP per (BS, UT) and the gap to each UT's strongest BS, both in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct RsrpTable {
    num_bs: usize,
    num_ut: usize,
    /// Row-major B x K.
    pub values: Vec<f64>,
    pub delta: Vec<f64>,
}

impl RsrpTable {
    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ut(&self) -> usize {
        self.num_ut
    }

    pub fn value(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.num_ut + k]
    }

    pub fn gap(&self, l: usize, k: usize) -> f64 {
        self.delta[l * self.num_ut + k]
    }

    /// Builds the table from raw RSRP values (row-major B x K, dB).
    pub fn from_values(num_bs: usize, num_ut: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_bs * num_ut {
            return Err(Error::Dimension {
                expected: num_bs * num_ut,
                actual: values.len(),
            });
        }
        let mut delta = vec![0.0; values.len()];
        for k in 0..num_ut {
            let best = (0..num_bs)
                .map(|l| values[l * num_ut + k])
                .fold(f64::NEG_INFINITY, f64::max);
            for l in 0..num_bs {
                delta[l * num_ut + k] = best - values[l * num_ut + k];
            }
        }
        Ok(Self {
            num_bs,
            num_ut,
            values,
            delta,
        })
    }
}

pub fn compute_rsrp(ch: &ChannelSet) -> Result<RsrpTable> {
    let (nb, nu) = (ch.num_bs(), ch.num_ut());
    let mut values = Vec::with_capacity(nb * nu);
    for l in 0..nb {
        for k in 0..nu {
            let e = ch.energy(l, k);
            if !(e > 0.0) {
                return Err(Error::ZeroChannel { bs: l, ut: k });
            }
            values.push(10.0 * e.log10());
        }
    }
    RsrpTable::from_values(nb, nu, values)
}

/// Serving sets per UT and their dual per BS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    num_bs: usize,
    /// `serving_bs[k]`: BSs serving UT `k`, ascending.
    serving_bs: Vec<Vec<usize>>,
    /// `served_ut[l]`: UTs served by BS `l`, ascending.
    served_ut: Vec<Vec<usize>>,
}

impl ClusterMap {
    /// Builds the map from per-UT serving sets and derives the per-BS dual.
    pub fn from_serving(num_bs: usize, mut serving_bs: Vec<Vec<usize>>) -> Result<Self> {
        let mut served_ut = vec![Vec::new(); num_bs];
        for (k, set) in serving_bs.iter_mut().enumerate() {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate BS in serving set of UT {k}"
                )));
            }
            for &l in set.iter() {
                if l >= num_bs {
                    return Err(Error::InvalidArgument(format!(
                        "UT {k} served by unknown BS {l}"
                    )));
                }
                served_ut[l].push(k);
            }
        }
        Ok(Self {
            num_bs,
            serving_bs,
            served_ut,
        })
    }

    /// Every UT served by every BS.
    pub fn full(num_bs: usize, num_ut: usize) -> Self {
        Self::from_serving(num_bs, vec![(0..num_bs).collect(); num_ut])
            .expect("full cluster map is always valid")
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ut(&self) -> usize {
        self.serving_bs.len()
    }

    pub fn serving_bs(&self, k: usize) -> &[usize] {
        &self.serving_bs[k]
    }

    pub fn served_ut(&self, l: usize) -> &[usize] {
        &self.served_ut[l]
    }

    pub fn is_active(&self, l: usize, k: usize) -> bool {
        self.serving_bs[k].binary_search(&l).is_ok()
    }

    pub fn active_pairs(&self) -> usize {
        self.serving_bs.iter().map(Vec::len).sum()
    }
}

/// Each UT keeps the `cluster_size` BSs with the smallest RSRP gap; ties go
/// to the lower BS index.
pub fn build_clusters(rsrp: &RsrpTable, cluster_size: usize) -> Result<ClusterMap> {
    let nb = rsrp.num_bs();
    if cluster_size == 0 || cluster_size > nb {
        return Err(Error::InvalidArgument(format!(
            "cluster size {cluster_size} outside 1..={nb}"
        )));
    }
    let serving = (0..rsrp.num_ut())
        .map(|k| {
            let mut order: Vec<usize> = (0..nb).collect();
            order.sort_by(|&a, &b| rsrp.gap(a, k).total_cmp(&rsrp.gap(b, k)).then(a.cmp(&b)));
            order.truncate(cluster_size);
            order
        })
        .collect();
    ClusterMap::from_serving(nb, serving)
}
