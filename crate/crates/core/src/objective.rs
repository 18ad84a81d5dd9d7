//! Per-UT rates, the WSR objective and its gradient over the stacked real
//! precoder.
//!
//! For UT `k` with serving set `B_k`:
//!
//! ```text
//! A_{t,k} = sum_{m in B_k} H_{m,t}^T p_{m,k}      (2-vector, k's signal at t)
//! a_k     = ||A_{k,k}||^2
//! r_k     = sum_{t != k} ||A_{k,t}||^2 + noise
//! b_k     = (1 + a_k / r_k)^{-1}
//! g(p)    = -sum_k w_k ln(1 + a_k / r_k)
//! ```
//!
//! The gradient block for an active pair `(l, k)` is
//!
//! ```text
//! -2 w_k b_k / r_k H_{l,k} A_{k,k} + 2 sum_{t != k} w_t a_t b_t / r_t^2 H_{l,t} A_{t,k}
//! ```
//!
//! which is the exact real gradient of `g` (the factor 2 comes from
//! differentiating a squared norm).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::channel::{ChannelSet, ClusterMap};
use crate::embedding::{embed_channel, BlockVector, PairLayout, RealChannel};
use crate::{Error, Result};

/// Nonnegative per-UT rate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    w: Vec<f64>,
}

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !w.iter().any(|x| *x > 0.0) {
            return Err(Error::InvalidArgument(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self { w })
    }

    pub fn uniform(num_ut: usize) -> Self {
        Self {
            w: vec![1.0; num_ut],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Multiply-add counts attributable to gradient evaluation.
///
/// The unit is one complex multiply-add, i.e. one antenna element of a
/// channel/precoder inner product (`H^T p` or `H s` over a length-`M_t`
/// complex vector costs `M_t` units).
#[derive(Debug, Default)]
pub struct OpCounter {
    multiply_adds: AtomicU64,
    interference_multiply_adds: AtomicU64,
    gradient_evals: AtomicU64,
    objective_evals: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub multiply_adds: u64,
    /// Share of `multiply_adds` spent on `t != k` (interference) terms.
    pub interference_multiply_adds: u64,
    pub gradient_evals: u64,
    pub objective_evals: u64,
}

impl OpCounter {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            multiply_adds: self.multiply_adds.load(Ordering::Relaxed),
            interference_multiply_adds: self.interference_multiply_adds.load(Ordering::Relaxed),
            gradient_evals: self.gradient_evals.load(Ordering::Relaxed),
            objective_evals: self.objective_evals.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.multiply_adds.store(0, Ordering::Relaxed);
        self.interference_multiply_adds.store(0, Ordering::Relaxed);
        self.gradient_evals.store(0, Ordering::Relaxed);
        self.objective_evals.store(0, Ordering::Relaxed);
    }

    fn add(&self, total: u64, interference: u64) {
        self.multiply_adds.fetch_add(total, Ordering::Relaxed);
        self.interference_multiply_adds
            .fetch_add(interference, Ordering::Relaxed);
    }
}

/// Per-UT signal, interference and rate terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerms {
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub rate_nats: Vec<f64>,
    pub rate_bits: Vec<f64>,
    /// `cross[k * K + t]` = `A_{t,k}`, the signal of UT `k` seen at UT `t`.
    cross: Vec<[f64; 2]>,
}

impl RateTerms {
    /// Effective real channel output `A_{t,k}` of UT `k`'s precoders at UT `t`.
    pub fn cross(&self, t: usize, k: usize) -> [f64; 2] {
        self.cross[k * self.a.len() + t]
    }
}

/// The WSR problem for one channel realization and cluster map.
#[derive(Debug)]
pub struct WsrObjective {
    layout: Arc<PairLayout>,
    clusters: ClusterMap,
    /// Row-major `B x K` real channels.
    channels: Vec<RealChannel>,
    noise: f64,
    weights: Weights,
    counter: OpCounter,
}

impl WsrObjective {
    pub fn new(ch: &ChannelSet, clusters: ClusterMap, weights: Weights) -> Result<Self> {
        if clusters.num_bs() != ch.num_bs() || clusters.num_ut() != ch.num_ut() {
            return Err(Error::InvalidArgument(format!(
                "cluster map is {} x {}, channels are {} x {}",
                clusters.num_bs(),
                clusters.num_ut(),
                ch.num_bs(),
                ch.num_ut()
            )));
        }
        if weights.len() != ch.num_ut() {
            return Err(Error::Dimension {
                expected: ch.num_ut(),
                actual: weights.len(),
            });
        }
        let mut channels = Vec::with_capacity(ch.num_bs() * ch.num_ut());
        for l in 0..ch.num_bs() {
            for k in 0..ch.num_ut() {
                channels.push(embed_channel(ch.get(l, k)));
            }
        }
        let layout = Arc::new(PairLayout::new(&clusters, ch.antennas()));
        Ok(Self {
            layout,
            clusters,
            channels,
            noise: ch.noise_power(),
            weights,
            counter: OpCounter::default(),
        })
    }

    pub fn layout(&self) -> &Arc<PairLayout> {
        &self.layout
    }

    pub fn clusters(&self) -> &ClusterMap {
        &self.clusters
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn num_bs(&self) -> usize {
        self.layout.num_bs()
    }

    pub fn num_ut(&self) -> usize {
        self.layout.num_ut()
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }

    pub fn channel(&self, l: usize, k: usize) -> &RealChannel {
        &self.channels[l * self.num_ut() + k]
    }

    fn check(&self, state: &BlockVector) -> Result<()> {
        if Arc::ptr_eq(state.layout(), &self.layout) || **state.layout() == *self.layout {
            Ok(())
        } else {
            Err(Error::SupportMismatch)
        }
    }

    /// `A_{t,k}` for every (t, k).
    fn cross_table(&self, state: &BlockVector) -> Vec<[f64; 2]> {
        let nu = self.num_ut();
        let mut cross = vec![[0.0; 2]; nu * nu];
        for (pair, &(m, k)) in self.layout.pairs().iter().enumerate() {
            let p = state.block(pair);
            let row = &mut cross[k * nu..(k + 1) * nu];
            for (t, acc) in row.iter_mut().enumerate() {
                let v = self.channel(m, t).apply_t(p);
                acc[0] += v[0];
                acc[1] += v[1];
            }
        }
        cross
    }

    fn terms_from_cross(&self, cross: Vec<[f64; 2]>) -> RateTerms {
        let nu = self.num_ut();
        let mut a = vec![0.0; nu];
        let mut r = vec![self.noise; nu];
        for k in 0..nu {
            for t in 0..nu {
                let v = cross[k * nu + t];
                let e = v[0] * v[0] + v[1] * v[1];
                if t == k {
                    a[k] = e;
                } else {
                    r[t] += e;
                }
            }
        }
        let b: Vec<f64> = a.iter().zip(&r).map(|(a, r)| 1.0 / (1.0 + a / r)).collect();
        let rate_nats: Vec<f64> = a.iter().zip(&r).map(|(a, r)| (a / r).ln_1p()).collect();
        let rate_bits = rate_nats
            .iter()
            .map(|x| x / std::f64::consts::LN_2)
            .collect();
        RateTerms {
            a,
            r,
            b,
            rate_nats,
            rate_bits,
            cross,
        }
    }

    pub fn rate_terms(&self, state: &BlockVector) -> Result<RateTerms> {
        self.check(state)?;
        Ok(self.terms_from_cross(self.cross_table(state)))
    }

    /// Weighted sum rate in bits/s/Hz.
    pub fn wsr(&self, state: &BlockVector) -> Result<f64> {
        let t = self.rate_terms(state)?;
        Ok(self.wsr_of(&t))
    }

    pub fn wsr_of(&self, terms: &RateTerms) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .zip(&terms.rate_bits)
            .map(|(w, r)| w * r)
            .sum()
    }

    /// `g(p) = -sum_k w_k R_k` in nats; the quantity every solver minimizes.
    pub fn g_value(&self, state: &BlockVector) -> Result<f64> {
        let t = self.rate_terms(state)?;
        self.counter.objective_evals.fetch_add(1, Ordering::Relaxed);
        Ok(self.g_of(&t))
    }

    pub fn g_of(&self, terms: &RateTerms) -> f64 {
        -self
            .weights
            .as_slice()
            .iter()
            .zip(&terms.rate_nats)
            .map(|(w, r)| w * r)
            .sum::<f64>()
    }

    /// Analytic gradient of [`WsrObjective::g_value`].
    pub fn gradient(&self, state: &BlockVector) -> Result<BlockVector> {
        Ok(self.gradient_with_terms(state)?.0)
    }

    /// Gradient plus the rate terms it was built from.
    pub fn gradient_with_terms(&self, state: &BlockVector) -> Result<(BlockVector, RateTerms)> {
        self.check(state)?;
        let nu = self.num_ut() as u64;
        let m = self.layout.antennas() as u64;
        let pairs = self.layout.num_pairs() as u64;

        let terms = self.terms_from_cross(self.cross_table(state));
        // Cross table: one inner product per (active pair, receiving UT).
        let mut total = pairs * nu * m;
        let mut interference = pairs * (nu - 1) * m;

        let w = self.weights.as_slice();
        let own: Vec<f64> = (0..nu as usize)
            .map(|k| -2.0 * w[k] * terms.b[k] / terms.r[k])
            .collect();
        let intf: Vec<f64> = (0..nu as usize)
            .map(|t| 2.0 * w[t] * terms.a[t] * terms.b[t] / (terms.r[t] * terms.r[t]))
            .collect();

        let mut grad = BlockVector::zeros(self.layout.clone());
        for (pair, &(l, k)) in self.layout.pairs().iter().enumerate() {
            let out = grad.block_mut(pair);
            for (t, &c) in intf.iter().enumerate() {
                let coef = if t == k { own[k] } else { c };
                self.channel(l, t).apply_add(terms.cross(t, k), coef, out);
            }
        }
        total += pairs * nu * m;
        interference += pairs * (nu - 1) * m;

        self.counter.add(total, interference);
        self.counter.gradient_evals.fetch_add(1, Ordering::Relaxed);
        Ok((grad, terms))
    }

    /// Central-difference gradient of `g`, coordinate by coordinate.
    pub fn fd_gradient(&self, state: &BlockVector, eps: f64) -> Result<BlockVector> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {eps}"
            )));
        }
        self.check(state)?;
        let x = state.stack();
        let g = central_difference(
            |v| {
                let s = BlockVector::unstack(self.layout.clone(), v.to_vec())
                    .expect("perturbed state keeps its layout");
                self.g_of(&self.terms_from_cross(self.cross_table(&s)))
            },
            &x,
            eps,
        );
        BlockVector::unstack(self.layout.clone(), g)
    }
}

/// Central differences of `f` at `x` with step `eps`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `||a - b|| / ||b||`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    (diff / base).sqrt()
}
