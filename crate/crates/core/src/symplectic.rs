//! Dissipative RATTLE iteration on the per-BS power manifold.
//!
//! The precoder `p` is the position and `q` its conjugate momentum (unit
//! mass). The continuous flow
//!
//! ```text
//! dp/dt = q
//! dq/dt = -grad g(p) - G(p)^T lambda - gamma q
//! phi(p) = rho,  G(p) q = 0
//! ```
//!
//! is discretized as a conformal leapfrog: damp by `exp(-gamma h / 2)`, half
//! kick with the closed-form continuous multiplier `lambda`, drift, then a
//! second half kick whose multiplier `mu` restores `G(p) q = 0` exactly.
//!
//! `G(p)` is the block-diagonal operator with rows `p_l^T`; it is only ever
//! applied blockwise and never materialized.

use std::sync::Arc;

use crate::embedding::{bs_block_norms, normalize_to_budget, BlockVector, PairLayout, PowerBudget};
use crate::objective::WsrObjective;
use crate::{Error, Result};

const RESIDUAL_FLOOR: f64 = 1e-30;

/// Anything with a gradient the integrator can descend.
pub trait Potential {
    fn layout(&self) -> &Arc<PairLayout>;

    fn evaluate(&self, p: &BlockVector) -> Result<Evaluation>;
}

/// Gradient, potential (nats) and reported WSR (bits) at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub grad: BlockVector,
    pub g: f64,
    pub wsr_bits: f64,
}

impl Potential for WsrObjective {
    fn layout(&self) -> &Arc<PairLayout> {
        WsrObjective::layout(self)
    }

    fn evaluate(&self, p: &BlockVector) -> Result<Evaluation> {
        let (grad, terms) = self.gradient_with_terms(p)?;
        Ok(Evaluation {
            grad,
            g: self.g_of(&terms),
            wsr_bits: self.wsr_of(&terms),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Dissipation coefficient (1/time).
    pub gamma: f64,
    /// Initial step size.
    pub h0: f64,
    /// Controller reference error.
    pub r_ctrl: f64,
    /// Controller exponent; 0 keeps the step fixed.
    pub theta: f64,
    pub max_iters: usize,
    /// Relative WSR change below which an iteration counts as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled iterations needed to stop.
    pub window: usize,
    /// Renormalize each BS onto `||p_l||^2 = rho_l` after the drift.
    pub project_positions: bool,
    pub h_min: f64,
    /// Upper clamp of the adaptive step. The default equals `h0`, so the
    /// controller only ever shrinks the step.
    pub h_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 8.0,
            h0: 0.006,
            r_ctrl: 1.0,
            theta: 0.5,
            max_iters: 200,
            rel_tol: 1e-5,
            window: 3,
            project_positions: true,
            h_min: 1e-5,
            h_max: 0.006,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver config: {what}")));
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        if !(self.h0 > 0.0) {
            return bad("h0 must be > 0");
        }
        if !(self.r_ctrl > 0.0) {
            return bad("r_ctrl must be > 0");
        }
        if !(self.theta >= 0.0) {
            return bad("theta must be >= 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be > 0");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return bad("need 0 < h_min <= h_max");
        }
        Ok(())
    }
}

/// Diagnostics of one RATTLE step.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticStepRecord {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta: f64,
    pub h_used: f64,
    /// `||q||^2 / 2 + g(p)` after the step.
    pub hamiltonian: f64,
    pub wsr_bits: f64,
    pub best_wsr_bits: f64,
    /// `max_l |p_l^T p_l - rho_l| / rho_l` over BSs with active pairs.
    pub constraint_residual: f64,
    /// `max_l |p_l^T q_l| / (||p_l|| ||q_l|| + 1e-30)`.
    pub hidden_residual: f64,
}

/// Common view of per-iteration trace records.
pub trait TraceRecord {
    fn wsr_bits(&self) -> f64;
}

impl TraceRecord for SymplecticStepRecord {
    fn wsr_bits(&self) -> f64 {
        self.wsr_bits
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<R = SymplecticStepRecord> {
    /// Best precoder seen (by WSR).
    pub precoder: BlockVector,
    pub trace: Vec<R>,
    pub converged: bool,
    pub iterations: usize,
    pub initial_wsr_bits: f64,
    pub best_wsr_bits: f64,
}

impl<R: TraceRecord> SolveResult<R> {
    /// WSR before the first iteration followed by the WSR after each iteration.
    pub fn wsr_history(&self) -> Vec<f64> {
        std::iter::once(self.initial_wsr_bits)
            .chain(self.trace.iter().map(TraceRecord::wsr_bits))
            .collect()
    }

    /// First iteration index at which the WSR reaches `fraction` of the
    /// returned (best) WSR; 0 means the initial point already does.
    pub fn iterations_to_fraction(&self, fraction: f64) -> usize {
        let target = fraction * self.best_wsr_bits;
        self.wsr_history()
            .iter()
            .position(|w| *w >= target)
            .unwrap_or(self.iterations)
    }
}

/// `G(p) v`: entry `l` is `p_l^T v_l`.
pub fn constraint_apply_g(p: &BlockVector, v: &BlockVector) -> Result<Vec<f64>> {
    p.check_support(v)?;
    Ok((0..p.layout().num_bs())
        .map(|l| {
            p.bs_slice(l)
                .iter()
                .zip(v.bs_slice(l))
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect())
}

/// `G(p)^T lam`: block `(l, k)` is `lam_l p_{l,k}`.
pub fn constraint_apply_gt(p: &BlockVector, lam: &[f64]) -> Result<BlockVector> {
    let nb = p.layout().num_bs();
    if lam.len() != nb {
        return Err(Error::Dimension {
            expected: nb,
            actual: lam.len(),
        });
    }
    let mut out = p.clone();
    for (l, &s) in lam.iter().enumerate() {
        out.bs_slice_mut(l).iter_mut().for_each(|x| *x *= s);
    }
    Ok(out)
}

/// Continuous-time multiplier keeping `G(p) q = 0` along the flow (unit
/// mass): `lambda_l = (q_l^T q_l - p_l^T grad_l) / rho_l`.
pub fn lambda_theorem1(
    p: &BlockVector,
    q: &BlockVector,
    grad: &BlockVector,
    rho: &PowerBudget,
) -> Result<Vec<f64>> {
    p.check_support(q)?;
    p.check_support(grad)?;
    let nb = p.layout().num_bs();
    if rho.len() != nb {
        return Err(Error::Dimension {
            expected: nb,
            actual: rho.len(),
        });
    }
    let pg = constraint_apply_g(p, grad)?;
    Ok((0..nb)
        .map(|l| {
            let qq: f64 = q.bs_slice(l).iter().map(|x| x * x).sum();
            (qq - pg[l]) / rho.get(l)
        })
        .collect())
}

/// Second-kick multiplier enforcing `G(p_{n+1}) q_{n+1} = 0`:
/// `mu_l = (2 p_l^T q_half_l - h p_l^T grad_l) / (h c_l)`, with `c` the
/// diagonal of `G G^T` (equal to `rho` on the manifold). BSs without active
/// pairs get `mu_l = 0`.
pub fn mu_theorem2(
    p_next: &BlockVector,
    q_half: &BlockVector,
    grad_next: &BlockVector,
    c_diag: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {h}"
        )));
    }
    let nb = p_next.layout().num_bs();
    if c_diag.len() != nb {
        return Err(Error::Dimension {
            expected: nb,
            actual: c_diag.len(),
        });
    }
    let pq = constraint_apply_g(p_next, q_half)?;
    let pg = constraint_apply_g(p_next, grad_next)?;
    (0..nb)
        .map(|l| {
            if p_next.layout().bs_span(l).is_empty() {
                return Ok(0.0);
            }
            if !(c_diag[l] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "zero power factor at BS {l}"
                )));
            }
            Ok((2.0 * pq[l] - h * pg[l]) / (h * c_diag[l]))
        })
        .collect()
}

/// Proportional step controller `h (r / delta)^(theta / 2)`, clamped to
/// `[h_min, h_max]`. With `theta = 0` the step is returned untouched.
pub fn step_controller(delta: f64, h: f64, config: &SolverConfig) -> f64 {
    if config.theta == 0.0 {
        return h;
    }
    if !(delta > 0.0) {
        return config.h_max;
    }
    ((config.r_ctrl / delta).powf(config.theta / 2.0) * h).clamp(config.h_min, config.h_max)
}

/// `||p_n - p_{n+1} - (h/2)(grad_n + grad_{n+1})||`.
pub fn controller_error(
    p_n: &BlockVector,
    p_next: &BlockVector,
    grad_n: &BlockVector,
    grad_next: &BlockVector,
    h: f64,
) -> f64 {
    p_n.as_slice()
        .iter()
        .zip(p_next.as_slice())
        .zip(grad_n.as_slice().iter().zip(grad_next.as_slice()))
        .map(|((a, b), (g0, g1))| {
            let d = a - b - 0.5 * h * (g0 + g1);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Removes from each BS slice of `v` its component along `p_l`.
pub fn project_tangent(p: &BlockVector, v: &BlockVector) -> BlockVector {
    let mut out = v.clone();
    for l in 0..p.layout().num_bs() {
        let pl = p.bs_slice(l);
        let pp: f64 = pl.iter().map(|x| x * x).sum();
        if pp == 0.0 {
            continue;
        }
        let c = pl
            .iter()
            .zip(v.bs_slice(l))
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / pp;
        for (o, x) in out.bs_slice_mut(l).iter_mut().zip(pl) {
            *o -= c * x;
        }
    }
    out
}

/// Position/momentum pair plus the cached evaluation at the position.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub p: BlockVector,
    pub q: BlockVector,
    pub eval: Evaluation,
}

impl PhaseState {
    /// Starts at rest at `p`.
    pub fn at_rest<P: Potential + ?Sized>(potential: &P, p: BlockVector) -> Result<Self> {
        let eval = potential.evaluate(&p)?;
        let q = BlockVector::zeros(p.layout().clone());
        Ok(Self { p, q, eval })
    }
}

fn constraint_residual(p: &BlockVector, rho: &PowerBudget) -> f64 {
    bs_block_norms(p)
        .iter()
        .enumerate()
        .filter(|(l, _)| !p.layout().bs_span(*l).is_empty())
        .map(|(l, n)| (n - rho.get(l)).abs() / rho.get(l))
        .fold(0.0, f64::max)
}

fn hidden_residual(p: &BlockVector, q: &BlockVector) -> f64 {
    (0..p.layout().num_bs())
        .map(|l| {
            let (pl, ql) = (p.bs_slice(l), q.bs_slice(l));
            let dot: f64 = pl.iter().zip(ql).map(|(a, b)| a * b).sum();
            let np = pl.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nq = ql.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot.abs() / (np * nq + RESIDUAL_FLOOR)
        })
        .fold(0.0, f64::max)
}

fn ensure_finite(v: &BlockVector, iteration: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            what: what.into(),
        })
    }
}

/// One damped RATTLE step of size `h` from `state`.
///
/// The returned record has `best_wsr_bits` set to the step's own WSR; the
/// solve loop overwrites it with the running best.
pub fn rattle_step<P: Potential + ?Sized>(
    potential: &P,
    rho: &PowerBudget,
    config: &SolverConfig,
    state: &PhaseState,
    h: f64,
    iteration: usize,
) -> Result<(PhaseState, SymplecticStepRecord)> {
    let damp = (-config.gamma * h / 2.0).exp();
    let PhaseState { p, q, eval } = state;

    // First half kick.
    let lambda = lambda_theorem1(p, q, &eval.grad, rho)?;
    let mut q_half = q.clone();
    q_half.scale(damp);
    q_half.axpy(-h / 2.0, &eval.grad);
    q_half.axpy(-h / 2.0, &constraint_apply_gt(p, &lambda)?);
    ensure_finite(&q_half, iteration, "half-step momentum")?;

    // Drift.
    let mut p_next = p.clone();
    p_next.axpy(h, &q_half);
    if config.project_positions {
        normalize_to_budget(&mut p_next, rho);
    }
    ensure_finite(&p_next, iteration, "precoder")?;

    // Second half kick.
    let eval_next = potential.evaluate(&p_next)?;
    let c_diag = bs_block_norms(&p_next);
    let mu = mu_theorem2(&p_next, &q_half, &eval_next.grad, &c_diag, h)?;
    let mut q_next = q_half;
    q_next.axpy(-h / 2.0, &eval_next.grad);
    q_next.axpy(-h / 2.0, &constraint_apply_gt(&p_next, &mu)?);
    q_next.scale(damp);
    ensure_finite(&q_next, iteration, "momentum")?;

    let delta = controller_error(p, &p_next, &eval.grad, &eval_next.grad, h);
    let record = SymplecticStepRecord {
        lambda,
        mu,
        delta,
        h_used: h,
        hamiltonian: 0.5 * q_next.norm_sqr() + eval_next.g,
        wsr_bits: eval_next.wsr_bits,
        best_wsr_bits: eval_next.wsr_bits,
        constraint_residual: constraint_residual(&p_next, rho),
        hidden_residual: hidden_residual(&p_next, &q_next),
    };
    if !record.hamiltonian.is_finite() || !record.wsr_bits.is_finite() {
        return Err(Error::NonFinite {
            iteration,
            what: "objective".into(),
        });
    }
    Ok((
        PhaseState {
            p: p_next,
            q: q_next,
            eval: eval_next,
        },
        record,
    ))
}

/// Runs the damped RATTLE iteration from `init` (rescaled onto the budget)
/// with zero initial momentum.
pub fn solve<P: Potential + ?Sized>(
    potential: &P,
    rho: &PowerBudget,
    init: &BlockVector,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    if rho.len() != init.layout().num_bs() {
        return Err(Error::Dimension {
            expected: init.layout().num_bs(),
            actual: rho.len(),
        });
    }
    let mut p0 = init.clone();
    normalize_to_budget(&mut p0, rho);
    let mut state = PhaseState::at_rest(potential, p0)?;

    let initial = state.eval.wsr_bits;
    let mut best = (initial, state.p.clone());
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut h = config.h0;
    let mut prev = initial;
    let mut stalled = 0;
    let mut converged = false;

    for n in 0..config.max_iters {
        let (next, mut record) = rattle_step(potential, rho, config, &state, h, n)?;
        if record.wsr_bits > best.0 {
            best = (record.wsr_bits, next.p.clone());
        }
        record.best_wsr_bits = best.0;

        let change = (record.wsr_bits - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        stalled = if change < config.rel_tol {
            stalled + 1
        } else {
            0
        };
        prev = record.wsr_bits;
        h = step_controller(record.delta, h, config);
        trace.push(record);
        state = next;
        if stalled >= config.window {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        precoder: best.1,
        iterations: trace.len(),
        trace,
        converged,
        initial_wsr_bits: initial,
        best_wsr_bits: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ClusterMap;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_layout() -> Arc<PairLayout> {
        // B = 2, K = 2, M_t = 2; BS 0 serves both UTs, BS 1 serves UT 1.
        let map = ClusterMap::from_serving(2, vec![vec![0], vec![0, 1]]).unwrap();
        Arc::new(PairLayout::new(&map, 2))
    }

    fn random_vec(layout: &Arc<PairLayout>, rng: &mut ChaCha8Rng) -> BlockVector {
        let n = layout.stacked_len();
        BlockVector::unstack(
            layout.clone(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Dense `G(p)` (B x stacked_len).
    fn dense_g(p: &BlockVector) -> Vec<Vec<f64>> {
        let lay = p.layout();
        (0..lay.num_bs())
            .map(|l| {
                let mut row = vec![0.0; lay.stacked_len()];
                for i in lay.bs_span(l) {
                    row[i] = p.as_slice()[i];
                }
                row
            })
            .collect()
    }

    #[test]
    fn g_of_p_is_block_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_vec(&tiny_layout(), &mut rng);
        let g = constraint_apply_g(&p, &p).unwrap();
        let n = bs_block_norms(&p);
        for l in 0..2 {
            assert_relative_eq!(g[l], n[l], max_relative = 1e-15);
        }
    }

    #[test]
    fn g_vanishes_on_orthogonal_blocks() {
        let lay = tiny_layout();
        let p = BlockVector::unstack(
            lay.clone(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0],
        )
        .unwrap();
        let v = BlockVector::unstack(
            lay,
            vec![0.0, 3.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 5.0],
        )
        .unwrap();
        assert_eq!(constraint_apply_g(&p, &v).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn g_and_gt_match_dense_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lay = tiny_layout();
        let p = random_vec(&lay, &mut rng);
        let v = random_vec(&lay, &mut rng);
        let dense = dense_g(&p);
        let got = constraint_apply_g(&p, &v).unwrap();
        for l in 0..2 {
            let want: f64 = dense[l].iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
            assert_relative_eq!(got[l], want, max_relative = 1e-14);
        }
        let lam = [0.7, -1.3];
        let gt = constraint_apply_gt(&p, &lam).unwrap();
        for (i, got) in gt.as_slice().iter().enumerate() {
            let want: f64 = (0..2).map(|l| dense[l][i] * lam[l]).sum();
            assert_relative_eq!(*got, want, max_relative = 1e-14);
        }
        // G G^T is diagonal with the block powers.
        let ggt = constraint_apply_g(&p, &constraint_apply_gt(&p, &lam).unwrap()).unwrap();
        let n = bs_block_norms(&p);
        for l in 0..2 {
            assert_relative_eq!(ggt[l], n[l] * lam[l], max_relative = 1e-14);
        }
        assert!(constraint_apply_gt(&p, &[1.0]).is_err());
    }

    #[test]
    fn gt_of_zero_and_unit_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_vec(&tiny_layout(), &mut rng);
        assert!(constraint_apply_gt(&p, &[0.0, 0.0])
            .unwrap()
            .as_slice()
            .iter()
            .all(|x| *x == 0.0));
        let only_first = constraint_apply_gt(&p, &[1.0, 0.0]).unwrap();
        assert_eq!(only_first.bs_slice(0), p.bs_slice(0));
        assert!(only_first.bs_slice(1).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn lambda_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lay = tiny_layout();
        let mut p = random_vec(&lay, &mut rng);
        let rho = PowerBudget::new(vec![0.5, 2.0]).unwrap();
        normalize_to_budget(&mut p, &rho);
        let zero = BlockVector::zeros(lay.clone());
        assert_eq!(
            lambda_theorem1(&p, &zero, &zero, &rho).unwrap(),
            vec![0.0, 0.0]
        );
        let lam = lambda_theorem1(&p, &zero, &p, &rho).unwrap();
        assert_relative_eq!(lam[0], -1.0, max_relative = 1e-14);
        assert_relative_eq!(lam[1], -1.0, max_relative = 1e-14);
    }

    /// Quadratic potential `g(p) = 0.5 sum_i c_i p_i^2 + b^T p`.
    struct Quadratic {
        layout: Arc<PairLayout>,
        curv: Vec<f64>,
        lin: Vec<f64>,
        scale: f64,
    }

    impl Potential for Quadratic {
        fn layout(&self) -> &Arc<PairLayout> {
            &self.layout
        }

        fn evaluate(&self, p: &BlockVector) -> Result<Evaluation> {
            let x = p.as_slice();
            let grad: Vec<f64> = (0..x.len())
                .map(|i| self.scale * (self.curv[i] * x[i] + self.lin[i]))
                .collect();
            let g = self.scale
                * (0..x.len())
                    .map(|i| 0.5 * self.curv[i] * x[i] * x[i] + self.lin[i] * x[i])
                    .sum::<f64>();
            Ok(Evaluation {
                grad: BlockVector::unstack(self.layout.clone(), grad)?,
                g,
                wsr_bits: -g,
            })
        }
    }

    fn quadratic(seed: u64, scale: f64) -> Quadratic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = tiny_layout();
        let n = layout.stacked_len();
        Quadratic {
            curv: (0..n).map(|_| rng.gen_range(0.5..3.0)).collect(),
            lin: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            layout,
            scale,
        }
    }

    fn zero_potential() -> Quadratic {
        let layout = tiny_layout();
        let n = layout.stacked_len();
        Quadratic {
            layout,
            curv: vec![0.0; n],
            lin: vec![0.0; n],
            scale: 1.0,
        }
    }

    /// Random momentum with each BS slice made orthogonal to `p`.
    fn tangent(p: &BlockVector, rng: &mut ChaCha8Rng) -> BlockVector {
        let mut q = random_vec(p.layout(), rng);
        let pq = constraint_apply_g(p, &q).unwrap();
        let pp = bs_block_norms(p);
        let coef: Vec<f64> = pq.iter().zip(&pp).map(|(a, b)| -a / b).collect();
        q.axpy(1.0, &constraint_apply_gt(p, &coef).unwrap());
        q
    }

    #[test]
    fn lambda_keeps_hidden_constraint_to_second_order() {
        let rho = PowerBudget::new(vec![0.5, 2.0]).unwrap();
        let (p, mut rng) = on_manifold(11, &rho);
        let q = tangent(&p, &mut rng);
        let grad = random_vec(&p.layout().clone(), &mut rng);
        let lam = lambda_theorem1(&p, &q, &grad, &rho).unwrap();
        let drift = |dt: f64, with_lambda: bool| {
            let mut p1 = p.clone();
            p1.axpy(dt, &q);
            let mut q1 = q.clone();
            q1.axpy(-dt, &grad);
            if with_lambda {
                q1.axpy(-dt, &constraint_apply_gt(&p, &lam).unwrap());
            }
            constraint_apply_g(&p1, &q1)
                .unwrap()
                .iter()
                .map(|x| x.abs())
                .fold(0.0, f64::max)
        };
        let (dt, half) = (1e-3, 5e-4);
        let with = drift(dt, true) / drift(half, true);
        let without = drift(dt, false) / drift(half, false);
        assert!((with - 4.0).abs() < 0.1, "with lambda: ratio {with}");
        assert!(
            (without - 2.0).abs() < 0.1,
            "without lambda: ratio {without}"
        );
        assert!(drift(half, true) < 1e-2 * drift(half, false));
    }

    #[test]
    fn mu_examples_and_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lay = tiny_layout();
        let p = random_vec(&lay, &mut rng);
        let c = bs_block_norms(&p);

        let q_half = tangent(&p, &mut rng);
        let g_perp = tangent(&p, &mut rng);
        let mu = mu_theorem2(&p, &q_half, &g_perp, &c, 0.1).unwrap();
        assert!(mu.iter().all(|m| m.abs() < 1e-14));

        let q_half = random_vec(&lay, &mut rng);
        let grad = random_vec(&lay, &mut rng);
        let h = 0.05;
        let mu = mu_theorem2(&p, &q_half, &grad, &c, h).unwrap();
        // Dense oracle: solve (h/2) (G G^T) mu = G q_half - (h/2) G grad.
        let dense = dense_g(&p);
        for l in 0..2 {
            let row = &dense[l];
            let ggt: f64 = row.iter().map(|x| x * x).sum();
            let gq: f64 = row.iter().zip(q_half.as_slice()).map(|(a, b)| a * b).sum();
            let gg: f64 = row.iter().zip(grad.as_slice()).map(|(a, b)| a * b).sum();
            let want = (gq - 0.5 * h * gg) / (0.5 * h * ggt);
            assert_relative_eq!(mu[l], want, max_relative = 1e-12);
        }
        // The second kick with this mu leaves q tangent.
        let mut q_next = q_half.clone();
        q_next.axpy(-h / 2.0, &grad);
        q_next.axpy(-h / 2.0, &constraint_apply_gt(&p, &mu).unwrap());
        let pq = constraint_apply_g(&p, &q_next).unwrap();
        for (l, v) in pq.iter().enumerate() {
            let scale = p.bs_slice(l).iter().map(|x| x * x).sum::<f64>().sqrt()
                * q_half.bs_slice(l).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(v.abs() <= 1e-10 * scale);
        }
        assert!(mu_theorem2(&p, &q_half, &grad, &c, 0.0).is_err());
        assert!(mu_theorem2(&p, &q_half, &grad, &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn controller_examples() {
        let cfg = SolverConfig {
            theta: 0.0,
            h_max: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(step_controller(123.0, 0.02, &cfg), 0.02);
        let cfg = SolverConfig {
            theta: 0.5,
            h_max: 1.0,
            ..SolverConfig::default()
        };
        assert_relative_eq!(
            step_controller(cfg.r_ctrl, 0.02, &cfg),
            0.02,
            max_relative = 1e-15
        );
        let cfg = SolverConfig {
            theta: 1.0,
            h_max: 1.0,
            ..SolverConfig::default()
        };
        assert_relative_eq!(
            step_controller(4.0 * cfg.r_ctrl, 0.02, &cfg),
            0.01,
            max_relative = 1e-15
        );
        let cfg = SolverConfig {
            theta: 2.0,
            h_max: 1.0,
            ..SolverConfig::default()
        };
        assert_relative_eq!(
            step_controller(4.0 * cfg.r_ctrl, 0.02, &cfg),
            0.005,
            max_relative = 1e-15
        );
        assert_eq!(step_controller(0.0, 0.02, &cfg), cfg.h_max);
        assert_eq!(step_controller(1e30, 0.02, &cfg), cfg.h_min);
    }

    fn on_manifold(seed: u64, rho: &PowerBudget) -> (BlockVector, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_vec(&tiny_layout(), &mut rng);
        normalize_to_budget(&mut p, rho);
        (p, rng)
    }

    #[test]
    fn free_motion_preserves_speed() {
        let rho = PowerBudget::new(vec![1.0, 1.0]).unwrap();
        let (p, mut rng) = on_manifold(6, &rho);
        let q = tangent(&p, &mut rng);
        let pot = zero_potential();
        let cfg = SolverConfig {
            gamma: 1e-300,
            theta: 0.0,
            ..SolverConfig::default()
        };
        let speed0 = q.norm();
        let mut state = PhaseState {
            eval: pot.evaluate(&p).unwrap(),
            p,
            q,
        };
        for n in 0..20 {
            let (next, rec) = rattle_step(&pot, &rho, &cfg, &state, 1e-3, n).unwrap();
            assert!(rec.hidden_residual < 1e-10);
            state = next;
        }
        assert_relative_eq!(state.q.norm(), speed0, max_relative = 1e-5);
    }

    #[test]
    fn dissipation_shrinks_momentum() {
        let rho = PowerBudget::new(vec![1.0, 1.0]).unwrap();
        let (p, mut rng) = on_manifold(7, &rho);
        let q = tangent(&p, &mut rng);
        let pot = zero_potential();
        let cfg = SolverConfig {
            gamma: 2.0,
            theta: 0.0,
            ..SolverConfig::default()
        };
        let h = 0.01;
        let q0 = q.norm();
        let mut state = PhaseState {
            eval: pot.evaluate(&p).unwrap(),
            p,
            q,
        };
        let mut last = q0;
        for n in 0..50 {
            let (next, _) = rattle_step(&pot, &rho, &cfg, &state, h, n).unwrap();
            let now = next.q.norm();
            assert!(now < last);
            state = next;
            last = now;
        }
        let ideal = (-cfg.gamma * 50.0 * h).exp() * q0;
        assert_relative_eq!(last, ideal, max_relative = 1e-3);
    }

    #[test]
    fn steps_keep_both_constraints_on_quadratic() {
        let rho = PowerBudget::new(vec![0.8, 1.5]).unwrap();
        let (p, _) = on_manifold(8, &rho);
        let pot = quadratic(8, 1.0);
        let cfg = SolverConfig {
            max_iters: 300,
            ..SolverConfig::default()
        };
        let res = solve(&pot, &rho, &p, &cfg).unwrap();
        for rec in &res.trace {
            assert!(rec.constraint_residual <= 1e-12);
            assert!(rec.hidden_residual <= 1e-9);
        }
        for w in res.trace.windows(2) {
            assert!(w[1].best_wsr_bits >= w[0].best_wsr_bits);
        }
        assert!(res.best_wsr_bits >= res.initial_wsr_bits);
        assert_eq!(res.trace.len(), res.iterations);
    }

    #[test]
    fn time_rescaling_leaves_iterates_unchanged() {
        let rho = PowerBudget::new(vec![1.0, 1.0]).unwrap();
        let (p, _) = on_manifold(9, &rho);
        let c: f64 = 4.0;
        let cfg = SolverConfig {
            gamma: 1e-300,
            theta: 0.0,
            h0: 0.05,
            max_iters: 30,
            rel_tol: 1e-300,
            ..SolverConfig::default()
        };
        let scaled_cfg = SolverConfig {
            h0: cfg.h0 / c.sqrt(),
            ..cfg.clone()
        };
        let a = solve(&quadratic(9, 1.0), &rho, &p, &cfg).unwrap();
        let b = solve(&quadratic(9, c), &rho, &p, &scaled_cfg).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_relative_eq!(c * ra.wsr_bits, rb.wsr_bits, max_relative = 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig {
                gamma: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                h0: -1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                theta: -0.1,
                ..SolverConfig::default()
            },
            SolverConfig {
                max_iters: 0,
                ..SolverConfig::default()
            },
            SolverConfig {
                rel_tol: 0.0,
                ..SolverConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
