//! Reference solvers: RZF, WMMSE with per-BS bisection, projected GD and NAGD.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

use crate::embedding::{bs_block_norms, normalize_to_budget, BlockVector, PairLayout, PowerBudget};
use crate::objective::WsrObjective;
use crate::symplectic::{project_tangent, SolveResult, TraceRecord};
use crate::{Error, Result, C64};

/// Doublings allowed while bracketing a bisection multiplier.
const MAX_DOUBLINGS: usize = 64;
const MAX_BISECTIONS: usize = 400;
/// Relative eigenvalue floor below which a direction counts as null.
const NULL_EIG: f64 = 1e-12;
/// Consecutive exhausted line searches that end a GD/NAGD run.
const MAX_EXHAUSTED: usize = 10;

/// One iteration of a baseline solver.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRecord {
    pub wsr_bits: f64,
    pub best_wsr_bits: f64,
    /// Accepted line-search step (GD/NAGD).
    pub step: Option<f64>,
    /// Range of the per-BS WMMSE multipliers.
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// `max_l |p_l^T p_l - rho_l| / rho_l`.
    pub constraint_residual: f64,
    /// `max_l p_l^T p_l / rho_l`.
    pub max_power_ratio: f64,
}

impl TraceRecord for BaselineRecord {
    fn wsr_bits(&self) -> f64 {
        self.wsr_bits
    }
}

fn power_stats(p: &BlockVector, rho: &PowerBudget) -> (f64, f64) {
    let mut resid: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for (l, n) in bs_block_norms(p).into_iter().enumerate() {
        if p.layout().bs_span(l).is_empty() {
            continue;
        }
        resid = resid.max((n - rho.get(l)).abs() / rho.get(l));
        ratio = ratio.max(n / rho.get(l));
    }
    (resid, ratio)
}

fn check_budget(layout: &PairLayout, rho: &PowerBudget) -> Result<()> {
    if rho.len() != layout.num_bs() {
        return Err(Error::Dimension {
            expected: layout.num_bs(),
            actual: rho.len(),
        });
    }
    Ok(())
}

/// Per-BS regularized zero forcing over the UTs each BS serves, scaled to
/// full power. `alpha_reg = None` uses `|U_l| sigma^2 / rho_l`.
pub fn rzf_init(
    obj: &WsrObjective,
    rho: &PowerBudget,
    alpha_reg: Option<f64>,
) -> Result<BlockVector> {
    let layout = obj.layout().clone();
    check_budget(&layout, rho)?;
    if let Some(a) = alpha_reg {
        if !(a > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_reg must be > 0, got {a}"
            )));
        }
    }
    let m = layout.antennas();
    let mut blocks = Vec::with_capacity(layout.num_pairs());
    for l in 0..layout.num_bs() {
        let served = obj.clusters().served_ut(l);
        if served.is_empty() {
            continue;
        }
        let alpha = alpha_reg.unwrap_or(served.len() as f64 * obj.noise() / rho.get(l));
        let mut gram = DMatrix::<C64>::identity(m, m) * C64::new(alpha, 0.0);
        for &j in served {
            let h = DVector::from_column_slice(obj.channel(l, j).raw());
            gram += &h * h.adjoint();
        }
        let chol = gram.cholesky().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "regularized Gram matrix of BS {l} is not positive definite"
            ))
        })?;
        for &k in served {
            let h = DVector::from_column_slice(obj.channel(l, k).raw());
            blocks.push(chol.solve(&h).as_slice().to_vec());
        }
    }
    let mut p = BlockVector::from_complex(layout, &blocks)?;
    normalize_to_budget(&mut p, rho);
    Ok(p)
}

/// I.i.d. standard normal real entries, rescaled per BS onto the budget.
pub fn random_init(layout: Arc<PairLayout>, rho: &PowerBudget, seed: u64) -> Result<BlockVector> {
    check_budget(&layout, rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..layout.stacked_len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut p = BlockVector::unstack(layout, data)?;
    normalize_to_budget(&mut p, rho);
    Ok(p)
}

/// Finds `lambda >= 0` with `power(lambda) <= rho` and
/// `rho - power(lambda) <= tol * rho`, for `power` decreasing in `lambda`.
/// Returns 0 when `power(0) <= rho`. `hint` seeds the upper bracket.
pub fn bisect_power(power: impl Fn(f64) -> f64, rho: f64, tol: f64, hint: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Bisection(format!(
            "budget must be positive, got {rho}"
        )));
    }
    let p0 = power(0.0);
    if p0.is_nan() {
        return Err(Error::Bisection("power(0) is NaN".into()));
    }
    if p0 <= rho {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = if hint > 0.0 && hint.is_finite() {
        hint
    } else {
        1.0
    };
    let mut p_hi = power(hi);
    let mut doublings = 0;
    while !(p_hi <= rho) {
        if p_hi.is_nan() || doublings == MAX_DOUBLINGS {
            return Err(Error::Bisection(format!(
                "no upper bracket after {doublings} doublings: power({hi:e}) = {p_hi:e}, budget {rho:e}"
            )));
        }
        lo = hi;
        hi *= 2.0;
        p_hi = power(hi);
        doublings += 1;
    }
    for _ in 0..MAX_BISECTIONS {
        if rho - p_hi <= tol * rho {
            break;
        }
        // Geometric midpoints while the bracket spans orders of magnitude.
        let mid = if lo > 0.0 && hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        let p_mid = power(mid);
        if p_mid.is_nan() {
            return Err(Error::Bisection(format!("power({mid:e}) is NaN")));
        }
        if p_mid <= rho {
            hi = mid;
            p_hi = p_mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Receive coefficients, MMSE weights and per-BS multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub u: Vec<C64>,
    pub w_mmse: Vec<f64>,
    pub lam: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WmmseResult {
    pub solve: SolveResult<BaselineRecord>,
    pub state: WmmseState,
    /// Precoder after the last iteration (the solve result holds the best).
    pub last: BlockVector,
}

/// Complex precoders of one run, indexed like the pair layout.
struct ComplexPrecoders {
    blocks: Vec<Vec<C64>>,
    /// `a[j * K + k]`: signal of UT `k` at UT `j`, `sum_m h_{m,j}^H p_{m,k}`.
    a: Vec<C64>,
    nu: usize,
}

fn hdot(h: &[C64], p: &[C64]) -> C64 {
    h.iter().zip(p).map(|(h, p)| h.conj() * p).sum()
}

impl ComplexPrecoders {
    fn new(obj: &WsrObjective, p: &BlockVector) -> Self {
        let layout = obj.layout();
        let nu = layout.num_ut();
        let blocks: Vec<Vec<C64>> = (0..layout.num_pairs())
            .map(|i| p.complex_block(i))
            .collect();
        let mut a = vec![C64::new(0.0, 0.0); nu * nu];
        for (i, &(m, k)) in layout.pairs().iter().enumerate() {
            for j in 0..nu {
                a[j * nu + k] += hdot(obj.channel(m, j).raw(), &blocks[i]);
            }
        }
        Self { blocks, a, nu }
    }

    fn a(&self, j: usize, k: usize) -> C64 {
        self.a[j * self.nu + k]
    }
}

/// Runs `n_iters` WMMSE outer iterations from `init` (rescaled onto the
/// budget). Each iteration updates every `u_k` and `W_k`, then sweeps the BSs
/// in index order, solving each BS's precoders jointly with one shared
/// multiplier found by bisection and using the latest precoders of the other
/// BSs.
pub fn wmmse_iterate(
    obj: &WsrObjective,
    rho: &PowerBudget,
    init: &BlockVector,
    n_iters: usize,
    bisect_tol: f64,
) -> Result<WmmseResult> {
    let layout = obj.layout().clone();
    check_budget(&layout, rho)?;
    let nu = layout.num_ut();
    let nb = layout.num_bs();
    let m = layout.antennas();
    let w = obj.weights().as_slice();
    let sigma2 = obj.noise();

    let mut p0 = init.clone();
    normalize_to_budget(&mut p0, rho);
    let initial = obj.wsr(&p0)?;
    let mut cur = ComplexPrecoders::new(obj, &p0);
    let mut best = (initial, p0.clone());
    let mut last = p0;
    let mut state = WmmseState {
        u: vec![C64::new(0.0, 0.0); nu],
        w_mmse: vec![1.0; nu],
        lam: vec![0.0; nb],
    };
    let mut trace = Vec::with_capacity(n_iters);
    let mut stalled = 0;

    for n in 0..n_iters {
        for j in 0..nu {
            let total: f64 = (0..nu).map(|k| cur.a(j, k).norm_sqr()).sum::<f64>() + sigma2;
            let own = cur.a(j, j);
            state.u[j] = own / total;
            state.w_mmse[j] = 1.0 + own.norm_sqr() / (total - own.norm_sqr());
        }
        let s: Vec<f64> = (0..nu)
            .map(|j| w[j] * state.w_mmse[j] * state.u[j].norm_sqr())
            .collect();

        for l in 0..nb {
            let served = obj.clusters().served_ut(l);
            if served.is_empty() {
                continue;
            }
            let first = layout.bs_span(l).start / layout.block_len();
            let mut phi = DMatrix::<C64>::zeros(m, m);
            let hs: Vec<DVector<C64>> = (0..nu)
                .map(|j| DVector::from_column_slice(obj.channel(l, j).raw()))
                .collect();
            for j in 0..nu {
                phi += &hs[j] * hs[j].adjoint() * C64::new(s[j], 0.0);
            }
            let eig = phi.symmetric_eigen();
            let d_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let d: Vec<f64> = eig.eigenvalues.iter().map(|x| x.max(0.0)).collect();
            let null: Vec<bool> = d.iter().map(|x| *x <= NULL_EIG * d_max).collect();
            let vh = eig.eigenvectors.adjoint();

            // Right-hand sides in the eigenbasis.
            let mut ys = Vec::with_capacity(served.len());
            for (idx, &k) in served.iter().enumerate() {
                let pk = &cur.blocks[first + idx];
                let mut b = &hs[k] * (state.u[k] * w[k] * state.w_mmse[k]);
                for j in 0..nu {
                    let c = cur.a(j, k) - hdot(obj.channel(l, j).raw(), pk);
                    b -= &hs[j] * (c * s[j]);
                }
                let mut y = &vh * b;
                // The right-hand side lies in the range of phi; drop rounding noise.
                for (yi, &z) in y.iter_mut().zip(&null) {
                    if z {
                        *yi = C64::new(0.0, 0.0);
                    }
                }
                ys.push(y);
            }
            let weights: Vec<f64> = (0..m)
                .map(|i| ys.iter().map(|y| y[i].norm_sqr()).sum())
                .collect();
            let power = |lam: f64| -> f64 {
                (0..m)
                    .filter(|&i| weights[i] > 0.0)
                    .map(|i| weights[i] / (d[i] + lam).powi(2))
                    .sum()
            };
            let total_w: f64 = weights.iter().sum();
            let hint = (total_w / rho.get(l)).sqrt();
            let lam = bisect_power(power, rho.get(l), bisect_tol, hint)?;
            debug_assert!(power(lam) <= rho.get(l) * (1.0 + 1e-12));
            state.lam[l] = lam;

            for (idx, &k) in served.iter().enumerate() {
                let mut z = ys[idx].clone();
                for i in 0..m {
                    z[i] = if weights[i] > 0.0 {
                        z[i] / (d[i] + lam)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
                let new = (&eig.eigenvectors * z).as_slice().to_vec();
                let pair = first + idx;
                let diff: Vec<C64> = new
                    .iter()
                    .zip(&cur.blocks[pair])
                    .map(|(a, b)| a - b)
                    .collect();
                for j in 0..nu {
                    cur.a[j * nu + k] += hdot(obj.channel(l, j).raw(), &diff);
                }
                cur.blocks[pair] = new;
            }
        }

        let p = BlockVector::from_complex(layout.clone(), &cur.blocks).map_err(|_| {
            Error::NonFinite {
                iteration: n,
                what: "WMMSE precoder".into(),
            }
        })?;
        let wsr = obj.wsr(&p)?;
        if !wsr.is_finite() {
            return Err(Error::NonFinite {
                iteration: n,
                what: "WMMSE rate".into(),
            });
        }
        let prev = trace
            .last()
            .map_or(initial, |r: &BaselineRecord| r.wsr_bits);
        if wsr > best.0 {
            best = (wsr, p.clone());
        }
        let (resid, ratio) = power_stats(&p, rho);
        let active: Vec<f64> = (0..nb)
            .filter(|&l| !obj.clusters().served_ut(l).is_empty())
            .map(|l| state.lam[l])
            .collect();
        trace.push(BaselineRecord {
            wsr_bits: wsr,
            best_wsr_bits: best.0,
            step: None,
            lambda_min: active.iter().cloned().reduce(f64::min),
            lambda_max: active.iter().cloned().reduce(f64::max),
            constraint_residual: resid,
            max_power_ratio: ratio,
        });
        stalled = if (wsr - prev).abs() < 1e-5 * prev.abs().max(f64::MIN_POSITIVE) {
            stalled + 1
        } else {
            0
        };
        // Keep cross terms from drifting over long runs.
        cur = ComplexPrecoders::new(obj, &p);
        last = p;
    }

    Ok(WmmseResult {
        solve: SolveResult {
            precoder: best.1,
            iterations: trace.len(),
            trace,
            converged: stalled >= 3,
            initial_wsr_bits: initial,
            best_wsr_bits: best.0,
        },
        state,
        last,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchConfig {
    pub alpha0: f64,
    pub backtrack: f64,
    pub c1: f64,
    pub max_backtracks: usize,
    /// Start each search at `min(alpha0, alpha_prev / backtrack)` instead of `alpha0`.
    pub warm_start: bool,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            backtrack: 0.5,
            c1: 1e-4,
            max_backtracks: 40,
            warm_start: true,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) {
            return Err(Error::InvalidArgument("alpha0 must be > 0".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidArgument(
                "backtrack must lie in (0, 1)".into(),
            ));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidArgument("c1 must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Iteration budget and stopping rule shared by GD and NAGD.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-5,
            window: 3,
        }
    }
}

/// Projected steepest descent with Armijo backtracking.
pub fn gd_solve(
    obj: &WsrObjective,
    rho: &PowerBudget,
    init: &BlockVector,
    ls: &LineSearchConfig,
    stop: &StopRule,
) -> Result<SolveResult<BaselineRecord>> {
    nagd_solve(obj, rho, init, 0.0, ls, stop)
}

/// Nesterov extrapolation `q_n = p_n + mu (p_n - p_{n-1})` followed by a
/// projected Armijo gradient step from `q_n`. `mu = 0` is plain GD.
///
/// The momentum restarts whenever an accepted step lowers the WSR. The
/// extrapolated point and every line-search candidate are renormalized
/// per BS, and the sufficient-decrease slope uses the tangent part of the
/// gradient, so accepted iterates are feasible and strictly lower `g`
/// relative to the extrapolated point.
pub fn nagd_solve(
    obj: &WsrObjective,
    rho: &PowerBudget,
    init: &BlockVector,
    mu: f64,
    ls: &LineSearchConfig,
    stop: &StopRule,
) -> Result<SolveResult<BaselineRecord>> {
    ls.validate()?;
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {mu}"
        )));
    }
    check_budget(obj.layout(), rho)?;
    let mut p = init.clone();
    normalize_to_budget(&mut p, rho);
    let initial = obj.wsr(&p)?;
    let mut prev_p = p.clone();
    let mut best = (initial, p.clone());
    let mut trace: Vec<BaselineRecord> = Vec::new();
    let mut alpha0 = ls.alpha0;
    let mut exhausted = 0;
    let mut stalled = 0;
    let mut converged = false;
    let mut prev_wsr = initial;
    let mut last_alpha = None;

    while trace.len() < stop.max_iters {
        let n = trace.len();
        let mut q = p.clone();
        if mu > 0.0 && n > 0 {
            q.scale(1.0 + mu);
            q.axpy(-mu, &prev_p);
            normalize_to_budget(&mut q, rho);
        }
        let (grad, terms) = obj.gradient_with_terms(&q)?;
        let g_q = obj.g_of(&terms);
        let slope = project_tangent(&q, &grad).norm_sqr();
        if slope == 0.0 || !slope.is_finite() {
            if !slope.is_finite() {
                return Err(Error::NonFinite {
                    iteration: n,
                    what: "gradient".into(),
                });
            }
            converged = true;
            break;
        }

        let mut alpha = match last_alpha {
            Some(a) if ls.warm_start => alpha0.min(a / ls.backtrack),
            _ => alpha0,
        };
        let mut accepted = None;
        for _ in 0..=ls.max_backtracks {
            let mut cand = q.clone();
            cand.axpy(-alpha, &grad);
            normalize_to_budget(&mut cand, rho);
            let g_c = obj.g_value(&cand)?;
            if g_c <= g_q - ls.c1 * alpha * slope {
                accepted = Some(cand);
                break;
            }
            alpha *= ls.backtrack;
        }
        let Some(next) = accepted else {
            exhausted += 1;
            alpha0 *= 0.5;
            if exhausted >= MAX_EXHAUSTED {
                break;
            }
            continue;
        };
        exhausted = 0;
        last_alpha = Some(alpha);

        let wsr = obj.wsr(&next)?;
        if wsr > best.0 {
            best = (wsr, next.clone());
        }
        let (resid, ratio) = power_stats(&next, rho);
        trace.push(BaselineRecord {
            wsr_bits: wsr,
            best_wsr_bits: best.0,
            step: Some(alpha),
            lambda_min: None,
            lambda_max: None,
            constraint_residual: resid,
            max_power_ratio: ratio,
        });
        let change = (wsr - prev_wsr).abs() / prev_wsr.abs().max(f64::MIN_POSITIVE);
        stalled = if change < stop.rel_tol {
            stalled + 1
        } else {
            0
        };
        // Function-value restart: drop the momentum after an ascent in g.
        let restart = wsr < prev_wsr;
        prev_wsr = wsr;
        prev_p = std::mem::replace(&mut p, next);
        if restart {
            prev_p = p.clone();
        }
        if stalled >= stop.window {
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
    use crate::channel::{ChannelSet, ClusterMap};
    use crate::objective::Weights;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn instance(seed: u64, nb: usize, m: usize, nu: usize, bsc: usize) -> WsrObjective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..nb * nu * m)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let ch = ChannelSet::new(nb, nu, m, entries, 0.3).unwrap();
        let rsrp = crate::channel::compute_rsrp(&ch).unwrap();
        let clusters = crate::channel::build_clusters(&rsrp, bsc).unwrap();
        WsrObjective::new(&ch, clusters, Weights::uniform(nu)).unwrap()
    }

    #[test]
    fn bisection_examples() {
        assert_eq!(
            bisect_power(|l| 0.5 / (1.0 + l), 1.0, 1e-12, 1.0).unwrap(),
            0.0
        );
        let toy = |l: f64| 1.0 / (1.0 + l).powi(2);
        for hint in [1.0, 0.3, 1e-6, 50.0] {
            let lam = bisect_power(toy, 0.25, 1e-13, hint).unwrap();
            assert_relative_eq!(lam, 1.0, max_relative = 1e-10);
            assert!(toy(lam) <= 0.25);
        }
        assert!(bisect_power(|_| f64::NAN, 1.0, 1e-12, 1.0).is_err());
        assert!(bisect_power(|_| 2.0, 1.0, 1e-12, 1.0).is_err());
    }

    #[test]
    fn bisection_random_postcondition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let d: Vec<f64> = (0..6).map(|_| rng.gen_range(1e-3..2.0)).collect();
            let power = |l: f64| {
                n.iter()
                    .zip(&d)
                    .map(|(n, d)| n / (d + l).powi(2))
                    .sum::<f64>()
            };
            let rho = rng.gen_range(0.01..1.0);
            let lam = bisect_power(power, rho, 1e-10, 1.0).unwrap();
            if lam > 0.0 {
                assert!(power(lam) <= rho && (rho - power(lam)) / rho <= 1e-8);
            } else {
                assert!(power(0.0) <= rho);
            }
        }
    }

    #[test]
    fn rzf_single_ut_is_matched_filter() {
        let obj = instance(1, 3, 4, 1, 2);
        let rho = PowerBudget::uniform(3, 0.7).unwrap();
        let p = rzf_init(&obj, &rho, None).unwrap();
        for (i, &(l, k)) in obj.layout().pairs().iter().enumerate() {
            let h = obj.channel(l, k).raw();
            let pk = p.complex_block(i);
            // Parallel to h: |h^H p| = ||h|| ||p||.
            let hn = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let pn = pk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert_relative_eq!(hdot(h, &pk).norm(), hn * pn, max_relative = 1e-12);
        }
        for (l, n) in bs_block_norms(&p).into_iter().enumerate() {
            if !obj.layout().bs_span(l).is_empty() {
                assert_relative_eq!(n, 0.7, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn rzf_orthogonal_channels_give_orthogonal_precoders() {
        let m = 4;
        let mut entries = vec![C64::new(0.0, 0.0); 2 * m];
        entries[0] = C64::new(1.5, 0.0);
        entries[m + 2] = C64::new(0.0, 1.5);
        let ch = ChannelSet::new(1, 2, m, entries, 0.1).unwrap();
        let obj = WsrObjective::new(&ch, ClusterMap::full(1, 2), Weights::uniform(2)).unwrap();
        let rho = PowerBudget::uniform(1, 2.0).unwrap();
        let p = rzf_init(&obj, &rho, None).unwrap();
        let (a, b) = (p.complex_block(0), p.complex_block(1));
        assert!(hdot(&a, &b).norm() < 1e-14);
        // Each precoder points along its own channel.
        assert!(a[1].norm() + a[2].norm() + a[3].norm() < 1e-14);
        assert!(b[0].norm() + b[1].norm() + b[3].norm() < 1e-14);
        assert!(rzf_init(&obj, &rho, Some(0.0)).is_err());
    }

    #[test]
    fn random_init_is_normalized_and_seeded() {
        let obj = instance(2, 3, 4, 5, 2);
        let rho = PowerBudget::new(vec![0.5, 1.0, 2.0]).unwrap();
        let a = random_init(obj.layout().clone(), &rho, 9).unwrap();
        let b = random_init(obj.layout().clone(), &rho, 9).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        for (l, n) in bs_block_norms(&a).into_iter().enumerate() {
            if !obj.layout().bs_span(l).is_empty() {
                assert_relative_eq!(n, rho.get(l), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn wmmse_is_monotone_and_feasible() {
        for seed in 0..5 {
            let obj = instance(seed, 3, 4, 6, 2);
            let rho = PowerBudget::uniform(3, 1.0).unwrap();
            let init = rzf_init(&obj, &rho, None).unwrap();
            let res = wmmse_iterate(&obj, &rho, &init, 30, 1e-12).unwrap();
            let hist = res.solve.wsr_history();
            for w in hist.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-8 * w[0].abs(),
                    "seed {seed}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
            for r in &res.solve.trace {
                assert!(r.max_power_ratio <= 1.0 + 1e-8);
            }
            assert!(res.state.w_mmse.iter().all(|w| *w >= 1.0));
            assert!(res.state.lam.iter().all(|l| *l >= 0.0));
        }
    }

    #[test]
    fn wmmse_fixed_point_is_stationary() {
        let obj = instance(7, 2, 3, 3, 2);
        let rho = PowerBudget::uniform(2, 1.0).unwrap();
        let init = rzf_init(&obj, &rho, None).unwrap();
        let res = wmmse_iterate(&obj, &rho, &init, 400, 1e-14).unwrap();
        let again = wmmse_iterate(&obj, &rho, &res.last, 1, 1e-14).unwrap();
        let before = obj.wsr(&res.last).unwrap();
        assert!((again.solve.trace[0].wsr_bits - before).abs() < 1e-10 * before.max(1.0));
    }

    #[test]
    fn gd_stops_at_zero_gradient() {
        let ch = ChannelSet::new(1, 1, 2, vec![C64::new(0.0, 0.0); 2], 1.0).unwrap();
        let obj = WsrObjective::new(&ch, ClusterMap::full(1, 1), Weights::uniform(1)).unwrap();
        let rho = PowerBudget::uniform(1, 1.0).unwrap();
        let init = random_init(obj.layout().clone(), &rho, 0).unwrap();
        let res = gd_solve(
            &obj,
            &rho,
            &init,
            &LineSearchConfig::default(),
            &StopRule::default(),
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.precoder.as_slice(), init.as_slice());
    }

    #[test]
    fn gd_decreases_and_matches_zero_momentum() {
        let obj = instance(4, 3, 4, 5, 2);
        let rho = PowerBudget::uniform(3, 1.0).unwrap();
        let init = random_init(obj.layout().clone(), &rho, 4).unwrap();
        let ls = LineSearchConfig::default();
        let stop = StopRule {
            max_iters: 40,
            ..StopRule::default()
        };
        let gd = gd_solve(&obj, &rho, &init, &ls, &stop).unwrap();
        let hist = gd.wsr_history();
        for w in hist.windows(2) {
            assert!(w[1] > w[0]);
        }
        for r in &gd.trace {
            assert!(r.constraint_residual < 1e-12);
        }
        let nagd0 = nagd_solve(&obj, &rho, &init, 0.0, &ls, &stop).unwrap();
        assert_eq!(gd.wsr_history(), nagd0.wsr_history());
        assert_eq!(gd.precoder.as_slice(), nagd0.precoder.as_slice());
        assert!(nagd_solve(&obj, &rho, &init, 1.0, &ls, &stop).is_err());
    }

    #[test]
    fn nagd_first_step_has_no_extrapolation() {
        let obj = instance(5, 3, 4, 5, 2);
        let rho = PowerBudget::uniform(3, 1.0).unwrap();
        let init = random_init(obj.layout().clone(), &rho, 5).unwrap();
        let ls = LineSearchConfig::default();
        let stop = StopRule {
            max_iters: 1,
            ..StopRule::default()
        };
        let a = nagd_solve(&obj, &rho, &init, 0.9, &ls, &stop).unwrap();
        let b = gd_solve(&obj, &rho, &init, &ls, &stop).unwrap();
        assert_eq!(a.wsr_history(), b.wsr_history());
    }
}
