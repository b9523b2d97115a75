//! Warm-up tuning of the temperature schedule: estimate the communication
//! barrier from pilot swap rates, interpolate it with a monotone cubic, and
//! place the inverse temperatures so every adjacent pair rejects equally.
//! The fitted barrier also determines the optimal chain count `K* = 2Λ + 1`
//! and how many independent ensemble copies a compute budget affords.

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::tempering::{validate_schedule, ReplicaEnsemble, SwapCriterion};
use serde::{Deserialize, Serialize};

/// Estimated communication barrier Λ̂(β) with a monotone piecewise-cubic
/// interpolant through the knots (β ascending, Λ̂ nondecreasing).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierCurve {
    beta: Vec<f64>,
    lambda: Vec<f64>,
    slopes: Vec<f64>,
}

impl BarrierCurve {
    /// Knots must be strictly increasing in β with nondecreasing Λ̂.
    pub fn from_knots(beta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if beta.len() != lambda.len() || beta.len() < 2 {
            return Err(Error::invalid("knots", "need at least two (β, Λ̂) pairs"));
        }
        for w in beta.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("knots", "β must be strictly increasing"));
            }
        }
        for w in lambda.windows(2) {
            if w[1] < w[0] - 1e-12 {
                return Err(Error::invalid("knots", "Λ̂ must be nondecreasing"));
            }
        }
        let slopes = fritsch_carlson_slopes(&beta, &lambda);
        Ok(Self {
            beta,
            lambda,
            slopes,
        })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.beta.iter().copied().zip(self.lambda.iter().copied())
    }

    pub fn beta_min(&self) -> f64 {
        self.beta[0]
    }

    pub fn beta_max(&self) -> f64 {
        *self.beta.last().unwrap()
    }

    /// Total estimated barrier, Λ̂ at the largest β.
    pub fn total_barrier(&self) -> f64 {
        *self.lambda.last().unwrap()
    }

    /// C¹ monotone interpolant value at `beta`.
    pub fn eval(&self, beta: f64) -> Result<f64> {
        let n = self.beta.len();
        if beta < self.beta[0] - 1e-12 || beta > self.beta[n - 1] + 1e-12 {
            return Err(Error::OutOfRange(beta, self.beta[0], self.beta[n - 1]));
        }
        let beta = beta.clamp(self.beta[0], self.beta[n - 1]);
        let seg = match self
            .beta
            .binary_search_by(|probe| probe.partial_cmp(&beta).unwrap())
        {
            Ok(i) => return Ok(self.lambda[i]),
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.beta[seg + 1] - self.beta[seg];
        let t = (beta - self.beta[seg]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok(h00 * self.lambda[seg]
            + h10 * h * self.slopes[seg]
            + h01 * self.lambda[seg + 1]
            + h11 * h * self.slopes[seg + 1])
    }
}

/// Fritsch–Carlson endpoint and interior slopes for shape-preserving cubic
/// Hermite interpolation.
fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        let (dp, dn) = (delta[i - 1], delta[i]);
        if dp == 0.0 || dn == 0.0 || dp.signum() != dn.signum() {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dp + w2 / dn);
        }
    }
    d[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endpoint_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn endpoint_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let mut d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        d = 0.0;
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        d = 3.0 * del0;
    }
    d
}

/// A strictly decreasing inverse-temperature schedule with β₁ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    betas: Vec<f64>,
}

impl Schedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        validate_schedule(&betas)?;
        Ok(Self { betas })
    }

    /// Geometric spacing from 1 down to `beta_min` over `k` chains.
    pub fn geometric(k: usize, beta_min: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k", "schedule needs at least 2 chains"));
        }
        if !(beta_min > 0.0 && beta_min < 1.0) {
            return Err(Error::invalid("beta_min", "must lie in (0, 1)"));
        }
        let betas = (0..k)
            .map(|i| beta_min.powf(i as f64 / (k - 1) as f64))
            .collect();
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Barrier knots from per-pair pilot swap rates `ŝ_k` (pairs ordered along
/// the descending-β schedule). Rejections accumulate from the hottest chain:
/// `Λ̂(β_K) = 0` and `Λ̂(β_j) = Σ_{k=j..K-1} (1 − ŝ_k)`.
pub fn estimate_barrier(pair_acceptance: &[f64], betas: &[f64]) -> Result<BarrierCurve> {
    let k = betas.len();
    if k < 2 {
        return Err(Error::invalid("betas", "need at least 2 chains"));
    }
    if pair_acceptance.len() != k - 1 {
        return Err(Error::DimensionMismatch {
            expected: k - 1,
            got: pair_acceptance.len(),
        });
    }
    if pair_acceptance.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::invalid(
            "pair_acceptance",
            "rates must lie in [0, 1]",
        ));
    }
    validate_schedule(betas)?;
    // knots in ascending β: start at the hottest (smallest β) with 0
    let mut knot_beta = Vec::with_capacity(k);
    let mut knot_lambda = Vec::with_capacity(k);
    let mut acc = 0.0;
    knot_beta.push(betas[k - 1]);
    knot_lambda.push(0.0);
    for j in (0..k - 1).rev() {
        acc += 1.0 - pair_acceptance[j];
        knot_beta.push(betas[j]);
        knot_lambda.push(acc);
    }
    BarrierCurve::from_knots(knot_beta, knot_lambda)
}

/// Bisection tolerance (absolute, in β) for schedule placement.
pub const BISECTION_TOL: f64 = 1e-10;

/// Equal-rejection schedule: β_k solves `Λ̂(β) = Λ̂_total·(K−k)/(K−1)`,
/// with β₁ fixed at the curve's top and β_K at its bottom.
pub fn solve_schedule(curve: &BarrierCurve, k: usize) -> Result<Schedule> {
    if k < 2 {
        return Err(Error::invalid("k", "schedule needs at least 2 chains"));
    }
    let total = curve.total_barrier();
    if total < 0.0 {
        return Err(Error::invalid("curve", "total barrier must be nonnegative"));
    }
    let (lo, hi) = (curve.beta_min(), curve.beta_max());
    let mut betas = vec![0.0; k];
    betas[0] = hi;
    betas[k - 1] = lo;
    for idx in 1..k - 1 {
        let rank = idx + 1; // 1-based k in the formula
        let target = total * (k - rank) as f64 / (k - 1) as f64;
        betas[idx] = if total <= 1e-14 {
            // degenerate flat barrier: fall back to even spacing in β
            hi - (hi - lo) * idx as f64 / (k - 1) as f64
        } else {
            bisect_increasing(|b| curve.eval(b), lo, hi, target)?
        };
    }
    for w in betas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidSchedule);
        }
    }
    Schedule::new(betas)
}

/// Root of `f(β) = target` for a nondecreasing `f` on `[lo, hi]`.
fn bisect_increasing(
    f: impl Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    target: f64,
) -> Result<f64> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if target < f_lo - 1e-9 || target > f_hi + 1e-9 {
        return Err(Error::invalid("target", "root not bracketed by the curve"));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Optimal chain count `K* = 2Λ + 1`, rounded to the nearest integer and
/// clamped to at least 2.
pub fn optimal_chain_count(lambda: f64) -> Result<usize> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be nonnegative and finite"));
    }
    Ok(((2.0 * lambda + 1.0).round() as usize).max(2))
}

/// Number of independent PT copies a budget of `k_total` chains affords.
pub fn optimal_copies(k_total: usize, k_star: usize) -> Result<usize> {
    if k_star < 2 {
        return Err(Error::invalid("k_star", "must be at least 2"));
    }
    if k_total < k_star {
        return Err(Error::invalid(
            "k_total",
            format!("budget {k_total} is below the chain count {k_star}"),
        ));
    }
    Ok(k_total / k_star)
}

/// Round-trip rate of `copies` independent ensembles with per-pair swap
/// probabilities `s`: `copies / Σ 1/s_k`. Any zero rate yields 0.
pub fn round_trip_rate(s: &[f64], copies: usize) -> f64 {
    if s.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    copies as f64 / s.iter().map(|x| 1.0 / x).sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Steps per pilot run (n̂).
    pub pilot_steps: usize,
    /// Maximum tuning rounds (n_max).
    pub max_rounds: usize,
    /// Convergence tolerance on |Λ̂_n − Λ̂_{n−1}|.
    pub tol: f64,
    /// Hottest inverse temperature; kept above 0 so the hot chain stays
    /// informative and the barrier estimate near β→0 is conditioned.
    pub beta_min: f64,
    /// Chain count of the pilot schedule.
    pub initial_chains: usize,
    /// Step size shared by the pilot chains.
    pub alpha: f64,
    /// Proposal norm exponent.
    pub p: f64,
    /// Metropolis-adjust the pilot chains.
    pub adjusted: bool,
    pub criterion: SwapCriterion,
    /// Total chain budget for the copy count; `None` reports B* = 1.
    pub k_total: Option<usize>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            pilot_steps: 2000,
            max_rounds: 10,
            tol: 0.05,
            beta_min: 0.05,
            initial_chains: 5,
            alpha: 0.2,
            p: 2.0,
            adjusted: true,
            criterion: SwapCriterion::Standard,
            k_total: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneRound {
    pub betas: Vec<f64>,
    pub pair_acceptance: Vec<f64>,
    pub lambda_total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneReport {
    pub rounds: Vec<TuneRound>,
    pub schedule: Schedule,
    pub k_star: usize,
    pub b_star: usize,
    pub lambda_total: f64,
}

/// Iterative schedule tuning around an arbitrary pilot: each round runs the
/// pilot on the current schedule, refits the barrier, and re-solves the
/// equal-rejection schedule, until the total barrier stabilizes. The final
/// schedule is re-solved at `K* = 2Λ̂ + 1` chains on the last fitted curve.
pub fn tune_with_pilot(
    mut pilot: impl FnMut(&Schedule) -> Result<Vec<f64>>,
    opts: &TuneOptions,
) -> Result<TuneReport> {
    if opts.pilot_steps < 100 {
        return Err(Error::invalid(
            "pilot_steps",
            "pilot needs at least 100 steps",
        ));
    }
    if opts.initial_chains < 2 {
        return Err(Error::invalid("initial_chains", "need at least 2 chains"));
    }
    let mut schedule = Schedule::geometric(opts.initial_chains, opts.beta_min)?;
    let mut rounds: Vec<TuneRound> = Vec::new();
    let mut curve: Option<BarrierCurve> = None;
    for _round in 0..opts.max_rounds.max(1) {
        let s_hat = pilot(&schedule)?;
        if s_hat.iter().all(|&s| s <= 0.0) {
            return Err(Error::NoCommunication);
        }
        let fitted = estimate_barrier(&s_hat, schedule.betas())?;
        let lambda_total = fitted.total_barrier();
        schedule = solve_schedule(&fitted, schedule.len())?;
        let converged = rounds
            .last()
            .map(|prev| (lambda_total - prev.lambda_total).abs() < opts.tol)
            .unwrap_or(false);
        rounds.push(TuneRound {
            betas: schedule.betas().to_vec(),
            pair_acceptance: s_hat,
            lambda_total,
        });
        curve = Some(fitted);
        if converged {
            break;
        }
    }
    let curve = curve.expect("at least one round ran");
    let lambda_total = curve.total_barrier();
    let k_star = optimal_chain_count(lambda_total)?;
    let schedule = solve_schedule(&curve, k_star)?;
    let b_star = match opts.k_total {
        Some(k_total) => optimal_copies(k_total, k_star)?,
        None => 1,
    };
    Ok(TuneReport {
        rounds,
        schedule,
        k_star,
        b_star,
        lambda_total,
    })
}

/// Tunes against a real model: pilots are PT runs started from uniformly
/// random states, with swap intensity forced to 1 and ŝ_k estimated as the
/// mean of min{1, s_k} over all attempts.
pub fn tune<M: EnergyModel + ?Sized>(
    model: &M,
    opts: &TuneOptions,
    master_seed: u64,
) -> Result<TuneReport> {
    let mut round_index = 0u64;
    tune_with_pilot(
        |schedule| {
            round_index += 1;
            let seed = master_seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(round_index);
            let mut init_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1e995);
            let space = model.space();
            let init = (0..schedule.len())
                .map(|_| space.uniform_state(&mut init_rng))
                .collect();
            let mut ens = ReplicaEnsemble::new(
                model,
                init,
                schedule.betas().to_vec(),
                &[opts.alpha],
                opts.p,
                1.0,
                opts.criterion,
                seed,
            )?;
            for _ in 0..opts.pilot_steps {
                ens.step(model, opts.adjusted)?;
            }
            Ok(ens.mean_swap_probabilities())
        },
        opts,
    )
}

use rand::SeedableRng;
