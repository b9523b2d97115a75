//! The replica ensemble: synchronized local steps across K tempered chains,
//! adjacent-pair state swaps, swap intensity ρ, and round-trip bookkeeping.
//!
//! Two swap criteria are supported:
//!
//! * [`SwapCriterion::Standard`] — the classical two-energy Metropolis swap
//!   on the current states. Each step randomizes the phase order (local
//!   moves then an ascending sweep, or a descending sweep then local moves),
//!   which makes the one-step ensemble kernel exactly reversible with
//!   respect to `∏ π^{β_k}` when the local kernels are adjusted. This is the
//!   default and the configuration the exact-kernel checks certify.
//! * [`SwapCriterion::Tailored`] — the four-energy criterion that compares
//!   pre- and post-step energies of both chains, with a fixed
//!   local-then-ascending-sweep order. The mini-batch corrected swap is the
//!   stochastic version of this bracket.

use crate::chain::ChainState;
use crate::energy::{DatasetEnergy, EnergyModel, MiniBatchEnergy};
use crate::error::{Error, Result};
use crate::proposal::{propose_with_gradient, ChainParams};
use crate::space::StateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapCriterion {
    /// Two-energy Metropolis swap, randomized phase order (reversible).
    Standard,
    /// Four-energy pre/post bracket, fixed local-then-sweep order.
    Tailored,
}

/// Raw exponent of the tailored criterion:
/// `(β_cold − β_hot)·[U_new_hot + U_old_hot − U_new_cold − U_old_cold]`.
pub fn tailored_swap_exponent(
    beta_cold: f64,
    beta_hot: f64,
    u_new_hot: f64,
    u_old_hot: f64,
    u_new_cold: f64,
    u_old_cold: f64,
) -> f64 {
    (beta_cold - beta_hot) * (u_new_hot + u_old_hot - u_new_cold - u_old_cold)
}

/// Tailored swap probability using both pre-step (`old`) and post-step
/// (`new`) energies of the colder and hotter chain of an adjacent pair.
pub fn swap_probability(
    beta_cold: f64,
    beta_hot: f64,
    u_new_hot: f64,
    u_old_hot: f64,
    u_new_cold: f64,
    u_old_cold: f64,
) -> Result<f64> {
    if ![u_new_hot, u_old_hot, u_new_cold, u_old_cold]
        .iter()
        .all(|u| u.is_finite())
    {
        return Err(Error::NonFinite("swap energies"));
    }
    let exponent = tailored_swap_exponent(
        beta_cold, beta_hot, u_new_hot, u_old_hot, u_new_cold, u_old_cold,
    );
    Ok(capped_exp(exponent))
}

/// Classical two-energy swap probability on the current pair of states:
/// `min{1, exp((β_cold − β_hot)(U_hot − U_cold))}`.
pub fn standard_swap_probability(beta_cold: f64, beta_hot: f64, u_hot: f64, u_cold: f64) -> f64 {
    capped_exp((beta_cold - beta_hot) * (u_hot - u_cold))
}

/// Variance-corrected stochastic swap probability for mini-batch energy
/// estimates: the tailored bracket with `β_δ·σ²` subtracted inside.
pub fn stochastic_swap_probability(
    beta_cold: f64,
    beta_hot: f64,
    u_new_hot: f64,
    u_old_hot: f64,
    u_new_cold: f64,
    u_old_cold: f64,
    sigma_sq: f64,
) -> Result<f64> {
    if sigma_sq < 0.0 {
        return Err(Error::invalid("sigma_sq", "must be nonnegative"));
    }
    let beta_delta = beta_cold - beta_hot;
    let bracket = u_new_hot + u_old_hot - u_new_cold - u_old_cold - beta_delta * sigma_sq;
    Ok(capped_exp(beta_delta * bracket))
}

fn capped_exp(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PairStats {
    pub attempts: u64,
    pub accepted: u64,
    /// Running sum of min{1, s_k}; `prob_sum / attempts` is the pilot
    /// estimate of the pair's mean swap probability.
    pub prob_sum: f64,
}

impl PairStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn mean_probability(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.prob_sum / self.attempts as f64
        }
    }
}

/// Outcome of one attempted adjacent swap, for trace output.
#[derive(Debug, Clone, Copy)]
pub struct SwapOutcome {
    pub pair: usize,
    pub probability: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub swaps: Vec<SwapOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Extreme {
    Neither,
    Cold,
    Hot,
}

/// Tracks replica traversals between the temperature extremes. A round trip
/// is counted when a replica arrives at the coldest slot after having last
/// touched the hottest slot.
#[derive(Debug, Clone)]
struct RoundTripTracker {
    last_extreme: Vec<Extreme>,
    trips: Vec<u64>,
}

impl RoundTripTracker {
    fn new(n_replicas: usize) -> Self {
        let mut last_extreme = vec![Extreme::Neither; n_replicas];
        if n_replicas >= 1 {
            last_extreme[0] = Extreme::Cold;
            last_extreme[n_replicas - 1] = Extreme::Hot;
        }
        Self {
            last_extreme,
            trips: vec![0; n_replicas],
        }
    }

    fn observe(&mut self, labels: &[usize]) {
        let k = labels.len();
        if k < 2 {
            return;
        }
        let cold_replica = labels[0];
        if self.last_extreme[cold_replica] == Extreme::Hot {
            self.trips[cold_replica] += 1;
        }
        self.last_extreme[cold_replica] = Extreme::Cold;
        let hot_replica = labels[k - 1];
        self.last_extreme[hot_replica] = Extreme::Hot;
    }

    fn total(&self) -> u64 {
        self.trips.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RoundTripStats {
    pub count: u64,
    pub rate: f64,
    pub per_replica: Vec<u64>,
    pub per_pair_acceptance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplicaEnsemble {
    chains: Vec<ChainState>,
    betas: Vec<f64>,
    rho: f64,
    criterion: SwapCriterion,
    pair_stats: Vec<PairStats>,
    replica_labels: Vec<usize>,
    prev_energies: Vec<f64>,
    swap_rng: ChaCha8Rng,
    round_trips: RoundTripTracker,
    steps: u64,
}

/// Per-chain RNG streams are derived from the master seed: stream 0 feeds
/// swap randomness, stream k+1 feeds chain k. Traces are therefore
/// bit-reproducible for a fixed master seed and chain count, regardless of
/// how the local steps are scheduled.
fn chain_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

impl ReplicaEnsemble {
    /// Builds an ensemble with one chain per inverse temperature. `alphas`
    /// supplies either one shared step size or one per chain.
    pub fn new<M: EnergyModel + ?Sized>(
        model: &M,
        init_states: Vec<StateVector>,
        betas: Vec<f64>,
        alphas: &[f64],
        p: f64,
        rho: f64,
        criterion: SwapCriterion,
        master_seed: u64,
    ) -> Result<Self> {
        validate_schedule(&betas)?;
        if init_states.len() != betas.len() {
            return Err(Error::DimensionMismatch {
                expected: betas.len(),
                got: init_states.len(),
            });
        }
        if !(0.0..=1.0).contains(&rho) || rho.is_nan() {
            return Err(Error::invalid("rho", format!("{rho} not in [0, 1]")));
        }
        let k = betas.len();
        let alpha_of = |i: usize| -> Result<f64> {
            match alphas.len() {
                1 => Ok(alphas[0]),
                n if n == k => Ok(alphas[i]),
                n => Err(Error::DimensionMismatch {
                    expected: k,
                    got: n,
                }),
            }
        };
        let mut chains = Vec::with_capacity(k);
        for (i, state) in init_states.into_iter().enumerate() {
            let params = ChainParams::with_p(betas[i], alpha_of(i)?, p)?;
            chains.push(ChainState::new(
                state,
                params,
                model,
                chain_rng(master_seed, i as u64 + 1),
            )?);
        }
        Ok(Self {
            prev_energies: chains.iter().map(|c| c.energy()).collect(),
            chains,
            pair_stats: vec![PairStats::default(); k.saturating_sub(1)],
            replica_labels: (0..k).collect(),
            swap_rng: chain_rng(master_seed, 0),
            round_trips: RoundTripTracker::new(k),
            betas,
            rho,
            criterion,
            steps: 0,
        })
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn criterion(&self) -> SwapCriterion {
        self.criterion
    }

    pub fn state(&self, chain: usize) -> &StateVector {
        self.chains[chain].state()
    }

    /// State of the β = 1 chain, the one whose samples are the output.
    pub fn cold_state(&self) -> &StateVector {
        self.chains[0].state()
    }

    pub fn cold_energy(&self) -> f64 {
        self.chains[0].energy()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.chains.iter().map(|c| c.energy()).collect()
    }

    pub fn pair_stats(&self) -> &[PairStats] {
        &self.pair_stats
    }

    pub fn replica_labels(&self) -> &[usize] {
        &self.replica_labels
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Mean min{1, s_k} per adjacent pair; the pilot estimator ŝ_k.
    pub fn mean_swap_probabilities(&self) -> Vec<f64> {
        self.pair_stats
            .iter()
            .map(|s| s.mean_probability())
            .collect()
    }

    pub fn round_trip_stats(&self) -> RoundTripStats {
        RoundTripStats {
            count: self.round_trips.total(),
            rate: if self.steps == 0 {
                0.0
            } else {
                self.round_trips.total() as f64 / self.steps as f64
            },
            per_replica: self.round_trips.trips.clone(),
            per_pair_acceptance: self
                .pair_stats
                .iter()
                .map(|s| s.acceptance_rate())
                .collect(),
        }
    }

    /// One synchronized ensemble step: every chain takes a local step and
    /// each adjacent pair attempts one swap.
    pub fn step<M: EnergyModel + ?Sized>(&mut self, model: &M, adjusted: bool) -> Result<StepInfo> {
        self.steps += 1;
        for (chain, slot) in self.chains.iter().zip(self.prev_energies.iter_mut()) {
            *slot = chain.energy();
        }
        let swaps = match self.criterion {
            SwapCriterion::Tailored => {
                self.local_phase(model, adjusted)?;
                self.sweep_tailored()
            }
            SwapCriterion::Standard => {
                if self.swap_rng.gen::<bool>() {
                    self.local_phase(model, adjusted)?;
                    self.sweep_standard(true)
                } else {
                    let swaps = self.sweep_standard(false);
                    self.local_phase(model, adjusted)?;
                    swaps
                }
            }
        };
        self.round_trips.observe(&self.replica_labels);
        Ok(StepInfo { swaps })
    }

    fn local_phase<M: EnergyModel + ?Sized>(&mut self, model: &M, adjusted: bool) -> Result<()> {
        for chain in self.chains.iter_mut() {
            if adjusted {
                chain.dmala_step(model)?;
            } else {
                chain.dula_step(model)?;
            }
        }
        Ok(())
    }

    fn sweep_standard(&mut self, ascending: bool) -> Vec<SwapOutcome> {
        let k = self.chains.len();
        let mut outcomes = Vec::with_capacity(k.saturating_sub(1));
        let pairs: Vec<usize> = if ascending {
            (0..k.saturating_sub(1)).collect()
        } else {
            (0..k.saturating_sub(1)).rev().collect()
        };
        for pair in pairs {
            let s = standard_swap_probability(
                self.betas[pair],
                self.betas[pair + 1],
                self.chains[pair + 1].energy(),
                self.chains[pair].energy(),
            );
            outcomes.push(self.attempt_swap(pair, s));
        }
        outcomes
    }

    fn sweep_tailored(&mut self) -> Vec<SwapOutcome> {
        let k = self.chains.len();
        let mut outcomes = Vec::with_capacity(k.saturating_sub(1));
        for pair in 0..k.saturating_sub(1) {
            let s = swap_probability(
                self.betas[pair],
                self.betas[pair + 1],
                self.chains[pair + 1].energy(),
                self.prev_energies[pair + 1],
                self.chains[pair].energy(),
                self.prev_energies[pair],
            )
            .expect("cached energies are finite");
            outcomes.push(self.attempt_swap(pair, s));
        }
        outcomes
    }

    fn attempt_swap(&mut self, pair: usize, s: f64) -> SwapOutcome {
        let stats = &mut self.pair_stats[pair];
        stats.attempts += 1;
        stats.prob_sum += s;
        let u: f64 = self.swap_rng.gen();
        let accepted = u < self.rho * s;
        if accepted {
            stats.accepted += 1;
            let (left, right) = self.chains.split_at_mut(pair + 1);
            left[pair].swap_payload(&mut right[0]);
            self.replica_labels.swap(pair, pair + 1);
        }
        SwapOutcome {
            pair,
            probability: s,
            accepted,
        }
    }
}

pub(crate) fn validate_schedule(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::InvalidSchedule);
    }
    if (betas[0] - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSchedule);
    }
    for w in betas.windows(2) {
        if !(w[1] < w[0]) || w[1] < 0.0 {
            return Err(Error::InvalidSchedule);
        }
    }
    Ok(())
}

/// Mini-batch PT-DULA: unadjusted local steps driven by stochastic gradient
/// estimates, with variance-corrected tailored swaps. All four energies of a
/// swap decision are estimated under one shared batch.
pub struct MiniBatchEnsemble {
    states: Vec<StateVector>,
    params: Vec<ChainParams>,
    betas: Vec<f64>,
    rho: f64,
    chain_rngs: Vec<ChaCha8Rng>,
    swap_rng: ChaCha8Rng,
    pair_stats: Vec<PairStats>,
    replica_labels: Vec<usize>,
    steps: u64,
}

impl MiniBatchEnsemble {
    pub fn new(
        init_states: Vec<StateVector>,
        betas: Vec<f64>,
        alpha: f64,
        p: f64,
        rho: f64,
        master_seed: u64,
    ) -> Result<Self> {
        validate_schedule(&betas)?;
        if init_states.len() != betas.len() {
            return Err(Error::DimensionMismatch {
                expected: betas.len(),
                got: init_states.len(),
            });
        }
        let k = betas.len();
        let params: Result<Vec<ChainParams>> = betas
            .iter()
            .map(|&b| ChainParams::with_p(b, alpha, p))
            .collect();
        Ok(Self {
            states: init_states,
            params: params?,
            chain_rngs: (0..k)
                .map(|i| chain_rng(master_seed, i as u64 + 1))
                .collect(),
            swap_rng: chain_rng(master_seed, 0),
            pair_stats: vec![PairStats::default(); k - 1],
            replica_labels: (0..k).collect(),
            betas,
            rho,
            steps: 0,
        })
    }

    pub fn state(&self, chain: usize) -> &StateVector {
        &self.states[chain]
    }

    pub fn cold_state(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn pair_stats(&self) -> &[PairStats] {
        &self.pair_stats
    }

    pub fn step<M: DatasetEnergy>(&mut self, energy: &mut MiniBatchEnergy<M>) -> Result<StepInfo> {
        self.steps += 1;
        let prev_states = self.states.clone();
        // local phase: one stochastic gradient estimate per chain
        for (i, state) in self.states.iter_mut().enumerate() {
            let (_u, grad, _var) = energy.estimates(state, &mut self.chain_rngs[i]);
            let (next, _) =
                propose_with_gradient(state, &grad, &self.params[i], &mut self.chain_rngs[i])?;
            *state = next;
        }
        // swap phase: shared batch per decision, corrected bracket
        let mut outcomes = Vec::with_capacity(self.betas.len() - 1);
        for pair in 0..self.betas.len() - 1 {
            let batch = energy.sample_batch(&mut self.swap_rng);
            let u_new_cold = energy.batch_energy(&batch, &self.states[pair]);
            let u_new_hot = energy.batch_energy(&batch, &self.states[pair + 1]);
            let u_old_cold = energy.batch_energy(&batch, &prev_states[pair]);
            let u_old_hot = energy.batch_energy(&batch, &prev_states[pair + 1]);
            let s = stochastic_swap_probability(
                self.betas[pair],
                self.betas[pair + 1],
                u_new_hot,
                u_old_hot,
                u_new_cold,
                u_old_cold,
                energy.variance_estimate(),
            )?;
            let stats = &mut self.pair_stats[pair];
            stats.attempts += 1;
            stats.prob_sum += s;
            let u: f64 = self.swap_rng.gen();
            let accepted = u < self.rho * s;
            if accepted {
                stats.accepted += 1;
                self.states.swap(pair, pair + 1);
                self.replica_labels.swap(pair, pair + 1);
            }
            outcomes.push(SwapOutcome {
                pair,
                probability: s,
                accepted,
            });
        }
        Ok(StepInfo { swaps: outcomes })
    }
}

/// Round trips recovered from a recorded label-permutation trace; the
/// offline counterpart of the online tracker.
pub fn round_trips_from_labels(trace: &[Vec<usize>]) -> RoundTripStats {
    let mut stats = RoundTripStats {
        count: 0,
        rate: 0.0,
        per_replica: Vec::new(),
        per_pair_acceptance: Vec::new(),
    };
    let Some(first) = trace.first() else {
        return stats;
    };
    let mut tracker = RoundTripTracker::new(first.len());
    for labels in trace {
        tracker.observe(labels);
    }
    stats.count = tracker.total();
    stats.per_replica = tracker.trips;
    stats.rate = stats.count as f64 / trace.len() as f64;
    stats
}
