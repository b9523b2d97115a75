//! Single-replica transition kernels: the unadjusted Langevin step (DULA)
//! and the Metropolis-adjusted step (DMALA) at a fixed inverse temperature.
//!
//! The current state's energy and gradient are cached and refreshed on every
//! accepted move, so the replica-exchange step can read both pre- and
//! post-step energies without extra model evaluations.

use crate::energy::EnergyModel;
use crate::error::Result;
use crate::proposal::{log_q_with_gradient, propose_with_gradient, ChainParams};
use crate::space::StateVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ChainState {
    state: StateVector,
    energy: f64,
    gradient: Vec<f64>,
    params: ChainParams,
    rng: ChaCha8Rng,
    steps: u64,
    accepted: u64,
}

impl ChainState {
    pub fn new<M: EnergyModel + ?Sized>(
        state: StateVector,
        params: ChainParams,
        model: &M,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        model.check_state(&state)?;
        let energy = model.energy(&state);
        let gradient = model.gradient(&state);
        Ok(Self {
            state,
            energy,
            gradient,
            params,
            rng,
            steps: 0,
            accepted: 0,
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.steps as f64
    }

    /// Replace the state along with its cached energy and gradient. Used by
    /// the swap step, where both sides were already evaluated.
    pub(crate) fn swap_payload(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.state, &mut other.state);
        std::mem::swap(&mut self.energy, &mut other.energy);
        std::mem::swap(&mut self.gradient, &mut other.gradient);
    }

    /// Re-evaluate the cache against `model`; needed when model parameters
    /// changed underneath a persistent chain.
    pub fn refresh<M: EnergyModel + ?Sized>(&mut self, model: &M) {
        self.energy = model.energy(&self.state);
        self.gradient = model.gradient(&self.state);
    }

    /// One unadjusted step: `state ← q(· | state)`. One gradient evaluation.
    pub fn dula_step<M: EnergyModel + ?Sized>(&mut self, model: &M) -> Result<()> {
        let (next, _log_q) =
            propose_with_gradient(&self.state, &self.gradient, &self.params, &mut self.rng)?;
        self.steps += 1;
        self.accepted += 1;
        if next != self.state {
            self.state = next;
            self.energy = model.energy(&self.state);
            self.gradient = model.gradient(&self.state);
        }
        Ok(())
    }

    /// One Metropolis-adjusted step. Self-proposals are accepted outright
    /// (their ratio is exactly 1); otherwise the reverse proposal density is
    /// evaluated at the proposed state, costing one fresh gradient and one
    /// fresh energy evaluation on top of the cached pair.
    pub fn dmala_step<M: EnergyModel + ?Sized>(&mut self, model: &M) -> Result<bool> {
        let (next, log_q_fwd) =
            propose_with_gradient(&self.state, &self.gradient, &self.params, &mut self.rng)?;
        self.steps += 1;
        if next == self.state {
            self.accepted += 1;
            return Ok(true);
        }
        let energy_next = model.energy(&next);
        let gradient_next = model.gradient(&next);
        let log_q_rev = log_q_with_gradient(&self.state, &next, &gradient_next, &self.params)?;
        let accept = mh_accept_prob(
            self.energy,
            energy_next,
            log_q_fwd,
            log_q_rev,
            self.params.beta,
        );
        let u: f64 = self.rng.gen();
        if u < accept {
            self.state = next;
            self.energy = energy_next;
            self.gradient = gradient_next;
            self.accepted += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Metropolis-Hastings acceptance probability for the tempered target
/// `π^β ∝ exp(βU)`: `min{1, exp(β(U_new − U_old) + log q_rev − log q_fwd)}`.
pub fn mh_accept_prob(u_old: f64, u_new: f64, log_q_fwd: f64, log_q_rev: f64, beta: f64) -> f64 {
    let log_ratio = beta * (u_new - u_old) + log_q_rev - log_q_fwd;
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}
