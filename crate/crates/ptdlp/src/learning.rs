//! RBM learning and evaluation: the block-Gibbs ground-truth sampler,
//! persistent contrastive divergence with a pluggable negative-phase
//! sampler, annealed importance sampling for the partition function, and
//! exhaustive-enumeration oracles at tiny scale.

use crate::energy::{sigmoid, EnergyModel, RbmModel};
use crate::error::{Error, Result};
use crate::proposal::ChainParams;
use crate::space::StateVector;
use crate::tempering::{ReplicaEnsemble, SwapCriterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One block-Gibbs sweep: `h ~ Bern(σ(Wx + a))`, then
/// `x' ~ Bern(σ(Wᵀh + b))`.
pub fn block_gibbs_step<R: Rng>(
    rbm: &RbmModel,
    x: &StateVector,
    rng: &mut R,
) -> Result<StateVector> {
    block_gibbs_step_scaled(rbm, 1.0, x, rng)
}

/// Block-Gibbs sweep with the coupling matrix scaled by `w_scale`; the
/// annealing path's transition kernel.
pub fn block_gibbs_step_scaled<R: Rng>(
    rbm: &RbmModel,
    w_scale: f64,
    x: &StateVector,
    rng: &mut R,
) -> Result<StateVector> {
    rbm.check_state(x)?;
    let xr = x.to_real();
    let hidden: Vec<f64> = rbm
        .hidden_input_scaled(&xr, w_scale)
        .into_iter()
        .map(|pre| {
            if rng.gen::<f64>() < sigmoid(pre) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let visible_pre = rbm.visible_input_scaled(&hidden, w_scale);
    let values = visible_pre
        .into_iter()
        .map(|pre| u32::from(rng.gen::<f64>() < sigmoid(pre)))
        .collect();
    StateVector::new(values, rbm.space())
}

/// `log Z = log Σ_θ exp(U(θ))` by exhaustive enumeration over visibles.
pub fn exact_log_z(rbm: &RbmModel) -> Result<f64> {
    if rbm.n_visible > 20 {
        return Err(Error::invalid(
            "n_visible",
            "exact partition function needs d ≤ 20",
        ));
    }
    let states = rbm.space().enumerate(1 << 21)?;
    let log_terms: Vec<f64> = states.iter().map(|s| rbm.energy(s)).collect();
    Ok(crate::energy::log_sum_exp(&log_terms))
}

/// Exact visible distribution `exp(U)/Z` in enumeration order.
pub fn exact_visible_distribution(rbm: &RbmModel) -> Result<Vec<f64>> {
    crate::oracle::tempered_target(rbm, 1.0, 1 << 21)
}

/// Mean exact log-likelihood of a dataset under the RBM.
pub fn exact_log_likelihood(rbm: &RbmModel, data: &[StateVector]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let log_z = exact_log_z(rbm)?;
    let mean_energy: f64 = data.iter().map(|x| rbm.energy(x)).sum::<f64>() / data.len() as f64;
    Ok(mean_energy - log_z)
}

#[derive(Debug, Clone)]
pub struct AisResult {
    pub log_z: f64,
    pub log_weights: Vec<f64>,
    /// Effective sample size of the importance weights.
    pub ess: f64,
}

/// Annealed importance sampling for `log Z`. The path tempers only the
/// coupling `W` (biases stay at their target values), so the base
/// distribution factorizes and its partition function is closed-form:
/// `log Z_0 = Σᵢ softplus(aᵢ) + Σⱼ softplus(bⱼ)`.
pub fn ais_log_z<R: Rng>(
    rbm: &RbmModel,
    n_temps: usize,
    gibbs_steps_per_temp: usize,
    n_particles: usize,
    rng: &mut R,
) -> Result<AisResult> {
    if n_temps < 2 {
        return Err(Error::invalid("n_temps", "need at least 2 temperatures"));
    }
    if n_particles == 0 {
        return Err(Error::invalid("n_particles", "need at least 1 particle"));
    }
    let log_z0: f64 = rbm
        .a
        .iter()
        .chain(rbm.b.iter())
        .map(|&v| crate::energy::softplus(v))
        .sum();
    let space = rbm.space();
    let visible_probs: Vec<f64> = rbm.b.iter().map(|&bj| sigmoid(bj)).collect();

    let mut log_weights = Vec::with_capacity(n_particles);
    for _ in 0..n_particles {
        // exact sample from the factorized base
        let values: Vec<u32> = visible_probs
            .iter()
            .map(|&p| u32::from(rng.gen::<f64>() < p))
            .collect();
        let mut x = StateVector::new(values, space)?;
        let mut log_w = 0.0;
        let mut prev_scale = 0.0;
        for t in 1..=n_temps {
            let scale = t as f64 / n_temps as f64;
            let xr = x.to_real();
            log_w += rbm.energy_real_scaled(&xr, scale) - rbm.energy_real_scaled(&xr, prev_scale);
            if t < n_temps {
                for _ in 0..gibbs_steps_per_temp {
                    x = block_gibbs_step_scaled(rbm, scale, &x, rng)?;
                }
            }
            prev_scale = scale;
        }
        log_weights.push(log_w);
    }
    let log_mean_w = crate::energy::log_sum_exp(&log_weights) - (n_particles as f64).ln();
    let max_w = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let sum_w: f64 = log_weights.iter().map(|w| (w - max_w).exp()).sum();
    let sum_w2: f64 = log_weights.iter().map(|w| (2.0 * (w - max_w)).exp()).sum();
    Ok(AisResult {
        log_z: log_z0 + log_mean_w,
        ess: sum_w * sum_w / sum_w2,
        log_weights,
    })
}

/// Negative-phase sampler plugged into PCD.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NegativeSampler {
    BlockGibbs,
    Dula {
        alpha: f64,
    },
    Dmala {
        alpha: f64,
    },
    PtDmala {
        betas: Vec<f64>,
        alpha: f64,
        rho: f64,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct AdamMoments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamMoments {
    fn sized(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Ascent step along `grad` with bias-corrected moments.
    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64, t: u64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Persistent contrastive divergence state: the model, its persistent
/// negative chains, and the optimizer moments.
pub struct PcdState {
    pub model: RbmModel,
    sampler: NegativeSampler,
    chains: Vec<StateVector>,
    ensembles: Vec<Vec<StateVector>>,
    learning_rate: f64,
    adam_w: AdamMoments,
    adam_a: AdamMoments,
    adam_b: AdamMoments,
    step: u64,
    rng: ChaCha8Rng,
}

impl PcdState {
    pub fn new(
        model: RbmModel,
        sampler: NegativeSampler,
        n_chains: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_chains == 0 {
            return Err(Error::invalid("n_chains", "need at least one chain"));
        }
        if !(learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = model.space();
        let chains: Vec<StateVector> = (0..n_chains)
            .map(|_| space.uniform_state(&mut rng))
            .collect();
        let ensembles = match &sampler {
            NegativeSampler::PtDmala { betas, .. } => chains
                .iter()
                .map(|c| vec![c.clone(); betas.len()])
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            adam_w: AdamMoments::sized(model.w.len()),
            adam_a: AdamMoments::sized(model.a.len()),
            adam_b: AdamMoments::sized(model.b.len()),
            model,
            sampler,
            chains,
            ensembles,
            learning_rate,
            step: 0,
            rng,
        })
    }

    pub fn chains(&self) -> &[StateVector] {
        &self.chains
    }

    /// Pin the persistent chains to given states (useful for tests).
    pub fn set_chains(&mut self, chains: Vec<StateVector>) -> Result<()> {
        for c in &chains {
            self.model.check_state(c)?;
        }
        self.ensembles = match &self.sampler {
            NegativeSampler::PtDmala { betas, .. } => chains
                .iter()
                .map(|c| vec![c.clone(); betas.len()])
                .collect(),
            _ => Vec::new(),
        };
        self.chains = chains;
        Ok(())
    }

    fn advance_chains(&mut self, k_steps: usize) -> Result<()> {
        match self.sampler.clone() {
            NegativeSampler::BlockGibbs => {
                for chain in self.chains.iter_mut() {
                    for _ in 0..k_steps {
                        *chain = block_gibbs_step(&self.model, chain, &mut self.rng)?;
                    }
                }
            }
            NegativeSampler::Dula { alpha } | NegativeSampler::Dmala { alpha } => {
                let adjusted = matches!(self.sampler, NegativeSampler::Dmala { .. });
                let params = ChainParams::new(1.0, alpha)?;
                for chain in self.chains.iter_mut() {
                    // the model changed since the last update; rebuild the
                    // cached energies under the current parameters
                    let mut cs = crate::chain::ChainState::new(
                        chain.clone(),
                        params,
                        &self.model,
                        ChaCha8Rng::seed_from_u64(self.rng.gen()),
                    )?;
                    for _ in 0..k_steps {
                        if adjusted {
                            cs.dmala_step(&self.model)?;
                        } else {
                            cs.dula_step(&self.model)?;
                        }
                    }
                    *chain = cs.state().clone();
                }
            }
            NegativeSampler::PtDmala { betas, alpha, rho } => {
                for (chain, states) in self.chains.iter_mut().zip(self.ensembles.iter_mut()) {
                    let mut ens = ReplicaEnsemble::new(
                        &self.model,
                        states.clone(),
                        betas.clone(),
                        &[alpha],
                        2.0,
                        rho,
                        SwapCriterion::Standard,
                        self.rng.gen(),
                    )?;
                    for _ in 0..k_steps {
                        ens.step(&self.model, true)?;
                    }
                    *states = (0..betas.len()).map(|k| ens.state(k).clone()).collect();
                    *chain = ens.cold_state().clone();
                }
            }
        }
        Ok(())
    }

    /// Writes the model plus optimizer state. Persistent-chain positions and
    /// RNG state are not captured; resuming restarts the negative chains.
    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        let checkpoint = Checkpoint {
            rbm: self.model.clone(),
            step: self.step,
            learning_rate: self.learning_rate,
            adam_w: self.adam_w.clone(),
            adam_a: self.adam_a.clone(),
            adam_b: self.adam_b.clone(),
        };
        let json = serde_json::to_string_pretty(&checkpoint).expect("serializable");
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// One PCD update on a data batch: ascend the mean log-likelihood
    /// `E_data[∂U] − E_model[∂U]`, with the model expectation taken over the
    /// persistent chains after `k_steps` of the negative sampler.
    pub fn update(&mut self, data_batch: &[StateVector], k_steps: usize) -> Result<()> {
        if data_batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for x in data_batch {
            self.model.check_state(x)?;
        }
        self.advance_chains(k_steps)?;

        let (n_h, n_v) = (self.model.n_hidden, self.model.n_visible);
        let mut grad_w = vec![0.0; n_h * n_v];
        let mut grad_a = vec![0.0; n_h];
        let mut grad_b = vec![0.0; n_v];

        // ∂U/∂W = σ(Wθ+a)·θᵀ, ∂U/∂a = σ(Wθ+a), ∂U/∂b = θ
        let accumulate =
            |x: &StateVector, scale: f64, gw: &mut [f64], ga: &mut [f64], gb: &mut [f64]| {
                let xr = x.to_real();
                let probs: Vec<f64> = self
                    .model
                    .hidden_input(&xr)
                    .into_iter()
                    .map(sigmoid)
                    .collect();
                for i in 0..n_h {
                    ga[i] += scale * probs[i];
                    let row = &mut gw[i * n_v..(i + 1) * n_v];
                    for (j, xj) in xr.iter().enumerate() {
                        row[j] += scale * probs[i] * xj;
                    }
                }
                for (j, xj) in xr.iter().enumerate() {
                    gb[j] += scale * xj;
                }
            };

        let pos_scale = 1.0 / data_batch.len() as f64;
        for x in data_batch {
            accumulate(x, pos_scale, &mut grad_w, &mut grad_a, &mut grad_b);
        }
        let neg_scale = -1.0 / self.chains.len() as f64;
        let chains = self.chains.clone();
        for x in &chains {
            accumulate(x, neg_scale, &mut grad_w, &mut grad_a, &mut grad_b);
        }

        self.step += 1;
        self.adam_w
            .update(&mut self.model.w, &grad_w, self.learning_rate, self.step);
        self.adam_a
            .update(&mut self.model.a, &grad_a, self.learning_rate, self.step);
        self.adam_b
            .update(&mut self.model.b, &grad_b, self.learning_rate, self.step);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    rbm: RbmModel,
    step: u64,
    learning_rate: f64,
    adam_w: AdamMoments,
    adam_a: AdamMoments,
    adam_b: AdamMoments,
}

/// Exact inverse-CDF sampler over an enumerable RBM's visibles; the
/// reference data generator for learning tests.
pub fn exact_sample<R: Rng>(
    rbm: &RbmModel,
    probs: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<StateVector> {
    let space = rbm.space();
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let idx = cdf.partition_point(|c| *c < u).min(probs.len() - 1);
            space.state_at(idx)
        })
        .collect()
}
