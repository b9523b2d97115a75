//! Unbiased mini-batch estimators of data-summed energies and gradients,
//! with a windowed variance estimate feeding the corrected swap rate.

use super::EnergyModel;
use crate::error::{Error, Result};
use crate::space::{DiscreteSpace, StateVector};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::VecDeque;

/// Number of recent estimator draws kept for the variance estimate.
pub const VARIANCE_WINDOW: usize = 32;

/// An energy that decomposes as a sum over dataset items:
/// `U(θ) = Σ_j u_j(θ)`.
pub trait DatasetEnergy: Send + Sync {
    fn space(&self) -> DiscreteSpace;
    fn num_items(&self) -> usize;
    fn item_energy(&self, item: usize, state: &StateVector) -> f64;
    fn item_gradient(&self, item: usize, state: &StateVector) -> Vec<f64>;
    /// Item energy on the real embedding (the differentiable relaxation).
    fn item_energy_real(&self, item: usize, x: &[f64]) -> f64;
}

/// Mini-batch wrapper: draws batches uniformly without replacement and
/// rescales so that the estimates are unbiased for the dataset sum.
pub struct MiniBatchEnergy<M: DatasetEnergy> {
    base: M,
    batch_size: usize,
    window: VecDeque<f64>,
}

impl<M: DatasetEnergy> MiniBatchEnergy<M> {
    pub fn new(base: M, batch_size: usize) -> Result<Self> {
        if base.num_items() == 0 {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 || batch_size > base.num_items() {
            return Err(Error::invalid(
                "batch_size",
                format!("must be in 1..={}", base.num_items()),
            ));
        }
        Ok(Self {
            base,
            batch_size,
            window: VecDeque::with_capacity(VARIANCE_WINDOW),
        })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn draw_batch<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.base.num_items();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        idx.truncate(self.batch_size);
        idx
    }

    /// Energy estimate only, from an explicit batch. Used by the swap step,
    /// which evaluates several states under one shared batch.
    pub fn batch_energy(&self, batch: &[usize], state: &StateVector) -> f64 {
        let scale = self.base.num_items() as f64 / batch.len() as f64;
        scale
            * batch
                .iter()
                .map(|&j| self.base.item_energy(j, state))
                .sum::<f64>()
    }

    pub fn sample_batch<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.draw_batch(rng)
    }

    /// Draws a batch and returns `(Ũ, ∇Ũ, σ̂²)`. The variance estimate is the
    /// sample variance of the last [`VARIANCE_WINDOW`] energy draws.
    pub fn estimates<R: Rng>(&mut self, state: &StateVector, rng: &mut R) -> (f64, Vec<f64>, f64) {
        let batch = self.draw_batch(rng);
        let scale = self.base.num_items() as f64 / batch.len() as f64;
        let mut energy = 0.0;
        let mut grad = vec![0.0; self.base.space().embedding_dim()];
        for &j in &batch {
            energy += self.base.item_energy(j, state);
            for (g, gi) in grad.iter_mut().zip(self.base.item_gradient(j, state)) {
                *g += gi;
            }
        }
        energy *= scale;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        if self.window.len() == VARIANCE_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(energy);
        (energy, grad, self.variance_estimate())
    }

    /// Current windowed variance estimate σ̂².
    pub fn variance_estimate(&self) -> f64 {
        let n = self.window.len();
        if n < 2 {
            return 0.0;
        }
        let mean: f64 = self.window.iter().sum::<f64>() / n as f64;
        self.window
            .iter()
            .map(|u| (u - mean) * (u - mean))
            .sum::<f64>()
            / (n - 1) as f64
    }

    /// Exact dataset-sum energy.
    pub fn full_energy(&self, state: &StateVector) -> f64 {
        (0..self.base.num_items())
            .map(|j| self.base.item_energy(j, state))
            .sum()
    }

    pub fn full_gradient(&self, state: &StateVector) -> Vec<f64> {
        let mut grad = vec![0.0; self.base.space().embedding_dim()];
        for j in 0..self.base.num_items() {
            for (g, gi) in grad.iter_mut().zip(self.base.item_gradient(j, state)) {
                *g += gi;
            }
        }
        grad
    }
}

/// Simple decomposable target for tests and mini-batch experiments:
/// each item contributes a linear field, `u_j(θ) = ⟨c_j, embed(θ)⟩`.
#[derive(Debug, Clone)]
pub struct LinearFieldDataset {
    space: DiscreteSpace,
    fields: Vec<Vec<f64>>,
}

impl LinearFieldDataset {
    pub fn new(space: DiscreteSpace, fields: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.embedding_dim();
        for f in &fields {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.len(),
                });
            }
        }
        Ok(Self { space, fields })
    }
}

impl DatasetEnergy for LinearFieldDataset {
    fn space(&self) -> DiscreteSpace {
        self.space
    }

    fn num_items(&self) -> usize {
        self.fields.len()
    }

    fn item_energy(&self, item: usize, state: &StateVector) -> f64 {
        let x = state.to_real();
        self.fields[item].iter().zip(&x).map(|(c, x)| c * x).sum()
    }

    fn item_gradient(&self, item: usize, _state: &StateVector) -> Vec<f64> {
        self.fields[item].clone()
    }

    fn item_energy_real(&self, item: usize, x: &[f64]) -> f64 {
        self.fields[item].iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

/// View of a dataset sum as a plain [`EnergyModel`] (the full-batch target).
pub struct FullBatchEnergy<M: DatasetEnergy>(pub M);

impl<M: DatasetEnergy> EnergyModel for FullBatchEnergy<M> {
    fn space(&self) -> DiscreteSpace {
        self.0.space()
    }

    fn energy(&self, state: &StateVector) -> f64 {
        (0..self.0.num_items())
            .map(|j| self.0.item_energy(j, state))
            .sum()
    }

    fn energy_real(&self, x: &[f64]) -> f64 {
        (0..self.0.num_items())
            .map(|j| self.0.item_energy_real(j, x))
            .sum()
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        let mut grad = vec![0.0; self.0.space().embedding_dim()];
        for j in 0..self.0.num_items() {
            for (g, gi) in grad.iter_mut().zip(self.0.item_gradient(j, state)) {
                *g += gi;
            }
        }
        grad
    }
}
