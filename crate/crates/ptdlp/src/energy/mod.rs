//! Energy models `U(θ)` with analytic gradients of their real relaxation.
//!
//! The target distribution everywhere in this crate is `π(θ) ∝ exp(+U(θ))`,
//! so larger energies mean more probable states. Every model exposes the
//! differentiable extension of `U` over the real embedding, which is what the
//! proposal's first-order term consumes.

mod grid;
mod minibatch;
mod rbm;

pub use grid::{GridMixtureModel, MixtureComponent, MixtureFamily};
pub use minibatch::{
    DatasetEnergy, FullBatchEnergy, LinearFieldDataset, MiniBatchEnergy, VARIANCE_WINDOW,
};
pub use rbm::RbmModel;

use crate::error::{Error, Result};
use crate::space::{DiscreteSpace, StateVector};
use std::sync::atomic::{AtomicU64, Ordering};

pub trait EnergyModel: Send + Sync {
    fn space(&self) -> DiscreteSpace;

    /// `U(θ)`.
    fn energy(&self, state: &StateVector) -> f64;

    /// `U` evaluated on the real embedding; agrees with [`EnergyModel::energy`]
    /// at integer points.
    fn energy_real(&self, x: &[f64]) -> f64;

    /// Gradient of [`EnergyModel::energy_real`] at the state's embedding.
    /// Length equals `space().embedding_dim()`.
    fn gradient(&self, state: &StateVector) -> Vec<f64>;

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.space() != &self.space() {
            return Err(Error::DimensionMismatch {
                expected: self.space().dim(),
                got: state.dim(),
            });
        }
        Ok(())
    }
}

impl<M: EnergyModel + ?Sized> EnergyModel for &M {
    fn space(&self) -> DiscreteSpace {
        (**self).space()
    }
    fn energy(&self, state: &StateVector) -> f64 {
        (**self).energy(state)
    }
    fn energy_real(&self, x: &[f64]) -> f64 {
        (**self).energy_real(x)
    }
    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        (**self).gradient(state)
    }
}

/// `U(θ) = θᵀWθ + bᵀθ` on the real embedding. `W` is symmetrized on
/// construction.
#[derive(Debug, Clone)]
pub struct LogQuadraticModel {
    w: Vec<f64>, // row-major, embedding_dim × embedding_dim
    b: Vec<f64>,
    space: DiscreteSpace,
}

impl LogQuadraticModel {
    /// `w` is row-major of size `n×n` where `n = space.embedding_dim()`.
    pub fn new(space: DiscreteSpace, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = space.embedding_dim();
        if w.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: w.len(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut sym = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = 0.5 * (w[i * n + j] + w[j * n + i]);
            }
        }
        Ok(Self { w: sym, b, space })
    }

    /// Purely linear energy `bᵀθ` (zero interaction matrix).
    pub fn linear(space: DiscreteSpace, b: Vec<f64>) -> Result<Self> {
        let n = space.embedding_dim();
        Self::new(space, vec![0.0; n * n], b)
    }

    pub fn coupling(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }
}

impl EnergyModel for LogQuadraticModel {
    fn space(&self) -> DiscreteSpace {
        self.space
    }

    fn energy(&self, state: &StateVector) -> f64 {
        self.energy_real(&state.to_real())
    }

    fn energy_real(&self, x: &[f64]) -> f64 {
        let n = x.len();
        debug_assert_eq!(n, self.b.len());
        let mut quad = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            let row = &self.w[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * x[j];
            }
            quad += x[i] * acc;
        }
        let lin: f64 = self.b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
        quad + lin
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        let x = state.to_real();
        let n = x.len();
        let mut g = self.b.clone();
        for i in 0..n {
            let row = &self.w[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * x[j];
            }
            g[i] += 2.0 * acc;
        }
        g
    }
}

/// Arbitrary tabulated energy over an enumerable space, with the multilinear
/// extension as its differentiable relaxation. Only meaningful for binary
/// spaces; used by tests and the oracle suite for non-log-quadratic targets.
#[derive(Debug, Clone)]
pub struct TableEnergy {
    space: DiscreteSpace,
    table: Vec<f64>,
}

impl TableEnergy {
    pub fn new(space: DiscreteSpace, table: Vec<f64>) -> Result<Self> {
        if !matches!(space.kind(), crate::space::SpaceKind::Binary) {
            return Err(Error::invalid(
                "space",
                "table energies require a binary space",
            ));
        }
        let n = space.checked_count(crate::space::DEFAULT_ENUM_CAP)? as usize;
        if table.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: table.len(),
            });
        }
        Ok(Self { space, table })
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

impl EnergyModel for TableEnergy {
    fn space(&self) -> DiscreteSpace {
        self.space
    }

    fn energy(&self, state: &StateVector) -> f64 {
        self.table[self.space.index_of(state)]
    }

    /// Multilinear extension: interpolates the table over [0,1]^d.
    fn energy_real(&self, x: &[f64]) -> f64 {
        let d = self.space.dim();
        debug_assert_eq!(x.len(), d);
        let mut acc = 0.0;
        for idx in 0..self.table.len() {
            let mut w = 1.0;
            for (i, xi) in x.iter().enumerate() {
                let bit = (idx >> (d - 1 - i)) & 1;
                w *= if bit == 1 { *xi } else { 1.0 - *xi };
            }
            acc += w * self.table[idx];
        }
        acc
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        // d/dx_i of the multilinear extension at a vertex: U(x, x_i=1) - U(x, x_i=0).
        let d = self.space.dim();
        let mut g = vec![0.0; d];
        let idx = self.space.index_of(state);
        for i in 0..d {
            let bit = d - 1 - i;
            let hi = idx | (1 << bit);
            let lo = hi ^ (1 << bit);
            g[i] = self.table[hi] - self.table[lo];
        }
        g
    }
}

/// Wrapper counting physical energy and gradient evaluations.
pub struct CountingEnergy<M> {
    inner: M,
    energy_calls: AtomicU64,
    gradient_calls: AtomicU64,
}

impl<M: EnergyModel> CountingEnergy<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            energy_calls: AtomicU64::new(0),
            gradient_calls: AtomicU64::new(0),
        }
    }

    pub fn energy_calls(&self) -> u64 {
        self.energy_calls.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradient_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.energy_calls.store(0, Ordering::Relaxed);
        self.gradient_calls.store(0, Ordering::Relaxed);
    }
}

impl<M: EnergyModel> EnergyModel for CountingEnergy<M> {
    fn space(&self) -> DiscreteSpace {
        self.inner.space()
    }

    fn energy(&self, state: &StateVector) -> f64 {
        self.energy_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.energy(state)
    }

    fn energy_real(&self, x: &[f64]) -> f64 {
        self.inner.energy_real(x)
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        self.gradient_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(state)
    }
}

/// Central finite differences of the real relaxation. Test oracle for
/// [`EnergyModel::gradient`].
pub fn finite_difference_gradient<M: EnergyModel + ?Sized>(
    model: &M,
    state: &StateVector,
    step: f64,
) -> Vec<f64> {
    let x = state.to_real();
    let mut g = vec![0.0; x.len()];
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let up = model.energy_real(&xp);
        xp[i] = x[i] - step;
        let um = model.energy_real(&xp);
        xp[i] = x[i];
        g[i] = (up - um) / (2.0 * step);
    }
    g
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow.
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln Σ exp(v)` with max subtraction.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DEFAULT_ENUM_CAP;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fd_check<M: EnergyModel>(model: &M, n_states: usize, seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let space = model.space();
        for _ in 0..n_states {
            let state = space.uniform_state(&mut rng);
            let g = model.gradient(&state);
            let fd = finite_difference_gradient(model, &state, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                let scale = a.abs().max(b.abs()).max(1.0);
                assert!(
                    (a - b).abs() / scale < 1e-4,
                    "gradient {a} vs finite difference {b}"
                );
            }
        }
    }

    #[test]
    fn log_quadratic_trivial_values() {
        let space = DiscreteSpace::binary(2).unwrap();
        let model = LogQuadraticModel::new(space, vec![0.0; 4], vec![1.0, 1.0]).unwrap();
        let s = StateVector::new(vec![1, 1], space).unwrap();
        assert_eq!(model.energy(&s), 2.0);

        let ident =
            LogQuadraticModel::new(space, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let s10 = StateVector::new(vec![1, 0], space).unwrap();
        assert_eq!(ident.gradient(&s10), vec![2.0, 0.0]);
    }

    #[test]
    fn symmetrization_on_construction() {
        let space = DiscreteSpace::binary(2).unwrap();
        let model = LogQuadraticModel::new(space, vec![0.0, 2.0, 0.0, 0.0], vec![0.0; 2]).unwrap();
        assert_eq!(model.coupling(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        let space = DiscreteSpace::binary(5).unwrap();
        let n = space.embedding_dim();
        let w: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        fd_check(&LogQuadraticModel::new(space, w, b).unwrap(), 100, 1);

        let ord = DiscreteSpace::ordinal(3, 4).unwrap();
        let n = ord.embedding_dim();
        let w: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        fd_check(&LogQuadraticModel::new(ord, w, b).unwrap(), 100, 2);

        let table_space = DiscreteSpace::binary(4).unwrap();
        let table: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        fd_check(&TableEnergy::new(table_space, table).unwrap(), 100, 3);
    }

    #[test]
    fn table_energy_matches_enumeration() {
        let space = DiscreteSpace::binary(3).unwrap();
        let table: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let model = TableEnergy::new(space, table.clone()).unwrap();
        for (i, s) in space
            .enumerate(DEFAULT_ENUM_CAP)
            .unwrap()
            .iter()
            .enumerate()
        {
            assert_eq!(model.energy(s), table[i]);
            assert_relative_eq!(model.energy_real(&s.to_real()), table[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn counting_wrapper_counts() {
        let space = DiscreteSpace::binary(2).unwrap();
        let model = CountingEnergy::new(
            LogQuadraticModel::new(space, vec![0.0; 4], vec![0.5, -0.5]).unwrap(),
        );
        let s = StateVector::new(vec![0, 1], space).unwrap();
        model.energy(&s);
        model.energy(&s);
        model.gradient(&s);
        assert_eq!(model.energy_calls(), 2);
        assert_eq!(model.gradient_calls(), 1);
    }
}
