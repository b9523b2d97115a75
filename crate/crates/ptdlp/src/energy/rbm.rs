//! Restricted Boltzmann machine energy over binary visibles, with the hidden
//! layer marginalized out: `U(θ) = Σᵢ softplus(Wθ + a)ᵢ + bᵀθ`.

use super::{sigmoid, softplus, EnergyModel};
use crate::error::{Error, Result};
use crate::space::{DiscreteSpace, StateVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbmModel {
    pub n_hidden: usize,
    pub n_visible: usize,
    /// Row-major `n_hidden × n_visible` coupling matrix.
    pub w: Vec<f64>,
    /// Hidden bias, length `n_hidden`.
    pub a: Vec<f64>,
    /// Visible bias, length `n_visible`.
    pub b: Vec<f64>,
}

impl RbmModel {
    pub fn new(
        n_hidden: usize,
        n_visible: usize,
        w: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        if w.len() != n_hidden * n_visible {
            return Err(Error::DimensionMismatch {
                expected: n_hidden * n_visible,
                got: w.len(),
            });
        }
        if a.len() != n_hidden {
            return Err(Error::DimensionMismatch {
                expected: n_hidden,
                got: a.len(),
            });
        }
        if b.len() != n_visible {
            return Err(Error::DimensionMismatch {
                expected: n_visible,
                got: b.len(),
            });
        }
        Ok(Self {
            n_hidden,
            n_visible,
            w,
            a,
            b,
        })
    }

    pub fn zeros(n_hidden: usize, n_visible: usize) -> Self {
        Self {
            n_hidden,
            n_visible,
            w: vec![0.0; n_hidden * n_visible],
            a: vec![0.0; n_hidden],
            b: vec![0.0; n_visible],
        }
    }

    /// Pre-activations `Wx + a` of the hidden layer, with `W` scaled by
    /// `w_scale` (used by the annealing path, which tempers only the coupling).
    pub fn hidden_input_scaled(&self, x: &[f64], w_scale: f64) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_visible);
        let mut out = self.a.clone();
        for i in 0..self.n_hidden {
            let row = &self.w[i * self.n_visible..(i + 1) * self.n_visible];
            let mut acc = 0.0;
            for (wij, xj) in row.iter().zip(x) {
                acc += wij * xj;
            }
            out[i] += w_scale * acc;
        }
        out
    }

    pub fn hidden_input(&self, x: &[f64]) -> Vec<f64> {
        self.hidden_input_scaled(x, 1.0)
    }

    /// `Wᵀh + b`, optionally with `W` scaled.
    pub fn visible_input_scaled(&self, h: &[f64], w_scale: f64) -> Vec<f64> {
        debug_assert_eq!(h.len(), self.n_hidden);
        let mut out = self.b.clone();
        for i in 0..self.n_hidden {
            if h[i] == 0.0 {
                continue;
            }
            let row = &self.w[i * self.n_visible..(i + 1) * self.n_visible];
            for (oj, wij) in out.iter_mut().zip(row) {
                *oj += w_scale * h[i] * wij;
            }
        }
        out
    }

    /// Marginal energy with the coupling scaled; `energy_real_scaled(x, 1.0)`
    /// is the model energy.
    pub fn energy_real_scaled(&self, x: &[f64], w_scale: f64) -> f64 {
        let pre = self.hidden_input_scaled(x, w_scale);
        let hidden: f64 = pre.into_iter().map(softplus).sum();
        let visible: f64 = self.b.iter().zip(x).map(|(bj, xj)| bj * xj).sum();
        hidden + visible
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: RbmModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        RbmModel::new(model.n_hidden, model.n_visible, model.w, model.a, model.b)
    }
}

impl EnergyModel for RbmModel {
    fn space(&self) -> DiscreteSpace {
        DiscreteSpace::binary(self.n_visible).expect("n_visible >= 1")
    }

    fn energy(&self, state: &StateVector) -> f64 {
        self.energy_real(&state.to_real())
    }

    fn energy_real(&self, x: &[f64]) -> f64 {
        self.energy_real_scaled(x, 1.0)
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        // ∇U(θ) = Wᵀ σ(Wθ + a) + b
        let x = state.to_real();
        let probs: Vec<f64> = self.hidden_input(&x).into_iter().map(sigmoid).collect();
        self.visible_input_scaled(&probs, 1.0)
    }
}
