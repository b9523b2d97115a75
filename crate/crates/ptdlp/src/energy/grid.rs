//! Two-dimensional mixture targets (Gaussian or Student-t components)
//! discretized on a rectangular grid of cells. The energy of a cell is the
//! continuous mixture log-density at the cell center; the gradient is the
//! analytic log-density gradient there, scaled to index units.

use super::EnergyModel;
use crate::error::{Error, Result};
use crate::space::{DiscreteSpace, StateVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureFamily {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Symmetric positive-definite 2×2 covariance (scale matrix for Student-t).
    pub cov: [[f64; 2]; 2],
    /// Degrees of freedom; required for Student-t components.
    pub dof: Option<f64>,
}

#[derive(Debug, Clone)]
struct ComponentCached {
    log_weight: f64,
    mean: [f64; 2],
    inv: [[f64; 2]; 2],
    /// Density normalizer in log space (without the weight).
    log_norm: f64,
    dof: f64,
}

#[derive(Debug, Clone)]
pub struct GridMixtureModel {
    space: DiscreteSpace,
    family: MixtureFamily,
    components: Vec<MixtureComponent>,
    cached: Vec<ComponentCached>,
    bounds: [f64; 4], // x0, x1, y0, y1
    cells: usize,
    widths: [f64; 2],
    log_table: Vec<f64>,
}

impl GridMixtureModel {
    /// `bounds = [x0, x1, y0, y1]`; each axis is split into `cells` intervals.
    pub fn new(
        family: MixtureFamily,
        components: Vec<MixtureComponent>,
        bounds: [f64; 4],
        cells: usize,
    ) -> Result<Self> {
        if cells < 2 {
            return Err(Error::invalid("cells", "need at least 2 cells per axis"));
        }
        if bounds[1] <= bounds[0] || bounds[3] <= bounds[2] {
            return Err(Error::invalid("bounds", "rectangle must be non-degenerate"));
        }
        if components.is_empty() {
            return Err(Error::invalid(
                "components",
                "mixture needs at least one component",
            ));
        }
        let total_weight: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| c.weight <= 0.0) || (total_weight - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "weight",
                "weights must be positive and sum to 1",
            ));
        }
        let mut cached = Vec::with_capacity(components.len());
        for c in &components {
            let det = c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[1][0];
            if det <= 0.0 || c.cov[0][0] <= 0.0 || (c.cov[0][1] - c.cov[1][0]).abs() > 1e-12 {
                return Err(Error::invalid("cov", "must be symmetric positive-definite"));
            }
            let inv = [
                [c.cov[1][1] / det, -c.cov[0][1] / det],
                [-c.cov[1][0] / det, c.cov[0][0] / det],
            ];
            let (log_norm, dof) = match family {
                MixtureFamily::Gaussian => (
                    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
                    f64::NAN,
                ),
                MixtureFamily::StudentT => {
                    let nu = c.dof.ok_or_else(|| {
                        Error::invalid("dof", "Student-t components need degrees of freedom")
                    })?;
                    if nu <= 0.0 {
                        return Err(Error::invalid("dof", "must be positive"));
                    }
                    let ln = ln_gamma((nu + 2.0) / 2.0)
                        - ln_gamma(nu / 2.0)
                        - (nu * std::f64::consts::PI).ln()
                        - 0.5 * det.ln();
                    (ln, nu)
                }
            };
            cached.push(ComponentCached {
                log_weight: c.weight.ln(),
                mean: c.mean,
                inv,
                log_norm,
                dof,
            });
        }
        let space = DiscreteSpace::ordinal(2, (cells - 1) as u32)?;
        let widths = [
            (bounds[1] - bounds[0]) / cells as f64,
            (bounds[3] - bounds[2]) / cells as f64,
        ];
        let mut model = Self {
            space,
            family,
            components,
            cached,
            bounds,
            cells,
            widths,
            log_table: Vec::new(),
        };
        let mut table = Vec::with_capacity(cells * cells);
        for i in 0..cells {
            for j in 0..cells {
                let center = model.cell_center(i as u32, j as u32);
                table.push(model.log_density(&center));
            }
        }
        model.log_table = table;
        Ok(model)
    }

    /// Components of equal weight spaced uniformly on a circle; the standard
    /// synthetic multimodal instance.
    pub fn ring(
        family: MixtureFamily,
        n_components: usize,
        radius: f64,
        variance: f64,
        dof: Option<f64>,
        bounds: [f64; 4],
        cells: usize,
    ) -> Result<Self> {
        let w = 1.0 / n_components as f64;
        let components = (0..n_components)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / n_components as f64;
                MixtureComponent {
                    weight: w,
                    mean: [radius * angle.cos(), radius * angle.sin()],
                    cov: [[variance, 0.0], [0.0, variance]],
                    dof,
                }
            })
            .collect();
        Self::new(family, components, bounds, cells)
    }

    pub fn family(&self) -> MixtureFamily {
        self.family
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn cell_center(&self, i: u32, j: u32) -> [f64; 2] {
        [
            self.bounds[0] + (i as f64 + 0.5) * self.widths[0],
            self.bounds[2] + (j as f64 + 0.5) * self.widths[1],
        ]
    }

    pub fn center_of(&self, state: &StateVector) -> [f64; 2] {
        self.cell_center(state.values()[0], state.values()[1])
    }

    /// Continuous mixture log-density at a point.
    pub fn log_density(&self, x: &[f64; 2]) -> f64 {
        let terms: Vec<f64> = self
            .cached
            .iter()
            .map(|c| c.log_weight + self.comp_log_density(c, x))
            .collect();
        super::log_sum_exp(&terms)
    }

    fn comp_log_density(&self, c: &ComponentCached, x: &[f64; 2]) -> f64 {
        let d = [x[0] - c.mean[0], x[1] - c.mean[1]];
        let q = d[0] * (c.inv[0][0] * d[0] + c.inv[0][1] * d[1])
            + d[1] * (c.inv[1][0] * d[0] + c.inv[1][1] * d[1]);
        match self.family {
            MixtureFamily::Gaussian => c.log_norm - 0.5 * q,
            MixtureFamily::StudentT => c.log_norm - 0.5 * (c.dof + 2.0) * (q / c.dof).ln_1p(),
        }
    }

    /// Analytic gradient of the mixture log-density at a point (in x units).
    pub fn log_density_gradient(&self, x: &[f64; 2]) -> [f64; 2] {
        let log_terms: Vec<f64> = self
            .cached
            .iter()
            .map(|c| c.log_weight + self.comp_log_density(c, x))
            .collect();
        let log_mix = super::log_sum_exp(&log_terms);
        let mut g = [0.0; 2];
        for (c, lt) in self.cached.iter().zip(&log_terms) {
            let resp = (lt - log_mix).exp();
            let d = [x[0] - c.mean[0], x[1] - c.mean[1]];
            let sd = [
                c.inv[0][0] * d[0] + c.inv[0][1] * d[1],
                c.inv[1][0] * d[0] + c.inv[1][1] * d[1],
            ];
            let scale = match self.family {
                MixtureFamily::Gaussian => 1.0,
                MixtureFamily::StudentT => {
                    let q = d[0] * sd[0] + d[1] * sd[1];
                    (c.dof + 2.0) / (c.dof + q)
                }
            };
            g[0] -= resp * scale * sd[0];
            g[1] -= resp * scale * sd[1];
        }
        g
    }

    /// Probabilities of all cells, normalized over the grid (row-major, the
    /// same ordering as state enumeration).
    pub fn normalized_probs(&self) -> Vec<f64> {
        let log_z = super::log_sum_exp(&self.log_table);
        self.log_table.iter().map(|lt| (lt - log_z).exp()).collect()
    }

    /// Posterior over mixture components given a cell, evaluated at its
    /// center: `p(k | x) ∝ weight_k · f_k(x)`.
    pub fn mode_posterior(&self, state: &StateVector) -> Vec<f64> {
        let x = self.center_of(state);
        let log_terms: Vec<f64> = self
            .cached
            .iter()
            .map(|c| c.log_weight + self.comp_log_density(c, &x))
            .collect();
        let log_mix = super::log_sum_exp(&log_terms);
        log_terms.iter().map(|lt| (lt - log_mix).exp()).collect()
    }
}

impl EnergyModel for GridMixtureModel {
    fn space(&self) -> DiscreteSpace {
        self.space
    }

    fn energy(&self, state: &StateVector) -> f64 {
        let v = state.values();
        self.log_table[v[0] as usize * self.cells + v[1] as usize]
    }

    /// Real relaxation over fractional cell indices.
    fn energy_real(&self, u: &[f64]) -> f64 {
        let x = [
            self.bounds[0] + (u[0] + 0.5) * self.widths[0],
            self.bounds[2] + (u[1] + 0.5) * self.widths[1],
        ];
        self.log_density(&x)
    }

    fn gradient(&self, state: &StateVector) -> Vec<f64> {
        let x = self.center_of(state);
        let g = self.log_density_gradient(&x);
        vec![g[0] * self.widths[0], g[1] * self.widths[1]]
    }
}

/// Lanczos approximation of `ln Γ(x)` for positive arguments, accurate to
/// roughly 1e-13 over the range used here.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::finite_difference_gradient;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn small_mog() -> GridMixtureModel {
        GridMixtureModel::ring(
            MixtureFamily::Gaussian,
            4,
            2.0,
            0.25,
            None,
            [-4.0, 4.0, -4.0, 4.0],
            100,
        )
        .unwrap()
    }

    #[test]
    fn ln_gamma_reference_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            ln_gamma(0.5),
            0.5 * std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(ln_gamma(5.0), 24.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(ln_gamma(3.5), 1.2009736023470743, epsilon = 1e-12);
    }

    #[test]
    fn table_normalizes_to_one() {
        let model = small_mog();
        let probs = model.normalized_probs();
        assert_eq!(probs.len(), 10_000);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "sum = {sum}");
    }

    #[test]
    fn weights_must_sum_to_one() {
        let comps = vec![MixtureComponent {
            weight: 0.5,
            mean: [0.0, 0.0],
            cov: [[1.0, 0.0], [0.0, 1.0]],
            dof: None,
        }];
        assert!(
            GridMixtureModel::new(MixtureFamily::Gaussian, comps, [-1.0, 1.0, -1.0, 1.0], 10)
                .is_err()
        );
    }

    #[test]
    fn gaussian_gradient_matches_finite_differences() {
        let model = small_mog();
        let space = model.space();
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let s = space.uniform_state(&mut rng);
            let g = model.gradient(&s);
            let fd = finite_difference_gradient(&model, &s, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!(
                    (a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-4,
                    "analytic {a} vs fd {b}"
                );
            }
        }
    }

    #[test]
    fn student_t_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(3);
        let model = GridMixtureModel::ring(
            MixtureFamily::StudentT,
            3,
            2.5,
            0.3,
            Some(2.0),
            [-4.0, 4.0, -4.0, 4.0],
            64,
        )
        .unwrap();
        let space = model.space();
        for _ in 0..100 {
            let s = space.uniform_state(&mut rng);
            let g = model.gradient(&s);
            let fd = finite_difference_gradient(&model, &s, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-4);
            }
        }
    }

    #[test]
    fn student_t_density_integrates_close_to_one() {
        // sanity on the normalizer: fine grid over a wide box covers the mass
        let model = GridMixtureModel::new(
            MixtureFamily::StudentT,
            vec![MixtureComponent {
                weight: 1.0,
                mean: [0.0, 0.0],
                cov: [[0.5, 0.1], [0.1, 0.4]],
                dof: Some(8.0),
            }],
            [-30.0, 30.0, -30.0, 30.0],
            600,
        )
        .unwrap();
        let cell_area = 0.1 * 0.1;
        let mass: f64 = model.log_table.iter().map(|lt| lt.exp() * cell_area).sum();
        assert!((mass - 1.0).abs() < 2e-2, "mass = {mass}");
    }

    #[test]
    fn mode_posterior_is_normalized_and_peaked() {
        let model = small_mog();
        let space = model.space();
        // cell nearest the first component mean (2, 0) -> x index ~ 75, y ~ 50
        let s = StateVector::new(vec![74, 49], space).unwrap();
        let post = model.mode_posterior(&s);
        assert_eq!(post.len(), 4);
        assert_relative_eq!(post.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(post[0] > 0.99, "posterior {post:?}");
    }
}
