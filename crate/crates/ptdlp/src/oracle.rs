//! Exact verification on enumerable instances: dense one-step transition
//! kernels for single chains and full replica ensembles, stationary
//! distributions by power iteration, detailed-balance residuals, and total
//! variation decay curves.
//!
//! The ensemble kernel mirrors [`crate::tempering::ReplicaEnsemble`] exactly:
//! with the standard criterion the one-step kernel is the average of the
//! local-then-ascending-sweep and descending-sweep-then-local phase orders
//! (the same fair coin the sampler flips), which makes it reversible with
//! respect to `∏ π^{β_k}`. With the tailored criterion the swap operator is
//! composed over the intermediate post-local states so the four-energy
//! bracket is represented exactly.

use crate::chain::mh_accept_prob;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::proposal::{coordinate_weights, ChainParams, CoordinateGradient};
use crate::space::{SpaceKind, StateVector};
use crate::tempering::{standard_swap_probability, swap_probability, SwapCriterion};

/// Dense row-stochastic transition matrix over an enumerated state space.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    n: usize,
    matrix: Vec<f64>,
}

impl ExactKernel {
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: matrix.len(),
            });
        }
        let kernel = Self { n, matrix };
        let dev = kernel.max_row_sum_deviation();
        if dev > 1e-9 || kernel.matrix.iter().any(|p| *p < -1e-15) {
            return Err(Error::invalid("matrix", "rows must be stochastic"));
        }
        Ok(kernel)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n..(i + 1) * self.n]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One step of the distribution evolution `v ← vP`.
    pub fn apply_left(&self, dist: &[f64]) -> Vec<f64> {
        debug_assert_eq!(dist.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, &vi) in dist.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, pij) in out.iter_mut().zip(self.row(i)) {
                *o += vi * pij;
            }
        }
        out
    }

    /// The matrix as CSV (one row per line, no header), for inspection.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|p| format!("{p}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// A probability vector as one CSV line (fixed points, marginals).
pub fn distribution_to_csv(dist: &[f64]) -> String {
    let cells: Vec<String> = dist.iter().map(|p| format!("{p}")).collect();
    let mut out = cells.join(",");
    out.push('\n');
    out
}

/// Per-state normalized proposal weight tables for every coordinate.
struct WeightTables {
    /// `[state][coordinate][level]`
    tables: Vec<Vec<Vec<f64>>>,
}

impl WeightTables {
    fn build<M: EnergyModel + ?Sized>(
        model: &M,
        states: &[StateVector],
        params: &ChainParams,
    ) -> Result<Self> {
        let kind = model.space().kind();
        let mut tables = Vec::with_capacity(states.len());
        for state in states {
            let grad = model.gradient(state);
            let per_coord: Result<Vec<Vec<f64>>> = state
                .values()
                .iter()
                .enumerate()
                .map(|(c, &cur)| {
                    let g = match kind {
                        SpaceKind::Binary | SpaceKind::Ordinal { .. } => {
                            CoordinateGradient::Scalar(grad[c])
                        }
                        SpaceKind::OneHot { levels } => {
                            let levels = levels as usize;
                            CoordinateGradient::PerLevel(&grad[c * levels..(c + 1) * levels])
                        }
                    };
                    coordinate_weights(g, cur, params, kind)
                })
                .collect();
            tables.push(per_coord?);
        }
        Ok(Self { tables })
    }

    /// `q(to | from)` as a product over coordinates.
    fn transition(&self, from: usize, to: &StateVector) -> f64 {
        let mut q = 1.0;
        for (c, &v) in to.values().iter().enumerate() {
            q *= self.tables[from][c][v as usize];
        }
        q
    }
}

/// Exact one-step kernel of a single DULA (`adjusted = false`) or DMALA
/// chain at the given parameters.
pub fn exact_local_kernel<M: EnergyModel + ?Sized>(
    model: &M,
    params: &ChainParams,
    adjusted: bool,
    cap: u64,
) -> Result<ExactKernel> {
    let space = model.space();
    let states = space.enumerate(cap)?;
    let n = states.len();
    let tables = WeightTables::build(model, &states, params)?;
    let energies: Vec<f64> = states.iter().map(|s| model.energy(s)).collect();
    let mut matrix = vec![0.0; n * n];
    for x in 0..n {
        if !adjusted {
            for (y, sy) in states.iter().enumerate() {
                matrix[x * n + y] = tables.transition(x, sy);
            }
            continue;
        }
        let mut off_diagonal = 0.0;
        for (y, sy) in states.iter().enumerate() {
            if y == x {
                continue;
            }
            let q_fwd = tables.transition(x, sy);
            let q_rev = tables.transition(y, &states[x]);
            let accept = mh_accept_prob(
                energies[x],
                energies[y],
                q_fwd.ln(),
                q_rev.ln(),
                params.beta,
            );
            let p = q_fwd * accept;
            matrix[x * n + y] = p;
            off_diagonal += p;
        }
        matrix[x * n + x] = 1.0 - off_diagonal;
    }
    ExactKernel::from_matrix(n, matrix)
}

#[derive(Debug, Clone)]
pub struct PtKernelOptions {
    pub betas: Vec<f64>,
    /// One shared step size or one per chain.
    pub alphas: Vec<f64>,
    pub p: f64,
    pub rho: f64,
    pub adjusted: bool,
    pub criterion: SwapCriterion,
}

/// Exact one-ensemble-step kernel over the joint space `Θ^K`. Joint states
/// are indexed in mixed radix with chain 0 most significant, so the first
/// chain's marginal of a joint distribution is a sum over contiguous blocks.
pub fn exact_pt_kernel<M: EnergyModel + ?Sized>(
    model: &M,
    opts: &PtKernelOptions,
    cap: u64,
) -> Result<ExactKernel> {
    crate::tempering::validate_schedule(&opts.betas)?;
    let k = opts.betas.len();
    let space = model.space();
    let n_single = space.checked_count(cap)? as usize;
    let mut n_joint: u128 = 1;
    for _ in 0..k {
        n_joint = n_joint.saturating_mul(n_single as u128);
    }
    if n_joint > cap as u128 {
        return Err(Error::SpaceTooLarge { size: n_joint, cap });
    }
    let n_joint = n_joint as usize;

    let alpha_of = |i: usize| -> Result<f64> {
        match opts.alphas.len() {
            1 => Ok(opts.alphas[0]),
            n if n == k => Ok(opts.alphas[i]),
            n => Err(Error::DimensionMismatch {
                expected: k,
                got: n,
            }),
        }
    };
    let mut locals = Vec::with_capacity(k);
    for i in 0..k {
        let params = ChainParams::with_p(opts.betas[i], alpha_of(i)?, opts.p)?;
        locals.push(exact_local_kernel(model, &params, opts.adjusted, cap)?);
    }
    let states = space.enumerate(cap)?;
    let energies: Vec<f64> = states.iter().map(|s| model.energy(s)).collect();

    let decode = |mut joint: usize| -> Vec<usize> {
        let mut idx = vec![0usize; k];
        for slot in (0..k).rev() {
            idx[slot] = joint % n_single;
            joint /= n_single;
        }
        idx
    };

    // product-of-locals row from per-chain source indices
    let product_row = |sources: &[usize], out: &mut [f64]| {
        out.fill(1.0);
        let rows: Vec<&[f64]> = (0..k).map(|c| locals[c].row(sources[c])).collect();
        for (joint, slot) in out.iter_mut().enumerate() {
            let mut q = 1.0;
            let mut rem = joint;
            for c in (0..k).rev() {
                q *= rows[c][rem % n_single];
                rem /= n_single;
            }
            *slot = q;
        }
    };

    // one pairwise swap operator applied to a dense joint distribution
    let apply_swap = |pair: usize,
                      vec: &mut Vec<f64>,
                      scratch: &mut Vec<f64>,
                      s_of: &dyn Fn(usize, usize) -> f64| {
        scratch.fill(0.0);
        let stride_hot = n_single.pow((k - 2 - pair) as u32);
        let stride_cold = stride_hot * n_single;
        for (joint, &mass) in vec.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let cold = (joint / stride_cold) % n_single;
            let hot = (joint / stride_hot) % n_single;
            let s = s_of(cold, hot);
            let ps = opts.rho * s;
            if ps > 0.0 && cold != hot {
                let swapped = swap_index(joint, cold, hot, stride_cold, stride_hot);
                scratch[swapped] += mass * ps;
                scratch[joint] += mass * (1.0 - ps);
            } else {
                scratch[joint] += mass;
            }
        }
        std::mem::swap(vec, scratch);
    };

    let mut matrix = vec![0.0; n_joint * n_joint];
    let mut row = vec![0.0; n_joint];
    let mut scratch = vec![0.0; n_joint];

    match opts.criterion {
        SwapCriterion::Tailored => {
            for x in 0..n_joint {
                let sources = decode(x);
                let prev: Vec<f64> = sources.iter().map(|&s| energies[s]).collect();
                product_row(&sources, &mut row);
                for pair in 0..k - 1 {
                    let betas = (opts.betas[pair], opts.betas[pair + 1]);
                    let prev_pair = (prev[pair], prev[pair + 1]);
                    apply_swap(pair, &mut row, &mut scratch, &|cold, hot| {
                        swap_probability(
                            betas.0,
                            betas.1,
                            energies[hot],
                            prev_pair.1,
                            energies[cold],
                            prev_pair.0,
                        )
                        .expect("finite energies")
                    });
                }
                matrix[x * n_joint..(x + 1) * n_joint].copy_from_slice(&row);
            }
        }
        SwapCriterion::Standard => {
            // T = ½ (L · S_asc + S_desc · L); the swap probability depends
            // only on the current pair of states.
            let energies_ref: &[f64] = &energies;
            for x in 0..n_joint {
                let sources = decode(x);
                // forward order: locals then ascending sweep
                product_row(&sources, &mut row);
                for pair in 0..k - 1 {
                    let (bc, bh) = (opts.betas[pair], opts.betas[pair + 1]);
                    apply_swap(pair, &mut row, &mut scratch, &move |cold, hot| {
                        standard_swap_probability(bc, bh, energies_ref[hot], energies_ref[cold])
                    });
                }
                // mirrored order: descending sweep on the start state, then locals
                let mut pre = vec![0.0; n_joint];
                pre[x] = 1.0;
                for pair in (0..k - 1).rev() {
                    let (bc, bh) = (opts.betas[pair], opts.betas[pair + 1]);
                    apply_swap(pair, &mut pre, &mut scratch, &move |cold, hot| {
                        standard_swap_probability(bc, bh, energies_ref[hot], energies_ref[cold])
                    });
                }
                let base = x * n_joint;
                for slot in matrix[base..base + n_joint].iter_mut().zip(row.iter()) {
                    *slot.0 = 0.5 * slot.1;
                }
                let mut mid_row = vec![0.0; n_joint];
                for (mid, &mass) in pre.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    let mid_sources = decode(mid);
                    product_row(&mid_sources, &mut mid_row);
                    for (slot, q) in matrix[base..base + n_joint].iter_mut().zip(mid_row.iter()) {
                        *slot += 0.5 * mass * q;
                    }
                }
            }
        }
    }
    ExactKernel::from_matrix(n_joint, matrix)
}

fn swap_index(
    joint: usize,
    cold: usize,
    hot: usize,
    stride_cold: usize,
    stride_hot: usize,
) -> usize {
    joint - cold * stride_cold - hot * stride_hot + hot * stride_cold + cold * stride_hot
}

/// Tempered target `exp(βU)/Z_β` over the enumerated space.
pub fn tempered_target<M: EnergyModel + ?Sized>(
    model: &M,
    beta: f64,
    cap: u64,
) -> Result<Vec<f64>> {
    let states = model.space().enumerate(cap)?;
    let log_w: Vec<f64> = states.iter().map(|s| beta * model.energy(s)).collect();
    Ok(normalize_log_weights(&log_w))
}

/// Product target `∏_k π^{β_k}` over the joint space, indexed to match
/// [`exact_pt_kernel`].
pub fn product_target<M: EnergyModel + ?Sized>(
    model: &M,
    betas: &[f64],
    cap: u64,
) -> Result<Vec<f64>> {
    let states = model.space().enumerate(cap)?;
    let n = states.len();
    let energies: Vec<f64> = states.iter().map(|s| model.energy(s)).collect();
    let k = betas.len();
    let mut n_joint = 1usize;
    for _ in 0..k {
        n_joint *= n;
    }
    let mut log_w = vec![0.0; n_joint];
    for (joint, slot) in log_w.iter_mut().enumerate() {
        let mut rem = joint;
        let mut acc = 0.0;
        for c in (0..k).rev() {
            acc += betas[c] * energies[rem % n];
            rem /= n;
        }
        *slot = acc;
    }
    Ok(normalize_log_weights(&log_w))
}

fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Marginal of the first chain from a joint distribution over `Θ^K`.
pub fn first_chain_marginal(joint_dist: &[f64], n_single: usize) -> Vec<f64> {
    let block = joint_dist.len() / n_single;
    (0..n_single)
        .map(|i| joint_dist[i * block..(i + 1) * block].iter().sum())
        .collect()
}

/// Total variation distance between two distributions.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

const POWER_ITERATION_TOL: f64 = 1e-13;
const POWER_ITERATION_MAX: usize = 1_000_000;

/// Left fixed point by power iteration, with a second run from a skewed
/// start to reject kernels without a unique stationary distribution.
pub fn stationary_distribution(kernel: &ExactKernel) -> Result<Vec<f64>> {
    let fixed_from = |mut v: Vec<f64>| -> Result<Vec<f64>> {
        for _ in 0..POWER_ITERATION_MAX {
            let next = kernel.apply_left(&v);
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < POWER_ITERATION_TOL {
                let z: f64 = v.iter().sum();
                return Ok(v.into_iter().map(|x| x / z).collect());
            }
        }
        Err(Error::NonConvergence(POWER_ITERATION_MAX))
    };
    let n = kernel.dim();
    let uniform = vec![1.0 / n as f64; n];
    let mut skewed = vec![0.0; n];
    skewed[0] = 0.75;
    for (i, s) in skewed.iter_mut().enumerate().skip(1) {
        *s = 0.25 / (n - 1) as f64;
        let _ = i;
    }
    let a = fixed_from(uniform)?;
    let b = fixed_from(skewed)?;
    if tv_distance(&a, &b) > 1e-8 {
        return Err(Error::NotIrreducible);
    }
    Ok(a)
}

/// `max_{x,y} |π(x)P(x,y) − π(y)P(y,x)|`.
pub fn detailed_balance_residual(kernel: &ExactKernel, pi: &[f64]) -> f64 {
    let n = kernel.dim();
    let mut residual = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let f = pi[x] * kernel.entry(x, y) - pi[y] * kernel.entry(y, x);
            residual = residual.max(f.abs());
        }
    }
    residual
}

/// TV distances to the kernel's stationary distribution after 1..=n steps.
pub fn tv_curve(kernel: &ExactKernel, init: &[f64], n_steps: usize) -> Result<Vec<f64>> {
    if init.len() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: init.len(),
        });
    }
    let stationary = stationary_distribution(kernel)?;
    let mut v = init.to_vec();
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        v = kernel.apply_left(&v);
        out.push(tv_distance(&v, &stationary));
    }
    Ok(out)
}

/// Least-squares slope and R² of `ln y` against the step index, over the
/// window `[from, to)` of a TV curve. The geometric-decay check.
pub fn log_linear_fit(curve: &[f64], from: usize, to: usize) -> Result<(f64, f64)> {
    if from >= to || to > curve.len() {
        return Err(Error::invalid("window", "must lie inside the curve"));
    }
    let xs: Vec<f64> = (from..to).map(|i| i as f64).collect();
    let ys: Result<Vec<f64>> = curve[from..to]
        .iter()
        .map(|v| {
            if *v <= 0.0 {
                Err(Error::invalid("curve", "TV already at exactly zero"))
            } else {
                Ok(v.ln())
            }
        })
        .collect();
    let ys = ys?;
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{LogQuadraticModel, TableEnergy};
    use crate::space::DiscreteSpace;
    use approx::assert_relative_eq;

    const CAP: u64 = 1 << 14;

    fn quadratic_d2() -> LogQuadraticModel {
        let space = DiscreteSpace::binary(2).unwrap();
        LogQuadraticModel::new(space, vec![0.5, -0.4, -0.4, 0.2], vec![0.8, -0.5]).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let model = quadratic_d2();
        for adjusted in [false, true] {
            let kernel =
                exact_local_kernel(&model, &ChainParams::new(0.8, 0.6).unwrap(), adjusted, CAP)
                    .unwrap();
            assert!(kernel.max_row_sum_deviation() < 1e-12);
        }
    }

    #[test]
    fn flat_unadjusted_kernel_is_uniform() {
        let model = quadratic_d2();
        let kernel = exact_local_kernel(
            &model,
            &ChainParams::new(0.0, f64::INFINITY).unwrap(),
            false,
            CAP,
        )
        .unwrap();
        for i in 0..kernel.dim() {
            for j in 0..kernel.dim() {
                assert_relative_eq!(kernel.entry(i, j), 0.25, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn adjusted_kernel_targets_tempered_distribution() {
        let model = quadratic_d2();
        let beta = 0.7;
        let kernel =
            exact_local_kernel(&model, &ChainParams::new(beta, 0.6).unwrap(), true, CAP).unwrap();
        let stationary = stationary_distribution(&kernel).unwrap();
        let target = tempered_target(&model, beta, CAP).unwrap();
        assert!(tv_distance(&stationary, &target) < 1e-10);
        // and satisfies detailed balance against it
        assert!(detailed_balance_residual(&kernel, &target) < 1e-12);
    }

    #[test]
    fn unadjusted_kernel_is_biased_on_rough_targets() {
        let space = DiscreteSpace::binary(3).unwrap();
        let table = vec![1.8, -0.7, 0.4, 0.1, -1.2, 0.9, 0.0, 2.2];
        let model = TableEnergy::new(space, table).unwrap();
        let kernel =
            exact_local_kernel(&model, &ChainParams::new(1.0, 0.5).unwrap(), false, CAP).unwrap();
        let target = tempered_target(&model, 1.0, CAP).unwrap();
        let residual = detailed_balance_residual(&kernel, &target);
        assert!(residual > 1e-6, "expected visible bias, got {residual}");
    }

    #[test]
    fn identity_kernel_has_no_unique_fixed_point() {
        let n = 4;
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        let kernel = ExactKernel::from_matrix(n, eye).unwrap();
        assert!(matches!(
            stationary_distribution(&kernel),
            Err(Error::NotIrreducible)
        ));
    }

    #[test]
    fn doubly_stochastic_kernel_is_uniform() {
        let kernel =
            ExactKernel::from_matrix(3, vec![0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5]).unwrap();
        let stationary = stationary_distribution(&kernel).unwrap();
        for p in stationary {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_kernel_uniform_target_balances_exactly() {
        let kernel = ExactKernel::from_matrix(2, vec![0.7, 0.3, 0.3, 0.7]).unwrap();
        assert_eq!(detailed_balance_residual(&kernel, &[0.5, 0.5]), 0.0);
    }

    #[test]
    fn pt_kernel_with_rho_zero_is_the_tensor_product() {
        let model = quadratic_d2();
        let opts = PtKernelOptions {
            betas: vec![1.0, 0.5],
            alphas: vec![0.6],
            p: 2.0,
            rho: 0.0,
            adjusted: true,
            criterion: SwapCriterion::Standard,
        };
        let joint = exact_pt_kernel(&model, &opts, CAP).unwrap();
        let l1 =
            exact_local_kernel(&model, &ChainParams::new(1.0, 0.6).unwrap(), true, CAP).unwrap();
        let l2 =
            exact_local_kernel(&model, &ChainParams::new(0.5, 0.6).unwrap(), true, CAP).unwrap();
        let n = l1.dim();
        for x0 in 0..n {
            for x1 in 0..n {
                for y0 in 0..n {
                    for y1 in 0..n {
                        let expect = l1.entry(x0, y0) * l2.entry(x1, y1);
                        let got = joint.entry(x0 * n + x1, y0 * n + y1);
                        assert!((got - expect).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn single_chain_pt_kernel_equals_local_kernel() {
        let model = quadratic_d2();
        let opts = PtKernelOptions {
            betas: vec![1.0],
            alphas: vec![0.4],
            p: 2.0,
            rho: 1.0,
            adjusted: true,
            criterion: SwapCriterion::Standard,
        };
        let joint = exact_pt_kernel(&model, &opts, CAP).unwrap();
        let local =
            exact_local_kernel(&model, &ChainParams::new(1.0, 0.4).unwrap(), true, CAP).unwrap();
        for i in 0..local.dim() {
            for j in 0..local.dim() {
                assert!((joint.entry(i, j) - local.entry(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn standard_pt_dmala_kernel_is_exactly_reversible() {
        // the module's reason to exist: the adjusted ensemble kernel with
        // the standard swap and randomized phase order satisfies detailed
        // balance against ∏ π^{β_k} to machine precision
        let space = DiscreteSpace::binary(1).unwrap();
        let model = LogQuadraticModel::linear(space, vec![1.0]).unwrap(); // U(0)=0, U(1)=1
        let opts = PtKernelOptions {
            betas: vec![1.0, 0.5],
            alphas: vec![0.5],
            p: 2.0,
            rho: 1.0,
            adjusted: true,
            criterion: SwapCriterion::Standard,
        };
        let kernel = exact_pt_kernel(&model, &opts, CAP).unwrap();
        let target = product_target(&model, &opts.betas, CAP).unwrap();
        let residual = detailed_balance_residual(&kernel, &target);
        assert!(residual < 1e-12, "residual {residual}");
        // first-chain stationary marginal is the β = 1 target
        let stationary = stationary_distribution(&kernel).unwrap();
        let marginal = first_chain_marginal(&stationary, 2);
        let pi = tempered_target(&model, 1.0, CAP).unwrap();
        assert!(tv_distance(&marginal, &pi) < 1e-10);
    }

    #[test]
    fn tailored_pt_kernel_is_stochastic_and_biased() {
        // the four-energy criterion composes into a valid stochastic kernel;
        // its stationary law deviates from the product target (recorded, not
        // asserted tight)
        let space = DiscreteSpace::binary(1).unwrap();
        let model = LogQuadraticModel::linear(space, vec![1.0]).unwrap();
        let opts = PtKernelOptions {
            betas: vec![1.0, 0.5],
            alphas: vec![0.5],
            p: 2.0,
            rho: 1.0,
            adjusted: true,
            criterion: SwapCriterion::Tailored,
        };
        let kernel = exact_pt_kernel(&model, &opts, CAP).unwrap();
        assert!(kernel.max_row_sum_deviation() < 1e-12);
        let stationary = stationary_distribution(&kernel).unwrap();
        let target = product_target(&model, &opts.betas, CAP).unwrap();
        let tv = tv_distance(&stationary, &target);
        assert!(tv < 0.1, "tailored-swap stationary drifted far: {tv}");
    }

    #[test]
    fn tv_curve_from_stationary_is_zero() {
        let model = quadratic_d2();
        let kernel =
            exact_local_kernel(&model, &ChainParams::new(1.0, 0.5).unwrap(), true, CAP).unwrap();
        let stationary = stationary_distribution(&kernel).unwrap();
        let curve = tv_curve(&kernel, &stationary, 20).unwrap();
        for v in curve {
            assert!(v < 1e-12);
        }
    }

    #[test]
    fn two_state_symmetric_kernel_decays_in_closed_form() {
        let q = 0.35;
        let kernel = ExactKernel::from_matrix(2, vec![1.0 - q, q, q, 1.0 - q]).unwrap();
        let curve = tv_curve(&kernel, &[1.0, 0.0], 30).unwrap();
        let rate: f64 = 1.0 - 2.0 * q;
        for (t, v) in curve.iter().enumerate() {
            let expect = 0.5 * rate.powi(t as i32 + 1);
            assert_relative_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_export_round_trips() {
        let kernel = ExactKernel::from_matrix(2, vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        let csv = kernel.to_csv();
        assert_eq!(csv, "0.25,0.75\n0.5,0.5\n");
        let parsed: Vec<f64> = csv
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(parsed, vec![0.25, 0.75, 0.5, 0.5]);
        assert_eq!(distribution_to_csv(&[0.125, 0.875]), "0.125,0.875\n");
    }

    #[test]
    fn tv_curves_are_nonincreasing() {
        let model = quadratic_d2();
        let kernel =
            exact_local_kernel(&model, &ChainParams::new(1.0, 0.5).unwrap(), true, CAP).unwrap();
        let mut init = vec![0.0; kernel.dim()];
        init[0] = 1.0;
        let curve = tv_curve(&kernel, &init, 200).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-13);
        }
    }
}
