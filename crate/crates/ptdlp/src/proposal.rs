//! The coordinate-factorized discrete Langevin proposal at inverse
//! temperature `β`, step size `α`, and p-norm regularizer:
//!
//! ```text
//! weight(θᵢ') ∝ exp( (β/2)·∇U(θ)ᵢ·(θᵢ' − θᵢ) − |θᵢ' − θᵢ|ᵖ / (2α) )
//! ```
//!
//! All coordinates are drawn independently from one gradient evaluation.
//! Exponents are max-subtracted before exponentiation so large gradients or
//! tiny step sizes cannot overflow.

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::space::{SpaceKind, StateVector};
use rand::Rng;

/// Per-chain proposal parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChainParams {
    /// Inverse temperature in [0, 1].
    pub beta: f64,
    /// Step size, strictly positive (infinity disables the regularizer).
    pub alpha: f64,
    /// Norm exponent, at least 1.
    pub p: f64,
}

impl ChainParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        Self::with_p(beta, alpha, 2.0)
    }

    pub fn with_p(beta: f64, alpha: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) || beta.is_nan() {
            return Err(Error::invalid("beta", format!("{beta} not in [0, 1]")));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("{alpha} must be positive")));
        }
        if !(p >= 1.0) {
            return Err(Error::invalid("p", format!("{p} must be at least 1")));
        }
        Ok(Self { beta, alpha, p })
    }
}

/// Gradient information for one coordinate: a scalar for binary/ordinal
/// coordinates, a per-level slice for one-hot groups.
#[derive(Debug, Clone, Copy)]
pub enum CoordinateGradient<'a> {
    Scalar(f64),
    PerLevel(&'a [f64]),
}

/// Unnormalized log-weights of all levels of one coordinate.
fn coordinate_exponents(
    grad: CoordinateGradient<'_>,
    current: u32,
    params: &ChainParams,
    kind: SpaceKind,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    let half_beta = 0.5 * params.beta;
    let reg = 0.5 / params.alpha; // 1/(2α); zero when alpha = inf
    match kind {
        SpaceKind::Binary | SpaceKind::Ordinal { .. } => {
            let g = match grad {
                CoordinateGradient::Scalar(g) => g,
                CoordinateGradient::PerLevel(_) => {
                    return Err(Error::invalid("grad", "scalar gradient expected"))
                }
            };
            if !g.is_finite() {
                return Err(Error::NonFinite("coordinate gradient"));
            }
            let levels = match kind {
                SpaceKind::Binary => 2,
                SpaceKind::Ordinal { max_level } => max_level as usize + 1,
                _ => unreachable!(),
            };
            let cur = current as f64;
            for v in 0..levels {
                let diff = v as f64 - cur;
                out.push(half_beta * g * diff - diff.abs().powf(params.p) * reg);
            }
        }
        SpaceKind::OneHot { levels } => {
            let g = match grad {
                CoordinateGradient::PerLevel(g) => g,
                CoordinateGradient::Scalar(_) => {
                    return Err(Error::invalid("grad", "per-level gradient expected"))
                }
            };
            if g.len() != levels as usize {
                return Err(Error::DimensionMismatch {
                    expected: levels as usize,
                    got: g.len(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("coordinate gradient"));
            }
            // ‖e_v − e_cur‖_p^p = 2 for any change regardless of p.
            let g_cur = g[current as usize];
            for (v, gv) in g.iter().enumerate() {
                let reg_term = if v as u32 == current { 0.0 } else { 2.0 * reg };
                out.push(half_beta * (gv - g_cur) - reg_term);
            }
        }
    }
    Ok(())
}

/// Normalized proposal weights of one coordinate over its support.
pub fn coordinate_weights(
    grad: CoordinateGradient<'_>,
    current: u32,
    params: &ChainParams,
    kind: SpaceKind,
) -> Result<Vec<f64>> {
    let mut exps = Vec::new();
    coordinate_exponents(grad, current, params, kind, &mut exps)?;
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for e in exps.iter_mut() {
        *e = (*e - m).exp();
        sum += *e;
    }
    for e in exps.iter_mut() {
        *e /= sum;
    }
    Ok(exps)
}

/// Per-coordinate flip probabilities on a binary space (the vectorized fast
/// path): `pᵢ = σ(−(β/2)·∇U(θ)ᵢ·(2θᵢ−1) − 1/(2α))`.
pub fn binary_flip_probs(
    grad: &[f64],
    state: &StateVector,
    params: &ChainParams,
) -> Result<Vec<f64>> {
    if !matches!(state.space().kind(), SpaceKind::Binary) {
        return Err(Error::invalid("space", "binary space required"));
    }
    if grad.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: grad.len(),
        });
    }
    let reg = 0.5 / params.alpha;
    state
        .values()
        .iter()
        .zip(grad)
        .map(|(&v, &g)| {
            if !g.is_finite() {
                return Err(Error::NonFinite("coordinate gradient"));
            }
            let sign = 2.0 * v as f64 - 1.0;
            Ok(crate::energy::sigmoid(-0.5 * params.beta * g * sign - reg))
        })
        .collect()
}

/// Joint log-density of the factorized proposal and a sampled next state.
/// Draws every coordinate independently; uses exactly the supplied gradient.
pub fn propose_with_gradient<R: Rng>(
    state: &StateVector,
    grad: &[f64],
    params: &ChainParams,
    rng: &mut R,
) -> Result<(StateVector, f64)> {
    let kind = state.space().kind();
    let mut next = state.clone();
    let mut log_q = 0.0;
    let mut exps = Vec::new();
    for (coord, &cur) in state.values().iter().enumerate() {
        coordinate_exponents(grad_of(grad, coord, kind), cur, params, kind, &mut exps)?;
        let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for e in exps.iter_mut() {
            *e = (*e - m).exp();
            sum += *e;
        }
        // inverse-CDF draw over the unnormalized weights
        let u: f64 = rng.gen::<f64>() * sum;
        let mut acc = 0.0;
        let mut chosen = exps.len() - 1;
        for (v, w) in exps.iter().enumerate() {
            acc += w;
            if u < acc {
                chosen = v;
                break;
            }
        }
        next.set(coord, chosen as u32);
        log_q += (exps[chosen] / sum).ln();
    }
    Ok((next, log_q))
}

/// Samples a proposal from `q(· | θ)`, evaluating the model gradient once.
pub fn propose<M: EnergyModel + ?Sized, R: Rng>(
    state: &StateVector,
    model: &M,
    params: &ChainParams,
    rng: &mut R,
) -> Result<(StateVector, f64)> {
    model.check_state(state)?;
    let grad = model.gradient(state);
    propose_with_gradient(state, &grad, params, rng)
}

/// `log q(to | from)` with the gradient already evaluated at `from`.
pub fn log_q_with_gradient(
    to: &StateVector,
    from: &StateVector,
    grad_at_from: &[f64],
    params: &ChainParams,
) -> Result<f64> {
    if to.space() != from.space() {
        return Err(Error::DimensionMismatch {
            expected: from.dim(),
            got: to.dim(),
        });
    }
    let kind = from.space().kind();
    let mut exps = Vec::new();
    let mut log_q = 0.0;
    for (coord, (&cur, &target)) in from.values().iter().zip(to.values()).enumerate() {
        coordinate_exponents(
            grad_of(grad_at_from, coord, kind),
            cur,
            params,
            kind,
            &mut exps,
        )?;
        let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = m + exps.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
        log_q += exps[target as usize] - log_sum;
    }
    Ok(log_q)
}

/// `log q(to | from)`, evaluating the gradient at the conditioning state.
pub fn log_q<M: EnergyModel + ?Sized>(
    to: &StateVector,
    from: &StateVector,
    model: &M,
    params: &ChainParams,
) -> Result<f64> {
    model.check_state(from)?;
    let grad = model.gradient(from);
    log_q_with_gradient(to, from, &grad, params)
}

fn grad_of(grad: &[f64], coord: usize, kind: SpaceKind) -> CoordinateGradient<'_> {
    match kind {
        SpaceKind::Binary | SpaceKind::Ordinal { .. } => CoordinateGradient::Scalar(grad[coord]),
        SpaceKind::OneHot { levels } => {
            let levels = levels as usize;
            CoordinateGradient::PerLevel(&grad[coord * levels..(coord + 1) * levels])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::LogQuadraticModel;
    use crate::space::DiscreteSpace;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_gradient_binary_flip_mass() {
        // grad 0, alpha 0.5, θ=0: P(flip) = e^{-1}/(e^{-1}+1)
        let params = ChainParams::new(1.0, 0.5).unwrap();
        let w = coordinate_weights(
            CoordinateGradient::Scalar(0.0),
            0,
            &params,
            SpaceKind::Binary,
        )
        .unwrap();
        assert_relative_eq!(w[1], 0.2689414213699951, epsilon = 1e-12);
        assert_relative_eq!(w[0] + w[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_limit_is_uniform() {
        // β = 0 and α → ∞ turn every exponent into 0.
        let params = ChainParams::new(0.0, f64::INFINITY).unwrap();
        let w = coordinate_weights(
            CoordinateGradient::Scalar(3.7),
            1,
            &params,
            SpaceKind::Ordinal { max_level: 3 },
        )
        .unwrap();
        for wi in &w {
            assert_relative_eq!(*wi, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn ordinal_weights_derived_example() {
        // support {0,1,2}, θ=1, grad=2, β=1, α=1, p=2:
        // weights ∝ (e^{-1.5}, 1, e^{0.5}); frozen values from direct
        // normalization of those exponentials.
        let params = ChainParams::new(1.0, 1.0).unwrap();
        let w = coordinate_weights(
            CoordinateGradient::Scalar(2.0),
            1,
            &params,
            SpaceKind::Ordinal { max_level: 2 },
        )
        .unwrap();
        let raw = [(-1.5f64).exp(), 1.0, 0.5f64.exp()];
        let sum: f64 = raw.iter().sum();
        for (got, want) in w.iter().zip(raw.iter().map(|r| r / sum)) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        assert_relative_eq!(w[0], 0.07769557914857059, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.3482074278837348, epsilon = 1e-12);
        assert_relative_eq!(w[2], 0.5740969929676946, epsilon = 1e-12);
    }

    #[test]
    fn binary_flip_probs_trivial_values() {
        let space = DiscreteSpace::binary(2).unwrap();
        let params = ChainParams::new(1.0, f64::INFINITY).unwrap();
        let s = StateVector::new(vec![0, 1], space).unwrap();
        let p = binary_flip_probs(&[2.0, 2.0], &s, &params).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(p[0], e / (e + 1.0), epsilon = 1e-12); // θ=0
        assert_relative_eq!(p[1], 1.0 / (e + 1.0), epsilon = 1e-12); // θ=1
    }

    #[test]
    fn binary_fast_path_matches_coordinate_weights() {
        let space = DiscreteSpace::binary(6).unwrap();
        let params = ChainParams::new(0.7, 0.4).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..50 {
            let state = space.uniform_state(&mut rng);
            let grad: Vec<f64> = (0..6).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let flips = binary_flip_probs(&grad, &state, &params).unwrap();
            for i in 0..6 {
                let w = coordinate_weights(
                    CoordinateGradient::Scalar(grad[i]),
                    state.values()[i],
                    &params,
                    SpaceKind::Binary,
                )
                .unwrap();
                let flip_target = 1 - state.values()[i] as usize;
                assert!((flips[i] - w[flip_target]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn one_hot_weights_normalize_and_penalize_changes() {
        let params = ChainParams::new(1.0, 0.5).unwrap();
        let grad = [0.0, 0.0, 0.0, 0.0];
        let w = coordinate_weights(
            CoordinateGradient::PerLevel(&grad),
            1,
            &params,
            SpaceKind::OneHot { levels: 4 },
        )
        .unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // any change costs ‖·‖_p^p = 2, i.e. relative weight e^{-2/(2α)} = e^{-2}
        let ratio = w[0] / w[1];
        assert_relative_eq!(ratio, (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn tiny_alpha_freezes_the_chain() {
        let space = DiscreteSpace::binary(4).unwrap();
        let model = LogQuadraticModel::linear(space, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let params = ChainParams::new(1.0, 1e-4).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let state = space.uniform_state(&mut rng);
        for _ in 0..200 {
            let (next, _) = propose(&state, &model, &params, &mut rng).unwrap();
            assert_eq!(next, state);
        }
    }

    #[test]
    fn uniform_proposal_marginals_under_flat_params() {
        // β=0, α→∞: per-coordinate marginals uniform within 3σ over 1e5 draws.
        let space = DiscreteSpace::binary(3).unwrap();
        let model = LogQuadraticModel::linear(space, vec![5.0, -5.0, 2.0]).unwrap();
        let params = ChainParams::new(0.0, f64::INFINITY).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        let state = StateVector::new(vec![0, 0, 0], space).unwrap();
        let n = 100_000usize;
        let mut ones = [0usize; 3];
        for _ in 0..n {
            let (next, _) = propose(&state, &model, &params, &mut rng).unwrap();
            for (c, v) in next.values().iter().enumerate() {
                ones[c] += *v as usize;
            }
        }
        let sigma = (0.25 * n as f64).sqrt();
        for o in ones {
            assert!((o as f64 - n as f64 * 0.5).abs() < 3.0 * sigma, "{o}");
        }
    }

    #[test]
    fn empirical_proposal_matches_product_distribution() {
        // d=2 binary, fixed gradient: frequencies over 1e6 draws match the
        // 4-cell product distribution within 3σ per cell.
        let space = DiscreteSpace::binary(2).unwrap();
        let params = ChainParams::new(1.0, 0.8).unwrap();
        let grad = [1.2, -0.7];
        let state = StateVector::new(vec![0, 1], space).unwrap();

        // exact product-distribution oracle from per-coordinate weights
        let w0 = coordinate_weights(
            CoordinateGradient::Scalar(grad[0]),
            0,
            &params,
            SpaceKind::Binary,
        )
        .unwrap();
        let w1 = coordinate_weights(
            CoordinateGradient::Scalar(grad[1]),
            1,
            &params,
            SpaceKind::Binary,
        )
        .unwrap();
        let expect = [w0[0] * w1[0], w0[0] * w1[1], w0[1] * w1[0], w0[1] * w1[1]];

        let mut rng = StdRng::seed_from_u64(5);
        let n = 1_000_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (next, log_q) = propose_with_gradient(&state, &grad, &params, &mut rng).unwrap();
            let idx = (next.values()[0] * 2 + next.values()[1]) as usize;
            counts[idx] += 1;
            // the returned forward log-density matches the independent evaluation
            let lq = log_q_with_gradient(&next, &state, &grad, &params).unwrap();
            debug_assert!((log_q - lq).abs() < 1e-12);
        }
        for (c, p) in counts.iter().zip(expect) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                ((*c as f64) - n as f64 * p).abs() < 3.0 * sigma,
                "count {c} vs expected {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn log_q_sums_to_one_over_enumerable_space() {
        let space = DiscreteSpace::ordinal(2, 3).unwrap();
        let n = space.embedding_dim();
        let model =
            LogQuadraticModel::new(space, vec![0.3, -0.1, -0.1, 0.2], vec![0.5; n]).unwrap();
        let params = ChainParams::new(0.9, 1.3).unwrap();
        let from = StateVector::new(vec![2, 1], space).unwrap();
        let mut total = 0.0;
        for to in space.enumerate(1 << 10).unwrap() {
            total += log_q(&to, &from, &model, &params).unwrap().exp();
        }
        assert!((total - 1.0).abs() < 1e-10, "total = {total}");
    }

    #[test]
    fn self_proposal_log_mass_is_finite() {
        let space = DiscreteSpace::binary(3).unwrap();
        let model = LogQuadraticModel::linear(space, vec![0.3, 0.1, -0.2]).unwrap();
        let params = ChainParams::new(1.0, 0.5).unwrap();
        let s = StateVector::new(vec![1, 0, 1], space).unwrap();
        let lq = log_q(&s, &s, &model, &params).unwrap();
        assert!(lq.is_finite() && lq < 0.0);
    }

    proptest! {
        #[test]
        fn weights_normalize_for_all_supports(
            grad in -50.0f64..50.0,
            cur in 0u32..5,
            beta in 0.0f64..1.0,
            alpha in 0.01f64..10.0,
            p in 1.0f64..4.0,
        ) {
            let params = ChainParams::with_p(beta, alpha, p).unwrap();
            let w = coordinate_weights(
                CoordinateGradient::Scalar(grad),
                cur.min(4),
                &params,
                SpaceKind::Ordinal { max_level: 4 },
            ).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(w[cur.min(4) as usize] > 0.0);
        }

        #[test]
        fn softmax_shift_invariance(
            grad in -5.0f64..5.0,
            shift in -30.0f64..30.0,
            beta in 0.1f64..1.0,
        ) {
            // adding a constant to all per-level exponents leaves weights
            // unchanged; realized by shifting the per-level gradient of a
            // one-hot coordinate, which shifts every exponent by β·shift/2.
            let params = ChainParams::new(beta, 0.7).unwrap();
            let g = [grad, -grad, 0.5];
            let g_shifted = [grad + shift, -grad + shift, 0.5 + shift];
            let a = coordinate_weights(CoordinateGradient::PerLevel(&g), 1, &params, SpaceKind::OneHot { levels: 3 }).unwrap();
            let b = coordinate_weights(CoordinateGradient::PerLevel(&g_shifted), 1, &params, SpaceKind::OneHot { levels: 3 }).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn beta_monotone_flip_probability(
            grad in 0.01f64..8.0,
            b1 in 0.0f64..1.0,
            b2 in 0.0f64..1.0,
        ) {
            // for ∇Uᵢ > 0 and θᵢ = 0, the flip probability is nondecreasing in β
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let w_lo = coordinate_weights(
                CoordinateGradient::Scalar(grad), 0,
                &ChainParams::new(lo, 0.5).unwrap(), SpaceKind::Binary).unwrap();
            let w_hi = coordinate_weights(
                CoordinateGradient::Scalar(grad), 0,
                &ChainParams::new(hi, 0.5).unwrap(), SpaceKind::Binary).unwrap();
            prop_assert!(w_hi[1] >= w_lo[1] - 1e-12);
        }
    }
}
