//! Gradient post-processors: the map from a raw loss gradient to the
//! step direction an attack actually takes.
//!
//! Three schemes live here. `sign_grad` is the classic componentwise
//! sign. `quantize` rescales the gradient by its largest magnitude and
//! rounds through [`zeta`], producing small integers that keep both the
//! sign and the relative ordering of component magnitudes. `qsgd_quantize`
//! is the stochastic comparison scheme: random rounding on an `s`-level
//! grid, unbiased in expectation but sign-information only in a
//! norm-scaled sense.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::rng_for;
use crate::tensor::Tensor;

/// Integer-valued gradient direction.
///
/// Produced by [`sign_grad`] and [`quantize`]; for every nonzero input
/// component the output component is nonzero with the same sign, and
/// magnitudes never exceed the quantization level `b` (with equality at
/// the largest input component).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntGradient {
    pub values: Vec<i64>,
}

impl IntGradient {
    /// The direction as reals, ready for an `x + alpha * dir` step.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Which post-processor an attack runs on its raw gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantizerKind {
    Sign,
    /// Deterministic integer quantization with level `b >= 1`.
    Zeta { b: u32 },
    /// Stochastic `s`-level rounding; the seed makes runs reproducible.
    Qsgd { s: u32, seed: u64 },
}

impl QuantizerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuantizerKind::Sign => Ok(()),
            QuantizerKind::Zeta { b } if b >= 1 => Ok(()),
            QuantizerKind::Zeta { .. } => Err(Error::InvalidConfig(
                "quantization level b must be at least 1".into(),
            )),
            QuantizerKind::Qsgd { s, .. } if s >= 1 => Ok(()),
            QuantizerKind::Qsgd { .. } => Err(Error::InvalidConfig(
                "qsgd level count s must be at least 1".into(),
            )),
        }
    }

    /// Short name used in report columns.
    pub fn label(&self) -> &'static str {
        match self {
            QuantizerKind::Sign => "sign",
            QuantizerKind::Zeta { .. } => "zeta",
            QuantizerKind::Qsgd { .. } => "qsgd",
        }
    }

    /// The level hyperparameter (`b` or `s`), if the scheme has one.
    pub fn level(&self) -> Option<u32> {
        match *self {
            QuantizerKind::Sign => None,
            QuantizerKind::Zeta { b } => Some(b),
            QuantizerKind::Qsgd { s, .. } => Some(s),
        }
    }
}

/// Componentwise strict sign: -1, 0, or +1. Zero components stay zero
/// rather than being pushed to an arbitrary direction.
pub fn sign_grad(g: &[f64]) -> IntGradient {
    IntGradient {
        values: g
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1
                } else if v < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect(),
    }
}

/// Round to the nearest integer, except magnitudes below 1 are promoted
/// to the unit integer of matching sign. Halves round away from zero,
/// which keeps the map odd: `zeta(-v) == -zeta(v)`.
pub fn zeta(v: f64) -> i64 {
    if v == 0.0 {
        0
    } else if v.abs() < 1.0 {
        if v > 0.0 {
            1
        } else {
            -1
        }
    } else {
        // f64::round is round-half-away-from-zero.
        v.round() as i64
    }
}

/// Deterministic gradient quantization: rescale by `b / max|g_i|`, then
/// apply [`zeta`] componentwise.
///
/// The output lands in `[-b, b]` with the extreme hit exactly at the
/// largest-magnitude component, and is invariant to positive rescaling
/// of `g`. An all-zero gradient has no direction to quantize and is
/// reported as [`Error::DegenerateGradient`]; callers usually respond
/// with a zero step.
pub fn quantize(g: &[f64], b: u32) -> Result<IntGradient> {
    if b < 1 {
        return Err(Error::InvalidConfig(
            "quantization level b must be at least 1".into(),
        ));
    }
    let m = g.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    if m == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let scale = b as f64 / m;
    Ok(IntGradient {
        values: g
            .iter()
            .map(|&v| {
                let scaled = v * scale;
                // In real arithmetic b*v/M is nonzero whenever v is; if the
                // product underflows to zero across extreme magnitude spreads,
                // restore the unit integer the formula would have produced.
                if scaled == 0.0 && v != 0.0 {
                    if v > 0.0 {
                        1
                    } else {
                        -1
                    }
                } else {
                    zeta(scaled)
                }
            })
            .collect(),
    })
}

/// Stochastic `s`-level quantization.
///
/// Each component becomes `‖g‖₂ · sgn(g_i) · ξ` where `ξ` is `l/s` or
/// `(l+1)/s` for `l = floor(|g_i|/‖g‖₂ · s)`, the lower level chosen
/// with probability `1 - (|g_i|/‖g‖₂ · s - l)`. The draw is unbiased:
/// averaged over many calls the output converges to `g`. When the
/// scaled magnitude is exactly integral the probability is 1 and no
/// randomness is consumed for that component.
pub fn qsgd_quantize<R: Rng>(g: &[f64], s: u32, rng: &mut R) -> Result<Vec<f64>> {
    if s < 1 {
        return Err(Error::InvalidConfig(
            "qsgd level count s must be at least 1".into(),
        ));
    }
    let norm = g.iter().map(|&v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let s_f = s as f64;
    Ok(g.iter()
        .map(|&v| {
            let u = v.abs() / norm * s_f;
            let l = u.floor();
            let level = if u == l {
                l
            } else if rng.random::<f64>() < 1.0 - (u - l) {
                l
            } else {
                l + 1.0
            };
            norm * v.signum() * (level / s_f)
        })
        .collect())
}

/// Uniform entry point: route a raw gradient through the configured
/// post-processor and hand back the real-valued step direction.
///
/// `Sign` never fails (an all-zero gradient yields an all-zero
/// direction); `Zeta` propagates the degenerate-gradient error; `Qsgd`
/// draws from a stream derived from its embedded seed, so identical
/// calls give identical outputs.
pub fn dispatch(kind: &QuantizerKind, g: &Tensor) -> Result<Tensor> {
    kind.validate()?;
    let out = match *kind {
        QuantizerKind::Sign => sign_grad(g.as_slice()).to_f64(),
        QuantizerKind::Zeta { b } => quantize(g.as_slice(), b)?.to_f64(),
        QuantizerKind::Qsgd { s, seed } => {
            let mut rng = rng_for(seed, 0);
            qsgd_quantize(g.as_slice(), s, &mut rng)?
        }
    };
    Ok(Tensor::from_vec(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_promotes_small_magnitudes_to_unit() {
        assert_eq!(zeta(0.2), 1);
        assert_eq!(zeta(-0.2), -1);
        assert_eq!(zeta(1e-300), 1);
    }

    #[test]
    fn zeta_rounds_large_magnitudes_to_nearest() {
        assert_eq!(zeta(3.7), 4);
        assert_eq!(zeta(-3.4), -3);
        assert_eq!(zeta(1.0), 1);
        assert_eq!(zeta(-1.0), -1);
    }

    #[test]
    fn zeta_zero_is_zero() {
        assert_eq!(zeta(0.0), 0);
        assert_eq!(zeta(-0.0), 0);
    }

    #[test]
    fn zeta_halves_round_away_from_zero() {
        assert_eq!(zeta(1.5), 2);
        assert_eq!(zeta(-1.5), -2);
        assert_eq!(zeta(2.5), 3);
        assert_eq!(zeta(-2.5), -3);
    }

    #[test]
    fn sign_grad_by_definition() {
        assert_eq!(sign_grad(&[0.3, -0.7, 0.0]).values, vec![1, -1, 0]);
    }

    #[test]
    fn sign_grad_all_positive_is_all_ones() {
        assert_eq!(sign_grad(&[0.1, 5.0, 1e-9]).values, vec![1, 1, 1]);
    }

    #[test]
    fn sign_grad_is_scale_invariant() {
        let g = [0.4, -2.0, 0.0, 1e-6];
        let scaled: Vec<f64> = g.iter().map(|v| v * 5.0).collect();
        assert_eq!(sign_grad(&g), sign_grad(&scaled));
    }

    #[test]
    fn quantize_worked_example() {
        // M = 0.5, b*g/M = [4, -2, 0.4]; the 0.4 is promoted to 1.
        let qg = quantize(&[0.5, -0.25, 0.05], 4).unwrap();
        assert_eq!(qg.values, vec![4, -2, 1]);
    }

    #[test]
    fn quantize_level_one_degenerates_to_sign() {
        let g = [0.3, -0.01, 2.0, -5.5, 0.7];
        assert_eq!(quantize(&g, 1).unwrap(), sign_grad(&g));
    }

    #[test]
    fn quantize_is_scale_invariant() {
        // Components picked away from half-integer rescale points, where
        // the rounding discontinuity makes exact invariance impossible in
        // floating point (13 * -0.26/0.5 = -6.76, safely inside its bin).
        let g = [0.5, -0.26, 0.05, 1e-4];
        for c in [1e-6, 0.03, 7.0, 1e5] {
            let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
            assert_eq!(quantize(&g, 13).unwrap(), quantize(&scaled, 13).unwrap());
        }
    }

    #[test]
    fn quantize_survives_extreme_magnitude_spread() {
        // 1e-300 * (1/1e300) underflows; the component must still carry
        // its sign rather than silently vanishing.
        let qg = quantize(&[1e300, 1e-300, -1e-300], 1).unwrap();
        assert_eq!(qg.values, vec![1, 1, -1]);
    }

    #[test]
    fn quantize_rejects_all_zero_gradient() {
        assert!(matches!(
            quantize(&[0.0, 0.0, -0.0], 4),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn quantize_rejects_zero_level() {
        assert!(matches!(
            quantize(&[1.0], 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn qsgd_single_component_is_exact() {
        let mut rng = rng_for(0, 0);
        for s in [1, 2, 7, 100] {
            let out = qsgd_quantize(&[3.0], s, &mut rng).unwrap();
            assert_eq!(out, vec![3.0]);
        }
    }

    #[test]
    fn qsgd_integral_levels_are_deterministic() {
        // norm = 5, so |v_i|/norm * s at s = 5 gives exactly 3 and 4:
        // probability collapses to 1 and the output is the input.
        let mut rng = rng_for(1, 0);
        let out = qsgd_quantize(&[3.0, -4.0], 5, &mut rng).unwrap();
        assert_eq!(out, vec![3.0, -4.0]);
    }

    #[test]
    fn qsgd_rejects_zero_norm() {
        let mut rng = rng_for(2, 0);
        assert!(matches!(
            qsgd_quantize(&[0.0, 0.0], 4, &mut rng),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn qsgd_mean_approaches_input() {
        // Small-scale unbiasedness check; the full Monte-Carlo version
        // lives in the acceptance suite.
        let g = [0.8, -0.3, 0.05, 0.4];
        let s = 4;
        let n = 20_000;
        let mut rng = rng_for(3, 0);
        let mut mean = [0.0; 4];
        for _ in 0..n {
            let q = qsgd_quantize(&g, s, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&q) {
                *m += v;
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (m, &v) in mean.iter().zip(&g) {
            let err = (m / n as f64 - v).abs();
            // Component std is at most norm/s per draw.
            let bound = 4.0 * (norm / s as f64) / (n as f64).sqrt();
            assert!(err < bound, "mean error {err} exceeds {bound}");
        }
    }

    #[test]
    fn dispatch_zeta_level_one_matches_sign() {
        let g = Tensor::from_vec(vec![0.2, -0.9, 3.0, -1e-5]);
        let a = dispatch(&QuantizerKind::Zeta { b: 1 }, &g).unwrap();
        let b = dispatch(&QuantizerKind::Sign, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dispatch_sign_on_zero_gradient_is_zero_not_error() {
        let g = Tensor::from_vec(vec![0.0, 0.0]);
        let out = dispatch(&QuantizerKind::Sign, &g).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dispatch_zeta_hits_level_at_argmax() {
        let g = Tensor::from_vec(vec![0.1, -0.6, 0.3]);
        let out = dispatch(&QuantizerKind::Zeta { b: 100 }, &g).unwrap();
        assert_eq!(out.as_slice()[1], -100.0);
    }

    #[test]
    fn dispatch_qsgd_is_reproducible_from_embedded_seed() {
        let g = Tensor::from_vec(vec![0.7, -0.2, 0.1, 0.9]);
        let kind = QuantizerKind::Qsgd { s: 3, seed: 42 };
        assert_eq!(dispatch(&kind, &g).unwrap(), dispatch(&kind, &g).unwrap());
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        fn arb_gradient() -> impl Strategy<Value = Vec<f64>> {
            // Mixed magnitudes spanning many decades, plus exact zeros.
            prop::collection::vec(
                prop_oneof![
                    3 => (-1.0_f64..1.0).prop_map(|v| v * 1e-6),
                    3 => -1.0_f64..1.0,
                    3 => (-1.0_f64..1.0).prop_map(|v| v * 1e2),
                    1 => Just(0.0),
                ],
                1..32,
            )
        }

        proptest! {
            #[test]
            fn zeta_is_odd(v in -1e6_f64..1e6) {
                prop_assert_eq!(zeta(-v), -zeta(v));
            }

            #[test]
            fn zeta_nonzero_input_gives_nonzero_output(v in -1e6_f64..1e6) {
                prop_assume!(v != 0.0);
                prop_assert_ne!(zeta(v), 0);
            }

            #[test]
            fn quantize_preserves_signs(g in arb_gradient(), b in 1u32..500) {
                prop_assume!(g.iter().any(|&v| v != 0.0));
                let qg = quantize(&g, b).unwrap();
                for (&v, &q) in g.iter().zip(&qg.values) {
                    if v > 0.0 {
                        prop_assert!(q > 0);
                    } else if v < 0.0 {
                        prop_assert!(q < 0);
                    } else {
                        prop_assert_eq!(q, 0);
                    }
                }
            }

            #[test]
            fn quantize_preserves_magnitude_order(g in arb_gradient(), b in 1u32..500) {
                prop_assume!(g.iter().any(|&v| v != 0.0));
                let qg = quantize(&g, b).unwrap();
                let mut order: Vec<usize> = (0..g.len()).collect();
                order.sort_by(|&i, &j| g[i].abs().partial_cmp(&g[j].abs()).unwrap());
                for pair in order.windows(2) {
                    prop_assert!(qg.values[pair[0]].abs() <= qg.values[pair[1]].abs());
                }
            }

            #[test]
            fn quantize_is_bounded_with_equality_at_argmax(g in arb_gradient(), b in 1u32..500) {
                prop_assume!(g.iter().any(|&v| v != 0.0));
                let qg = quantize(&g, b).unwrap();
                for &q in &qg.values {
                    prop_assert!(q.unsigned_abs() <= b as u64);
                }
                let argmax = g
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                prop_assert_eq!(qg.values[argmax].unsigned_abs(), b as u64);
            }

            #[test]
            fn quantize_ignores_positive_rescaling(g in arb_gradient(), b in 1u32..500, c in 1e-3_f64..1e3) {
                prop_assume!(g.iter().any(|&v| v != 0.0));
                let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
                prop_assert_eq!(quantize(&g, b).unwrap(), quantize(&scaled, b).unwrap());
            }
        }
    }
}
