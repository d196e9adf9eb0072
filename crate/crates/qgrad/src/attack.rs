//! ℓ∞-constrained first-order attacks.
//!
//! All iterative attacks share one step engine: compute gradients at the
//! current iterate, post-process them through the configured quantizer,
//! take an `alpha`-scaled step, and project back onto the intersection
//! of the ε-ball around the clean input and the pixel box `[0,1]^d`.
//! The engine is parameterized along two independent axes —
//!
//! * gradient source: per-example loss gradients (FGSM/PGD/PQGD) or the
//!   kernel-coupled batch gradient of [`daa_blob_gradient`] (Blob),
//! * step rule: sign or deterministic integer quantization,
//!
//! — which is what makes the degeneracy identities exact: `Zeta(1)`
//! follows the same code path as `Sign` and produces the same integers,
//! and a Blob attack with interaction weight 0 adds exactly `0.0` to
//! each per-example gradient, so both collapse to their simpler
//! counterparts bit for bit under a shared seed.
//!
//! Randomness: the only random choice an attack makes is its start
//! point. Starts are drawn example by example in row order from a
//! ChaCha stream `base | restart`, so trajectories are reproducible
//! and restarts are independent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::quantize::{quantize, sign_grad, IntGradient, QuantizerKind};
use crate::stream::{eval_run_stream, rng_for};
use crate::tensor::Tensor;

/// Which attack loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Single ε-sized sign step from the clean input.
    Fgsm,
    /// Iterated sign steps with random start.
    Pgd,
    /// Iterated quantized-gradient steps with random start.
    Pqgd,
    /// Kernel-coupled batch gradient, sign or quantized step.
    Blob,
}

impl AttackKind {
    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Pqgd => "pqgd",
            AttackKind::Blob => "blob",
        }
    }
}

/// Attack hyperparameters.
///
/// `epsilon = 0` is allowed as the identity attack (useful for clean
/// baselines); otherwise `0 < alpha <= epsilon <= 1`. `kernel_bandwidth
/// = None` selects the per-batch median heuristic; `batch_size = None`
/// couples the whole input set in one Blob batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub restarts: usize,
    pub quantizer: QuantizerKind,
    pub daa_weight: f64,
    pub kernel_bandwidth: Option<f64>,
    pub seed: u64,
    pub random_start: bool,
    pub batch_size: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            alpha: 0.01,
            steps: 40,
            restarts: 0,
            quantizer: QuantizerKind::Sign,
            daa_weight: 1.0,
            kernel_bandwidth: None,
            seed: 0,
            random_start: true,
            batch_size: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.epsilon > 0.0 && (self.alpha == 0.0 || self.alpha > self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "step size alpha must satisfy 0 < alpha <= epsilon, got alpha {} epsilon {}",
                self.alpha, self.epsilon
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        self.quantizer.validate()?;
        if !self.daa_weight.is_finite() || self.daa_weight < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "daa_weight must be finite and non-negative, got {}",
                self.daa_weight
            )));
        }
        if let Some(h) = self.kernel_bandwidth {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "kernel_bandwidth must be positive, got {h}"
                )));
            }
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of an attack over a set of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Perturbed inputs, one row per example; each row stays within the
    /// ε-ball of its clean original and inside `[0,1]^d`.
    pub adversarial: Tensor,
    /// Whether the model now mislabels each example.
    pub misclassified: Vec<bool>,
    /// Total gradient steps taken, summed over restarts.
    pub iterations_run: usize,
}

impl AttackResult {
    /// Fraction of examples the attack left correctly classified.
    pub fn surviving_accuracy(&self) -> f64 {
        let correct = self.misclassified.iter().filter(|&&m| !m).count();
        correct as f64 / self.misclassified.len() as f64
    }
}

fn clamp_component(v: f64, orig: f64, epsilon: f64) -> f64 {
    // max-then-min rather than f64::clamp: stays total even if a caller
    // hands in an out-of-range "original" pixel.
    v.max((orig - epsilon).max(0.0)).min((orig + epsilon).min(1.0))
}

/// Componentwise projection onto the ε-ball around `x_orig` intersected
/// with `[0,1]`; idempotent.
pub fn project(x_adv: &Tensor, x_orig: &Tensor, epsilon: f64) -> Result<Tensor> {
    if x_adv.shape() != x_orig.shape() {
        return Err(Error::ShapeMismatch(format!(
            "project: {:?} vs {:?}",
            x_adv.shape(),
            x_orig.shape()
        )));
    }
    let data = x_adv
        .as_slice()
        .iter()
        .zip(x_orig.as_slice())
        .map(|(&v, &o)| clamp_component(v, o, epsilon))
        .collect();
    Tensor::new(x_adv.shape().to_vec(), data)
}

/// Uniform random point in the ε-ball around `x`, projected into the
/// pixel box. Draws one uniform per component in flat row-major order;
/// `epsilon = 0` returns `x` unchanged without consuming randomness.
pub fn random_start<R: Rng>(x: &Tensor, epsilon: f64, rng: &mut R) -> Tensor {
    if epsilon == 0.0 {
        return x.clone();
    }
    let data = x
        .as_slice()
        .iter()
        .map(|&v| {
            let u = rng.random_range(-epsilon..=epsilon);
            clamp_component(v + u, v, epsilon)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape unchanged")
}

/// Kernel-coupled batch gradient: each example's loss gradient plus a
/// batch-averaged interaction that pulls in neighbours' gradients
/// (weighted by an RBF kernel) and a repulsive kernel-gradient term.
///
/// With interaction weight `c = 0` this is exactly the stack of
/// per-example gradients. The bandwidth defaults to the median pairwise
/// squared distance of the batch (floored away from zero), recomputed
/// per call so it tracks the current iterates.
pub fn daa_blob_gradient(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    c: f64,
    bandwidth: Option<f64>,
) -> Result<Tensor> {
    let m = xs.num_rows();
    if m == 0 {
        return Err(Error::Empty("batch"));
    }
    let d = xs.row_len();
    let grads = model.input_gradient_rows(xs, ys)?;

    // Pairwise squared distances; also feeds the bandwidth heuristic.
    let mut dist2 = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..i {
            let s: f64 = xs
                .row(i)
                .iter()
                .zip(xs.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist2[i * m + j] = s;
            dist2[j * m + i] = s;
        }
    }
    let h = match bandwidth {
        Some(h) => h,
        None => median_pairwise(&dist2, m),
    };

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut interaction = vec![0.0; d];
            for j in 0..m {
                let k = (-dist2[i * m + j] / h).exp();
                let k_over_h = k / h;
                let gj = grads.row(j);
                let xi = xs.row(i);
                let xj = xs.row(j);
                for t in 0..d {
                    interaction[t] += k * gj[t] + 2.0 * (xi[t] - xj[t]) * k_over_h;
                }
            }
            let scale = c / m as f64;
            grads
                .row(i)
                .iter()
                .zip(&interaction)
                .map(|(&g, &s)| g + scale * s)
                .collect()
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// Median pairwise squared distance, floored so downstream divisions
/// stay finite; 1.0 when the batch has no pairs.
fn median_pairwise(dist2: &[f64], m: usize) -> f64 {
    if m < 2 {
        return 1.0;
    }
    let mut pairs: Vec<f64> = (0..m)
        .flat_map(|i| (0..i).map(move |j| dist2[i * m + j]))
        .collect();
    pairs.sort_by(f64::total_cmp);
    let mid = pairs.len() / 2;
    let median = if pairs.len() % 2 == 1 {
        pairs[mid]
    } else {
        0.5 * (pairs[mid - 1] + pairs[mid])
    };
    median.max(1e-12)
}

/// The integer step direction for one example's gradient; a gradient
/// with no direction (all zeros) yields a zero step rather than an error.
fn step_direction(quantizer: &QuantizerKind, g: &[f64]) -> Result<IntGradient> {
    match *quantizer {
        QuantizerKind::Sign => Ok(sign_grad(g)),
        QuantizerKind::Zeta { b } => match quantize(g, b) {
            Ok(qg) => Ok(qg),
            Err(Error::DegenerateGradient) => Ok(IntGradient {
                values: vec![0; g.len()],
            }),
            Err(e) => Err(e),
        },
        QuantizerKind::Qsgd { .. } => Err(Error::InvalidConfig(
            "stochastic quantization is a codec for comparison, not an attack step rule".into(),
        )),
    }
}

fn check_step_rule(kind: AttackKind, quantizer: &QuantizerKind) -> Result<()> {
    let ok = match kind {
        // FGSM's rule is fixed to Sign by construction.
        AttackKind::Fgsm => true,
        AttackKind::Pgd => matches!(quantizer, QuantizerKind::Sign),
        AttackKind::Pqgd => matches!(quantizer, QuantizerKind::Zeta { .. }),
        AttackKind::Blob => matches!(
            quantizer,
            QuantizerKind::Sign | QuantizerKind::Zeta { .. }
        ),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{} does not accept the {} step rule",
            kind.label(),
            quantizer.label()
        )))
    }
}

/// The config the engine actually runs for a given attack kind. FGSM is
/// the fixed special case: one sign step of size ε from the clean input.
fn effective_config(cfg: &AttackConfig, kind: AttackKind) -> AttackConfig {
    match kind {
        AttackKind::Fgsm => AttackConfig {
            alpha: cfg.epsilon,
            steps: 1,
            random_start: false,
            quantizer: QuantizerKind::Sign,
            ..cfg.clone()
        },
        _ => cfg.clone(),
    }
}

/// One randomly-started run of the shared step loop. Returns the final
/// iterate and, when `record` is set, every iterate starting with the
/// (possibly perturbed) start point.
fn run_steps(
    model: &Model,
    xs_orig: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
    rng: &mut ChaCha8Rng,
    record: bool,
) -> Result<(Tensor, Vec<Tensor>)> {
    let n = xs_orig.num_rows();
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    if n != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} examples vs {} labels",
            ys.len()
        )));
    }

    // ε = 0 is the identity attack: the feasible set is {x}.
    if cfg.epsilon == 0.0 {
        let trace = if record { vec![xs_orig.clone()] } else { vec![] };
        return Ok((xs_orig.clone(), trace));
    }

    let mut x = if cfg.random_start {
        // Row-major draw order, fixed before any stepping, so the stream
        // consumption is identical across attack kinds.
        random_start(xs_orig, cfg.epsilon, rng)
    } else {
        xs_orig.clone()
    };
    let mut trace = if record { vec![x.clone()] } else { vec![] };

    // Blob couples examples inside a batch; everything else treats the
    // whole set as independent rows.
    let chunks: Vec<(usize, usize)> = match kind {
        AttackKind::Blob => {
            let size = cfg.batch_size.unwrap_or(n).max(1);
            (0..n)
                .step_by(size)
                .map(|lo| (lo, (lo + size).min(n)))
                .collect()
        }
        _ => vec![(0, n)],
    };

    let d = xs_orig.row_len();
    for _ in 0..cfg.steps {
        for &(lo, hi) in &chunks {
            let grads = match kind {
                AttackKind::Blob => {
                    let rows: Vec<Vec<f64>> = (lo..hi).map(|i| x.row(i).to_vec()).collect();
                    let chunk = Tensor::from_rows(&rows)?;
                    daa_blob_gradient(
                        model,
                        &chunk,
                        &ys[lo..hi],
                        cfg.daa_weight,
                        cfg.kernel_bandwidth,
                    )?
                }
                _ => model.input_gradient_rows(&x, ys)?,
            };
            for i in lo..hi {
                let dir = step_direction(&cfg.quantizer, grads.row(i - lo))?;
                let orig = xs_orig.row(i);
                let row = x.row_mut(i);
                for t in 0..d {
                    row[t] = clamp_component(
                        row[t] + cfg.alpha * dir.values[t] as f64,
                        orig[t],
                        cfg.epsilon,
                    );
                }
            }
        }
        if record {
            trace.push(x.clone());
        }
    }
    Ok((x, trace))
}

fn misclassified_rows(model: &Model, xs: &Tensor, ys: &[usize]) -> Result<Vec<bool>> {
    (0..xs.num_rows())
        .into_par_iter()
        .map(|i| model.predict(xs.row(i)).map(|p| p != ys[i]))
        .collect()
}

/// Single ε-sized sign step from the clean input (no random start).
/// A zero gradient moves nothing, so such examples come back unchanged.
pub fn fgsm(model: &Model, xs: &Tensor, ys: &[usize], epsilon: f64) -> Result<AttackResult> {
    let cfg = AttackConfig {
        epsilon,
        alpha: epsilon,
        steps: 1,
        restarts: 0,
        random_start: false,
        quantizer: QuantizerKind::Sign,
        ..AttackConfig::default()
    };
    single_run(model, xs, ys, &cfg, AttackKind::Fgsm, eval_run_stream(0))
}

/// Iterated projected sign steps from a random start (requires the
/// `Sign` step rule).
pub fn pgd(model: &Model, xs: &Tensor, ys: &[usize], cfg: &AttackConfig) -> Result<AttackResult> {
    single_run(model, xs, ys, cfg, AttackKind::Pgd, eval_run_stream(0))
}

/// Iterated projected quantized-gradient steps (requires `Zeta`).
/// Each component moves by `alpha * qg_i ∈ [-alpha*b, alpha*b]` per step
/// before projection.
pub fn pqgd(model: &Model, xs: &Tensor, ys: &[usize], cfg: &AttackConfig) -> Result<AttackResult> {
    single_run(model, xs, ys, cfg, AttackKind::Pqgd, eval_run_stream(0))
}

/// Kernel-coupled attack: sign step rule gives the plain variant,
/// `Zeta` the quantized one. Quantization renormalizes per example per
/// iteration by that example's own max component.
pub fn blob_attack(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    single_run(model, xs, ys, cfg, AttackKind::Blob, eval_run_stream(0))
}

fn single_run(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
    stream: u64,
) -> Result<AttackResult> {
    let (result, _) = attack_traced(model, xs, ys, cfg, kind, stream)?;
    Ok(result)
}

/// One restart with an explicit stream id, returning every iterate
/// (start included). The trace is what feasibility and trajectory
/// equality checks consume.
pub fn attack_traced(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
    stream: u64,
) -> Result<(AttackResult, Vec<Tensor>)> {
    cfg.validate()?;
    check_step_rule(kind, &cfg.quantizer)?;
    let eff = effective_config(cfg, kind);
    let mut rng = rng_for(eff.seed, stream);
    let (adv, trace) = run_steps(model, xs, ys, &eff, kind, &mut rng, true)?;
    let misclassified = misclassified_rows(model, &adv, ys)?;
    Ok((
        AttackResult {
            adversarial: adv,
            misclassified,
            iterations_run: eff.steps,
        },
        trace,
    ))
}

/// `1 + cfg.restarts` independently started runs with streams
/// `base_stream | restart`. An example counts as broken as soon as any
/// restart mislabels it; its stored adversarial row comes from the first
/// restart that broke it (restart 0's row if none did).
pub fn attack_for_stream(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
    base_stream: u64,
) -> Result<AttackResult> {
    cfg.validate()?;
    check_step_rule(kind, &cfg.quantizer)?;
    let eff = effective_config(cfg, kind);
    let n = xs.num_rows();

    let mut merged: Option<Tensor> = None;
    let mut broken = vec![false; n];
    let mut iterations = 0;
    for r in 0..=eff.restarts {
        let mut rng = rng_for(eff.seed, base_stream | r as u64);
        let (adv, _) = run_steps(model, xs, ys, &eff, kind, &mut rng, false)?;
        let mis = misclassified_rows(model, &adv, ys)?;
        iterations += eff.steps;
        match merged.as_mut() {
            None => merged = Some(adv),
            Some(kept) => {
                for i in 0..n {
                    if mis[i] && !broken[i] {
                        kept.row_mut(i).copy_from_slice(adv.row(i));
                    }
                }
            }
        }
        for (b, m) in broken.iter_mut().zip(&mis) {
            *b |= m;
        }
    }
    Ok(AttackResult {
        adversarial: merged.expect("at least one restart always runs"),
        misclassified: broken,
        iterations_run: iterations,
    })
}

/// Restart-merged attack on the default stream (evaluation run 0).
pub fn attack_with_restarts(
    model: &Model,
    xs: &Tensor,
    ys: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
) -> Result<AttackResult> {
    attack_for_stream(model, xs, ys, cfg, kind, eval_run_stream(0))
}
