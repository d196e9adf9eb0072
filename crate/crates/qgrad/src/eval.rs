//! Robustness measurement: multi-run attack reports, gradient-direction
//! histograms, and parameter sweeps, with CSV/JSON rendering.
//!
//! Every report is a pure function of (model, dataset, config): run `k`
//! of an evaluation always attacks under stream id `eval_run_stream(k)`,
//! so re-running a report reproduces it byte for byte. Wall-clock
//! timings are collected for display but excluded from serialized
//! output to keep that guarantee.

use std::time::Instant;

use serde::Serialize;

use crate::attack::{attack_for_stream, AttackConfig, AttackKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::quantize::{quantize, sign_grad, QuantizerKind};
use crate::stream::eval_run_stream;

/// Elapsed seconds per evaluation stage. Display-only: deliberately not
/// serialized, so reports with the same config stay byte-identical.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageSeconds {
    pub clean: f64,
    pub attack: f64,
}

/// Outcome of evaluating one attack against one model.
///
/// `per_run_accuracy[k]` is the surviving accuracy of run `k`;
/// `merged_accuracy` counts an example as broken if *any* run broke it,
/// so it can only be at most the worst single run.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub attack: AttackKind,
    pub config: AttackConfig,
    pub num_runs: usize,
    pub clean_accuracy: f64,
    pub per_run_accuracy: Vec<f64>,
    pub worst_accuracy: f64,
    pub avg_accuracy: f64,
    pub merged_accuracy: f64,
    #[serde(skip)]
    pub stage_seconds: StageSeconds,
}

/// Attack a dataset `num_runs` times (distinct randomness per run, same
/// config) and aggregate the accuracies.
pub fn robust_accuracy(
    model: &Model,
    dataset: &Dataset,
    kind: AttackKind,
    cfg: &AttackConfig,
    num_runs: usize,
) -> Result<RobustnessReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if num_runs == 0 {
        return Err(Error::InvalidConfig("num_runs must be at least 1".into()));
    }
    cfg.validate()?;

    let clean_start = Instant::now();
    let clean_accuracy = model.accuracy(&dataset.images, &dataset.labels)?;
    let clean = clean_start.elapsed().as_secs_f64();

    let attack_start = Instant::now();
    let mut per_run_accuracy = Vec::with_capacity(num_runs);
    let mut broken = vec![false; dataset.len()];
    for run in 0..num_runs {
        let res = attack_for_stream(
            model,
            &dataset.images,
            &dataset.labels,
            cfg,
            kind,
            eval_run_stream(run),
        )?;
        per_run_accuracy.push(res.surviving_accuracy());
        for (b, m) in broken.iter_mut().zip(&res.misclassified) {
            *b |= *m;
        }
    }
    let attack = attack_start.elapsed().as_secs_f64();

    let worst_accuracy = per_run_accuracy
        .iter()
        .fold(f64::INFINITY, |acc, &a| acc.min(a));
    let avg_accuracy = per_run_accuracy.iter().sum::<f64>() / num_runs as f64;
    let merged_accuracy =
        broken.iter().filter(|&&b| !b).count() as f64 / dataset.len() as f64;

    Ok(RobustnessReport {
        attack: kind,
        config: cfg.clone(),
        num_runs,
        clean_accuracy,
        per_run_accuracy,
        worst_accuracy,
        avg_accuracy,
        merged_accuracy,
        stage_seconds: StageSeconds { clean, attack },
    })
}

const CSV_HEADER: &str = "run_id,attack,quantizer,b,epsilon,alpha,steps,restarts,seed,accuracy\n";

fn csv_rows(report: &RobustnessReport, out: &mut String) {
    let cfg = &report.config;
    let level = cfg
        .quantizer
        .level()
        .map(|b| b.to_string())
        .unwrap_or_default();
    for (run_id, acc) in report.per_run_accuracy.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            run_id,
            report.attack.label(),
            cfg.quantizer.label(),
            level,
            cfg.epsilon,
            cfg.alpha,
            cfg.steps,
            cfg.restarts,
            cfg.seed,
            acc,
        ));
    }
}

/// One CSV row per run. The `b` column is the quantization level and is
/// left empty for the sign quantizer.
pub fn report_csv(report: &RobustnessReport) -> String {
    let mut out = String::from(CSV_HEADER);
    csv_rows(report, &mut out);
    out
}

pub fn report_json(report: &RobustnessReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

/// Which integer representation of the gradient to histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientRepr {
    /// Plain sign: every component lands in {-1, 0, +1}.
    Sign,
    /// Deterministic level-`b` quantization.
    Zeta { b: u32 },
    /// The rescaled gradient `b·g / max|g|` without the integer snap,
    /// binned by rounding — shows what the quantizer's input looks
    /// like, not a step rule anything actually takes.
    Raw { b: u32 },
}

/// Counts of quantized gradient components over the bins `-bound..=bound`
/// (index 0 holds `-bound`). The bound is the attack's step budget
/// `floor(epsilon/alpha)`: a component quantized beyond it moves a pixel
/// further per step than the budget allows, so everything outside is
/// clipped onto the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientHistogram {
    pub bound: i64,
    pub counts: Vec<u64>,
    pub real_valued: bool,
}

impl GradientHistogram {
    pub fn count_at(&self, value: i64) -> u64 {
        if value < -self.bound || value > self.bound {
            return 0;
        }
        self.counts[(value + self.bound) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (i, count) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as i64 - self.bound, count));
        }
        out
    }
}

/// Number of whole α-steps that fit in ε. Ratios a hair under an
/// integer from decimal→binary rounding (0.3/0.01 = 29.999…96) snap to
/// it; genuinely fractional ratios floor.
fn step_budget(epsilon: f64, alpha: f64) -> Result<i64> {
    if !epsilon.is_finite() || !alpha.is_finite() || epsilon <= 0.0 || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "histogram needs positive epsilon and alpha, got {epsilon} and {alpha}"
        )));
    }
    let ratio = epsilon / alpha;
    let rounded = ratio.round();
    let budget = if (ratio - rounded).abs() < 1e-9 {
        rounded
    } else {
        ratio.floor()
    };
    if budget < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha {alpha} exceeds epsilon {epsilon}: no whole step fits"
        )));
    }
    if budget > 1e6 {
        return Err(Error::InvalidConfig(format!(
            "step budget {budget} would need more than two million bins"
        )));
    }
    Ok(budget as i64)
}

/// Histogram the per-component integer gradient directions over a
/// dataset, taken at the clean inputs. Total count is always
/// `examples × dimensions`: an all-zero gradient contributes its whole
/// row to the zero bin.
pub fn gradient_histogram(
    model: &Model,
    dataset: &Dataset,
    repr: GradientRepr,
    epsilon: f64,
    alpha: f64,
) -> Result<GradientHistogram> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if let GradientRepr::Zeta { b: 0 } | GradientRepr::Raw { b: 0 } = repr {
        return Err(Error::InvalidConfig(
            "quantization level must be at least 1".into(),
        ));
    }
    let bound = step_budget(epsilon, alpha)?;
    let mut counts = vec![0u64; (2 * bound + 1) as usize];
    let mut bump = |value: i64| {
        let clipped = value.clamp(-bound, bound);
        counts[(clipped + bound) as usize] += 1;
    };

    let grads = model.input_gradient_rows(&dataset.images, &dataset.labels)?;
    for i in 0..grads.num_rows() {
        let g = grads.row(i);
        match repr {
            GradientRepr::Sign => {
                for v in sign_grad(g).values {
                    bump(v);
                }
            }
            GradientRepr::Zeta { b } => match quantize(g, b) {
                Ok(q) => {
                    for v in q.values {
                        bump(v);
                    }
                }
                Err(Error::DegenerateGradient) => {
                    for _ in 0..g.len() {
                        bump(0);
                    }
                }
                Err(e) => return Err(e),
            },
            GradientRepr::Raw { b } => {
                let max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if max == 0.0 {
                    for _ in 0..g.len() {
                        bump(0);
                    }
                } else {
                    let scale = f64::from(b) / max;
                    for v in g {
                        bump((v * scale).round() as i64);
                    }
                }
            }
        }
    }

    Ok(GradientHistogram {
        bound,
        counts,
        real_valued: matches!(repr, GradientRepr::Raw { .. }),
    })
}

/// One axis of attack-hyperparameter space to walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Vary ε. The step size is capped at each ε so the configuration
    /// stays valid; ε = 0 measures clean accuracy.
    Epsilon(Vec<f64>),
    /// Vary the iteration count.
    Steps(Vec<usize>),
    /// Vary the deterministic quantization level; the base config must
    /// already use that quantizer.
    Level(Vec<u32>),
}

impl SweepAxis {
    fn is_empty(&self) -> bool {
        match self {
            SweepAxis::Epsilon(v) => v.is_empty(),
            SweepAxis::Steps(v) => v.is_empty(),
            SweepAxis::Level(v) => v.is_empty(),
        }
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::Epsilon(v) => v.len(),
            SweepAxis::Steps(v) => v.len(),
            SweepAxis::Level(v) => v.len(),
        }
    }

    fn apply(&self, index: usize, base: &AttackConfig) -> Result<AttackConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Epsilon(values) => {
                cfg.epsilon = values[index];
                cfg.alpha = base.alpha.min(cfg.epsilon);
            }
            SweepAxis::Steps(values) => {
                cfg.steps = values[index];
            }
            SweepAxis::Level(values) => match cfg.quantizer {
                QuantizerKind::Zeta { .. } => {
                    cfg.quantizer = QuantizerKind::Zeta { b: values[index] };
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "a level sweep needs a config with the deterministic quantizer"
                            .into(),
                    ))
                }
            },
        }
        Ok(cfg)
    }
}

/// Evaluate every attack kind at every point of the axis, in a fixed
/// order (kinds outermost, grid points inner, runs innermost), and
/// render the combined CSV. Rows carry their own parameters, so the
/// sweep table is self-describing.
///
/// Sign-stepping kinds (FGSM, PGD) ignore the base quantizer, so one
/// base config can drive a mixed comparison like `[pgd, pqgd]`; the
/// quantized kinds still require the base to name a compatible scheme.
pub fn sweep(
    model: &Model,
    dataset: &Dataset,
    kinds: &[AttackKind],
    base: &AttackConfig,
    axis: &SweepAxis,
    num_runs: usize,
) -> Result<(Vec<RobustnessReport>, String)> {
    if kinds.is_empty() {
        return Err(Error::Empty("attack kinds"));
    }
    if axis.is_empty() {
        return Err(Error::Empty("sweep axis"));
    }
    let mut reports = Vec::with_capacity(kinds.len() * axis.len());
    let mut csv = String::from(CSV_HEADER);
    for &kind in kinds {
        for index in 0..axis.len() {
            let mut cfg = axis.apply(index, base)?;
            if matches!(kind, AttackKind::Fgsm | AttackKind::Pgd) {
                cfg.quantizer = QuantizerKind::Sign;
            }
            let report = robust_accuracy(model, dataset, kind, &cfg, num_runs)?;
            csv_rows(&report, &mut csv);
            reports.push(report);
        }
    }
    Ok((reports, csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, Dataset};
    use crate::model::ModelSpec;
    use crate::train::{train_standard, TrainConfig};

    fn small_dataset() -> Dataset {
        synth_dataset(24, 4, 3, 11).unwrap()
    }

    /// A lightly trained model so gradients and mispredictions are
    /// nondegenerate but the tests stay fast.
    fn small_model(ds: &Dataset) -> Model {
        let spec = ModelSpec {
            input_dim: ds.dim(),
            hidden: vec![8],
            num_classes: ds.num_classes,
        };
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            learning_rate: 0.5,
            seed: 5,
            ..TrainConfig::default()
        };
        train_standard(ds, &spec, &cfg).unwrap().0
    }

    fn pgd_cfg() -> AttackConfig {
        AttackConfig {
            epsilon: 0.2,
            alpha: 0.05,
            steps: 5,
            ..AttackConfig::default()
        }
    }

    #[test]
    fn zero_epsilon_report_equals_clean_accuracy() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let cfg = AttackConfig {
            epsilon: 0.0,
            alpha: 0.0,
            ..AttackConfig::default()
        };
        let report = robust_accuracy(&model, &ds, AttackKind::Pgd, &cfg, 3).unwrap();
        for &acc in &report.per_run_accuracy {
            assert_eq!(acc, report.clean_accuracy);
        }
        assert_eq!(report.merged_accuracy, report.clean_accuracy);
    }

    #[test]
    fn single_run_worst_equals_average() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let report =
            robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 1).unwrap();
        assert_eq!(report.per_run_accuracy.len(), 1);
        assert_eq!(report.worst_accuracy, report.per_run_accuracy[0]);
        assert_eq!(report.avg_accuracy, report.per_run_accuracy[0]);
    }

    #[test]
    fn merged_accuracy_bounded_by_every_run() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let report =
            robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 4).unwrap();
        for &acc in &report.per_run_accuracy {
            assert!(report.merged_accuracy <= acc + 1e-15);
        }
        assert!(report.worst_accuracy <= report.avg_accuracy + 1e-15);
        assert!(report.merged_accuracy <= report.worst_accuracy + 1e-15);
    }

    #[test]
    fn rejects_empty_dataset_and_zero_runs() {
        let ds = small_dataset();
        let model = small_model(&ds);
        assert!(matches!(
            robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 0),
            Err(Error::InvalidConfig(_))
        ));
        let empty = Dataset {
            images: crate::tensor::Tensor::zeros(vec![0, ds.dim()]),
            labels: vec![],
            num_classes: ds.num_classes,
            meta: ds.meta.clone(),
        };
        assert!(matches!(
            robust_accuracy(&model, &empty, AttackKind::Pgd, &pgd_cfg(), 1),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn csv_has_one_row_per_run_and_empty_level_for_sign() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let report =
            robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 3).unwrap();
        let csv = report_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.trim_end());
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,pgd,sign,,0.2,0.05,5,0,0,"));
        assert!(lines[3].starts_with("2,pgd,sign,,"));
    }

    #[test]
    fn csv_carries_quantization_level() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let cfg = AttackConfig {
            quantizer: QuantizerKind::Zeta { b: 100 },
            ..pgd_cfg()
        };
        let report =
            robust_accuracy(&model, &ds, AttackKind::Pqgd, &cfg, 1).unwrap();
        let csv = report_csv(&report);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,pqgd,zeta,100,"));
    }

    #[test]
    fn reports_are_reproducible_byte_for_byte() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let a = robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 2).unwrap();
        let b = robust_accuracy(&model, &ds, AttackKind::Pgd, &pgd_cfg(), 2).unwrap();
        assert_eq!(report_csv(&a), report_csv(&b));
        assert_eq!(report_json(&a).unwrap(), report_json(&b).unwrap());
        assert!(!report_json(&a).unwrap().contains("stage_seconds"));
    }

    #[test]
    fn step_budget_snaps_near_integer_ratios() {
        assert_eq!(step_budget(0.3, 0.01).unwrap(), 30);
        assert_eq!(step_budget(0.25, 0.025).unwrap(), 10);
        assert_eq!(step_budget(0.3, 0.011).unwrap(), 27);
        assert_eq!(step_budget(1.0, 0.3).unwrap(), 3);
        assert!(step_budget(0.1, 0.3).is_err());
        assert!(step_budget(0.0, 0.1).is_err());
    }

    #[test]
    fn sign_histogram_uses_only_unit_bins() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let hist =
            gradient_histogram(&model, &ds, GradientRepr::Sign, 0.3, 0.01).unwrap();
        assert_eq!(hist.bound, 30);
        assert!(!hist.real_valued);
        assert_eq!(hist.total(), (ds.len() * ds.dim()) as u64);
        let unit_mass = hist.count_at(-1) + hist.count_at(0) + hist.count_at(1);
        assert_eq!(unit_mass, hist.total());
    }

    #[test]
    fn quantized_histogram_conserves_mass_within_level() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let hist =
            gradient_histogram(&model, &ds, GradientRepr::Zeta { b: 10 }, 0.3, 0.01)
                .unwrap();
        assert_eq!(hist.total(), (ds.len() * ds.dim()) as u64);
        for value in -hist.bound..=hist.bound {
            if value.abs() > 10 {
                assert_eq!(hist.count_at(value), 0, "bin {value} outside level");
            }
        }
        // The scaling pins the largest component of every row to ±b.
        assert!(hist.count_at(-10) + hist.count_at(10) >= ds.len() as u64);
    }

    #[test]
    fn raw_histogram_is_flagged_real_valued() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let hist =
            gradient_histogram(&model, &ds, GradientRepr::Raw { b: 10 }, 0.3, 0.01)
                .unwrap();
        assert!(hist.real_valued);
        assert_eq!(hist.total(), (ds.len() * ds.dim()) as u64);
    }

    #[test]
    fn zero_gradients_land_in_the_zero_bin() {
        let ds = small_dataset();
        // An all-zero-weight model has zero input gradient everywhere.
        let d = ds.dim();
        let k = ds.num_classes;
        let zero = Model::new(vec![crate::model::Layer::new(
            vec![0.0; d * k],
            vec![0.0; k],
            crate::model::Activation::Linear,
            d,
            k,
        )
        .unwrap()])
        .unwrap();
        let hist =
            gradient_histogram(&zero, &ds, GradientRepr::Zeta { b: 5 }, 0.2, 0.1)
                .unwrap();
        assert_eq!(hist.count_at(0), hist.total());
    }

    #[test]
    fn histogram_csv_walks_bins_in_order() {
        let hist = GradientHistogram {
            bound: 2,
            counts: vec![1, 0, 7, 3, 2],
            real_valued: false,
        };
        assert_eq!(
            hist.to_csv(),
            "value,count\n-2,1\n-1,0\n0,7\n1,3\n2,2\n"
        );
        assert_eq!(hist.count_at(-2), 1);
        assert_eq!(hist.count_at(2), 2);
        assert_eq!(hist.count_at(3), 0);
    }

    #[test]
    fn singleton_sweep_matches_direct_report() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let base = pgd_cfg();
        let (reports, csv) = sweep(
            &model,
            &ds,
            &[AttackKind::Pgd],
            &base,
            &SweepAxis::Steps(vec![base.steps]),
            2,
        )
        .unwrap();
        assert_eq!(reports.len(), 1);
        let direct = robust_accuracy(&model, &ds, AttackKind::Pgd, &base, 2).unwrap();
        assert_eq!(reports[0].per_run_accuracy, direct.per_run_accuracy);
        assert_eq!(csv, report_csv(&direct));
    }

    #[test]
    fn sweep_walks_kinds_outermost() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let base = AttackConfig {
            quantizer: QuantizerKind::Zeta { b: 50 },
            ..pgd_cfg()
        };
        let (reports, _) = sweep(
            &model,
            &ds,
            &[AttackKind::Pqgd, AttackKind::Blob],
            &base,
            &SweepAxis::Steps(vec![1, 3]),
            1,
        )
        .unwrap();
        let order: Vec<(AttackKind, usize)> =
            reports.iter().map(|r| (r.attack, r.config.steps)).collect();
        assert_eq!(
            order,
            vec![
                (AttackKind::Pqgd, 1),
                (AttackKind::Pqgd, 3),
                (AttackKind::Blob, 1),
                (AttackKind::Blob, 3),
            ]
        );
    }

    #[test]
    fn epsilon_sweep_caps_alpha_and_hits_clean_accuracy_at_zero() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let (reports, _) = sweep(
            &model,
            &ds,
            &[AttackKind::Pgd],
            &pgd_cfg(),
            &SweepAxis::Epsilon(vec![0.0, 0.02, 0.2]),
            1,
        )
        .unwrap();
        assert_eq!(reports[0].per_run_accuracy[0], reports[0].clean_accuracy);
        assert_eq!(reports[1].config.alpha, 0.02);
        assert_eq!(reports[2].config.alpha, 0.05);
        // More budget can't help the defender.
        assert!(reports[2].avg_accuracy <= reports[0].avg_accuracy);
    }

    #[test]
    fn mixed_kind_sweep_pins_sign_steps_to_the_sign_quantizer() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let base = AttackConfig {
            quantizer: QuantizerKind::Zeta { b: 50 },
            ..pgd_cfg()
        };
        let (reports, csv) = sweep(
            &model,
            &ds,
            &[AttackKind::Pgd, AttackKind::Pqgd],
            &base,
            &SweepAxis::Steps(vec![2]),
            1,
        )
        .unwrap();
        assert_eq!(reports[0].config.quantizer, QuantizerKind::Sign);
        assert_eq!(
            reports[1].config.quantizer,
            QuantizerKind::Zeta { b: 50 }
        );
        assert!(csv.contains("0,pgd,sign,,"));
        assert!(csv.contains("0,pqgd,zeta,50,"));
    }

    #[test]
    fn level_sweep_requires_deterministic_quantizer() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let err = sweep(
            &model,
            &ds,
            &[AttackKind::Pqgd],
            &pgd_cfg(),
            &SweepAxis::Level(vec![10, 100]),
            1,
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn level_sweep_swaps_the_level_in() {
        let ds = small_dataset();
        let model = small_model(&ds);
        let base = AttackConfig {
            quantizer: QuantizerKind::Zeta { b: 1 },
            ..pgd_cfg()
        };
        let (reports, _) = sweep(
            &model,
            &ds,
            &[AttackKind::Pqgd],
            &base,
            &SweepAxis::Level(vec![10, 100]),
            1,
        )
        .unwrap();
        assert_eq!(
            reports[0].config.quantizer,
            QuantizerKind::Zeta { b: 10 }
        );
        assert_eq!(
            reports[1].config.quantizer,
            QuantizerKind::Zeta { b: 100 }
        );
    }
}
