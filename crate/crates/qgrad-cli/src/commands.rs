//! The five subcommands, all following the same recipe: resolve the
//! config into library types, run, write artifacts into the output
//! directory, and finish with a `manifest.json` echoing exactly what
//! was resolved (no timestamps, so identical runs produce identical
//! bytes).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qgrad::attack::{attack_with_restarts, AttackConfig, AttackKind, AttackResult};
use qgrad::data::{load_idx, synth_dataset, Dataset};
use qgrad::error::Error;
use qgrad::eval::{
    gradient_histogram, report_csv, report_json, robust_accuracy, sweep,
    RobustnessReport,
};
use qgrad::model::{Model, ModelSpec};
use qgrad::train::{train_adversarial, train_standard, training_log_csv, TrainConfig};

use crate::config::{DatasetSection, RunConfig};
use crate::CliError;

/// Magic prefix of the adversarial-example archive written by `attack`.
const ARCHIVE_MAGIC: &[u8; 8] = b"QGADV001";

/// Everything a command needs beyond the parsed config.
pub struct Ctx {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

impl Ctx {
    fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section.as_ref().ok_or_else(|| {
            CliError::Config(format!("this command needs a [{name}] config section"))
        })
    }

    fn checkpoint_path(&self) -> Result<&Path, CliError> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs --checkpoint".into()))
    }
}

/// Resolve a dataset path: absolute stays as-is, relative goes through
/// `QGRAD_DATA_DIR` when that is set.
fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("QGRAD_DATA_DIR") {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}

fn load_dataset(ctx: &Ctx) -> Result<Dataset, CliError> {
    let (mut dataset, downscale, limit) = match &ctx.config.dataset {
        DatasetSection::Synthetic {
            examples,
            side,
            classes,
            seed,
            downscale,
            limit,
        } => (
            synth_dataset(*examples, *side, *classes, *seed)?,
            *downscale,
            *limit,
        ),
        DatasetSection::Idx {
            images,
            labels,
            downscale,
            limit,
        } => {
            let images = resolve_data_path(images);
            let labels = resolve_data_path(labels);
            for path in [&images, &labels] {
                if !path.is_file() {
                    return Err(CliError::MissingFile(path.clone()));
                }
            }
            (load_idx(&images, &labels)?, *downscale, *limit)
        }
    };
    if let Some(factor) = downscale {
        dataset = qgrad::data::downscale(&dataset, factor)?;
    }
    if let Some(limit) = limit {
        if limit == 0 {
            return Err(CliError::Config("dataset limit must be at least 1".into()));
        }
        dataset = dataset.take(limit);
    }
    Ok(dataset)
}

fn load_checkpoint(ctx: &Ctx, dataset: &Dataset) -> Result<Model, CliError> {
    let path = ctx.checkpoint_path()?;
    if !path.is_file() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let model = Model::load(path).map_err(|e| match e {
        Error::CheckpointBadMagic | Error::CheckpointMalformed(_) => {
            CliError::Checkpoint(format!("{}: {e}", path.display()))
        }
        other => CliError::from(other),
    })?;
    if model.input_dim() != dataset.dim() {
        return Err(CliError::Checkpoint(format!(
            "checkpoint expects {} inputs but the dataset provides {}",
            model.input_dim(),
            dataset.dim()
        )));
    }
    if model.num_classes() < dataset.num_classes {
        return Err(CliError::Checkpoint(format!(
            "checkpoint has {} classes but the dataset has {}",
            model.num_classes(),
            dataset.num_classes
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct DatasetInfo {
    name: String,
    examples: usize,
    dimensions: usize,
    classes: usize,
}

impl DatasetInfo {
    fn of(dataset: &Dataset) -> Self {
        Self {
            name: dataset.meta.name.clone(),
            examples: dataset.len(),
            dimensions: dataset.dim(),
            classes: dataset.num_classes,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    seed_override: Option<u64>,
    dataset: DatasetInfo,
    resolved: serde_json::Value,
    outputs: Vec<String>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(Error::from)?;
    fs::write(dir.join(name), bytes).map_err(Error::from)?;
    Ok(())
}

fn write_manifest(
    ctx: &Ctx,
    command: &str,
    dataset: &Dataset,
    resolved: serde_json::Value,
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command,
        config_path: ctx.config_path.display().to_string(),
        seed_override: ctx.seed,
        dataset: DatasetInfo::of(dataset),
        resolved,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    text.push('\n');
    write_file(&ctx.out_dir, "manifest.json", text.as_bytes())
}

fn model_spec(ctx: &Ctx, dataset: &Dataset) -> ModelSpec {
    ModelSpec {
        input_dim: dataset.dim(),
        hidden: ctx.config.model.hidden.clone(),
        num_classes: dataset.num_classes,
    }
}

pub fn cmd_train(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.section(&ctx.config.train, "train")?;
    let cfg: TrainConfig = section.to_config(ctx.seed)?;
    let dataset = load_dataset(ctx)?;
    let spec = model_spec(ctx, &dataset);

    let (model, stats) = if cfg.adversarial.is_some() {
        train_adversarial(&dataset, &spec, &cfg)?
    } else {
        train_standard(&dataset, &spec, &cfg)?
    };

    fs::create_dir_all(&ctx.out_dir).map_err(Error::from)?;
    model.save(&ctx.out_dir.join("model.ckpt"))?;
    write_file(
        &ctx.out_dir,
        "training_log.csv",
        training_log_csv(&stats).as_bytes(),
    )?;
    write_manifest(
        ctx,
        "train",
        &dataset,
        serde_json::json!({ "model": spec, "train": cfg }),
        vec!["model.ckpt".into(), "training_log.csv".into()],
    )?;

    if let Some(last) = stats.last() {
        println!(
            "trained {} epochs: clean accuracy {:.4}, loss {:.4}",
            stats.len(),
            last.clean_accuracy,
            last.clean_loss
        );
    } else {
        println!("trained 0 epochs: checkpoint holds the initialization");
    }
    Ok(())
}

/// Summary for a single attack run, written next to the archive.
#[derive(Serialize)]
struct AttackReport {
    attack: AttackKind,
    config: AttackConfig,
    clean_accuracy: f64,
    surviving_accuracy: f64,
    examples_broken: usize,
    iterations_run: usize,
}

/// Archive layout: `QGADV001` magic, little-endian u32 example count
/// and dimension, the adversarial pixels as little-endian f64 in row
/// order, then one `0/1` byte per example (1 = the model now mislabels
/// it).
fn write_archive(path: &Path, result: &AttackResult) -> Result<(), CliError> {
    let n = result.adversarial.num_rows();
    let d = result.adversarial.row_len();
    let mut bytes =
        Vec::with_capacity(16 + 8 * n * d + result.misclassified.len());
    bytes.write_all(ARCHIVE_MAGIC).map_err(Error::from)?;
    bytes
        .write_all(&(n as u32).to_le_bytes())
        .map_err(Error::from)?;
    bytes
        .write_all(&(d as u32).to_le_bytes())
        .map_err(Error::from)?;
    for &v in result.adversarial.as_slice() {
        bytes.write_all(&v.to_le_bytes()).map_err(Error::from)?;
    }
    for &m in &result.misclassified {
        bytes.push(u8::from(m));
    }
    fs::write(path, bytes).map_err(Error::from)?;
    Ok(())
}

pub fn cmd_attack(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.section(&ctx.config.attack, "attack")?;
    let cfg = section.to_config(ctx.seed)?;
    let dataset = load_dataset(ctx)?;
    let model = load_checkpoint(ctx, &dataset)?;

    let clean_accuracy = model.accuracy(&dataset.images, &dataset.labels)?;
    let result =
        attack_with_restarts(&model, &dataset.images, &dataset.labels, &cfg, section.kind)?;
    let report = AttackReport {
        attack: section.kind,
        config: cfg.clone(),
        clean_accuracy,
        surviving_accuracy: result.surviving_accuracy(),
        examples_broken: result.misclassified.iter().filter(|&&m| m).count(),
        iterations_run: result.iterations_run,
    };

    fs::create_dir_all(&ctx.out_dir).map_err(Error::from)?;
    write_archive(&ctx.out_dir.join("adversarial.bin"), &result)?;
    let mut report_text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    report_text.push('\n');
    write_file(&ctx.out_dir, "report.json", report_text.as_bytes())?;
    write_manifest(
        ctx,
        "attack",
        &dataset,
        serde_json::json!({ "attack": { "kind": section.kind, "config": cfg } }),
        vec!["adversarial.bin".into(), "report.json".into()],
    )?;

    println!(
        "{}: clean accuracy {:.4} -> surviving accuracy {:.4} ({} of {} broken)",
        section.kind.label(),
        report.clean_accuracy,
        report.surviving_accuracy,
        report.examples_broken,
        dataset.len()
    );
    Ok(())
}

fn print_report(report: &RobustnessReport) {
    println!(
        "{} x{}: clean {:.4}, worst {:.4}, avg {:.4}, merged {:.4}",
        report.attack.label(),
        report.num_runs,
        report.clean_accuracy,
        report.worst_accuracy,
        report.avg_accuracy,
        report.merged_accuracy
    );
    eprintln!(
        "timing: clean pass {:.3}s, attacks {:.3}s",
        report.stage_seconds.clean, report.stage_seconds.attack
    );
}

pub fn cmd_eval(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.section(&ctx.config.attack, "attack")?;
    let cfg = section.to_config(ctx.seed)?;
    let num_runs = ctx
        .config
        .eval
        .as_ref()
        .map(|e| e.num_runs)
        .unwrap_or(1);
    let dataset = load_dataset(ctx)?;
    let model = load_checkpoint(ctx, &dataset)?;

    let report = robust_accuracy(&model, &dataset, section.kind, &cfg, num_runs)?;
    fs::create_dir_all(&ctx.out_dir).map_err(Error::from)?;
    write_file(&ctx.out_dir, "report.json", report_json(&report)?.as_bytes())?;
    write_file(&ctx.out_dir, "report.csv", report_csv(&report).as_bytes())?;
    write_manifest(
        ctx,
        "eval",
        &dataset,
        serde_json::json!({
            "attack": { "kind": section.kind, "config": cfg },
            "eval": { "num_runs": num_runs },
        }),
        vec!["report.json".into(), "report.csv".into()],
    )?;
    print_report(&report);
    Ok(())
}

pub fn cmd_histogram(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.section(&ctx.config.histogram, "histogram")?;
    let repr = section.to_repr()?;
    let dataset = load_dataset(ctx)?;
    let model = load_checkpoint(ctx, &dataset)?;

    let hist = gradient_histogram(&model, &dataset, repr, section.epsilon, section.alpha)?;
    fs::create_dir_all(&ctx.out_dir).map_err(Error::from)?;
    write_file(&ctx.out_dir, "histogram.csv", hist.to_csv().as_bytes())?;
    write_manifest(
        ctx,
        "histogram",
        &dataset,
        serde_json::json!({
            "histogram": {
                "bound": hist.bound,
                "real_valued": hist.real_valued,
                "epsilon": section.epsilon,
                "alpha": section.alpha,
            }
        }),
        vec!["histogram.csv".into()],
    )?;
    println!(
        "histogram over {} components: {} bins in [{}, {}]",
        hist.total(),
        2 * hist.bound + 1,
        -hist.bound,
        hist.bound
    );
    Ok(())
}

pub fn cmd_sweep(ctx: &Ctx) -> Result<(), CliError> {
    let attack_section = ctx.section(&ctx.config.attack, "attack")?;
    let sweep_section = ctx.section(&ctx.config.sweep, "sweep")?;
    let base = attack_section.to_config(ctx.seed)?;
    let axis = sweep_section.to_axis()?;
    let dataset = load_dataset(ctx)?;
    let model = load_checkpoint(ctx, &dataset)?;

    let (reports, csv) = sweep(
        &model,
        &dataset,
        &sweep_section.kinds,
        &base,
        &axis,
        sweep_section.num_runs,
    )?;
    fs::create_dir_all(&ctx.out_dir).map_err(Error::from)?;
    write_file(&ctx.out_dir, "sweep.csv", csv.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&reports).map_err(Error::from)?;
    json.push('\n');
    write_file(&ctx.out_dir, "sweep.json", json.as_bytes())?;
    write_manifest(
        ctx,
        "sweep",
        &dataset,
        serde_json::json!({
            "attack": { "base": base },
            "sweep": {
                "kinds": sweep_section.kinds,
                "axis": axis,
                "num_runs": sweep_section.num_runs,
            },
        }),
        vec!["sweep.csv".into(), "sweep.json".into()],
    )?;
    for report in &reports {
        print_report(report);
    }
    Ok(())
}
