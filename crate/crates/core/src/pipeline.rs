//! End-to-end commands: train, prune, robustness, recover.
//!
//! Output files in `out_dir`:
//!
//! | command    | files                                               |
//! |------------|-----------------------------------------------------|
//! | train      | `model.ckpt`                                        |
//! | prune      | `pruned.ckpt`, `importance.json`, `importance.csv`  |
//! | robustness | `robustness.json`, `robustness.csv`                 |
//! | recover    | `recovered.ckpt`                                    |

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ModelSpec, RunConfig};
use crate::error::{Error, Result};
use crate::importance::{compute_importance, Criterion, ImportanceReport};
use crate::objective::ModelObjective;
use crate::params::ParamSet;
use crate::perturb::{consistency_experiment, robustness_csv, RobustnessReport};
use crate::prune::prune_model;
use crate::zoo::{
    batch_from, build_mlp_with_context, build_tiny_transformer, minibatches, recover_finetune, select_indices, Batch,
    Checkpoint, Corpus, GroupTable, Model, TransformerConfig, BYTE_VOCAB,
};

pub const TRAINED_CHECKPOINT: &str = "model.ckpt";
pub const PRUNED_CHECKPOINT: &str = "pruned.ckpt";
pub const RECOVERED_CHECKPOINT: &str = "recovered.ckpt";

fn sequences(cfg: &RunConfig) -> Result<Vec<Vec<usize>>> {
    let corpus = Corpus::from_file(&cfg.data.corpus)?;
    let seqs = corpus.sequences(cfg.data.seq_len);
    if seqs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(seqs)
}

/// Fixed calibration and held-out sequence indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataSplit {
    pub calibration: Vec<usize>,
    pub heldout: Vec<usize>,
}

pub fn data_split(available: usize, cfg: &RunConfig) -> DataSplit {
    let calibration = select_indices(available, cfg.data.calibration, cfg.seed);
    let mut heldout: Vec<usize> =
        (0..available).filter(|i| calibration.binary_search(i).is_err()).take(cfg.data.heldout).collect();
    if heldout.is_empty() {
        log::warn!("no sequences left for a held-out batch; reusing the calibration batch");
        heldout = calibration.clone();
    }
    log::info!("calibration sequences {:?}", calibration);
    DataSplit { calibration, heldout }
}

/// Builds the configured byte-level model.
pub fn build_model(cfg: &RunConfig) -> Result<(Model, ParamSet, GroupTable)> {
    match &cfg.model {
        ModelSpec::Mlp { hidden, context } => {
            if *context == 0 {
                return Err(Error::Config("mlp context must be at least 1".into()));
            }
            let mut widths = vec![context * BYTE_VOCAB];
            widths.extend(hidden);
            widths.push(BYTE_VOCAB);
            build_mlp_with_context(&widths, *context, cfg.seed)
        }
        ModelSpec::Transformer { d_model, n_heads, n_layers } => {
            let t = TransformerConfig {
                vocab: BYTE_VOCAB,
                d_model: *d_model,
                n_heads: *n_heads,
                n_layers: *n_layers,
                max_len: cfg.data.seq_len,
            };
            build_tiny_transformer(&t, cfg.seed)
        }
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.join(name))
}

fn input_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| Error::Config("no input checkpoint given".into()))?;
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
    }
    Checkpoint::load(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub loss_increased: bool,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let seqs = sequences(cfg)?;
    let (model, params, groups) = build_model(cfg)?;
    let batches = minibatches(&seqs, cfg.train.batch_size);
    let outcome = recover_finetune(&model, &params, &batches, cfg.train.epochs, cfg.train.lr)?;
    let path = out_path(cfg, TRAINED_CHECKPOINT)?;
    Checkpoint { model, params: outcome.params, groups }.save(&path)?;
    log::info!("training losses {:?}", outcome.epoch_losses);
    Ok(TrainSummary {
        checkpoint: path,
        epoch_losses: outcome.epoch_losses,
        steps: outcome.steps,
        loss_increased: outcome.loss_increased,
    })
}

/// Importance report plus the run context it was produced in.
#[derive(Clone, Debug, Serialize)]
pub struct ImportanceDocument {
    pub calibration_indices: Vec<usize>,
    pub params_before: usize,
    pub params_after: usize,
    pub groups_before: usize,
    pub groups_after: usize,
    pub heldout_loss_before: f64,
    pub heldout_loss_after: f64,
    #[serde(flatten)]
    pub report: ImportanceReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct PruneSummary {
    pub checkpoint: PathBuf,
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub document: ImportanceDocument,
}

pub fn cmd_prune(cfg: &RunConfig) -> Result<PruneSummary> {
    cfg.validate()?;
    let ckpt = input_checkpoint(cfg)?;
    let seqs = sequences(cfg)?;
    let split = data_split(seqs.len(), cfg);
    let calibration = batch_from(&seqs, &split.calibration);
    let heldout = batch_from(&seqs, &split.heldout);

    let objective = ModelObjective::new(&ckpt.model, &calibration);
    let report = compute_importance(cfg.prune.criterion, &objective, &ckpt.params, &ckpt.groups, &cfg.importance())?;
    let pruned = prune_model(&ckpt.model, &ckpt.params, &ckpt.groups, &report.prune_set)?;

    let document = ImportanceDocument {
        calibration_indices: split.calibration,
        params_before: ckpt.params.numel(),
        params_after: pruned.params.numel(),
        groups_before: ckpt.groups.num_groups(),
        groups_after: pruned.groups.num_groups(),
        heldout_loss_before: ckpt.model.batch_loss(&ckpt.params, &heldout)?,
        heldout_loss_after: pruned.model.batch_loss(&pruned.params, &heldout)?,
        report,
    };
    let checkpoint = out_path(cfg, PRUNED_CHECKPOINT)?;
    Checkpoint { model: pruned.model, params: pruned.params, groups: pruned.groups }.save(&checkpoint)?;
    let report_json = out_path(cfg, "importance.json")?;
    std::fs::write(&report_json, serde_json::to_string_pretty(&document)?)?;
    let report_csv = out_path(cfg, "importance.csv")?;
    std::fs::write(&report_csv, document.report.to_csv())?;
    Ok(PruneSummary { checkpoint, report_json, report_csv, document })
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessDocument {
    pub calibration_indices: Vec<usize>,
    pub ratio: f64,
    pub reports: Vec<RobustnessReport>,
    /// Moreau criteria against the plain gradient; informational unless strict.
    pub assertions: Vec<Assertion>,
}

/// Each Moreau-type criterion should move its importance and prune set no
/// more than the plain gradient does.
pub fn directional_assertions(reports: &[RobustnessReport]) -> Vec<Assertion> {
    let Some(plain) = reports.iter().find(|r| r.criterion == Criterion::Plain) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for r in reports.iter().filter(|r| matches!(r.criterion, Criterion::Moreau | Criterion::MoreauGs)) {
        out.push(Assertion {
            name: format!("{}-relative-distance-le-plain", r.criterion),
            passed: r.relative_distance <= plain.relative_distance,
            detail: format!("{} vs {}", r.relative_distance, plain.relative_distance),
        });
        out.push(Assertion {
            name: format!("{}-symmetric-difference-le-plain", r.criterion),
            passed: r.symmetric_difference <= plain.symmetric_difference,
            detail: format!("{} vs {}", r.symmetric_difference, plain.symmetric_difference),
        });
    }
    out
}

pub fn cmd_robustness(cfg: &RunConfig) -> Result<RobustnessDocument> {
    cfg.validate()?;
    let ckpt = input_checkpoint(cfg)?;
    let seqs = sequences(cfg)?;
    let split = data_split(seqs.len(), cfg);
    let calibration = batch_from(&seqs, &split.calibration);
    let objective = ModelObjective::new(&ckpt.model, &calibration);
    let reports = consistency_experiment(
        &objective,
        &ckpt.params,
        &ckpt.groups,
        &cfg.robustness.criteria,
        &cfg.robustness.first,
        &cfg.robustness.second,
        &cfg.importance(),
    )?;
    let document = RobustnessDocument {
        calibration_indices: split.calibration,
        ratio: cfg.prune.ratio,
        assertions: directional_assertions(&reports),
        reports,
    };
    std::fs::write(out_path(cfg, "robustness.json")?, serde_json::to_string_pretty(&document)?)?;
    std::fs::write(out_path(cfg, "robustness.csv")?, robustness_csv(&document.reports))?;
    let failed: Vec<&str> = document.assertions.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect();
    if cfg.strict && !failed.is_empty() {
        return Err(Error::Strict(format!("failed assertions: {}", failed.join(", "))));
    }
    Ok(document)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoverSummary {
    pub checkpoint: PathBuf,
    pub epoch_losses: Vec<f64>,
    pub loss_increased: bool,
}

pub fn cmd_recover(cfg: &RunConfig) -> Result<RecoverSummary> {
    cfg.validate()?;
    let ckpt = input_checkpoint(cfg)?;
    let seqs = sequences(cfg)?;
    let batches: Vec<Batch> = minibatches(&seqs, cfg.train.batch_size);
    let outcome = recover_finetune(&ckpt.model, &ckpt.params, &batches, cfg.recover.epochs, cfg.recover.lr)?;
    let path = out_path(cfg, RECOVERED_CHECKPOINT)?;
    Checkpoint { model: ckpt.model, params: outcome.params, groups: ckpt.groups }.save(&path)?;
    Ok(RecoverSummary { checkpoint: path, epoch_losses: outcome.epoch_losses, loss_increased: outcome.loss_increased })
}

/// Loads `path`, or the defaults when no file is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}
