//! The experiment loop: per seed, train once and score base, SWA and SWAG.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swag_core::data::{read_dataset, read_meta, SoftLabelExample};
use swag_core::eval::{
    evaluate, render_accuracy_table, render_cross_entropy_table, summarize, ComparisonSummary,
    EvalReport, Method, RunIds,
};
use swag_core::io::{read_file, write_atomic};
use swag_core::nn::{ModelSpec, TrainConfig, TrainState, Trainer};
use swag_core::posterior::{predict_ensemble_members, predict_point, SamplingConfig};
use swag_core::trajectory::{write_sidecar, ParamSnapshot, Trajectory, TrajectoryMeta};
use swag_core::{Error, ErrorKind, Result, SwagCollector};

use crate::config::ExperimentConfig;
use crate::manifest::{write_manifest, SeedRecord};

const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop every seed after this many epochs, leaving a checkpoint behind.
    pub halt_after_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SeedFailure {
    pub seed: u64,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub reports: Vec<EvalReport>,
    pub summary: Option<ComparisonSummary>,
    pub halted: Vec<u64>,
    pub failures: Vec<SeedFailure>,
}

enum SeedStatus {
    Done(Vec<EvalReport>),
    Halted,
}

/// `family/split` from the sidecar, else `<parent dir>/<file stem>`.
pub fn dataset_id(path: &Path) -> Result<String> {
    if let Some(meta) = read_meta(path)? {
        return Ok(meta.id());
    }
    let name = |p: Option<&std::ffi::OsStr>| p.map(|s| s.to_string_lossy().into_owned());
    let stem = name(path.file_stem()).unwrap_or_else(|| "data".into());
    let family = name(path.parent().and_then(|p| p.file_name())).unwrap_or_else(|| "local".into());
    Ok(format!("{family}/{stem}"))
}

fn feature_dim(data: &[SoftLabelExample], path: &Path) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| Error::Data(format!("{}: empty dataset", path.display())))?;
    let (d, c) = (first.features.len(), first.num_classes());
    if d == 0 {
        return Err(Error::Data(format!("{}: examples carry no features", path.display())));
    }
    for ex in data {
        if ex.features.len() != d || ex.num_classes() != c {
            return Err(Error::Data(format!(
                "{}: example {} has shape ({}, {}), expected ({d}, {c})",
                path.display(),
                ex.example_id,
                ex.features.len(),
                ex.num_classes()
            )));
        }
    }
    Ok((d, c))
}

pub fn report_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{}.json", method.as_str()))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn cmd_run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    cfg.check_paths()?;
    let train = read_dataset(&cfg.train)?;
    let test = read_dataset(&cfg.test)?;
    let (d, c) = feature_dim(&train, &cfg.train)?;
    if feature_dim(&test, &cfg.test)? != (d, c) {
        return Err(Error::Data(format!(
            "{} and {} differ in feature width or class count",
            cfg.train.display(),
            cfg.test.display()
        )));
    }
    let spec = cfg.model.spec(d, c).map_err(|e| Error::Config(e.to_string()))?;
    let train_id = dataset_id(&cfg.train)?;
    let test_id = dataset_id(&cfg.test)?;

    let out = cfg.out_dir();
    let hash = cfg.hash();
    fs::create_dir_all(&out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;
    let mut json = serde_json::to_vec_pretty(cfg)?;
    json.push(b'\n');
    write_atomic(&out.join("config.json"), &json)?;

    let job = SeedJob {
        cfg,
        spec: &spec,
        train: &train,
        test: &test,
        train_id: &train_id,
        test_id: &test_id,
        hash: &hash,
        opts,
    };
    let results: Vec<(u64, Result<SeedStatus>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, job.run(&seed_dir(&out, seed), seed)))
        .collect();

    let mut reports = Vec::new();
    let mut halted = Vec::new();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (seed, result) in results {
        let dir = seed_dir(&out, seed);
        let error_file = dir.join("error.txt");
        match result {
            Ok(SeedStatus::Done(r)) => {
                remove_if_exists(&error_file)?;
                records.push(SeedRecord::completed(seed));
                reports.extend(r);
            }
            Ok(SeedStatus::Halted) => {
                records.push(SeedRecord::halted(seed));
                halted.push(seed);
            }
            Err(e) => {
                let message = e.to_string();
                fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
                write_atomic(&error_file, format!("{message}\n").as_bytes())?;
                records.push(SeedRecord::failed(seed, e.kind(), &message));
                failures.push(SeedFailure {
                    seed,
                    kind: e.kind(),
                    message,
                });
            }
        }
    }

    let summary_files = [out.join("summary.json"), out.join("summary.txt")];
    let summary = if reports.is_empty() || !halted.is_empty() {
        for f in &summary_files {
            remove_if_exists(f)?;
        }
        None
    } else {
        let s = summarize(&reports)?;
        let mut json = s.to_json()?.into_bytes();
        json.push(b'\n');
        write_atomic(&summary_files[0], &json)?;
        write_atomic(&summary_files[1], render_summary(std::slice::from_ref(&s)).as_bytes())?;
        Some(s)
    };
    write_manifest(&out, &hash, &records)?;
    Ok(RunOutcome {
        out_dir: out,
        config_hash: hash,
        reports,
        summary,
        halted,
        failures,
    })
}

pub fn render_summary(summaries: &[ComparisonSummary]) -> String {
    format!(
        "Accuracy\n{}\nCross entropy (nats)\n{}",
        render_accuracy_table(summaries),
        render_cross_entropy_table(summaries)
    )
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::file(path, e)),
        _ => Ok(()),
    }
}

struct SeedJob<'a> {
    cfg: &'a ExperimentConfig,
    spec: &'a ModelSpec,
    train: &'a [SoftLabelExample],
    test: &'a [SoftLabelExample],
    train_id: &'a str,
    test_id: &'a str,
    hash: &'a str,
    opts: &'a RunOptions,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    config_hash: String,
    epochs_done: usize,
    epoch_losses: Vec<f64>,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    seed: u64,
    epoch_losses: &'a [f64],
}

impl SeedJob<'_> {
    fn run(&self, dir: &Path, seed: u64) -> Result<SeedStatus> {
        let tc = TrainConfig {
            seed,
            ..self.cfg.training.clone()
        };
        let ckpt = dir.join(CHECKPOINT_DIR);
        fs::create_dir_all(&ckpt).map_err(|e| Error::file(&ckpt, e))?;

        let (mut trainer, mut snapshots) = match self.load_checkpoint(&ckpt)? {
            Some((state, snaps)) => (Trainer::resume(self.spec, &tc, self.train, state)?, snaps),
            None => (
                Trainer::new(self.spec, &tc, self.train, self.cfg.rank_cap, self.cfg.deviation_mode)?,
                Vec::new(),
            ),
        };
        while !trainer.is_done() {
            trainer.run_epoch()?;
            let state = trainer.state();
            if state.collector.count() > snapshots.len() {
                snapshots.push(state.params.clone());
            }
            self.save_checkpoint(&ckpt, state, &snapshots)?;
            if !trainer.is_done() && self.opts.halt_after_epoch == Some(state.epochs_done) {
                return Ok(SeedStatus::Halted);
            }
        }
        let outcome = trainer.finish();

        let posterior = outcome.collector.clone().finalize()?;
        let xs: Vec<&[f64]> = self.test.iter().map(|e| e.features.as_slice()).collect();
        let sampling = SamplingConfig {
            seed,
            ..self.cfg.sampling.clone()
        };
        let ids = RunIds {
            train_set_id: self.train_id.into(),
            test_set_id: self.test_id.into(),
            seed,
        };
        let base = predict_point(&outcome.base, self.spec, &xs)?;
        let swa = predict_point(&posterior.swa_params(), self.spec, &xs)?;
        let swag = predict_ensemble_members(&posterior, self.spec, &xs, &sampling)?;
        let mut reports = vec![
            evaluate(&base, self.test, Method::Base, &ids)?,
            evaluate(&swa, self.test, Method::Swa, &ids)?,
            evaluate(&swag.mean, self.test, Method::Swag, &ids)?,
        ];
        reports[2].attach_members(&swag.members)?;
        for r in &reports {
            r.save(&report_path(dir, r.method))?;
        }

        let dim = self.spec.param_count();
        let first_epoch = tc.epochs - snapshots.len();
        let traj_path = dir.join("trajectory.swgt");
        Trajectory::new(dim, snapshots)?.save(&traj_path)?;
        write_sidecar(
            &traj_path,
            &TrajectoryMeta {
                experiment_id: format!("{}/seed-{seed}", &self.hash[..12]),
                epochs: (first_epoch..tc.epochs).collect(),
                description: Some("parameter snapshots averaged by SWA/SWAG".into()),
            },
        )?;
        let final_path = dir.join("final.swgt");
        Trajectory::new(dim, vec![outcome.base.clone()])?.save(&final_path)?;
        write_sidecar(
            &final_path,
            &TrajectoryMeta {
                experiment_id: format!("{}/seed-{seed}", &self.hash[..12]),
                epochs: vec![tc.epochs - 1],
                description: Some("final-epoch parameters (base model)".into()),
            },
        )?;
        outcome.collector.save_checkpoint(&dir.join("collector.ckpt"))?;
        let mut log = serde_json::to_vec_pretty(&TrainLog {
            seed,
            epoch_losses: &outcome.epoch_losses,
        })?;
        log.push(b'\n');
        write_atomic(&dir.join("train_log.json"), &log)?;
        fs::remove_dir_all(&ckpt).map_err(|e| Error::file(&ckpt, e))?;
        Ok(SeedStatus::Done(reports))
    }

    fn save_checkpoint(&self, ckpt: &Path, state: &TrainState, snapshots: &[ParamSnapshot]) -> Result<()> {
        let dim = self.spec.param_count();
        Trajectory::new(dim, vec![state.params.clone()])?.save(&ckpt.join("params.swgt"))?;
        Trajectory::new(dim, snapshots.to_vec())?.save(&ckpt.join("snapshots.swgt"))?;
        state.collector.save_checkpoint(&ckpt.join("collector.ckpt"))?;
        // Written last: its presence marks the checkpoint complete.
        let json = serde_json::to_vec_pretty(&CheckpointState {
            config_hash: self.hash.into(),
            epochs_done: state.epochs_done,
            epoch_losses: state.epoch_losses.clone(),
        })?;
        write_atomic(&ckpt.join("state.json"), &json)
    }

    fn load_checkpoint(&self, ckpt: &Path) -> Result<Option<(TrainState, Vec<ParamSnapshot>)>> {
        let state_path = ckpt.join("state.json");
        if !state_path.exists() {
            return Ok(None);
        }
        let saved: CheckpointState = serde_json::from_slice(&read_file(&state_path)?)?;
        if saved.config_hash != self.hash {
            return Err(Error::Config(format!(
                "{} belongs to a different configuration; remove it to start over",
                ckpt.display()
            )));
        }
        let params = Trajectory::load(&ckpt.join("params.swgt"))?
            .into_snapshots()
            .pop()
            .ok_or_else(|| Error::Data(format!("{}: empty parameter checkpoint", ckpt.display())))?;
        let snapshots = Trajectory::load(&ckpt.join("snapshots.swgt"))?.into_snapshots();
        let collector = SwagCollector::load_checkpoint(&ckpt.join("collector.ckpt"))?;
        if collector.count() != snapshots.len() {
            return Err(Error::Data(format!(
                "{}: collector holds {} snapshots, trajectory {}",
                ckpt.display(),
                collector.count(),
                snapshots.len()
            )));
        }
        let state = TrainState {
            params,
            collector,
            epochs_done: saved.epochs_done,
            epoch_losses: saved.epoch_losses,
        };
        Ok(Some((state, snapshots)))
    }
}
