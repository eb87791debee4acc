use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::manifest::{digest_of, RunManifest, StageRecord};
use super::{ExperimentConfig, ModelSpec};
use crate::analysis::{analyze_trials, plot_figures, ModelTrials};
use crate::models::{load_checkpoint, save_checkpoint, Family, ModelConfig};
use crate::stimuli::{generate_dataset, DatasetManifest, Split, MANIFEST_CSV, MANIFEST_INFO};
use crate::training::{
    evaluate, load_split, read_trials, train_cnn, train_ram, write_trials, LearningCurve,
    ModelPredictor,
};
use crate::util::{sha256_file, sha256_hex, write_atomic};
use crate::{Error, Result};

/// Picks a subset of the configured models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelSelector {
    pub family: Option<Family>,
    pub duration: Option<u32>,
}

impl ModelSelector {
    pub fn matches(&self, spec: &ModelSpec) -> bool {
        self.family.map_or(true, |f| f == spec.family)
            && self.duration.map_or(true, |d| d == spec.duration)
    }
}

/// What a stage did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageReport {
    pub stage: String,
    /// Inputs and outputs were unchanged, nothing was redone.
    pub skipped: bool,
    pub outputs: usize,
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoint(&self, id: &str) -> PathBuf {
        self.root.join("models").join(format!("{id}.ckpt"))
    }

    pub fn curve(&self, id: &str) -> PathBuf {
        self.root.join("models").join(format!("{id}_curve.csv"))
    }

    pub fn trials(&self, id: &str) -> PathBuf {
        self.root.join("trials").join(format!("{id}.csv"))
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.root.join("figures")
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

fn require(stage: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::StageDependency {
            stage: stage.to_string(),
            missing: path.display().to_string(),
        })
    }
}

pub struct Pipeline {
    config: ExperimentConfig,
    layout: RunLayout,
    data_dir: PathBuf,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, root: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let layout = RunLayout::new(root);
        let data_dir = layout.data_dir();
        Ok(Pipeline {
            config,
            layout,
            data_dir,
        })
    }

    /// Reads the dataset from `dir` instead of `<root>/data`. A run root
    /// that contains `data/` is accepted as well.
    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        self.data_dir =
            if !dir.join(MANIFEST_CSV).exists() && dir.join("data").join(MANIFEST_CSV).exists() {
                dir.join("data")
            } else {
                dir
            };
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn layout(&self) -> &RunLayout {
        &self.layout
    }

    fn manifest(&self) -> Result<RunManifest> {
        RunManifest::load_or_new(&self.layout.root, &self.config)
    }

    fn commit(
        &self,
        manifest: &mut RunManifest,
        stage: &str,
        fp: String,
        outputs: &[PathBuf],
    ) -> Result<usize> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            hashes.insert(self.layout.rel(p), sha256_file(p)?);
        }
        let n = hashes.len();
        manifest.record(stage, StageRecord::new(fp, hashes));
        manifest.save(&self.layout.root)?;
        write_atomic(
            &self.layout.root.join("config.toml"),
            self.config.to_toml()?.as_bytes(),
        )?;
        Ok(n)
    }

    fn skipped(stage: &str, manifest: &RunManifest) -> StageReport {
        log::info!("{stage}: up to date");
        StageReport {
            stage: stage.to_string(),
            skipped: true,
            outputs: manifest.stages[stage].outputs.len(),
        }
    }

    /// Writes the dataset to `<root>/data`.
    pub fn generate(&self) -> Result<StageReport> {
        const STAGE: &str = "generate";
        let cfg = self.config.dataset_config();
        cfg.counts.validate()?;
        let fp = fingerprint(&(STAGE, &cfg, crate::stimuli::CANVAS))?;
        let mut manifest = self.manifest()?;
        if manifest.is_current(STAGE, &fp, &self.layout.root) {
            return Ok(Self::skipped(STAGE, &manifest));
        }
        let target = self.layout.data_dir();
        let staging = self.layout.root.join(".data.partial");
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        log::info!("generating {} stimuli", cfg.counts.total());
        let data = generate_dataset(&cfg, &staging)?;
        if target.exists() {
            std::fs::remove_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        }
        std::fs::rename(&staging, &target).map_err(|e| Error::io(&target, e))?;
        let mut outputs: Vec<PathBuf> = data
            .records
            .iter()
            .map(|r| target.join(&r.image_path))
            .collect();
        outputs.push(target.join(MANIFEST_CSV));
        outputs.push(target.join(MANIFEST_INFO));
        let n = self.commit(&mut manifest, STAGE, fp, &outputs)?;
        Ok(StageReport {
            stage: STAGE.into(),
            skipped: false,
            outputs: n,
        })
    }

    /// Content hash of the dataset the later stages read.
    pub fn dataset_digest(&self, stage: &str) -> Result<String> {
        let csv = self.data_dir.join(MANIFEST_CSV);
        require(stage, &csv)?;
        let data = DatasetManifest::load(&self.data_dir)?;
        let mut hashes = BTreeMap::new();
        for r in &data.records {
            let p = self.data_dir.join(&r.image_path);
            require(stage, &p)?;
            hashes.insert(r.image_path.clone(), sha256_file(&p)?);
        }
        hashes.insert(MANIFEST_CSV.into(), sha256_file(&csv)?);
        hashes.insert(
            MANIFEST_INFO.into(),
            sha256_file(&self.data_dir.join(MANIFEST_INFO))?,
        );
        Ok(digest_of(&hashes))
    }

    fn selected(&self, selector: &ModelSelector) -> Result<Vec<ModelSpec>> {
        let specs: Vec<ModelSpec> = self
            .config
            .model_specs()?
            .into_iter()
            .filter(|s| selector.matches(s))
            .collect();
        if specs.is_empty() {
            return Err(Error::Config(format!(
                "no configured model matches {selector:?}"
            )));
        }
        Ok(specs)
    }

    pub fn train(&self, selector: &ModelSelector) -> Result<Vec<StageReport>> {
        let specs = self.selected(selector)?;
        let digest = self.dataset_digest("train")?;
        let mut manifest = self.manifest()?;
        let mut reports = Vec::new();
        let mut splits = None;
        for spec in specs {
            let stage = format!("train/{}", spec.id);
            let fp = fingerprint(&(&stage, &spec, &digest))?;
            if manifest.is_current(&stage, &fp, &self.layout.root) {
                reports.push(Self::skipped(&stage, &manifest));
                continue;
            }
            if splits.is_none() {
                let data = DatasetManifest::load(&self.data_dir)?;
                splits = Some((
                    load_split(&self.data_dir, &data, Split::Train)?,
                    load_split(&self.data_dir, &data, Split::Val)?,
                ));
            }
            let (train, val) = splits.as_ref().expect("loaded");
            log::info!(
                "training {} ({} epochs max)",
                spec.id,
                spec.train.max_epochs
            );
            let outcome = match &spec.model {
                ModelConfig::Cnn(c) => train_cnn(c, train, val, &spec.train)?,
                ModelConfig::Ram(r) => train_ram(r, train, val, &spec.train)?,
            };
            let meta = serde_json::json!({
                "model_id": spec.id,
                "best_epoch": outcome.best_epoch,
                "best_val_loss": outcome.best_val_loss,
                "stopped_epoch": outcome.stopped_epoch,
                "train": spec.train,
            });
            let ckpt = self.layout.checkpoint(&spec.id);
            let curve = self.layout.curve(&spec.id);
            save_checkpoint(&ckpt, &outcome.model, &meta)?;
            write_atomic(&curve, &outcome.curve.to_csv()?)?;
            let n = self.commit(&mut manifest, &stage, fp, &[ckpt, curve])?;
            reports.push(StageReport {
                stage,
                skipped: false,
                outputs: n,
            });
        }
        Ok(reports)
    }

    pub fn eval(&self, selector: &ModelSelector) -> Result<Vec<StageReport>> {
        let specs = self.selected(selector)?;
        for spec in &specs {
            require("eval", &self.layout.checkpoint(&spec.id))?;
        }
        let digest = self.dataset_digest("eval")?;
        let mut manifest = self.manifest()?;
        let mut reports = Vec::new();
        let mut test = None;
        for spec in specs {
            let stage = format!("eval/{}", spec.id);
            let ckpt_path = self.layout.checkpoint(&spec.id);
            let seed = self.config.analysis.eval_seed;
            let fp = fingerprint(&(&stage, &spec.model, sha256_file(&ckpt_path)?, &digest, seed))?;
            if manifest.is_current(&stage, &fp, &self.layout.root) {
                reports.push(Self::skipped(&stage, &manifest));
                continue;
            }
            let ckpt = load_checkpoint(&ckpt_path)?;
            if ckpt.model.config() != spec.model {
                return Err(Error::Checkpoint(format!(
                    "{} was trained with a different architecture than the config describes",
                    ckpt_path.display()
                )));
            }
            if test.is_none() {
                let data = DatasetManifest::load(&self.data_dir)?;
                test = Some(load_split(&self.data_dir, &data, Split::Test)?);
            }
            let test = test.as_ref().expect("loaded");
            let mut predictor = ModelPredictor::new(&ckpt.model, seed);
            let trials = evaluate(
                &mut predictor,
                &spec.id,
                spec.duration,
                test,
                spec.train.batch_size,
            )?;
            let acc = trials.iter().filter(|t| t.correct).count() as f64 / trials.len() as f64;
            log::info!("{}: test accuracy {acc:.4}", spec.id);
            let path = self.layout.trials(&spec.id);
            write_trials(&path, &trials)?;
            let n = self.commit(&mut manifest, &stage, fp, &[path])?;
            reports.push(StageReport {
                stage,
                skipped: false,
                outputs: n,
            });
        }
        Ok(reports)
    }

    fn trial_inputs(&self, stage: &str) -> Result<(Vec<ModelSpec>, BTreeMap<String, String>)> {
        let specs = self.config.model_specs()?;
        let mut hashes = BTreeMap::new();
        for spec in &specs {
            let p = self.layout.trials(&spec.id);
            require(stage, &p)?;
            hashes.insert(self.layout.rel(&p), sha256_file(&p)?);
        }
        Ok((specs, hashes))
    }

    fn load_trials(&self, specs: &[ModelSpec]) -> Result<Vec<ModelTrials>> {
        specs
            .iter()
            .map(|s| {
                Ok(ModelTrials {
                    model_id: s.id.clone(),
                    family: s.family,
                    duration: s.duration,
                    trials: read_trials(&self.layout.trials(&s.id))?,
                })
            })
            .collect()
    }

    pub fn analyze(&self) -> Result<StageReport> {
        const STAGE: &str = "analyze";
        let (specs, inputs) = self.trial_inputs(STAGE)?;
        let opts = self.config.analysis_options();
        let fp = fingerprint(&(STAGE, &inputs, &opts))?;
        let mut manifest = self.manifest()?;
        if manifest.is_current(STAGE, &fp, &self.layout.root) {
            return Ok(Self::skipped(STAGE, &manifest));
        }
        let dir = self.layout.analysis_dir();
        let summary = analyze_trials(&self.load_trials(&specs)?, &opts, &dir)?;
        let summary_path = dir.join("summary.json");
        write_atomic(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;
        let mut outputs: Vec<PathBuf> = summary.files.iter().map(|f| dir.join(f)).collect();
        outputs.push(summary_path);
        let n = self.commit(&mut manifest, STAGE, fp, &outputs)?;
        Ok(StageReport {
            stage: STAGE.into(),
            skipped: false,
            outputs: n,
        })
    }

    pub fn plot(&self) -> Result<StageReport> {
        const STAGE: &str = "plot";
        let (specs, mut inputs) = self.trial_inputs(STAGE)?;
        let mut curves = Vec::new();
        for s in &specs {
            let p = self.layout.curve(&s.id);
            require(STAGE, &p)?;
            inputs.insert(self.layout.rel(&p), sha256_file(&p)?);
            curves.push((s.id.clone(), s.family, LearningCurve::read_csv(&p)?));
        }
        let fp = fingerprint(&(STAGE, &inputs))?;
        let mut manifest = self.manifest()?;
        if manifest.is_current(STAGE, &fp, &self.layout.root) {
            return Ok(Self::skipped(STAGE, &manifest));
        }
        let dir = self.layout.figures_dir();
        let files = plot_figures(&self.load_trials(&specs)?, &curves, &dir)?;
        let outputs: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
        let n = self.commit(&mut manifest, STAGE, fp, &outputs)?;
        Ok(StageReport {
            stage: STAGE.into(),
            skipped: false,
            outputs: n,
        })
    }

    /// Every stage in order, for every configured model.
    pub fn all(&self) -> Result<Vec<StageReport>> {
        let all = ModelSelector::default();
        let mut reports = vec![self.generate()?];
        reports.extend(self.train(&all)?);
        reports.extend(self.eval(&all)?);
        reports.push(self.analyze()?);
        reports.push(self.plot()?);
        Ok(reports)
    }
}
