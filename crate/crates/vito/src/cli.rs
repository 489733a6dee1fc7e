//! Command implementations behind the `vito` binary: run configuration
//! files, the five subcommands, and thread-count pinning.

use crate::datagen::{self, Dataset, Problem, ProblemParams, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_field_png, render_report};
use crate::model::{load_checkpoint, ViTO, ViTOConfig};
use crate::tensorfile;
use crate::train::{train, TrainConfig};
use candle_core::DType;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Effective configuration of a run. Every field has a default; a key=value
/// text file overrides defaults, and command-line flags override the file.
/// Unknown keys in the file are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub n_samples: usize,
    pub fine_n: usize,
    pub sr_factor: usize,
    pub data_seed: u64,
    /// Optional solver final-time override (wave and Navier-Stokes).
    pub t_final: Option<f64>,
    pub noise_gamma: f64,
    pub noise_seed: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub loss_eps: f64,
    pub patience: usize,
    pub train_seed: u64,
    pub r_max: usize,
    pub model_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            problem: "darcy".into(),
            n_samples: 1000,
            fine_n: 128,
            sr_factor: 8,
            data_seed: 0,
            t_final: None,
            noise_gamma: 0.0,
            noise_seed: 1,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            weight_decay: t.weight_decay,
            loss_eps: t.loss_eps,
            patience: t.patience,
            train_seed: t.seed,
            r_max: t.r_max,
            model_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_kv_string(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in map {
            let bad = |what: &str| Error::InvalidConfig(format!("bad {what} value '{v}'"));
            match k.as_str() {
                "problem" => cfg.problem = v,
                "n_samples" => cfg.n_samples = v.parse().map_err(|_| bad("n_samples"))?,
                "fine_n" => cfg.fine_n = v.parse().map_err(|_| bad("fine_n"))?,
                "sr_factor" => cfg.sr_factor = v.parse().map_err(|_| bad("sr_factor"))?,
                "data_seed" => cfg.data_seed = v.parse().map_err(|_| bad("data_seed"))?,
                "t_final" => cfg.t_final = Some(v.parse().map_err(|_| bad("t_final"))?),
                "noise_gamma" => cfg.noise_gamma = v.parse().map_err(|_| bad("noise_gamma"))?,
                "noise_seed" => cfg.noise_seed = v.parse().map_err(|_| bad("noise_seed"))?,
                "max_epochs" => cfg.max_epochs = v.parse().map_err(|_| bad("max_epochs"))?,
                "batch_size" => cfg.batch_size = v.parse().map_err(|_| bad("batch_size"))?,
                "lr0" => cfg.lr0 = v.parse().map_err(|_| bad("lr0"))?,
                "weight_decay" => cfg.weight_decay = v.parse().map_err(|_| bad("weight_decay"))?,
                "loss_eps" => cfg.loss_eps = v.parse().map_err(|_| bad("loss_eps"))?,
                "patience" => cfg.patience = v.parse().map_err(|_| bad("patience"))?,
                "train_seed" => cfg.train_seed = v.parse().map_err(|_| bad("train_seed"))?,
                "r_max" => cfg.r_max = v.parse().map_err(|_| bad("r_max"))?,
                "model_seed" => cfg.model_seed = v.parse().map_err(|_| bad("model_seed"))?,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown config key '{other}'"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_kv_string(&text)
            }
        }
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        kv("problem", self.problem.clone());
        kv("n_samples", self.n_samples.to_string());
        kv("fine_n", self.fine_n.to_string());
        kv("sr_factor", self.sr_factor.to_string());
        kv("data_seed", self.data_seed.to_string());
        if let Some(t) = self.t_final {
            kv("t_final", t.to_string());
        }
        kv("noise_gamma", self.noise_gamma.to_string());
        kv("noise_seed", self.noise_seed.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr0", self.lr0.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("loss_eps", self.loss_eps.to_string());
        kv("patience", self.patience.to_string());
        kv("train_seed", self.train_seed.to_string());
        kv("r_max", self.r_max.to_string());
        kv("model_seed", self.model_seed.to_string());
        s
    }

    /// Solver parameters for the selected problem, with overrides applied.
    pub fn problem_params(&self) -> Result<ProblemParams> {
        let mut params = match Problem::parse(&self.problem)? {
            Problem::Wave => ProblemParams::wave_default(),
            Problem::NavierStokes => ProblemParams::ns_default(),
            Problem::Darcy => ProblemParams::darcy_default(),
        };
        if let Some(t) = self.t_final {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("t_final must be positive".into()));
            }
            match &mut params {
                ProblemParams::Wave { wave, .. } => wave.t_final = t,
                ProblemParams::NavierStokes { ns, .. } => ns.t_final = t,
                ProblemParams::Darcy { .. } => {
                    return Err(Error::InvalidArgument(
                        "t_final does not apply to the steady darcy problem".into(),
                    ))
                }
            }
        }
        Ok(params)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            weight_decay: self.weight_decay,
            loss_eps: self.loss_eps,
            patience: self.patience,
            seed: self.train_seed,
            r_max: self.r_max,
        }
    }

    fn model_config(&self, problem: Problem, sr: usize) -> ViTOConfig {
        match problem {
            Problem::Wave => ViTOConfig::wave(sr),
            Problem::NavierStokes => ViTOConfig::navier_stokes(sr),
            Problem::Darcy => ViTOConfig::darcy(sr),
        }
    }
}

/// Pin the worker thread count (flag wins over `VITO_THREADS`). Must run
/// before the first tensor op. Returns the chosen count if any.
pub fn setup_threads(flag: Option<usize>) -> Option<usize> {
    let n = flag.or_else(|| {
        std::env::var("VITO_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    })?;
    std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    Some(n)
}

fn freeze_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.txt");
    std::fs::write(&path, cfg.to_kv_string()).map_err(|e| Error::io(&path, e))
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let params = cfg.problem_params()?;
    let ds = datagen::generate(
        &params,
        cfg.n_samples,
        cfg.sr_factor,
        cfg.fine_n,
        cfg.data_seed,
    )?;
    datagen::save(&ds, out)?;
    freeze_config(cfg, out)?;
    println!(
        "generated {} {} samples (train/val/test {}/{}/{}) at fine side {} (sr {}) -> {}",
        ds.pairs.len(),
        ds.problem().name(),
        ds.splits.train.len(),
        ds.splits.val.len(),
        ds.splits.test.len(),
        ds.fine_n,
        ds.sr_factor,
        out.display()
    );
    Ok(())
}

fn load_noisy(cfg: &RunConfig, data: &Path) -> Result<Dataset> {
    let ds = datagen::load(data)?;
    if cfg.noise_gamma > 0.0 {
        datagen::add_noise(&ds, cfg.noise_gamma, cfg.noise_seed)
    } else {
        Ok(ds)
    }
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let ds = load_noisy(cfg, data)?;
    let mcfg = cfg.model_config(ds.problem(), ds.sr_factor);
    let model = ViTO::new(&mcfg, cfg.model_seed, DType::F32)?;
    println!(
        "training {} model with {} trainable parameters",
        ds.problem().name(),
        model.parameter_count()
    );
    let report = train(&model, &ds, &cfg.train_config(), Some(out))?;
    freeze_config(cfg, out)?;
    println!(
        "finished after {} epochs; best val rel-L2 {:.6} at epoch {}{}",
        report.history.len(),
        report.best_val,
        report.best_epoch,
        if report.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    Ok(())
}

fn load_matching(checkpoint: &Path, ds: &Dataset) -> Result<ViTO> {
    let model = load_checkpoint(checkpoint)?;
    let want = ds.input_mesh().nx() * model.config.sr_factor;
    if model.config.sr_factor != ds.sr_factor || want != ds.target_mesh().nx() {
        return Err(Error::InvalidConfig(format!(
            "checkpoint '{}' (sr {}) does not match dataset (sr {}, coarse {} -> fine {})",
            checkpoint.display(),
            model.config.sr_factor,
            ds.sr_factor,
            ds.input_mesh().nx(),
            ds.target_mesh().nx()
        )));
    }
    Ok(model)
}

pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    batch: usize,
    out: &Path,
) -> Result<()> {
    let ds = datagen::load(data)?;
    let model = load_matching(checkpoint, &ds)?;
    let split = Split::parse(split)?;
    let summary = evaluate(&model, &ds, split, batch)?;
    render_report(&model, &ds, &summary, out)?;
    println!(
        "split={:?} n={} mean_rel_l2={:.6} baseline_rel_l2={:.6} baseline_ratio={:.4} parameters={}",
        split,
        summary.per_sample.len(),
        summary.mean_rel_l2,
        summary.baseline_rel_l2,
        summary.baseline_ratio(),
        model.parameter_count()
    );
    Ok(())
}

pub fn cmd_predict(checkpoint: &Path, data: &Path, indices: &[usize], out: &Path) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no sample indices given".into()));
    }
    let ds = datagen::load(data)?;
    let model = load_matching(checkpoint, &ds)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for &i in indices {
        let pair = ds.pairs.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "sample index {i} out of range (dataset has {})",
                ds.pairs.len()
            ))
        })?;
        let pred = model.predict_field(&pair.input)?;
        render_field_png(&pred, &out.join(format!("predict_{i}.png")))?;
        let flat: Vec<f32> = pred.values().iter().map(|v| *v as f32).collect();
        tensorfile::write_tensor(
            &out.join(format!("predict_{i}.bin")),
            &[pred.nx(), pred.ny()],
            &flat,
        )?;
        println!("sample {i}: wrote predict_{i}.png and predict_{i}.bin");
    }
    Ok(())
}

/// Aggregate `summary.txt` files from evaluation directories into one table.
pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no run directories given".into()));
    }
    let mut lines = vec![format!(
        "{:<24} {:>14} {:>18} {:>16}",
        "run", "mean_rel_l2", "baseline_rel_l2", "baseline_ratio"
    )];
    for dir in runs {
        let path = dir.join("summary.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| -> Result<f64> {
            map.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format {
                    path: path.clone(),
                    reason: format!("missing or bad '{k}'"),
                })
        };
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        lines.push(format!(
            "{:<24} {:>14.6} {:>18.6} {:>16.4}",
            label,
            get("mean_rel_l2")?,
            get("baseline_rel_l2")?,
            get("baseline_ratio")?
        ));
    }
    let table = lines.join("\n") + "\n";
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
