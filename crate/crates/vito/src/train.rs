//! Training loop: relative-L2 loss, AdamW with cosine-annealed learning
//! rate, early stopping on validation loss, and optional variable-grid
//! augmentation that feeds randomly subsampled observations to the network.

use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::mesh::{rounded_side, subsample_to_side, Field2D};
use crate::model::{encode_inputs, save_checkpoint, ViTO};
use crate::rng::derived_stream;
use candle_core::{DType, Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate of the cosine schedule.
    pub lr0: f64,
    pub weight_decay: f64,
    /// Stabilizer added to the denominator of the training loss.
    pub loss_eps: f64,
    /// Stop after this many epochs without validation improvement; 0 disables.
    pub patience: usize,
    /// Shuffling / augmentation seed (weights are seeded by the model).
    pub seed: u64,
    /// Largest subsampling ratio for variable-grid augmentation; 1 disables.
    pub r_max: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 50,
            lr0: 1e-3,
            weight_decay: 1e-4,
            loss_eps: 1e-8,
            patience: 20,
            seed: 0,
            r_max: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr0 > 0.0) || !(self.weight_decay >= 0.0) || !(self.loss_eps >= 0.0) {
            return Err(Error::InvalidConfig(
                "lr0 must be positive; weight_decay and loss_eps non-negative".into(),
            ));
        }
        if self.r_max == 0 {
            return Err(Error::InvalidConfig("r_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cosine-annealed learning rate at the start of `epoch` (0-based).
pub fn cosine_lr(lr0: f64, epoch: usize, max_epochs: usize) -> f64 {
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / max_epochs as f64).cos())
}

/// Relative L2 error of one sample: `||pred - target|| / (||target|| + eps)`.
pub fn relative_l2(pred: &Array2<f64>, target: &Array2<f64>, eps: f64) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "shape mismatch in relative_l2");
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    num.sqrt() / (den.sqrt() + eps)
}

/// Differentiable batch-mean relative L2 loss on `(B, 1, H, W)` tensors.
pub fn relative_l2_loss(pred: &Tensor, target: &Tensor, eps: f64) -> Result<Tensor> {
    let b = pred.dim(0)?;
    let d = (pred - target)?.reshape((b, ()))?;
    let t = target.reshape((b, ()))?;
    let num = d.sqr()?.sum(D::Minus1)?.sqrt()?;
    let den = (t.sqr()?.sum(D::Minus1)?.sqrt()? + eps)?;
    Ok((num / den)?.mean_all()?)
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
}

/// Early-stopping rule: stop once `patience` epochs have elapsed since the
/// best validation epoch (patience 0 never stops).
pub fn should_stop(best_epoch: usize, current_epoch: usize, patience: usize) -> bool {
    patience > 0 && current_epoch >= best_epoch + patience
}

fn field_batch_tensor(fields: &[&Field2D], dtype: DType) -> Result<Tensor> {
    let dev = candle_core::Device::Cpu;
    let (nx, ny) = (fields[0].nx(), fields[0].ny());
    let mut parts = Vec::with_capacity(fields.len());
    for f in fields {
        let data: Vec<f64> = f.values().iter().cloned().collect();
        parts.push(Tensor::from_vec(data, (1, 1, nx, ny), &dev)?);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok(Tensor::cat(&refs, 0)?.to_dtype(dtype)?)
}

fn tensor_to_fields(batch: &Tensor, template: &Field2D) -> Result<Vec<Array2<f64>>> {
    let (b, _c, h, w) = batch.dims4()?;
    let flat: Vec<f64> = batch.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    let _ = template;
    (0..b)
        .map(|i| {
            Array2::from_shape_vec((h, w), flat[i * h * w..(i + 1) * h * w].to_vec())
                .map_err(|e| Error::InvalidState(format!("bad batch shape: {e}")))
        })
        .collect()
}

/// Mean relative L2 over a list of samples, eval mode, computed in f64.
fn split_loss(model: &ViTO, dataset: &Dataset, idx: &[usize], batch: usize, eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(batch) {
        let inputs: Vec<&Field2D> = chunk.iter().map(|&i| &dataset.pairs[i].input).collect();
        let x = encode_inputs(&inputs, model.store.dtype)?;
        let pred = model.forward(&x, false)?;
        let preds = tensor_to_fields(&pred, &dataset.pairs[chunk[0]].target)?;
        for (k, &i) in chunk.iter().enumerate() {
            total += relative_l2(&preds[k], dataset.pairs[i].target.values(), eps);
        }
    }
    Ok(total / idx.len() as f64)
}

/// Train `model` on the dataset's train split, validating each epoch.
///
/// If `out_dir` is given, the best-validation checkpoint is stored there as
/// `model_best.ckpt` and per-epoch statistics as `history.csv`. On return the
/// model holds the best-validation weights.
pub fn train(
    model: &ViTO,
    dataset: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let train_idx = dataset.splits.of(Split::Train).to_vec();
    let val_idx = dataset.splits.of(Split::Val).to_vec();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidState("empty train or val split".into()));
    }
    let n_in = dataset.input_mesh().nx();
    if cfg.r_max > 1 && !dataset.input_mesh().is_square() {
        return Err(Error::InvalidConfig(
            "variable-grid augmentation needs square inputs".into(),
        ));
    }

    let mut opt = AdamW::new(
        model.store.trainable_vars(),
        ParamsAdamW {
            lr: cfg.lr0,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    )?;

    let mut history_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("history.csv");
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "epoch,lr,train_loss,val_loss").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };

    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights: Option<Vec<(String, Tensor)>> = None;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(cfg.lr0, epoch, cfg.max_epochs);
        opt.set_learning_rate(lr);
        let mut rng = derived_stream(cfg.seed, 1 + epoch as u64);

        let mut shuffled = train_idx.clone();
        shuffled.shuffle(&mut rng);
        let batches: Vec<Vec<usize>> =
            shuffled.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (batch_no, members) in batches.iter().enumerate() {
            // One subsampling factor per batch; the targets stay on the fine
            // grid and the network output is resized to match them.
            let side = if cfg.r_max > 1 {
                rounded_side(n_in, rng.gen_range(1..=cfg.r_max))
            } else {
                n_in
            };
            let mut inputs = Vec::with_capacity(members.len());
            let mut targets = Vec::with_capacity(members.len());
            for &i in members {
                let pair = &dataset.pairs[i];
                if side == n_in {
                    inputs.push(pair.input.clone());
                } else {
                    inputs.push(subsample_to_side(&pair.input, side, side)?);
                }
                targets.push(pair.target.clone());
            }
            let in_refs: Vec<&Field2D> = inputs.iter().collect();
            let tg_refs: Vec<&Field2D> = targets.iter().collect();
            let x = encode_inputs(&in_refs, model.store.dtype)?;
            let y = field_batch_tensor(&tg_refs, model.store.dtype)?;
            let t_side = (dataset.pairs[members[0]].target.nx(), dataset.pairs[members[0]].target.ny());
            let pred = model.forward_to(&x, true, t_side)?;
            let loss = relative_l2_loss(&pred, &y, cfg.loss_eps)?;
            let loss_val = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss {loss_val} at epoch {epoch}, batch {batch_no} \
                     (side {side}, {} samples, lr {lr:.3e})",
                    members.len()
                )));
            }
            opt.backward_step(&loss)?;
            epoch_loss += loss_val * members.len() as f64;
            seen += members.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = split_loss(model, dataset, &val_idx, cfg.batch_size, cfg.loss_eps)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }

        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
        if let Some((f, path)) = &mut history_file {
            writeln!(f, "{epoch},{lr:.8e},{train_loss:.8e},{val_loss:.8e}")
                .map_err(|e| Error::io(&*path, e))?;
            f.flush().map_err(|e| Error::io(&*path, e))?;
        }

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_weights = Some(model.store.named_tensors());
            if let Some(dir) = out_dir {
                save_checkpoint(model, &dir.join("model_best.ckpt"))?;
            }
        }
        if should_stop(best_epoch, epoch, cfg.patience) {
            stopped_early = true;
            break;
        }
    }

    if let Some(weights) = best_weights {
        for (name, t) in weights {
            model.store.set_named(&name, &t)?;
        }
    }
    Ok(TrainReport {
        history,
        best_epoch,
        best_val,
        stopped_early,
    })
}
