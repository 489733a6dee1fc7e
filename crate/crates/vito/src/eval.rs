//! Evaluation and reporting: strict relative-L2 metrics (no stabilizer), a
//! mean-predictor baseline, normalized error maps, and rendered reports.

use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::mesh::{bilinear_resize, rounded_side, subsample_to_side, Field2D};
use crate::model::{encode_inputs, ViTO};
use crate::train::relative_l2;
use candle_core::DType;
use ndarray::Array2;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub split: Split,
    pub per_sample: Vec<(usize, f64)>,
    pub mean_rel_l2: f64,
    /// Error of predicting the train-split mean target for every sample.
    pub baseline_rel_l2: f64,
}

impl EvalSummary {
    /// Model error as a fraction of the trivial-baseline error.
    pub fn baseline_ratio(&self) -> f64 {
        self.mean_rel_l2 / self.baseline_rel_l2
    }
}

/// Mean of the train-split targets: the strongest constant predictor.
pub fn mean_target(dataset: &Dataset) -> Result<Field2D> {
    let train = dataset.splits.of(Split::Train);
    if train.is_empty() {
        return Err(Error::InvalidState("empty train split".into()));
    }
    let mesh = *dataset.target_mesh();
    let mut acc = Array2::<f64>::zeros((mesh.nx(), mesh.ny()));
    for &i in train {
        acc += dataset.pairs[i].target.values();
    }
    acc /= train.len() as f64;
    Field2D::new(mesh, acc)
}

fn predict_batch(model: &ViTO, dataset: &Dataset, idx: &[usize]) -> Result<Vec<Array2<f64>>> {
    let inputs: Vec<&Field2D> = idx.iter().map(|&i| &dataset.pairs[i].input).collect();
    let x = encode_inputs(&inputs, model.store.dtype)?;
    let pred = model.forward(&x, false)?;
    let (b, _c, h, w) = pred.dims4()?;
    let flat: Vec<f64> = pred.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    (0..b)
        .map(|i| {
            Array2::from_shape_vec((h, w), flat[i * h * w..(i + 1) * h * w].to_vec())
                .map_err(|e| Error::InvalidState(format!("bad prediction shape: {e}")))
        })
        .collect()
}

/// Evaluate one split with the strict metric (denominator stabilizer 0).
pub fn evaluate(model: &ViTO, dataset: &Dataset, split: Split, batch: usize) -> Result<EvalSummary> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let idx = dataset.splits.of(split).to_vec();
    if idx.is_empty() {
        return Err(Error::InvalidState("empty evaluation split".into()));
    }
    let baseline = mean_target(dataset)?;
    let mut per_sample = Vec::with_capacity(idx.len());
    let mut base_sum = 0.0;
    for chunk in idx.chunks(batch) {
        let preds = predict_batch(model, dataset, chunk)?;
        for (k, &i) in chunk.iter().enumerate() {
            let target = dataset.pairs[i].target.values();
            per_sample.push((i, relative_l2(&preds[k], target, 0.0)));
            base_sum += relative_l2(baseline.values(), target, 0.0);
        }
    }
    let mean_rel_l2 = per_sample.iter().map(|(_, e)| e).sum::<f64>() / per_sample.len() as f64;
    Ok(EvalSummary {
        split,
        per_sample,
        mean_rel_l2,
        baseline_rel_l2: base_sum / idx.len() as f64,
    })
}

#[derive(Debug, Clone)]
pub struct ErrorMap {
    /// Pointwise `|pred - target|` divided by the RMS of the target.
    pub field: Field2D,
    /// True when the target is identically zero; the map is then the raw
    /// absolute error.
    pub degenerate: bool,
}

pub fn error_map(pred: &Field2D, target: &Field2D) -> Result<ErrorMap> {
    if pred.values().dim() != target.values().dim() {
        return Err(Error::InvalidArgument(
            "error map needs matching grids".into(),
        ));
    }
    let n = target.values().len() as f64;
    let rms = (target.values().iter().map(|t| t * t).sum::<f64>() / n).sqrt();
    let degenerate = rms == 0.0;
    let scale = if degenerate { 1.0 } else { rms };
    let vals = ndarray::Zip::from(pred.values())
        .and(target.values())
        .map_collect(|p, t| (p - t).abs() / scale);
    Ok(ErrorMap {
        field: Field2D::new(*target.mesh(), vals)?,
        degenerate,
    })
}

/// Mean relative L2 on a split when the observations are reduced to each of
/// `sides` while the targets stay on the fine grid. Sides reachable by an
/// integer subsampling stride of the stored observations use anchored
/// subsampling (the "seen" grids of augmented training); any other side is a
/// zero-shot grid and the observation is bilinearly resized to it.
pub fn evaluate_variable_grids(
    model: &ViTO,
    dataset: &Dataset,
    split: Split,
    sides: &[usize],
    batch: usize,
) -> Result<Vec<(usize, f64)>> {
    let idx = dataset.splits.of(split).to_vec();
    if idx.is_empty() {
        return Err(Error::InvalidState("empty evaluation split".into()));
    }
    let n_in = dataset.input_mesh().nx();
    let seen: Vec<usize> = (1..=n_in).map(|r| rounded_side(n_in, r)).collect();
    let mut out = Vec::with_capacity(sides.len());
    for &side in sides {
        if side == 0 || side > n_in {
            return Err(Error::InvalidArgument(format!(
                "evaluation side {side} outside 1..={n_in}"
            )));
        }
        let subsampled = seen.contains(&side);
        let mut total = 0.0;
        for chunk in idx.chunks(batch) {
            let inputs: Vec<Field2D> = chunk
                .iter()
                .map(|&i| {
                    let obs = &dataset.pairs[i].input;
                    if subsampled {
                        subsample_to_side(obs, side, side)
                    } else {
                        bilinear_resize(obs, side, side)
                    }
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Field2D> = inputs.iter().collect();
            let x = encode_inputs(&refs, model.store.dtype)?;
            let t0 = &dataset.pairs[chunk[0]].target;
            let (h, w) = (t0.nx(), t0.ny());
            let pred = model.forward_to(&x, false, (h, w))?;
            let flat: Vec<f64> = pred.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
            for (k, &i) in chunk.iter().enumerate() {
                let p = Array2::from_shape_vec((h, w), flat[k * h * w..(k + 1) * h * w].to_vec())
                    .map_err(|e| Error::InvalidState(format!("bad prediction shape: {e}")))?;
                total += relative_l2(&p, dataset.pairs[i].target.values(), 0.0);
            }
        }
        out.push((side, total / idx.len() as f64));
    }
    Ok(out)
}

// Five-stop gradient (dark blue -> teal -> green -> yellow) for field panels.
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colorize(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (v.floor() as usize).min(STOPS.len() - 2);
    let f = v - i as f64;
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        rgb[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    rgb
}

fn paint_panel(img: &mut image::RgbImage, x0: u32, field: &Array2<f64>, lo: f64, hi: f64) {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (nx, ny) = field.dim();
    for i in 0..nx {
        for j in 0..ny {
            let v = (field[[i, j]] - lo) / span;
            // Row i of the array becomes image row i; column j, image column.
            img.put_pixel(x0 + j as u32, i as u32, image::Rgb(colorize(v)));
        }
    }
}

/// Render one field as a single color panel.
pub fn render_field_png(field: &Field2D, path: &Path) -> Result<()> {
    let (nx, ny) = field.values().dim();
    let mut img = image::RgbImage::new(ny as u32, nx as u32);
    paint_panel(&mut img, 0, field.values(), field.min(), field.max());
    img.save(path)
        .map_err(|e| Error::InvalidState(format!("failed to write {}: {e}", path.display())))
}

/// Write `metrics.csv`, `summary.txt`, and a four-panel `panels.png`
/// (upsampled observation, prediction, ground truth, normalized error) for
/// the first sample of the split.
pub fn render_report(
    model: &ViTO,
    dataset: &Dataset,
    summary: &EvalSummary,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv_path = out_dir.join("metrics.csv");
    let mut csv = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(csv, "sample_index,rel_l2").map_err(|e| Error::io(&csv_path, e))?;
    for (i, e) in &summary.per_sample {
        writeln!(csv, "{i},{e:.8e}").map_err(|e2| Error::io(&csv_path, e2))?;
    }

    let sum_path = out_dir.join("summary.txt");
    let text = format!(
        "problem={}\nsplit={:?}\nn_samples={}\nmean_rel_l2={:.8e}\nbaseline_rel_l2={:.8e}\nbaseline_ratio={:.8e}\nparameter_count={}\n",
        dataset.problem().name(),
        summary.split,
        summary.per_sample.len(),
        summary.mean_rel_l2,
        summary.baseline_rel_l2,
        summary.baseline_ratio(),
        model.parameter_count(),
    );
    std::fs::write(&sum_path, text).map_err(|e| Error::io(&sum_path, e))?;

    let &(first, _) = summary
        .per_sample
        .first()
        .expect("summary has at least one sample");
    let pair = &dataset.pairs[first];
    let pred = model.predict_field(&pair.input)?;
    let emap = error_map(&pred, &pair.target)?;
    let (nx, ny) = pair.target.values().dim();
    let shown_input = bilinear_resize(&pair.input, nx, ny)?;

    let gap = 4u32;
    let width = 4 * ny as u32 + 3 * gap;
    let mut img = image::RgbImage::from_pixel(width, nx as u32, image::Rgb([255, 255, 255]));
    // Shared scale for prediction and truth; own scales elsewhere.
    let lo = pred.min().min(pair.target.min());
    let hi = pred.max().max(pair.target.max());
    paint_panel(&mut img, 0, shown_input.values(), shown_input.min(), shown_input.max());
    paint_panel(&mut img, ny as u32 + gap, pred.values(), lo, hi);
    paint_panel(&mut img, 2 * (ny as u32 + gap), pair.target.values(), lo, hi);
    paint_panel(
        &mut img,
        3 * (ny as u32 + gap),
        emap.field.values(),
        0.0,
        emap.field.max().max(1e-12),
    );
    let png_path = out_dir.join("panels.png");
    img.save(&png_path)
        .map_err(|e| Error::InvalidState(format!("failed to write {}: {e}", png_path.display())))?;
    Ok(())
}
