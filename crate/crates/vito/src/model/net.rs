//! The operator network: convolutional encoder, latent vision transformer
//! with a conditional positional encoding, and a skip-connected decoder.
//!
//! The input is a 3-channel image (observed field plus the two coordinate
//! matrices of its grid), bilinearly resized to a working resolution that is
//! a multiple of 16; the output is resized to the super-resolved target grid,
//! so one set of weights serves any input resolution.

use super::config::ViTOConfig;
use super::init::{Init, ParamStore};
use super::ops;
use crate::error::{Error, Result};
use crate::mesh::{grid_encoding, pad_to_multiple, Field2D, Mesh2D};
use candle_core::{DType, Tensor, Var};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const LN_EPS: f64 = 1e-5;

fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

fn uniform_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

pub(crate) struct Conv3 {
    w: Var,
    b: Var,
    stride: usize,
}

impl Conv3 {
    fn new(ps: &ParamStore, name: &str, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            w: ps.var(&format!("{name}.w"), &[cout, cin, 3, 3], Init::Normal(he_std(cin * 9)))?,
            b: ps.var(&format!("{name}.b"), &[cout], Init::Const(0.0))?,
            stride,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv3x3(x, self.w.as_tensor(), self.b.as_tensor(), self.stride)
    }
}

pub(crate) struct Conv1 {
    w: Var,
    b: Var,
}

impl Conv1 {
    fn new(ps: &ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            w: ps.var(&format!("{name}.w"), &[cout, cin], Init::Normal(he_std(cin)))?,
            b: ps.var(&format!("{name}.b"), &[cout], Init::Const(0.0))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv1x1(x, self.w.as_tensor(), self.b.as_tensor())
    }
}

pub(crate) struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm {
    fn new(ps: &ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.var(&format!("{name}.gamma"), &[c], Init::Const(1.0))?,
            beta: ps.var(&format!("{name}.beta"), &[c], Init::Const(0.0))?,
            running_mean: ps.buffer(&format!("{name}.running_mean"), &[c], 0.0)?,
            running_var: ps.buffer(&format!("{name}.running_var"), &[c], 1.0)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (y, stats) = ops::batch_norm(
            x,
            self.gamma.as_tensor(),
            self.beta.as_tensor(),
            self.running_mean.as_tensor(),
            self.running_var.as_tensor(),
            train,
            BN_EPS,
        )?;
        if let Some((mean, var)) = stats {
            let m = BN_MOMENTUM;
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (var * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
        }
        Ok(y)
    }
}

/// Convolution + batch norm + GELU, the basic conv unit.
struct ConvUnit {
    conv: Conv3,
    bn: BatchNorm,
}

impl ConvUnit {
    fn new(ps: &ParamStore, name: &str, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv3::new(ps, &format!("{name}.conv"), cin, cout, stride)?,
            bn: BatchNorm::new(ps, &format!("{name}.bn"), cout)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        ops::gelu(&self.bn.forward(&self.conv.forward(x)?, train)?)
    }
}

/// Three conv units with a residual connection around them; a 1x1
/// projection aligns the skip path when channel counts differ.
struct ResBlock {
    u1: ConvUnit,
    u2: ConvUnit,
    conv3: Conv3,
    bn3: BatchNorm,
    skip: Option<(Conv1, BatchNorm)>,
}

impl ResBlock {
    fn new(ps: &ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let skip = if cin != cout {
            Some((
                Conv1::new(ps, &format!("{name}.skip"), cin, cout)?,
                BatchNorm::new(ps, &format!("{name}.skip_bn"), cout)?,
            ))
        } else {
            None
        };
        Ok(Self {
            u1: ConvUnit::new(ps, &format!("{name}.u1"), cin, cout, 1)?,
            u2: ConvUnit::new(ps, &format!("{name}.u2"), cout, cout, 1)?,
            conv3: Conv3::new(ps, &format!("{name}.conv3"), cout, cout, 1)?,
            bn3: BatchNorm::new(ps, &format!("{name}.bn3"), cout)?,
            skip,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.u1.forward(x, train)?;
        let y = self.u2.forward(&y, train)?;
        let y = self.bn3.forward(&self.conv3.forward(&y)?, train)?;
        let s = match &self.skip {
            Some((proj, bn)) => bn.forward(&proj.forward(x)?, train)?,
            None => x.clone(),
        };
        ops::gelu(&(y + s)?)
    }
}

struct LinearLayer {
    w: Var,
    b: Var,
}

impl LinearLayer {
    fn new(ps: &ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            w: ps.var(&format!("{name}.w"), &[cout, cin], Init::Uniform(uniform_bound(cin)))?,
            b: ps.var(&format!("{name}.b"), &[cout], Init::Const(0.0))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::linear(x, self.w.as_tensor(), self.b.as_tensor())
    }
}

struct LayerNorm {
    gamma: Var,
    beta: Var,
}

impl LayerNorm {
    fn new(ps: &ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.var(&format!("{name}.gamma"), &[d], Init::Const(1.0))?,
            beta: ps.var(&format!("{name}.beta"), &[d], Init::Const(0.0))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::layer_norm(x, self.gamma.as_tensor(), self.beta.as_tensor(), LN_EPS)
    }
}

pub(crate) struct Mhsa {
    wq: LinearLayer,
    wk: LinearLayer,
    wv: LinearLayer,
    wo: LinearLayer,
    heads: usize,
}

impl Mhsa {
    fn new(ps: &ParamStore, name: &str, d: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            wq: LinearLayer::new(ps, &format!("{name}.q"), d, d)?,
            wk: LinearLayer::new(ps, &format!("{name}.k"), d, d)?,
            wv: LinearLayer::new(ps, &format!("{name}.v"), d, d)?,
            wo: LinearLayer::new(ps, &format!("{name}.o"), d, d)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// Attention probabilities for inspection, `(B, heads, T, T)`.
    pub(crate) fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        let q = self.split_heads(&self.wq.forward(x)?)?;
        let k = self.split_heads(&self.wk.forward(x)?)?;
        ops::attention_weights(&q, &k)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let q = self.split_heads(&self.wq.forward(x)?)?;
        let k = self.split_heads(&self.wk.forward(x)?)?;
        let v = self.split_heads(&self.wv.forward(x)?)?;
        let probs = ops::attention_weights(&q, &k)?;
        let y = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, d))?;
        self.wo.forward(&y)
    }
}

struct TransformerBlock {
    ln1: LayerNorm,
    attn: Mhsa,
    ln2: LayerNorm,
    fc1: LinearLayer,
    fc2: LinearLayer,
}

impl TransformerBlock {
    fn new(ps: &ParamStore, name: &str, d: usize, heads: usize, mlp: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), d)?,
            attn: Mhsa::new(ps, &format!("{name}.attn"), d, heads)?,
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), d)?,
            fc1: LinearLayer::new(ps, &format!("{name}.fc1"), d, mlp)?,
            fc2: LinearLayer::new(ps, &format!("{name}.fc2"), mlp, d)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = (x + self.attn.forward(&self.ln1.forward(x)?)?)?;
        let h = ops::gelu(&self.fc1.forward(&self.ln2.forward(&y)?)?)?;
        Ok((&y + self.fc2.forward(&h)?)?)
    }
}

/// Conditional positional encoding: a residual branch of a depthwise-
/// separable 3x3 convolution followed by a standard 3x3 convolution, applied
/// to the latent map before tokenization. Position information comes from the
/// zero padding, so it adapts to any latent size.
pub(crate) struct Cpe {
    dw_w: Var,
    dw_b: Var,
    pw: Conv1,
    conv: Conv3,
}

impl Cpe {
    fn new(ps: &ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            dw_w: ps.var(&format!("{name}.dw.w"), &[d, 3, 3], Init::Normal(he_std(9)))?,
            dw_b: ps.var(&format!("{name}.dw.b"), &[d], Init::Const(0.0))?,
            pw: Conv1::new(ps, &format!("{name}.pw"), d, d)?,
            conv: Conv3::new(ps, &format!("{name}.conv"), d, d, 1)?,
        })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = ops::depthwise3x3(x, self.dw_w.as_tensor(), self.dw_b.as_tensor())?;
        let y = self.pw.forward(&y)?;
        let y = self.conv.forward(&y)?;
        Ok((x + y)?)
    }
}

struct LatentVit {
    proj_in: Conv1,
    cpe: Cpe,
    blocks: Vec<TransformerBlock>,
    proj_out: Conv1,
}

impl LatentVit {
    fn new(ps: &ParamStore, name: &str, c: usize, cfg: &ViTOConfig) -> Result<Self> {
        let d = cfg.vit_embed_dim;
        let blocks = (0..cfg.vit_blocks)
            .map(|i| TransformerBlock::new(ps, &format!("{name}.block{i}"), d, cfg.vit_heads, cfg.vit_mlp_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            proj_in: Conv1::new(ps, &format!("{name}.proj_in"), c, d)?,
            cpe: Cpe::new(ps, &format!("{name}.cpe"), d)?,
            blocks,
            proj_out: Conv1::new(ps, &format!("{name}.proj_out"), d, c)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, _c, h, w) = x.dims4()?;
        let z = self.proj_in.forward(x)?;
        let z = self.cpe.forward(&z)?;
        let d = z.dim(1)?;
        // Each latent pixel becomes one token (1x1 patches).
        let mut tokens = z.reshape((b, d, h * w))?.transpose(1, 2)?.contiguous()?;
        for block in &self.blocks {
            tokens = block.forward(&tokens)?;
        }
        let z = tokens.transpose(1, 2)?.contiguous()?.reshape((b, d, h, w))?;
        self.proj_out.forward(&z)
    }
}

/// Bilinear 2x upsample followed by a conv unit.
struct UpBlock {
    unit: ConvUnit,
}

impl UpBlock {
    fn new(ps: &ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            unit: ConvUnit::new(ps, name, c, c, 1)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_b, _c, h, w) = x.dims4()?;
        let y = ops::bilinear_resize(x, 2 * h, 2 * w)?;
        self.unit.forward(&y, train)
    }
}

/// The full operator network.
pub struct ViTO {
    pub config: ViTOConfig,
    pub store: ParamStore,
    stem: ConvUnit,
    stem_down: ConvUnit,
    enc: [ResBlock; 3],
    down: [ConvUnit; 3],
    vit: LatentVit,
    up: [UpBlock; 3],
    dec: [ResBlock; 3],
    head_conv: Conv1,
}

impl ViTO {
    pub fn new(config: &ViTOConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let ps = ParamStore::new(seed, dtype);
        let [c0, c1, c2, c3] = config.channel_widths;
        let stem = ConvUnit::new(&ps, "stem", 3, c0, 1)?;
        let stem_down = ConvUnit::new(&ps, "stem_down", c0, c0, 2)?;
        let enc = [
            ResBlock::new(&ps, "enc1", c0, c1)?,
            ResBlock::new(&ps, "enc2", c1, c2)?,
            ResBlock::new(&ps, "enc3", c2, c3)?,
        ];
        let down = [
            ConvUnit::new(&ps, "down1", c1, c1, 2)?,
            ConvUnit::new(&ps, "down2", c2, c2, 2)?,
            ConvUnit::new(&ps, "down3", c3, c3, 2)?,
        ];
        let vit = LatentVit::new(&ps, "vit", c3, config)?;
        let up = [
            UpBlock::new(&ps, "up1", c3)?,
            UpBlock::new(&ps, "up2", c2)?,
            UpBlock::new(&ps, "up3", c1)?,
        ];
        let dec = [
            ResBlock::new(&ps, "dec1", 2 * c3, c2)?,
            ResBlock::new(&ps, "dec2", 2 * c2, c1)?,
            ResBlock::new(&ps, "dec3", 2 * c1, c0)?,
        ];
        let head_conv = Conv1::new(&ps, "head", c0, 1)?;
        Ok(Self {
            config: config.clone(),
            store: ps,
            stem,
            stem_down,
            enc,
            down,
            vit,
            up,
            dec,
            head_conv,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Forward pass at the working resolution; `x` is `(B, 3, P, Q)` with
    /// `P`, `Q` multiples of the configured divisibility. Output `(B, 1, P, Q)`.
    fn forward_padded(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.stem.forward(x, train)?;
        let y = self.stem_down.forward(&y, train)?; // P/2
        let s1 = self.enc[0].forward(&y, train)?; // P/2, c1
        let y = self.down[0].forward(&s1, train)?; // P/4
        let s2 = self.enc[1].forward(&y, train)?; // P/4, c2
        let y = self.down[1].forward(&s2, train)?; // P/8
        let s3 = self.enc[2].forward(&y, train)?; // P/8, c3
        let y = self.down[2].forward(&s3, train)?; // P/16
        let y = self.vit.forward(&y)?;
        let y = self.up[0].forward(&y, train)?; // P/8
        let y = self.dec[0].forward(&Tensor::cat(&[&y, &s3], 1)?, train)?;
        let y = self.up[1].forward(&y, train)?; // P/4
        let y = self.dec[1].forward(&Tensor::cat(&[&y, &s2], 1)?, train)?;
        let y = self.up[2].forward(&y, train)?; // P/2
        let y = self.dec[2].forward(&Tensor::cat(&[&y, &s1], 1)?, train)?;
        let (_b, _c, h, w) = y.dims4()?;
        let y = ops::bilinear_resize(&y, 2 * h, 2 * w)?; // P
        self.head_conv.forward(&y)
    }

    /// Forward pass from a coarse batch `(B, 3, h, w)` to the super-resolved
    /// output `(B, 1, sr*h, sr*w)`.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_b, _c, h, w) = x.dims4()?;
        let s = self.config.sr_factor;
        self.forward_to(x, train, (s * h, s * w))
    }

    /// Forward pass with an explicit output size `(th, tw)`. The internal
    /// working resolution still follows the input size (sr*h padded up to the
    /// divisibility), only the final resize targets `(th, tw)`; this is what
    /// lets one trained model consume subsampled observations while being
    /// scored against the unchanged fine target.
    pub fn forward_to(&self, x: &Tensor, train: bool, (th, tw): (usize, usize)) -> Result<Tensor> {
        let (_b, c, h, w) = x.dims4()?;
        if c != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 3 input channels, got {c}"
            )));
        }
        let s = self.config.sr_factor;
        let m = self.config.divisibility;
        let (ph, pw) = (pad_to_multiple(s * h, m), pad_to_multiple(s * w, m));
        let xp = ops::bilinear_resize(x, ph, pw)?;
        let y = self.forward_padded(&xp, train)?;
        ops::bilinear_resize(&y, th, tw)
    }

    /// Predict the super-resolved field for a single observation; the output
    /// carries the refined grid over the same physical domain.
    pub fn predict_field(&self, input: &Field2D) -> Result<Field2D> {
        let mesh = *input.mesh();
        let x = encode_inputs(&[input], self.store.dtype)?;
        let y = self.forward(&x, false)?;
        let s = self.config.sr_factor;
        let fine = Mesh2D::new(s * mesh.nx(), s * mesh.ny(), mesh.lx(), mesh.ly())?;
        let vals: Vec<f64> = y
            .to_dtype(DType::F64)?
            .flatten_all()?
            .to_vec1()?;
        let arr = ndarray::Array2::from_shape_vec((fine.nx(), fine.ny()), vals)
            .map_err(|e| Error::InvalidState(format!("bad prediction shape: {e}")))?;
        Field2D::new(fine, arr)
    }

    /// Attention probabilities of the first transformer block for a coarse
    /// input batch (diagnostic).
    pub fn first_block_attention(&self, x: &Tensor) -> Result<Tensor> {
        let s = self.config.sr_factor;
        let (_b, _c, h, w) = x.dims4()?;
        let m = self.config.divisibility;
        let (ph, pw) = (pad_to_multiple(s * h, m), pad_to_multiple(s * w, m));
        let xp = ops::bilinear_resize(x, ph, pw)?;
        let y = self.stem.forward(&xp, false)?;
        let y = self.stem_down.forward(&y, false)?;
        let y = self.down[0].forward(&self.enc[0].forward(&y, false)?, false)?;
        let y = self.down[1].forward(&self.enc[1].forward(&y, false)?, false)?;
        let y = self.down[2].forward(&self.enc[2].forward(&y, false)?, false)?;
        let z = self.vit.proj_in.forward(&y)?;
        let z = self.vit.cpe.forward(&z)?;
        let (b, d, lh, lw) = z.dims4()?;
        let tokens = z.reshape((b, d, lh * lw))?.transpose(1, 2)?.contiguous()?;
        let normed = self.vit.blocks[0].ln1.forward(&tokens)?;
        self.vit.blocks[0].attn.probabilities(&normed)
    }
}

/// Stack coarse observations into the network input `(B, 3, nx, ny)`:
/// channel 0 the field values, channels 1 and 2 the x- and y-coordinate
/// matrices of the grid.
pub fn encode_inputs(fields: &[&Field2D], dtype: DType) -> Result<Tensor> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty input batch".into()))?;
    let mesh = *first.mesh();
    let enc = grid_encoding(&mesh);
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let dev = candle_core::Device::Cpu;
    let mut batch = Vec::with_capacity(fields.len());
    for f in fields {
        if *f.mesh() != mesh {
            return Err(Error::InvalidArgument(
                "all fields in a batch must share one grid".into(),
            ));
        }
        let mut data = Vec::with_capacity(3 * nx * ny);
        data.extend(f.values().iter().cloned());
        data.extend(enc.xmat.iter().cloned());
        data.extend(enc.ymat.iter().cloned());
        batch.push(Tensor::from_vec(data, (1, 3, nx, ny), &dev)?);
    }
    let refs: Vec<&Tensor> = batch.iter().collect();
    Ok(Tensor::cat(&refs, 0)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Tensor};

    fn input(b: usize, n: usize, dtype: DType) -> Tensor {
        let data: Vec<f64> = (0..b * 3 * n * n).map(|i| (i as f64 * 0.37).sin()).collect();
        Tensor::from_vec(data, (b, 3, n, n), &Device::Cpu)
            .unwrap()
            .to_dtype(dtype)
            .unwrap()
    }

    #[test]
    fn output_shape_is_super_resolved() {
        let model = ViTO::new(&ViTOConfig::tiny(8), 0, DType::F32).unwrap();
        let y = model.forward(&input(2, 16, DType::F32), false).unwrap();
        assert_eq!(y.dims(), &[2, 1, 128, 128]);
    }

    #[test]
    fn same_weights_accept_multiple_resolutions() {
        let model = ViTO::new(&ViTOConfig::tiny(2), 0, DType::F32).unwrap();
        for n in [15, 16, 33] {
            let y = model.forward(&input(1, n, DType::F32), false).unwrap();
            assert_eq!(y.dims(), &[1, 1, 2 * n, 2 * n]);
        }
    }

    #[test]
    fn parameter_count_near_target() {
        let model = ViTO::new(&ViTOConfig::darcy(8), 0, DType::F32).unwrap();
        let count = model.parameter_count();
        assert!(
            (50_000..=400_000).contains(&count),
            "parameter count {count} outside expected band"
        );
    }

    #[test]
    fn eval_output_independent_of_batch_composition() {
        let model = ViTO::new(&ViTOConfig::tiny(2), 3, DType::F32).unwrap();
        let both = input(2, 16, DType::F32);
        let y2 = model.forward(&both, false).unwrap();
        let y0 = model.forward(&both.narrow(0, 0, 1).unwrap(), false).unwrap();
        let y1 = model.forward(&both.narrow(0, 1, 1).unwrap(), false).unwrap();
        let joint: Vec<f32> = y2.flatten_all().unwrap().to_vec1().unwrap();
        let mut solo: Vec<f32> = y0.flatten_all().unwrap().to_vec1().unwrap();
        solo.extend::<Vec<f32>>(y1.flatten_all().unwrap().to_vec1().unwrap());
        for (a, b) in joint.iter().zip(&solo) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn seeded_models_are_identical() {
        let a = ViTO::new(&ViTOConfig::tiny(2), 11, DType::F32).unwrap();
        let b = ViTO::new(&ViTOConfig::tiny(2), 11, DType::F32).unwrap();
        let x = input(1, 16, DType::F32);
        let ya: Vec<f32> = a.forward(&x, false).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let yb: Vec<f32> = b.forward(&x, false).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn cpe_with_zero_branch_is_identity() {
        let ps = ParamStore::new(0, DType::F64);
        let cpe = Cpe::new(&ps, "cpe", 3).unwrap();
        let dev = Device::Cpu;
        let zeros_w = Tensor::zeros((3, 3, 3, 3), DType::F64, &dev).unwrap();
        let zeros_b = Tensor::zeros(3, DType::F64, &dev).unwrap();
        ps.set_named("cpe.conv.w", &zeros_w).unwrap();
        ps.set_named("cpe.conv.b", &zeros_b).unwrap();
        let x = input(1, 8, DType::F64);
        let y = cpe.forward(&x).unwrap();
        let xs: Vec<f64> = x.flatten_all().unwrap().to_vec1().unwrap();
        let ys: Vec<f64> = y.flatten_all().unwrap().to_vec1().unwrap();
        for (a, b) in xs.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn attention_probabilities_are_a_distribution() {
        let model = ViTO::new(&ViTOConfig::tiny(1), 5, DType::F32).unwrap();
        let probs = model.first_block_attention(&input(1, 16, DType::F32)).unwrap();
        let sums: Vec<f32> = probs
            .sum(candle_core::D::Minus1)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        for s in sums {
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Double-precision model; compare backward gradients against central
        // differences through the entire network in eval mode.
        let model = ViTO::new(&ViTOConfig::tiny(1), 17, DType::F64).unwrap();
        let x = input(1, 16, DType::F64);
        let loss_of = |m: &ViTO| -> f64 {
            m.forward(&x, false)
                .unwrap()
                .sqr()
                .unwrap()
                .mean_all()
                .unwrap()
                .to_scalar::<f64>()
                .unwrap()
        };
        let loss = model
            .forward(&x, false)
            .unwrap()
            .sqr()
            .unwrap()
            .mean_all()
            .unwrap();
        let grads = loss.backward().unwrap();
        let h = 1e-5;
        let picks = [
            ("stem.conv.w", 0usize),
            ("enc2.u1.conv.w", 5),
            ("vit.block0.attn.q.w", 3),
            ("vit.block0.fc1.w", 2),
            ("vit.cpe.dw.w", 4),
            ("dec3.conv3.w", 7),
            ("head.w", 1),
            ("enc1.u1.bn.gamma", 0),
        ];
        for (name, idx) in picks {
            let var = model.store.get(name).unwrap();
            let g = grads
                .get(&var)
                .unwrap_or_else(|| panic!("no gradient for {name}"))
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap()[idx];
            let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
            let shape = var.as_tensor().dims().to_vec();
            let probe = |delta: f64| -> f64 {
                let mut vals = base.clone();
                vals[idx] += delta;
                let t = Tensor::from_vec(vals, shape.as_slice(), &Device::Cpu).unwrap();
                var.set(&t).unwrap();
                loss_of(&model)
            };
            let fd = (probe(h) - probe(-h)) / (2.0 * h);
            let restore = Tensor::from_vec(base.clone(), shape.as_slice(), &Device::Cpu).unwrap();
            var.set(&restore).unwrap();
            let denom = g.abs().max(fd.abs()).max(1e-8);
            let rel = (g - fd).abs() / denom;
            assert!(rel <= 1e-3, "{name}[{idx}]: backward {g} vs fd {fd} (rel {rel})");
        }
    }

    #[test]
    fn predict_field_returns_fine_grid() {
        let model = ViTO::new(&ViTOConfig::tiny(4), 0, DType::F32).unwrap();
        let mesh = Mesh2D::square(16, 1.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, y| x * y);
        let out = model.predict_field(&f).unwrap();
        assert_eq!(out.values().dim(), (64, 64));
        assert_eq!((out.mesh().nx(), out.mesh().ny()), (64, 64));
        assert!((out.mesh().lx() - 1.0).abs() < 1e-15);
    }
}
