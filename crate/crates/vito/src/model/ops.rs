//! Differentiable tensor ops used by the network.

use crate::error::Result;
use candle_core::cpu::erf::erf;
use candle_core::{CpuStorage, CustomOp1, CustomOp2, DType, Layout, Shape, Tensor, D};

/// Same-size 3x3 convolution (padding 1, stride 1) with a hand-written
/// backward. The stock CPU backward routes the input gradient through a
/// naive transposed convolution, which dominates training time; expressing
/// it as a correlation with the spatially flipped, channel-transposed kernel
/// keeps it on the fast im2col forward path. The custom op also retains only
/// the argument and result tensors, where tap-decomposed formulations keep
/// many intermediate copies alive for the backward pass.
struct Conv3x3Same;

impl CustomOp2 for Conv3x3Same {
    fn name(&self) -> &'static str {
        "conv3x3-same"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let dev = candle_core::Device::Cpu;
        match (s1, s2) {
            (CpuStorage::F32(x), CpuStorage::F32(w)) => {
                let xt = Tensor::from_slice(contiguous_data(x, l1)?, l1.shape().clone(), &dev)?;
                let wt = Tensor::from_slice(contiguous_data(w, l2)?, l2.shape().clone(), &dev)?;
                let y = xt.conv2d(&wt, 1, 1, 1, 1)?;
                let shape = y.shape().clone();
                Ok((CpuStorage::F32(y.flatten_all()?.to_vec1()?), shape))
            }
            (CpuStorage::F64(x), CpuStorage::F64(w)) => {
                let xt = Tensor::from_slice(contiguous_data(x, l1)?, l1.shape().clone(), &dev)?;
                let wt = Tensor::from_slice(contiguous_data(w, l2)?, l2.shape().clone(), &dev)?;
                let y = xt.conv2d(&wt, 1, 1, 1, 1)?;
                let shape = y.shape().clone();
                Ok((CpuStorage::F64(y.flatten_all()?.to_vec1()?), shape))
            }
            _ => candle_core::bail!("conv3x3-same expects matching f32/f64 inputs"),
        }
    }

    fn bwd(
        &self,
        x: &Tensor,
        w: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad_res.contiguous()?;
        // Input gradient: correlate the output gradient with the kernel
        // flipped in both spatial dimensions and transposed in its channel
        // dimensions. For stride 1 / padding 1 this is again a same-size
        // convolution.
        let rev = Tensor::from_vec(vec![2u32, 1, 0], 3, grad.device())?;
        let wf = w
            .index_select(&rev, 2)?
            .index_select(&rev, 3)?
            .transpose(0, 1)?
            .contiguous()?;
        let grad_x = grad.conv2d(&wf, 1, 1, 1, 1)?;
        // Kernel gradient: correlate input and output gradient with the
        // batch and channel axes swapped (the output gradient acts as the
        // kernel), then crop to the 3x3 support.
        let gw = x
            .transpose(0, 1)?
            .contiguous()?
            .conv2d(&grad.transpose(0, 1)?.contiguous()?, 1, 1, 1, 1)?
            .transpose(0, 1)?;
        let (_, _, k0, k1) = w.dims4()?;
        let gw = if gw.dim(2)? != k0 || gw.dim(3)? != k1 {
            gw.narrow(2, 0, k0)?.narrow(3, 0, k1)?
        } else {
            gw
        };
        Ok((Some(grad_x), Some(gw)))
    }
}

/// 3x3 convolution, padding 1, on `(B, Cin, H, W)` with kernel
/// `(Cout, Cin, 3, 3)` and bias `(Cout)`.
pub fn conv3x3(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    let (_bs, cin, _h, _wd) = x.dims4()?;
    let (cout, wcin, _, _) = w.dims4()?;
    assert_eq!(cin, wcin, "channel mismatch in conv3x3");
    let y = if stride == 1 {
        x.contiguous()?.apply_op2(&w.contiguous()?, Conv3x3Same)?
    } else {
        // Strided convolutions shrink the output 4x, so the stock backward
        // is cheap enough here.
        x.conv2d(w, 1, stride, 1, 1)?
    };
    Ok(y.broadcast_add(&b.reshape((1, cout, 1, 1))?)?)
}

/// 1x1 convolution on `(B, Cin, H, W)` with kernel `(Cout, Cin)`.
pub fn conv1x1(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (bs, cin, h, wd) = x.dims4()?;
    let (cout, wcin) = w.dims2()?;
    assert_eq!(cin, wcin, "channel mismatch in conv1x1");
    let y = w
        .unsqueeze(0)?
        .broadcast_matmul(&x.reshape((bs, cin, h * wd))?)?
        .reshape((bs, cout, h, wd))?;
    Ok(y.broadcast_add(&b.reshape((1, cout, 1, 1))?)?)
}

/// Depthwise 3x3 convolution, padding 1, kernel `(C, 3, 3)`, bias `(C)`.
pub fn depthwise3x3(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (_bs, c, _h, _wd) = x.dims4()?;
    let (wc, _, _) = w.dims3()?;
    assert_eq!(c, wc, "channel mismatch in depthwise3x3");
    let y = x.conv2d(&w.reshape((c, 1, 3, 3))?, 1, 1, 1, c)?;
    Ok(y.broadcast_add(&b.reshape((1, c, 1, 1))?)?)
}

/// Dense `(n_out, n_in)` corner-aligned linear interpolation matrix: each row
/// holds the two lerp weights for one output sample.
fn interp_matrix(dev: &candle_core::Device, dtype: DType, n_in: usize, n_out: usize) -> Result<Tensor> {
    let mut a = vec![0f64; n_out * n_in];
    for j in 0..n_out {
        // Corner-aligned sampling: endpoints map to endpoints.
        let pos = if n_out == 1 {
            0.0
        } else {
            j as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        };
        let i0 = (pos.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let f = pos - i0 as f64;
        a[j * n_in + i0] += 1.0 - f;
        a[j * n_in + i1] += f;
    }
    Ok(Tensor::from_vec(a, (n_out, n_in), dev)?.to_dtype(dtype)?)
}

/// Corner-aligned bilinear resize of `(B, C, H, W)` to `(B, C, oh, ow)`.
/// Matches `mesh::bilinear_resize` on the same grids.
///
/// Expressed as two matmuls with interpolation matrices so both the forward
/// and the backward pass stay on the fast matmul path.
pub fn bilinear_resize(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (_bs, _c, h, w) = x.dims4()?;
    if h == oh && w == ow {
        return Ok(x.clone());
    }
    let dev = x.device();
    let dtype = x.dtype();
    let mut y = x.clone();
    if h != oh {
        let a = interp_matrix(dev, dtype, h, oh)?;
        y = a.broadcast_matmul(&y)?;
    }
    if w != ow {
        let a = interp_matrix(dev, dtype, w, ow)?;
        y = y.broadcast_matmul(&a.t()?)?;
    }
    Ok(y)
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu_val(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_deriv(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn contiguous_data<'a, T>(vs: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&vs[start..end]),
        None => candle_core::bail!("fused op requires a contiguous tensor"),
    }
}

/// `grad * gelu'(x)`, fused into a single pass.
struct GeluVjp;

impl CustomOp2 for GeluVjp {
    fn name(&self) -> &'static str {
        "gelu-vjp"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match (s1, s2) {
            (CpuStorage::F32(g), CpuStorage::F32(x)) => {
                let g = contiguous_data(g, l1)?;
                let x = contiguous_data(x, l2)?;
                CpuStorage::F32(
                    g.iter()
                        .zip(x.iter())
                        .map(|(&g, &x)| (g as f64 * gelu_deriv(x as f64)) as f32)
                        .collect(),
                )
            }
            (CpuStorage::F64(g), CpuStorage::F64(x)) => {
                let g = contiguous_data(g, l1)?;
                let x = contiguous_data(x, l2)?;
                CpuStorage::F64(g.iter().zip(x.iter()).map(|(&g, &x)| g * gelu_deriv(x)).collect())
            }
            _ => candle_core::bail!("gelu-vjp expects matching f32/f64 inputs"),
        };
        Ok((out, l1.shape().clone()))
    }
}

/// Exact (erf-based) GELU with a single-pass analytic backward.
struct FusedGelu;

impl CustomOp1 for FusedGelu {
    fn name(&self) -> &'static str {
        "fused-gelu"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match storage {
            CpuStorage::F32(vs) => CpuStorage::F32(
                contiguous_data(vs, layout)?
                    .iter()
                    .map(|&v| gelu_val(v as f64) as f32)
                    .collect(),
            ),
            CpuStorage::F64(vs) => {
                CpuStorage::F64(contiguous_data(vs, layout)?.iter().map(|&v| gelu_val(v)).collect())
            }
            _ => candle_core::bail!("fused-gelu expects an f32/f64 input"),
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad_res.apply_op2_no_bwd(&arg.contiguous()?, &GeluVjp)?))
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(FusedGelu)?)
}

/// Batch norm over `(B, H, W)` per channel. In training mode computes batch
/// statistics and returns them (for running-stat updates); in eval mode uses
/// the supplied running statistics.
pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    train: bool,
    eps: f64,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    let (_bs, c, _h, _w) = x.dims4()?;
    let shape = (1, c, 1, 1);
    let (mean, var) = if train {
        // var = E[x^2] - E[x]^2: two reductions instead of materializing the
        // centered tensor.
        let mean = x.mean_keepdim((0, 2, 3))?;
        let var = (x.sqr()?.mean_keepdim((0, 2, 3))? - mean.sqr()?)?;
        (mean, var)
    } else {
        (
            running_mean.reshape(shape)?.detach(),
            running_var.reshape(shape)?.detach(),
        )
    };
    // Fold the whole normalization into one per-channel affine map, applied
    // with two broadcast passes over the full tensor.
    let inv_std = ((var.clone() + eps)?.sqrt()?.recip()?).reshape(shape)?;
    let scale = inv_std.broadcast_mul(&gamma.reshape(shape)?)?;
    let shift = (beta.reshape(shape)? - mean.reshape(shape)?.broadcast_mul(&scale)?)?;
    let y = x.broadcast_mul(&scale)?.broadcast_add(&shift)?;
    let stats = train.then(|| {
        (
            mean.detach().flatten_all().unwrap(),
            var.detach().flatten_all().unwrap(),
        )
    });
    Ok((y, stats))
}

/// Layer norm over the last dimension of `(B, T, D)`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let xhat = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(xhat.broadcast_mul(gamma)?.broadcast_add(beta)?)
}

/// Affine map `x @ w^T + b` on the last dimension; `w` is `(out, in)`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let y = x.broadcast_matmul(&w.t()?)?;
    Ok(y.broadcast_add(b)?)
}

/// Scaled dot-product attention probabilities, `(B, heads, T, T)`.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let dh = q.dim(D::Minus1)?;
    let scores = q
        .matmul(&k.transpose(D::Minus2, D::Minus1)?.contiguous()?)?
        .affine(1.0 / (dh as f64).sqrt(), 0.0)?;
    Ok(candle_nn::ops::softmax(&scores, D::Minus1)?)
}
