//! Stochastic input generation: Gaussian random fields with power-law
//! spectral covariance, binarization for permeability fields, and Gaussian
//! source bumps for the wave problem.

use crate::error::{Error, Result};
use crate::mesh::{Field2D, Mesh2D};
use crate::rng::Stream;
use crate::spectral::{fft2_inplace, signed_freq};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Covariance `N(0, scale * (-Δ + tau^2 I)^(-alpha))`, realized in either
/// the periodic Fourier eigenbasis or a cosine (Neumann) eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSpec {
    pub tau: f64,
    pub alpha: f64,
    pub scale: f64,
    pub periodic: bool,
}

impl GrfSpec {
    pub fn new(tau: f64, alpha: f64, scale: f64, periodic: bool) -> Result<Self> {
        if !(tau > 0.0) || !(alpha > 0.0) || !(scale >= 0.0) {
            return Err(Error::invalid_arg(format!(
                "GRF spec needs tau > 0, alpha > 0, scale >= 0, got tau={tau} alpha={alpha} scale={scale}"
            )));
        }
        Ok(Self {
            tau,
            alpha,
            scale,
            periodic,
        })
    }

    /// Initial-vorticity distribution of the Navier-Stokes experiment.
    pub fn navier_stokes() -> Self {
        Self {
            tau: 7.0,
            alpha: 2.5,
            scale: 7.0f64.powf(1.5),
            periodic: true,
        }
    }

    /// Pre-binarization coefficient distribution of the Darcy experiment.
    pub fn darcy() -> Self {
        Self {
            tau: 3.0,
            alpha: 2.0,
            scale: 1.0,
            periodic: false,
        }
    }

    /// Standard deviation of the coefficient of the eigenmode with
    /// Laplacian eigenvalue `lambda`.
    pub fn mode_std(&self, lambda: f64) -> f64 {
        self.scale.sqrt() * (lambda + self.tau * self.tau).powf(-self.alpha / 2.0)
    }
}

/// One realization of the field described by `spec`, on a square mesh.
///
/// Each eigenmode coefficient is an independent zero-mean Gaussian with
/// variance `scale * (lambda_k + tau^2)^(-alpha)`; synthesis runs through
/// an FFT (periodic) or a dense cosine transform (Neumann).
pub fn sample_grf(mesh: &Mesh2D, spec: &GrfSpec, rng: &mut Stream) -> Result<Field2D> {
    if !mesh.is_square() {
        return Err(Error::invalid_arg("GRF sampling requires a square mesh"));
    }
    if spec.scale == 0.0 {
        // still consume the stream so seeds line up with the scaled case
        let n_draws = if spec.periodic {
            2 * (mesh.nx() - 1) * (mesh.nx() - 1)
        } else {
            mesh.nx() * mesh.nx()
        };
        for _ in 0..n_draws {
            let _: f64 = rng.sample(StandardNormal);
        }
        return Ok(Field2D::zeros(*mesh));
    }
    if spec.periodic {
        sample_periodic(mesh, spec, rng)
    } else {
        sample_neumann(mesh, spec, rng)
    }
}

/// Periodic synthesis. The n-point endpoint-inclusive mesh wraps with
/// period `L = (n-1) dx`, so the spectral grid has `m = n-1` points and
/// the last row/column duplicates the first.
fn sample_periodic(mesh: &Mesh2D, spec: &GrfSpec, rng: &mut Stream) -> Result<Field2D> {
    let n = mesh.nx();
    let m = n - 1;
    let l = m as f64 * mesh.dx();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut coeff = Array2::<Complex64>::default((m, m));
    for i in 0..m {
        for j in 0..m {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let kx = signed_freq(i, m) as f64 * two_pi / l;
            let ky = signed_freq(j, m) as f64 * two_pi / l;
            let lambda = kx * kx + ky * ky;
            let sigma = spec.mode_std(lambda);
            coeff[[i, j]] = Complex64::new(a, b) * (sigma / std::f64::consts::SQRT_2);
        }
    }
    fft2_inplace(&mut coeff, true);
    let values = Array2::from_shape_fn((n, n), |(i, j)| coeff[[i % m, j % m]].re);
    Field2D::new(*mesh, values)
}

/// Neumann (cosine-eigenbasis) synthesis via a dense separable transform:
/// `field = C A C^T` with `C[i,k] = norm(k) cos(pi k i / (n-1))`.
fn sample_neumann(mesh: &Mesh2D, spec: &GrfSpec, rng: &mut Stream) -> Result<Field2D> {
    let n = mesh.nx();
    let m = (n - 1) as f64;
    let l = mesh.lx();
    let pi = std::f64::consts::PI;
    let mut coeff = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        for ll in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let lambda = pi * pi * ((k * k + ll * ll) as f64) / (l * l);
            coeff[[k, ll]] = xi * spec.mode_std(lambda);
        }
    }
    let basis = Array2::from_shape_fn((n, n), |(i, k)| {
        let norm = if k == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
        norm * (pi * k as f64 * i as f64 / m).cos()
    });
    let values = basis.dot(&coeff).dot(&basis.t());
    Field2D::new(*mesh, values)
}

/// Pointwise threshold map: positive values (and zero) go to `hi`,
/// negative values to `lo`.
pub fn binarize(field: &Field2D, hi: f64, lo: f64) -> Field2D {
    let values = field.values().mapv(|v| if v < 0.0 { lo } else { hi });
    Field2D::new(*field.mesh(), values).expect("binarized field is finite")
}

/// Gaussian sources with random amplitudes and grid-index locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpSpec {
    pub count: usize,
    pub amp_low: f64,
    pub amp_high: f64,
    pub width: f64,
}

impl BumpSpec {
    pub fn new(count: usize, amp_low: f64, amp_high: f64, width: f64) -> Result<Self> {
        if amp_low > amp_high {
            return Err(Error::invalid_arg("bump amplitude range is empty"));
        }
        if !(width > 0.0) {
            return Err(Error::invalid_arg("bump width must be positive"));
        }
        Ok(Self {
            count,
            amp_low,
            amp_high,
            width,
        })
    }

    /// Two sources, amplitudes U(-1, 1), width 0.05 L.
    pub fn wave_default(domain_side: f64) -> Self {
        Self {
            count: 2,
            amp_low: -1.0,
            amp_high: 1.0,
            width: 0.05 * domain_side,
        }
    }
}

/// Sum of `count` bumps `a * exp(-((x-x0)^2 + (y-y0)^2) / (2 width^2))`
/// with centers drawn uniformly over grid indices.
pub fn gaussian_bumps(mesh: &Mesh2D, spec: &BumpSpec, rng: &mut Stream) -> Result<Field2D> {
    let mut field = Field2D::zeros(*mesh);
    let two_w2 = 2.0 * spec.width * spec.width;
    for _ in 0..spec.count {
        let ci = rng.gen_range(0..mesh.nx());
        let cj = rng.gen_range(0..mesh.ny());
        let amp = rng.gen_range(spec.amp_low..=spec.amp_high);
        let (x0, y0) = mesh.coord(ci, cj);
        let vals = field.values_mut();
        for i in 0..mesh.nx() {
            for j in 0..mesh.ny() {
                let (x, y) = mesh.coord(i, j);
                let d2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
                vals[[i, j]] += amp * (-d2 / two_w2).exp();
            }
        }
    }
    field.check_finite()?;
    Ok(field)
}
