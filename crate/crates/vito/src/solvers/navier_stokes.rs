//! Pseudo-spectral solver for the 2-D incompressible Navier-Stokes
//! equations in vorticity form on a periodic square, with streamfunction
//! velocity recovery, Crank-Nicolson diffusion, explicit advection and
//! forcing, and 2/3-rule dealiasing.
//!
//! The n-point endpoint-inclusive mesh wraps with period `(n-1) dx`; the
//! spectral grid has `m = n-1` points and the stored field's last
//! row/column duplicates the first.

use crate::error::{Error, Result};
use crate::mesh::Field2D;
use crate::spectral::{fft2_inplace, signed_freq};
use ndarray::Array2;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsSpec {
    /// Viscosity.
    pub nu: f64,
    /// Final time.
    pub t_final: f64,
    /// Time step; the run uses `T / ceil(T/dt)` so steps divide T evenly.
    pub dt: f64,
    /// Amplitude of the forcing `a (sin(2 pi (x+y)) + cos(2 pi (x+y)))`;
    /// zero disables forcing.
    pub forcing_amplitude: f64,
}

impl NsSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !(self.t_final > 0.0) || !(self.dt > 0.0) {
            return Err(Error::invalid_arg("NS spec needs nu, T, dt > 0"));
        }
        Ok(())
    }
}

impl Default for NsSpec {
    fn default() -> Self {
        Self {
            nu: 1e-3,
            t_final: 1.0,
            dt: 1e-3,
            forcing_amplitude: 0.1,
        }
    }
}

/// Advance the vorticity field to `t = T`.
pub fn solve_navier_stokes(omega0: &Field2D, spec: &NsSpec) -> Result<Field2D> {
    spec.validate()?;
    let mesh = *omega0.mesh();
    if !mesh.is_square() {
        return Err(Error::invalid_arg(
            "NS solver requires a periodic square mesh",
        ));
    }
    let n = mesh.nx();
    let m = n - 1;
    let l = m as f64 * mesh.dx();
    let two_pi = 2.0 * std::f64::consts::PI;

    let kx: Vec<f64> = (0..m).map(|i| signed_freq(i, m) as f64 * two_pi / l).collect();
    let cutoff = (m as f64) / 3.0;
    let dealias: Vec<bool> = (0..m)
        .map(|i| (signed_freq(i, m) as f64).abs() <= cutoff)
        .collect();

    let steps = (spec.t_final / spec.dt).ceil() as usize;
    let dt = spec.t_final / steps as f64;
    let norm = (m * m) as f64;

    // forcing spectrum
    let mut f_hat = Array2::<Complex64>::default((m, m));
    if spec.forcing_amplitude != 0.0 {
        for i in 0..m {
            for j in 0..m {
                let x = i as f64 * mesh.dx();
                let y = j as f64 * mesh.dy();
                let arg = two_pi * (x + y) / l; // matches the paper's forcing for l = 1
                f_hat[[i, j]] = Complex64::new(
                    spec.forcing_amplitude * (arg.sin() + arg.cos()),
                    0.0,
                );
            }
        }
        fft2_inplace(&mut f_hat, false);
        f_hat[[0, 0]] = Complex64::default();
    }

    let mut w_hat = Array2::<Complex64>::default((m, m));
    for i in 0..m {
        for j in 0..m {
            w_hat[[i, j]] = Complex64::new(omega0.values()[[i, j]], 0.0);
        }
    }
    fft2_inplace(&mut w_hat, false);

    let mut u = Array2::<Complex64>::default((m, m));
    let mut v = Array2::<Complex64>::default((m, m));
    let mut wx = Array2::<Complex64>::default((m, m));
    let mut wy = Array2::<Complex64>::default((m, m));

    for _ in 0..steps {
        // streamfunction and velocity in spectral space
        for i in 0..m {
            for j in 0..m {
                let k2 = kx[i] * kx[i] + kx[j] * kx[j];
                let psi = if k2 > 0.0 {
                    w_hat[[i, j]] / k2
                } else {
                    Complex64::default()
                };
                let iunit = Complex64::new(0.0, 1.0);
                u[[i, j]] = iunit * kx[j] * psi; // u = d psi / dy
                v[[i, j]] = -iunit * kx[i] * psi; // v = -d psi / dx
                wx[[i, j]] = iunit * kx[i] * w_hat[[i, j]];
                wy[[i, j]] = iunit * kx[j] * w_hat[[i, j]];
            }
        }
        fft2_inplace(&mut u, true);
        fft2_inplace(&mut v, true);
        fft2_inplace(&mut wx, true);
        fft2_inplace(&mut wy, true);
        // physical-space advection term u . grad(omega)
        let mut nlin = Array2::<Complex64>::default((m, m));
        for i in 0..m {
            for j in 0..m {
                let adv = (u[[i, j]].re * wx[[i, j]].re + v[[i, j]].re * wy[[i, j]].re)
                    / (norm * norm);
                nlin[[i, j]] = Complex64::new(adv, 0.0);
            }
        }
        fft2_inplace(&mut nlin, false);
        // semi-implicit update with dealiasing; the mean mode carries no
        // advection or forcing, so it is conserved exactly
        for i in 0..m {
            for j in 0..m {
                let k2 = kx[i] * kx[i] + kx[j] * kx[j];
                let mut rhs_nl = nlin[[i, j]];
                if !(dealias[i] && dealias[j]) {
                    rhs_nl = Complex64::default();
                }
                if i == 0 && j == 0 {
                    rhs_nl = Complex64::default();
                }
                let a = 0.5 * dt * spec.nu * k2;
                w_hat[[i, j]] =
                    (w_hat[[i, j]] * (1.0 - a) + dt * (f_hat[[i, j]] - rhs_nl)) / (1.0 + a);
            }
        }
    }

    fft2_inplace(&mut w_hat, true);
    let values = Array2::from_shape_fn((n, n), |(i, j)| w_hat[[i % m, j % m]].re / norm);
    Field2D::new(mesh, values)
}

/// Max-norm spectral divergence of the velocity recovered from `omega`,
/// for the discrete divergence-free check.
pub fn spectral_divergence(omega: &Field2D) -> Result<f64> {
    let mesh = omega.mesh();
    if !mesh.is_square() {
        return Err(Error::invalid_arg("requires a square mesh"));
    }
    let n = mesh.nx();
    let m = n - 1;
    let l = m as f64 * mesh.dx();
    let two_pi = 2.0 * std::f64::consts::PI;
    let kx: Vec<f64> = (0..m).map(|i| signed_freq(i, m) as f64 * two_pi / l).collect();
    let mut w_hat = Array2::<Complex64>::default((m, m));
    for i in 0..m {
        for j in 0..m {
            w_hat[[i, j]] = Complex64::new(omega.values()[[i, j]], 0.0);
        }
    }
    fft2_inplace(&mut w_hat, false);
    let mut div = Array2::<Complex64>::default((m, m));
    for i in 0..m {
        for j in 0..m {
            let k2 = kx[i] * kx[i] + kx[j] * kx[j];
            let psi = if k2 > 0.0 {
                w_hat[[i, j]] / k2
            } else {
                Complex64::default()
            };
            let iunit = Complex64::new(0.0, 1.0);
            let u = iunit * kx[j] * psi;
            let v = -iunit * kx[i] * psi;
            div[[i, j]] = iunit * kx[i] * u + iunit * kx[j] * v;
        }
    }
    fft2_inplace(&mut div, true);
    let norm = (m * m) as f64;
    Ok(div.iter().map(|c| (c.re / norm).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh2D;

    #[test]
    fn rest_state_stays_at_rest() {
        let mesh = Mesh2D::square(33, 1.0).unwrap();
        let w0 = Field2D::zeros(mesh);
        let spec = NsSpec {
            forcing_amplitude: 0.0,
            t_final: 0.1,
            ..NsSpec::default()
        };
        let w = solve_navier_stokes(&w0, &spec).unwrap();
        assert!(w.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn shear_mode_decay_oracle() {
        // omega = sin(2 pi x): the advection term vanishes identically and
        // the exact solution is eexp(-4 pi^2 nu T) sin(2 pi x)
        let mesh = Mesh2D::square(65, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let w0 = Field2D::from_fn(mesh, |x, _| (two_pi * x).sin());
        let spec = NsSpec {
            forcing_amplitude: 0.0,
            ..NsSpec::default()
        };
        let w = solve_navier_stokes(&w0, &spec).unwrap();
        let decay = (-4.0 * std::f64::consts::PI.powi(2) * 1e-3 * 1.0).exp();
        let mut max_rel = 0.0f64;
        for i in 0..65 {
            for j in 0..65 {
                let (x, _) = mesh.coord(i, j);
                let want = decay * (two_pi * x).sin();
                if want.abs() > 0.1 {
                    max_rel = max_rel.max((w.values()[[i, j]] - want).abs() / want.abs());
                }
            }
        }
        assert!(max_rel <= 1e-4, "shear-mode relative error {max_rel}");
    }

    #[test]
    fn mean_vorticity_conserved_with_forcing() {
        let mesh = Mesh2D::square(33, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let w0 = Field2D::from_fn(mesh, |x, y| {
            0.3 + (two_pi * x).sin() * (two_pi * y).cos()
        });
        let spec = NsSpec {
            t_final: 0.2,
            ..NsSpec::default()
        };
        let w = solve_navier_stokes(&w0, &spec).unwrap();
        let m = 32;
        let mean = |f: &Field2D| {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += f.values()[[i, j]];
                }
            }
            acc / (m * m) as f64
        };
        let drift = (mean(&w) - mean(&w0)).abs();
        assert!(drift <= 1e-10, "mean vorticity drift {drift}");
    }

    #[test]
    fn velocity_is_divergence_free() {
        let mesh = Mesh2D::square(33, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let w0 = Field2D::from_fn(mesh, |x, y| {
            (two_pi * x).sin() + (two_pi * (x + 2.0 * y)).cos()
        });
        let spec = NsSpec {
            t_final: 0.05,
            ..NsSpec::default()
        };
        let w = solve_navier_stokes(&w0, &spec).unwrap();
        let div = spectral_divergence(&w).unwrap();
        assert!(div <= 1e-10, "divergence {div}");
    }

    #[test]
    fn non_square_rejected() {
        let mesh = Mesh2D::new(16, 32, 1.0, 1.0).unwrap();
        let w0 = Field2D::zeros(mesh);
        assert!(solve_navier_stokes(&w0, &NsSpec::default()).is_err());
    }
}
