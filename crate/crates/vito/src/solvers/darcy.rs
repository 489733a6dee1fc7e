//! Steady Darcy flow `-div(K grad h) = f` on the unit square with
//! homogeneous Dirichlet walls: five-point flux scheme with harmonic
//! face averaging, solved by Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::mesh::{Field2D, Mesh2D};
use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarcySpec {
    /// Fine grid points per side.
    pub n: usize,
    /// Constant forcing value (the experiments use `f = 1`).
    pub forcing: f64,
}

impl DarcySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid_arg("Darcy spec needs n >= 8"));
        }
        Ok(())
    }
}

impl Default for DarcySpec {
    fn default() -> Self {
        Self {
            n: 128,
            forcing: 1.0,
        }
    }
}

const REL_RESIDUAL: f64 = 1e-10;

pub fn solve_darcy(permeability: &Field2D, spec: &DarcySpec) -> Result<Field2D> {
    spec.validate()?;
    let forcing = Field2D::constant(*permeability.mesh(), spec.forcing);
    solve_darcy_with_forcing(permeability, &forcing)
}

/// Harmonic mean; appropriate for discontinuous coefficients.
fn face(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// General-forcing entry point, shared by the dataset generator and the
/// manufactured-solution tests.
pub fn solve_darcy_with_forcing(permeability: &Field2D, forcing: &Field2D) -> Result<Field2D> {
    let mesh = *permeability.mesh();
    if !mesh.is_square() {
        return Err(Error::invalid_arg("Darcy solver requires a square mesh"));
    }
    if permeability.mesh() != forcing.mesh() {
        return Err(Error::invalid_arg("K and f must share a mesh"));
    }
    if permeability.values().iter().any(|v| *v <= 0.0) {
        return Err(Error::invalid_arg(
            "permeability must be strictly positive everywhere",
        ));
    }
    let n = mesh.nx();
    let ni = n - 2; // interior points per side
    let dx = mesh.dx();
    let k = permeability.values();

    // Precompute face coefficients for the interior stencil.
    // kw/ke: faces in x, ks/kn: faces in y, indexed by interior (i, j).
    let mut diag = Array2::<f64>::zeros((ni, ni));
    let mut kw = Array2::<f64>::zeros((ni, ni));
    let mut ks = Array2::<f64>::zeros((ni, ni));
    for ii in 0..ni {
        for jj in 0..ni {
            let (i, j) = (ii + 1, jj + 1);
            let w = face(k[[i, j]], k[[i - 1, j]]);
            let e = face(k[[i, j]], k[[i + 1, j]]);
            let s = face(k[[i, j]], k[[i, j - 1]]);
            let nn = face(k[[i, j]], k[[i, j + 1]]);
            diag[[ii, jj]] = (w + e + s + nn) / (dx * dx);
            kw[[ii, jj]] = w / (dx * dx);
            ks[[ii, jj]] = s / (dx * dx);
        }
    }
    let matvec = |h: &Array2<f64>, out: &mut Array2<f64>| {
        for ii in 0..ni {
            for jj in 0..ni {
                let mut acc = diag[[ii, jj]] * h[[ii, jj]];
                if ii > 0 {
                    acc -= kw[[ii, jj]] * h[[ii - 1, jj]];
                }
                if ii + 1 < ni {
                    acc -= kw[[ii + 1, jj]] * h[[ii + 1, jj]];
                }
                if jj > 0 {
                    acc -= ks[[ii, jj]] * h[[ii, jj - 1]];
                }
                if jj + 1 < ni {
                    acc -= ks[[ii, jj + 1]] * h[[ii, jj + 1]];
                }
                out[[ii, jj]] = acc;
            }
        }
    };

    let b = Array2::from_shape_fn((ni, ni), |(ii, jj)| forcing.values()[[ii + 1, jj + 1]]);
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = Array2::<f64>::zeros((ni, ni));
    if b_norm == 0.0 {
        return embed(mesh, &h);
    }

    // Jacobi-preconditioned CG
    let mut r = b.clone();
    let mut z = &r / &diag;
    let mut p = z.clone();
    let mut rz = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
    let mut ap = Array2::<f64>::zeros((ni, ni));
    let max_iters = 100 * n;
    for _ in 0..max_iters {
        matvec(&p, &mut ap);
        let pap = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum::<f64>();
        let alpha = rz / pap;
        h.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= REL_RESIDUAL * b_norm {
            return embed(mesh, &h);
        }
        z = &r / &diag;
        let rz_new = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(&p * beta);
    }
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::Numeric(format!(
        "Darcy CG did not converge in {max_iters} iterations (relative residual {:.3e})",
        r_norm / b_norm
    )))
}

fn embed(mesh: Mesh2D, interior: &Array2<f64>) -> Result<Field2D> {
    let n = mesh.nx();
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
            0.0
        } else {
            interior[[i - 1, j - 1]]
        }
    });
    Field2D::new(mesh, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomfields::{binarize, sample_grf, GrfSpec};
    use crate::rng::derived_stream;

    fn manufactured_error(n: usize) -> f64 {
        // K = 1, h = sin(pi x) sin(pi y)  =>  f = 2 pi^2 sin(pi x) sin(pi y)
        let pi = std::f64::consts::PI;
        let mesh = Mesh2D::square(n, 1.0).unwrap();
        let k = Field2D::constant(mesh, 1.0);
        let f = Field2D::from_fn(mesh, |x, y| 2.0 * pi * pi * (pi * x).sin() * (pi * y).sin());
        let h = solve_darcy_with_forcing(&k, &f).unwrap();
        let mut max_err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = mesh.coord(i, j);
                let want = (pi * x).sin() * (pi * y).sin();
                max_err = max_err.max((h.values()[[i, j]] - want).abs());
            }
        }
        max_err
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let mesh = Mesh2D::square(32, 1.0).unwrap();
        let k = Field2D::constant(mesh, 2.0);
        let f = Field2D::zeros(mesh);
        let h = solve_darcy_with_forcing(&k, &f).unwrap();
        assert!(h.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn manufactured_solution_oracle() {
        let err = manufactured_error(128);
        assert!(err <= 5e-4, "max error {err}");
    }

    #[test]
    fn second_order_convergence() {
        let e1 = manufactured_error(64);
        let e2 = manufactured_error(128);
        let ratio = e1 / e2;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "refinement ratio {ratio} (errors {e1}, {e2})"
        );
    }

    #[test]
    fn constant_coefficient_scaling() {
        let mesh = Mesh2D::square(48, 1.0).unwrap();
        let spec = DarcySpec {
            n: 48,
            forcing: 1.0,
        };
        let h1 = solve_darcy(&Field2D::constant(mesh, 1.0), &spec).unwrap();
        let h4 = solve_darcy(&Field2D::constant(mesh, 4.0), &spec).unwrap();
        for (a, b) in h1.values().iter().zip(h4.values().iter()) {
            assert!((a - 4.0 * b).abs() <= 1e-8 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn maximum_principle_on_binarized_fields() {
        let mesh = Mesh2D::square(33, 1.0).unwrap();
        let spec = DarcySpec {
            n: 33,
            forcing: 1.0,
        };
        for s in 0..20 {
            let g = sample_grf(&mesh, &GrfSpec::darcy(), &mut derived_stream(31, s)).unwrap();
            let k = binarize(&g, 12.0, 3.0);
            let h = solve_darcy(&k, &spec).unwrap();
            assert!(
                h.values().iter().all(|v| *v >= -1e-12),
                "maximum principle violated at seed {s}"
            );
        }
    }

    #[test]
    fn nonpositive_permeability_rejected() {
        let mesh = Mesh2D::square(16, 1.0).unwrap();
        let mut k = Field2D::constant(mesh, 1.0);
        k.values_mut()[[3, 4]] = 0.0;
        assert!(solve_darcy(&k, &DarcySpec { n: 16, forcing: 1.0 }).is_err());
    }
}
