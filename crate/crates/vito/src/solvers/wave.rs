//! 2-D acoustic wave equation with spatially varying speed, homogeneous
//! Dirichlet walls, leapfrog time stepping (second-order centered in time
//! and space).

use crate::error::{Error, Result};
use crate::mesh::Field2D;
use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSpec {
    /// Domain side length.
    pub domain_side: f64,
    /// Final propagation time.
    pub t_final: f64,
    /// Wave-speed amplitude range for dataset generation.
    pub c0_low: f64,
    pub c0_high: f64,
    /// Safety factor against the 2-D CFL bound `c dt/dx <= 1/sqrt(2)`.
    pub cfl_safety: f64,
}

impl WaveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.domain_side > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::invalid_arg("wave spec needs L > 0 and T > 0"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::invalid_arg("cfl_safety must lie in (0, 1)"));
        }
        if self.c0_low > self.c0_high {
            return Err(Error::invalid_arg("wave speed range is empty"));
        }
        Ok(())
    }
}

impl Default for WaveSpec {
    fn default() -> Self {
        Self {
            domain_side: std::f64::consts::PI,
            t_final: 0.001,
            c0_low: 1300.0,
            c0_high: 1600.0,
            cfl_safety: 0.5,
        }
    }
}

/// Propagate `u0` (initial pressure, zero initial velocity, no source) to
/// `u(.,.,T)`.
pub fn solve_wave(u0: &Field2D, c: &Field2D, spec: &WaveSpec) -> Result<Field2D> {
    spec.validate()?;
    if u0.mesh() != c.mesh() {
        return Err(Error::invalid_arg("u0 and c must share a mesh"));
    }
    let mesh = *u0.mesh();
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let (dx, dy) = (mesh.dx(), mesh.dy());
    let c_max = c.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if c_max == 0.0 {
        // zero speed: the field never moves
        return Ok(u0.clone());
    }
    let dt_cfl = spec.cfl_safety * dx.min(dy) / (std::f64::consts::SQRT_2 * c_max);
    let steps = (spec.t_final / dt_cfl).ceil() as usize;
    let dt = spec.t_final / steps as f64;

    let c2: Array2<f64> = c.values().mapv(|v| v * v);
    let mut prev = u0.values().clone();
    let lap = |u: &Array2<f64>, out: &mut Array2<f64>| {
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                out[[i, j]] = (u[[i + 1, j]] - 2.0 * u[[i, j]] + u[[i - 1, j]]) / (dx * dx)
                    + (u[[i, j + 1]] - 2.0 * u[[i, j]] + u[[i, j - 1]]) / (dy * dy);
            }
        }
    };
    let mut lap_buf = Array2::<f64>::zeros((nx, ny));

    // first step from a Taylor expansion with v0 = 0
    lap(&prev, &mut lap_buf);
    let mut cur = Array2::<f64>::zeros((nx, ny));
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            cur[[i, j]] = prev[[i, j]] + 0.5 * dt * dt * c2[[i, j]] * lap_buf[[i, j]];
        }
    }

    for _ in 1..steps {
        lap(&cur, &mut lap_buf);
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let next =
                    2.0 * cur[[i, j]] - prev[[i, j]] + dt * dt * c2[[i, j]] * lap_buf[[i, j]];
                prev[[i, j]] = next;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Field2D::new(mesh, cur)
}

/// Discrete energy `0.5 sum (du/dt)^2 / c^2 + 0.5 sum |grad u|^2`, used to
/// monitor stability. `u_prev`/`u_cur` are consecutive leapfrog states.
pub fn wave_energy(u_prev: &Field2D, u_cur: &Field2D, c: &Field2D, dt: f64) -> f64 {
    let mesh = u_cur.mesh();
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let (dx, dy) = (mesh.dx(), mesh.dy());
    let mut kinetic = 0.0;
    let mut elastic = 0.0;
    let up = u_prev.values();
    let uc = u_cur.values();
    let cv = c.values();
    for i in 0..nx {
        for j in 0..ny {
            let c2 = cv[[i, j]] * cv[[i, j]];
            if c2 > 0.0 {
                let v = (uc[[i, j]] - up[[i, j]]) / dt;
                kinetic += 0.5 * v * v / c2 * dx * dy;
            }
            if i + 1 < nx {
                let g = (uc[[i + 1, j]] - uc[[i, j]]) / dx;
                elastic += 0.5 * g * g * dx * dy;
            }
            if j + 1 < ny {
                let g = (uc[[i, j + 1]] - uc[[i, j]]) / dy;
                elastic += 0.5 * g * g * dx * dy;
            }
        }
    }
    kinetic + elastic
}
