//! Equispaced 2-D meshes, scalar fields on them, and the resampling
//! primitives used throughout the pipeline: grid-coordinate encoding,
//! corner-aligned bilinear resize, stride subsampling, and padding to a
//! divisibility constraint.
//!
//! Grids are 0-based and endpoint-inclusive: point `(i, j)` sits at
//! `(i*dx, j*dy)` with `dx = lx/(nx-1)`, so corners map to corners under
//! bilinear resize.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Equispaced 2-D grid on `[0, lx] x [0, ly]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid_arg(format!(
                "mesh needs at least 2 points per dimension, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::invalid_arg(format!(
                "mesh needs positive side lengths, got {lx}x{ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square mesh on `[0, l]^2` with `n` points per side.
    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, l, l)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn is_square(&self) -> bool {
        self.nx == self.ny && (self.lx - self.ly).abs() <= 1e-12 * self.lx.abs().max(self.ly.abs())
    }

    /// Physical coordinate of grid point `(i, j)`.
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), j as f64 * self.dy())
    }
}

/// Scalar function sampled on a [`Mesh2D`]; `values[[i, j]]` is the value
/// at `(i*dx, j*dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    mesh: Mesh2D,
    values: Array2<f64>,
}

impl Field2D {
    pub fn new(mesh: Mesh2D, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (mesh.nx, mesh.ny) {
            return Err(Error::invalid_arg(format!(
                "field shape {:?} does not match mesh {}x{}",
                values.dim(),
                mesh.nx,
                mesh.ny
            )));
        }
        let f = Self { mesh, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn zeros(mesh: Mesh2D) -> Self {
        Self {
            values: Array2::zeros((mesh.nx, mesh.ny)),
            mesh,
        }
    }

    pub fn constant(mesh: Mesh2D, c: f64) -> Self {
        Self {
            values: Array2::from_elem((mesh.nx, mesh.ny), c),
            mesh,
        }
    }

    /// Sample a closure `f(x, y)` on every grid point.
    pub fn from_fn(mesh: Mesh2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let values = Array2::from_shape_fn((mesh.nx, mesh.ny), |(i, j)| {
            f(i as f64 * dx, j as f64 * dy)
        });
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
    pub fn nx(&self) -> usize {
        self.mesh.nx
    }
    pub fn ny(&self) -> usize {
        self.mesh.ny
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("field contains non-finite values".into()))
        }
    }
}

/// Coordinate-channel matrices: `xmat[[i, j]] = i*dx`, `ymat[[i, j]] = j*dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEncoding {
    pub xmat: Array2<f64>,
    pub ymat: Array2<f64>,
}

pub fn grid_encoding(mesh: &Mesh2D) -> GridEncoding {
    let (dx, dy) = (mesh.dx(), mesh.dy());
    let xmat = Array2::from_shape_fn((mesh.nx, mesh.ny), |(i, _)| i as f64 * dx);
    let ymat = Array2::from_shape_fn((mesh.nx, mesh.ny), |(_, j)| j as f64 * dy);
    GridEncoding { xmat, ymat }
}

/// Corner-aligned 1-D interpolation: for each target index, the source
/// position, split into base index and fractional weight.
fn resize_axis(src_n: usize, dst_n: usize) -> Vec<(usize, usize, f64)> {
    (0..dst_n)
        .map(|t| {
            if dst_n == 1 {
                return (0, 0, 0.0);
            }
            let pos = t as f64 * (src_n - 1) as f64 / (dst_n - 1) as f64;
            let i0 = (pos.floor() as usize).min(src_n - 2);
            let w = pos - i0 as f64;
            (i0, i0 + 1, w)
        })
        .collect()
}

/// Corner-aligned bilinear interpolation onto `target_nx x target_ny`
/// over the same physical domain.
pub fn bilinear_resize(field: &Field2D, target_nx: usize, target_ny: usize) -> Result<Field2D> {
    if target_nx < 2 || target_ny < 2 {
        return Err(Error::invalid_arg(format!(
            "resize target must be at least 2x2, got {target_nx}x{target_ny}"
        )));
    }
    let mesh = field.mesh();
    if target_nx == mesh.nx() && target_ny == mesh.ny() {
        return Ok(field.clone());
    }
    let out_mesh = Mesh2D::new(target_nx, target_ny, mesh.lx(), mesh.ly())?;
    let xw = resize_axis(mesh.nx(), target_nx);
    let yw = resize_axis(mesh.ny(), target_ny);
    let src = field.values();
    let values = Array2::from_shape_fn((target_nx, target_ny), |(ti, tj)| {
        let (i0, i1, wx) = xw[ti];
        let (j0, j1, wy) = yw[tj];
        let v00 = src[[i0, j0]];
        let v01 = src[[i0, j1]];
        let v10 = src[[i1, j0]];
        let v11 = src[[i1, j1]];
        (1.0 - wx) * ((1.0 - wy) * v00 + wy * v01) + wx * ((1.0 - wy) * v10 + wy * v11)
    });
    Field2D::new(out_mesh, values)
}

/// Keep grid points with indices `0, stride, 2*stride, ...` per dimension.
/// The output mesh spans the retained points.
pub fn subsample(field: &Field2D, stride: usize) -> Result<Field2D> {
    if stride < 1 {
        return Err(Error::invalid_arg("subsample stride must be >= 1"));
    }
    if stride == 1 {
        return Ok(field.clone());
    }
    let mesh = field.mesh();
    let out_nx = mesh.nx().div_ceil(stride);
    let out_ny = mesh.ny().div_ceil(stride);
    if out_nx < 2 || out_ny < 2 {
        return Err(Error::invalid_arg(format!(
            "stride {stride} leaves fewer than 2 points ({out_nx}x{out_ny})"
        )));
    }
    let out_mesh = Mesh2D::new(
        out_nx,
        out_ny,
        (out_nx - 1) as f64 * stride as f64 * mesh.dx(),
        (out_ny - 1) as f64 * stride as f64 * mesh.dy(),
    )?;
    let src = field.values();
    let values =
        Array2::from_shape_fn((out_nx, out_ny), |(i, j)| src[[i * stride, j * stride]]);
    Field2D::new(out_mesh, values)
}

/// Resample to exactly `m` points per retained dimension by nearest-index
/// selection, anchored at index 0 and spanning the full index range.
/// Used for the round-to-nearest side lengths of the variable-grid runs.
pub fn subsample_to_side(field: &Field2D, m_x: usize, m_y: usize) -> Result<Field2D> {
    if m_x < 2 || m_y < 2 {
        return Err(Error::invalid_arg(format!(
            "subsample target must be at least 2 per dimension, got {m_x}x{m_y}"
        )));
    }
    let mesh = field.mesh();
    if m_x > mesh.nx() || m_y > mesh.ny() {
        return Err(Error::invalid_arg(format!(
            "subsample target {m_x}x{m_y} exceeds field size {}x{}",
            mesh.nx(),
            mesh.ny()
        )));
    }
    let idx = |n: usize, m: usize| -> Vec<usize> {
        (0..m)
            .map(|j| {
                ((j as f64 * (n - 1) as f64 / (m - 1) as f64).round() as usize).min(n - 1)
            })
            .collect()
    };
    let xi = idx(mesh.nx(), m_x);
    let yi = idx(mesh.ny(), m_y);
    let out_mesh = Mesh2D::new(
        m_x,
        m_y,
        *xi.last().unwrap() as f64 * mesh.dx(),
        *yi.last().unwrap() as f64 * mesh.dy(),
    )?;
    let src = field.values();
    let values = Array2::from_shape_fn((m_x, m_y), |(i, j)| src[[xi[i], yi[j]]]);
    Field2D::new(out_mesh, values)
}

/// Smallest integer `>= n` divisible by `m`.
pub fn pad_to_multiple(n: usize, m: usize) -> usize {
    assert!(n >= 1 && m >= 1);
    n.div_ceil(m) * m
}

/// Nearest-integer side length for a stride-`r` run over `n` points,
/// the rounding convention of the variable-grid experiments.
pub fn rounded_side(n: usize, r: usize) -> usize {
    (n as f64 / r as f64).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_encoding_3x3_unit_square() {
        let mesh = Mesh2D::square(3, 1.0).unwrap();
        let enc = grid_encoding(&mesh);
        let expect_x = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [1.0, 1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(enc.xmat[[i, j]], expect_x[i][j]);
                assert_abs_diff_eq!(enc.ymat[[i, j]], expect_x[j][i]);
            }
        }
    }

    #[test]
    fn grid_encoding_rectangular() {
        let mesh = Mesh2D::new(2, 3, 2.0, 1.0).unwrap();
        let enc = grid_encoding(&mesh);
        for j in 0..3 {
            assert_abs_diff_eq!(enc.xmat[[0, j]], 0.0);
            assert_abs_diff_eq!(enc.xmat[[1, j]], 2.0);
        }
        for i in 0..2 {
            assert_abs_diff_eq!(enc.ymat[[i, 0]], 0.0);
            assert_abs_diff_eq!(enc.ymat[[i, 1]], 0.5);
            assert_abs_diff_eq!(enc.ymat[[i, 2]], 1.0);
        }
    }

    #[test]
    fn degenerate_mesh_rejected() {
        assert!(Mesh2D::new(2, 1, 1.0, 1.0).is_err());
        assert!(Mesh2D::new(1, 2, 1.0, 1.0).is_err());
        assert!(Mesh2D::new(2, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn resize_identity() {
        let mesh = Mesh2D::square(7, 1.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, y| (x * 3.1).sin() + y * y);
        let g = bilinear_resize(&f, 7, 7).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn resize_constant() {
        let mesh = Mesh2D::square(4, 1.0).unwrap();
        let f = Field2D::constant(mesh, 5.0);
        for (tn, tm) in [(2, 9), (13, 3), (8, 8)] {
            let g = bilinear_resize(&f, tn, tm).unwrap();
            for v in g.values() {
                assert_abs_diff_eq!(*v, 5.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn resize_ramp_3_to_5() {
        let mesh = Mesh2D::square(3, 1.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, _| x);
        let g = bilinear_resize(&f, 5, 5).unwrap();
        for (i, want) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            for j in 0..5 {
                assert_abs_diff_eq!(g.values()[[i, j]], *want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn resize_rejects_tiny_target() {
        let mesh = Mesh2D::square(4, 1.0).unwrap();
        let f = Field2D::zeros(mesh);
        assert!(bilinear_resize(&f, 1, 4).is_err());
        assert!(bilinear_resize(&f, 4, 0).is_err());
    }

    #[test]
    fn subsample_identity_and_5x5() {
        let mesh = Mesh2D::square(5, 1.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, y| x * 10.0 + y);
        assert_eq!(subsample(&f, 1).unwrap(), f);
        let g = subsample(&f, 2).unwrap();
        assert_eq!(g.nx(), 3);
        assert_eq!(g.ny(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g.values()[[i, j]], f.values()[[2 * i, 2 * j]]);
            }
        }
        // the retained points span the whole original domain here
        assert_abs_diff_eq!(g.mesh().lx(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn subsample_composition() {
        // n = 9 satisfies n ≡ 1 (mod 4), so indices align
        let mesh = Mesh2D::square(9, 2.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, y| (x + 0.3).powi(2) - y);
        let a = subsample(&subsample(&f, 2).unwrap(), 2).unwrap();
        let b = subsample(&f, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_too_coarse_rejected() {
        let mesh = Mesh2D::square(5, 1.0).unwrap();
        let f = Field2D::zeros(mesh);
        assert!(subsample(&f, 5).is_err());
    }

    #[test]
    fn pad_to_multiple_examples() {
        assert_eq!(pad_to_multiple(128, 16), 128);
        assert_eq!(pad_to_multiple(100, 16), 112);
        assert_eq!(pad_to_multiple(17, 16), 32);
        assert_eq!(pad_to_multiple(1, 1), 1);
    }

    #[test]
    fn rounded_sides_for_512() {
        let sides: Vec<usize> = (1..=9).map(|r| rounded_side(512, r)).collect();
        assert_eq!(sides, vec![512, 256, 171, 128, 102, 85, 73, 64, 57]);
    }

    #[test]
    fn subsample_to_side_identity() {
        let mesh = Mesh2D::square(6, 1.0).unwrap();
        let f = Field2D::from_fn(mesh, |x, y| x - y * 2.0);
        assert_eq!(subsample_to_side(&f, 6, 6).unwrap(), f);
    }

    #[test]
    fn non_finite_rejected() {
        let mesh = Mesh2D::square(2, 1.0).unwrap();
        let mut vals = Array2::zeros((2, 2));
        vals[[0, 0]] = f64::NAN;
        assert!(Field2D::new(mesh, vals).is_err());
    }

    proptest! {
        #[test]
        fn resize_preserves_bounds(
            nx in 2usize..10, ny in 2usize..10,
            tx in 2usize..14, ty in 2usize..14,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mesh = Mesh2D::new(nx, ny, 1.0, 1.0).unwrap();
            let values = Array2::from_shape_fn((nx, ny), |_| rng.gen_range(-3.0..3.0));
            let f = Field2D::new(mesh, values).unwrap();
            let g = bilinear_resize(&f, tx, ty).unwrap();
            let (lo, hi) = (f.min(), f.max());
            for v in g.values() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }

        #[test]
        fn resize_reproduces_affine(
            nx in 2usize..9, ny in 2usize..9,
            tx in 2usize..15, ty in 2usize..15,
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
        ) {
            let mesh = Mesh2D::new(nx, ny, 1.3, 0.8).unwrap();
            let f = Field2D::from_fn(mesh, |x, y| a + b * x + c * y);
            let g = bilinear_resize(&f, tx, ty).unwrap();
            let gm = *g.mesh();
            for i in 0..tx {
                for j in 0..ty {
                    let (x, y) = gm.coord(i, j);
                    let want = a + b * x + c * y;
                    let scale = want.abs().max(1.0);
                    prop_assert!((g.values()[[i, j]] - want).abs() <= 1e-12 * scale);
                }
            }
        }

        #[test]
        fn grid_encoding_formula(nx in 2usize..12, ny in 2usize..12, lx in 0.1f64..5.0, ly in 0.1f64..5.0) {
            let mesh = Mesh2D::new(nx, ny, lx, ly).unwrap();
            let enc = grid_encoding(&mesh);
            for i in 0..nx {
                for j in 0..ny {
                    prop_assert!((enc.xmat[[i, j]] - i as f64 * mesh.dx()).abs() < 1e-14);
                    prop_assert!((enc.ymat[[i, j]] - j as f64 * mesh.dy()).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn subsample_coords_are_subset(n in 4usize..20, stride in 1usize..4) {
            let mesh = Mesh2D::square(n, 2.0).unwrap();
            let f = Field2D::from_fn(mesh, |x, y| x * y);
            if let Ok(g) = subsample(&f, stride) {
                let gm = *g.mesh();
                for i in 0..g.nx() {
                    let (x, _) = gm.coord(i, 0);
                    let (ox, _) = mesh.coord(i * stride, 0);
                    prop_assert!((x - ox).abs() < 1e-12);
                }
            }
        }
    }
}
