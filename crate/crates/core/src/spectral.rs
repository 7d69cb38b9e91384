//! Periodic-box discretization and the Fourier multipliers built on it.
//!
//! The box is `[-L, L)^N` sampled at `M` points per axis, `x_j = -L + j h`
//! with `h = 2L / M`. Values are stored row-major (last axis fastest) and the
//! frequency lattice is `xi_k = pi k / L`, `k` in FFT order. Transforms are
//! unitary, so `sum |U_k|^2 h^N = sum |u_j|^2 h^N` without extra factors.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of grid points accepted by [`Grid::new`].
pub const DEFAULT_MAX_POINTS: usize = 1 << 24;

/// Relative imaginary residue tolerated by [`inverse_transform`].
pub const REAL_TOLERANCE: f64 = 1e-10;

/// Relative zero-mode size tolerated before applying a negative order.
pub const MEAN_ZERO_TOLERANCE: f64 = 1e-10;

struct GridInner {
    dim: usize,
    m: usize,
    half_width: f64,
    spacing: f64,
    len: usize,
    axis_freq: Vec<f64>,
    xi: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[-L, L)^N`. Cheap to clone; FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.inner.dim)
            .field("points_per_dim", &self.inner.m)
            .field("half_width", &self.inner.half_width)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim
                && self.inner.m == other.inner.m
                && self.inner.half_width == other.inner.half_width)
    }
}

impl Grid {
    /// Builds a grid with the default point cap.
    pub fn new(dim: usize, points_per_dim: usize, half_width: f64) -> Result<Self> {
        Self::with_cap(dim, points_per_dim, half_width, DEFAULT_MAX_POINTS)
    }

    pub fn with_cap(
        dim: usize,
        points_per_dim: usize,
        half_width: f64,
        max_points: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dim must be at least 1".into()));
        }
        if points_per_dim < 4 || !points_per_dim.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_dim = {points_per_dim} must be a power of two >= 4"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half_width = {half_width} must be positive"
            )));
        }
        let len = u32::try_from(dim)
            .ok()
            .and_then(|d| points_per_dim.checked_pow(d))
            .filter(|&n| n <= max_points)
            .ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "{points_per_dim}^{dim} points exceeds the cap of {max_points}"
                ))
            })?;

        let m = points_per_dim;
        let axis_freq: Vec<f64> = (0..m)
            .map(|k| {
                let signed = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
                std::f64::consts::PI * signed / half_width
            })
            .collect();

        let mut xi = vec![0.0; len];
        let mut idx = vec![0usize; dim];
        for (flat, slot) in xi.iter_mut().enumerate() {
            unflatten(flat, m, &mut idx);
            *slot = idx.iter().map(|&k| axis_freq[k].powi(2)).sum::<f64>().sqrt();
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);

        Ok(Grid {
            inner: Arc::new(GridInner {
                dim,
                m,
                half_width,
                spacing: 2.0 * half_width / m as f64,
                len,
                axis_freq,
                xi,
                forward,
                inverse,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.inner.m
    }

    pub fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.inner.spacing.powi(self.inner.dim as i32)
    }

    /// Total number of points, `M^N`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(2L)^N`.
    pub fn box_volume(&self) -> f64 {
        (2.0 * self.inner.half_width).powi(self.inner.dim as i32)
    }

    /// Euclidean diameter of the box.
    pub fn box_diameter(&self) -> f64 {
        2.0 * self.inner.half_width * (self.inner.dim as f64).sqrt()
    }

    /// Coordinate of index `j` along any axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.inner.half_width + j as f64 * self.inner.spacing
    }

    /// Per-axis angular frequencies in FFT order.
    pub fn axis_frequencies(&self) -> &[f64] {
        &self.inner.axis_freq
    }

    /// Per-axis frequencies sorted ascending: `{-M/2, ..., M/2 - 1} * pi / L`.
    pub fn sorted_frequencies(&self) -> Vec<f64> {
        let mut f = self.inner.axis_freq.clone();
        f.sort_by(|a, b| a.total_cmp(b));
        f
    }

    /// `|xi|` for every lattice point, aligned with spectral coefficients.
    pub fn xi_abs(&self) -> &[f64] {
        &self.inner.xi
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        unflatten(flat, self.inner.m, out);
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.inner.m + i)
    }

    /// Writes the coordinates of point `flat` into `out`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for slot in out.iter_mut().rev() {
            *slot = self.coord(rem % self.inner.m);
            rem /= self.inner.m;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.inner.dim];
        self.point_into(flat, &mut p);
        p
    }

    /// Flat index of the grid point nearest to `x` (clamped to the box).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let m = self.inner.m as f64;
        x.iter().fold(0usize, |acc, &xi| {
            let j = ((xi + self.inner.half_width) / self.inner.spacing).round();
            acc * self.inner.m + j.clamp(0.0, m - 1.0) as usize
        })
    }

    /// Whether `x` lies in the closed box `[-L, L]^N`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&c| c.abs() <= self.inner.half_width)
    }

    /// Unitary N-dimensional DFT in place.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let g = &self.inner;
        let fft = if inverse { &g.inverse } else { &g.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); g.m];
        for axis in 0..g.dim {
            let stride = g.m.pow((g.dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = g.len / (stride * g.m);
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * g.m * stride + i;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
        let scale = 1.0 / (g.len as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= scale);
    }
}

fn unflatten(flat: usize, m: usize, out: &mut [usize]) {
    let mut rem = flat;
    for slot in out.iter_mut().rev() {
        *slot = rem % m;
        rem /= m;
    }
}

/// Convenience constructor matching [`Grid::new`].
pub fn make_grid(dim: usize, points_per_dim: usize, half_width: f64) -> Result<Grid> {
    Grid::new(dim, points_per_dim, half_width)
}

/// Real samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts_unchecked(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_parts_unchecked(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field::from_parts_unchecked(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        ))
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field::from_parts_unchecked(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| x * y)
                .collect(),
        ))
    }

    /// `sum u^2 h^N`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    /// `sum u v h^N`.
    pub fn l2_inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y)
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Circular shift by `by` cells along `axis`.
    pub fn shifted(&self, axis: usize, by: isize) -> Field {
        let g = &self.grid;
        let m = g.points_per_dim() as isize;
        let mut idx = vec![0usize; g.dim()];
        let mut out = vec![0.0; g.len()];
        for (flat, &v) in self.values.iter().enumerate() {
            g.multi_index(flat, &mut idx);
            idx[axis] = (idx[axis] as isize + by).rem_euclid(m) as usize;
            out[g.flat_index(&idx)] = v;
        }
        Field::from_parts_unchecked(g, out)
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

/// Unitary Fourier coefficients of a [`Field`], FFT-ordered.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Quadrature weight that makes `sum |U|^2 w` the continuum `L^2` norm.
    pub fn spectral_weight(&self) -> f64 {
        self.grid.cell_volume()
    }

    /// `sum weight(|xi|) |U|^2` times the spectral weight.
    pub fn weighted_energy(&self, weight: impl Fn(f64) -> f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.grid.xi_abs())
            .map(|(c, &xi)| weight(xi) * c.norm_sqr())
            .sum::<f64>()
            * self.spectral_weight()
    }

    /// Multiplies every coefficient by `f(|xi|)`.
    pub fn apply_multiplier(&mut self, f: impl Fn(f64) -> f64) {
        let xi = self.grid.inner.xi.as_slice();
        for (c, &k) in self.coeffs.iter_mut().zip(xi) {
            *c *= f(k);
        }
    }
}

pub fn forward_transform(u: &Field) -> SpectralField {
    let mut data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    u.grid.transform(&mut data, false);
    SpectralField {
        grid: u.grid.clone(),
        coeffs: data,
    }
}

/// Inverse of [`forward_transform`]. Fails with [`Error::NonRealResult`] when
/// the relative imaginary residue exceeds [`REAL_TOLERANCE`].
pub fn inverse_transform(spec: &SpectralField) -> Result<Field> {
    let mut data = spec.coeffs.clone();
    spec.grid.transform(&mut data, true);
    let (re2, im2) = data
        .iter()
        .fold((0.0, 0.0), |(r, i), z| (r + z.re * z.re, i + z.im * z.im));
    let total = (re2 + im2).sqrt();
    if total > 0.0 {
        let residue = im2.sqrt() / total;
        if residue > REAL_TOLERANCE {
            return Err(Error::NonRealResult { residue });
        }
    }
    Field::new(&spec.grid, data.into_iter().map(|z| z.re).collect())
}

/// The symbol `|xi|^sigma` with the zero-frequency convention
/// `0^0 = 1` and `0^sigma = 0` otherwise.
#[inline]
pub fn power_symbol(xi: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else if xi == 0.0 {
        0.0
    } else {
        xi.powf(sigma)
    }
}

/// `(-Delta)^{sigma/2} u`, realized as the multiplier `|xi|^sigma`.
///
/// Negative orders act as the pseudo-inverse on mean-zero fields and reject
/// fields whose zero mode is not negligible.
pub fn frac_power(u: &Field, sigma: f64) -> Result<Field> {
    if !sigma.is_finite() {
        return Err(Error::InvalidOrder(format!("sigma = {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(u.clone());
    }
    let mut spec = forward_transform(u);
    if sigma < 0.0 {
        let zero_mode = spec.coeffs[0].norm();
        let norm = spec.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if zero_mode > MEAN_ZERO_TOLERANCE * norm {
            return Err(Error::NegativeOrderOnNonMeanZero {
                order: sigma,
                zero_mode,
            });
        }
    }
    spec.apply_multiplier(|xi| power_symbol(xi, sigma));
    inverse_transform(&spec)
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    dim: usize,
    points_per_dim: usize,
    half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
}

/// Writes a field as one JSON header line followed by `M^N` little-endian
/// `f64` values in row-major order.
pub fn write_field<W: Write>(field: &Field, mut w: W, timestamp: Option<&str>) -> Result<()> {
    let g = field.grid();
    let header = DumpHeader {
        dim: g.dim(),
        points_per_dim: g.points_per_dim(),
        half_width: g.half_width(),
        timestamp: timestamp.map(str::to_owned),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field`].
pub fn read_field<R: BufRead>(mut r: R) -> Result<Field> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: DumpHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Io(e.to_string()))?;
    let grid = Grid::new(header.dim, header.points_per_dim, header.half_width)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Io(format!(
            "expected {} payload bytes, found {}",
            grid.len() * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Field::new(&grid, values)
}
