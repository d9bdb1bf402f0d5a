//! Light-cone transform.
//!
//! The confocal forward model becomes a 3D convolution once time is resampled
//! to `v = (c tau / 2)^2` and depth to `u = z^2`:
//!
//! ```text
//! R_t{i}(x, y, v) = R_z{rho}(x, y, v) (*) h(x, y, v),   h = delta(x^2 + y^2 - v)
//! ```
//!
//! Both resampling operators come in two flavours. [`Sampling::Point`] reads
//! the linear interpolant of the input at each output node. [`Sampling::CellAverage`]
//! averages the same interpolant over the footprint of each output cell, which
//! keeps narrow returns from falling between nodes when an output cell spans
//! several input samples.

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::SPEED_OF_LIGHT;

/// Uniform 1D sampling `min + i * spacing` for `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let a = Axis { min, max, count };
        a.validate()?;
        Ok(a)
    }

    /// Axis of `count` nodes starting at `min` with the given spacing.
    pub fn from_spacing(min: f64, spacing: f64, count: usize) -> Result<Self> {
        Axis::new(min, min + spacing * (count as f64 - 1.0), count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || !(self.min < self.max) {
            return Err(Error::InvalidGrid(format!(
                "axis needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.count < 2 {
            return Err(Error::InvalidGrid("axis needs at least 2 nodes".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count as f64 - 1.0)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    /// Fractional node index of `x`.
    #[inline]
    pub fn position(&self, x: f64) -> f64 {
        (x - self.min) / self.spacing()
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.coord(i))
    }

    /// Same spacing, origin moved by `offset`.
    pub fn shifted(&self, offset: f64) -> Axis {
        Axis {
            min: self.min + offset,
            max: self.max + offset,
            count: self.count,
        }
    }

    fn same_spacing(&self, other: &Axis) -> bool {
        let (a, b) = (self.spacing(), other.spacing());
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
    }
}

/// Regular 3D grid. The third axis is `v` (m^2) for LCT cubes, `z` (m) for
/// albedo volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: Axis,
    pub y: Axis,
    pub v: Axis,
}

impl GridSpec {
    pub fn new(x: Axis, y: Axis, v: Axis) -> Result<Self> {
        x.validate()?;
        y.validate()?;
        v.validate()?;
        Ok(GridSpec { x, y, v })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.x.count, self.y.count, self.v.count)
    }

    pub fn len(&self) -> usize {
        self.x.count * self.y.count * self.v.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> [Axis; 3] {
        [self.x, self.y, self.v]
    }
}

/// `I(x, y, v)`: time-resampled transient, or any cube living on an LCT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LctCube {
    pub values: Array3<f64>,
    pub grid: GridSpec,
}

impl LctCube {
    pub fn zeros(grid: GridSpec) -> Self {
        LctCube {
            values: Array3::zeros(grid.shape()),
            grid,
        }
    }

    pub fn new(values: Array3<f64>, grid: GridSpec) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "values {:?} vs grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        Ok(LctCube { values, grid })
    }
}

/// `rho(x, y, z)`, volumetric albedo on an `(x, y, z)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoVolume {
    pub values: Array3<f64>,
    pub grid: GridSpec,
}

impl AlbedoVolume {
    pub fn zeros(grid: GridSpec) -> Self {
        AlbedoVolume {
            values: Array3::zeros(grid.shape()),
            grid,
        }
    }

    pub fn new(values: Array3<f64>, grid: GridSpec) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "values {:?} vs grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("albedo must be finite and >= 0".into()));
        }
        Ok(AlbedoVolume { values, grid })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Point,
    CellAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleOptions {
    pub sampling: Sampling,
    /// Attenuation power of `v` applied by the time resampler.
    pub exponent: f64,
    /// Allow the target to extend past the input window (reads as zero).
    pub crop: bool,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        ResampleOptions {
            sampling: Sampling::Point,
            exponent: 1.5,
            crop: false,
        }
    }
}

/// Linear interpolant of `h` with zero samples outside `0..n`.
#[inline]
fn lerp_samples(h: &[f64], pos: f64) -> f64 {
    let fl = pos.floor();
    let k = fl as isize;
    let f = pos - fl;
    let at = |i: isize| {
        if i >= 0 && (i as usize) < h.len() {
            h[i as usize]
        } else {
            0.0
        }
    };
    if f == 0.0 {
        at(k)
    } else {
        (1.0 - f) * at(k) + f * at(k + 1)
    }
}

/// Antiderivative of the piecewise-linear interpolant of samples, in sample
/// index units. The interpolant ramps to zero over `[-1, 0]` and `[n-1, n]`.
struct Antiderivative {
    /// `prefix[k + 1] = integral from -1 to k`, for `k in -1..=n`.
    prefix: Vec<f64>,
}

impl Antiderivative {
    fn new(h: &[f64]) -> Self {
        let n = h.len();
        let mut prefix = Vec::with_capacity(n + 2);
        prefix.push(0.0);
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &cur in h.iter().chain(std::iter::once(&0.0)) {
            acc += 0.5 * (prev + cur);
            prefix.push(acc);
            prev = cur;
        }
        Antiderivative { prefix }
    }

    fn eval(&self, h: &[f64], p: f64) -> f64 {
        let n = h.len() as isize;
        if p <= -1.0 {
            return 0.0;
        }
        if p >= n as f64 {
            return self.prefix[n as usize + 1];
        }
        let k = p.floor() as isize;
        let f = p - k as f64;
        let hk = if k >= 0 { h[k as usize] } else { 0.0 };
        let hk1 = if k + 1 < n { h[(k + 1) as usize] } else { 0.0 };
        self.prefix[(k + 1) as usize] + f * hk + 0.5 * f * f * (hk1 - hk)
    }

    fn average(&self, h: &[f64], lo: f64, hi: f64) -> f64 {
        if hi - lo < 1e-12 {
            return lerp_samples(h, 0.5 * (lo + hi));
        }
        (self.eval(h, hi) - self.eval(h, lo)) / (hi - lo)
    }
}

/// Precomputed mapping from a histogram time axis onto a `v` axis, reused for
/// every pixel of a frame.
#[derive(Debug, Clone)]
pub struct TimeResampler {
    n_bins: usize,
    sampling: Sampling,
    /// Per output node: (lo, hi) positions in bin units (equal for point sampling).
    spans: Vec<(f64, f64)>,
    gain: Vec<f64>,
}

impl TimeResampler {
    pub fn new(n_bins: usize, bin_width: f64, axis: &Axis, opts: &ResampleOptions) -> Result<Self> {
        axis.validate()?;
        if !(bin_width > 0.0) {
            return Err(Error::Config("bin_width must be positive".into()));
        }
        let window = n_bins as f64 * bin_width;
        let tau = |v: f64| 2.0 * v.max(0.0).sqrt() / SPEED_OF_LIGHT;
        if !opts.crop && (axis.min < 0.0 || tau(axis.max) > window * (1.0 + 1e-12)) {
            return Err(Error::ExtentMismatch(format!(
                "v in [{}, {}] needs tau up to {:.4e} s, window is {:.4e} s",
                axis.min,
                axis.max,
                tau(axis.max),
                window
            )));
        }
        let dv = axis.spacing();
        let mut spans = Vec::with_capacity(axis.count);
        let mut gain = Vec::with_capacity(axis.count);
        for v in axis.coords() {
            let span = match opts.sampling {
                Sampling::Point => {
                    let p = tau(v) / bin_width;
                    (p, p)
                }
                Sampling::CellAverage => {
                    (tau(v - 0.5 * dv) / bin_width, tau(v + 0.5 * dv) / bin_width)
                }
            };
            spans.push(span);
            gain.push(if v > 0.0 { v.powf(opts.exponent) } else { 0.0 });
        }
        Ok(TimeResampler {
            n_bins,
            sampling: opts.sampling,
            spans,
            gain,
        })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Resample one histogram column into `out`.
    pub fn apply(&self, hist: &[f64], out: &mut [f64]) {
        debug_assert_eq!(hist.len(), self.n_bins);
        debug_assert_eq!(out.len(), self.spans.len());
        match self.sampling {
            Sampling::Point => {
                for ((o, &(p, _)), g) in out.iter_mut().zip(&self.spans).zip(&self.gain) {
                    *o = g * lerp_samples(hist, p);
                }
            }
            Sampling::CellAverage => {
                let anti = Antiderivative::new(hist);
                for ((o, &(lo, hi)), g) in out.iter_mut().zip(&self.spans).zip(&self.gain) {
                    *o = g * anti.average(hist, lo, hi);
                }
            }
        }
    }
}

/// `R_t`: resample each pixel's histogram onto `target.v` and scale by
/// `v^{3/2}`. The target's x/y counts must equal the histogram's pixel grid.
pub fn resample_time(
    histogram: ArrayView3<f64>,
    bin_width: f64,
    target: &GridSpec,
) -> Result<LctCube> {
    resample_time_with(histogram, bin_width, target, &ResampleOptions::default())
}

pub fn resample_time_with(
    histogram: ArrayView3<f64>,
    bin_width: f64,
    target: &GridSpec,
    opts: &ResampleOptions,
) -> Result<LctCube> {
    let (nx, ny, nt) = histogram.dim();
    if nx != target.x.count || ny != target.y.count {
        return Err(Error::GridMismatch(format!(
            "histogram has {nx}x{ny} pixels, target grid {}x{}",
            target.x.count, target.y.count
        )));
    }
    if histogram.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram".into()));
    }
    let resampler = TimeResampler::new(nt, bin_width, &target.v, opts)?;
    let mut out = Array3::zeros(target.shape());
    let mut col = vec![0.0; nt];
    let mut dst = vec![0.0; target.v.count];
    for i in 0..nx {
        for j in 0..ny {
            for (c, h) in col.iter_mut().zip(histogram.slice(ndarray::s![i, j, ..])) {
                *c = *h;
            }
            resampler.apply(&col, &mut dst);
            for (k, d) in dst.iter().enumerate() {
                out[[i, j, k]] = *d;
            }
        }
    }
    Ok(LctCube {
        values: out,
        grid: *target,
    })
}

/// `R_z`: resample albedo depth onto `u = z^2` with the `1 / (2 sqrt(u))`
/// Jacobian. Output keeps the volume's x/y axes.
pub fn resample_depth(volume: &AlbedoVolume, u_axis: &Axis) -> Result<LctCube> {
    resample_depth_with(volume, u_axis, Sampling::Point)
}

pub fn resample_depth_with(
    volume: &AlbedoVolume,
    u_axis: &Axis,
    sampling: Sampling,
) -> Result<LctCube> {
    u_axis.validate()?;
    if u_axis.min <= 0.0 {
        return Err(Error::SingularDepth);
    }
    let z_axis = volume.grid.v;
    let (nx, ny, nz) = volume.values.dim();
    let grid = GridSpec {
        x: volume.grid.x,
        y: volume.grid.y,
        v: *u_axis,
    };
    let du = u_axis.spacing();
    let dz = z_axis.spacing();
    let mut out = Array3::zeros(grid.shape());
    let mut col = vec![0.0; nz];
    for i in 0..nx {
        for j in 0..ny {
            for (c, r) in col
                .iter_mut()
                .zip(volume.values.slice(ndarray::s![i, j, ..]))
            {
                *c = *r;
            }
            if col.iter().all(|v| *v == 0.0) {
                continue;
            }
            match sampling {
                Sampling::Point => {
                    for (k, u) in u_axis.coords().enumerate() {
                        let z = u.sqrt();
                        let p = z_axis.position(z);
                        let rho = if p < -1e-9 || p > (nz - 1) as f64 + 1e-9 {
                            0.0
                        } else {
                            lerp_samples(&col, p.clamp(0.0, (nz - 1) as f64))
                        };
                        out[[i, j, k]] = rho / (2.0 * z);
                    }
                }
                Sampling::CellAverage => {
                    // The interpolant is confined to the node range.
                    let anti = Antiderivative::new(&col);
                    let clamp = |p: f64| p.clamp(0.0, (nz - 1) as f64);
                    let edge = anti.eval(&col, 0.0);
                    let integral = |p: f64| anti.eval(&col, clamp(p)) - edge;
                    for (k, u) in u_axis.coords().enumerate() {
                        let lo = (u - 0.5 * du).max(0.0);
                        let hi = u + 0.5 * du;
                        let zl = z_axis.position(lo.sqrt());
                        let zh = z_axis.position(hi.sqrt());
                        // du = 2 z dz, so the average of rho/(2 sqrt u) is the
                        // z-integral of rho over the cell divided by its u-width.
                        out[[i, j, k]] = (integral(zh) - integral(zl)) * dz / (hi - lo);
                    }
                }
            }
        }
    }
    Ok(LctCube { values: out, grid })
}

/// Rasterized parabola `h = delta(x^2 + y^2 - v)` on `grid`. Cells within
/// `thickness * dv / 2` of the parabola are set and each non-empty `(x, y)`
/// column is normalized to unit sum. Parts of the parabola past `grid.v.max`
/// are cropped.
pub fn psf_kernel(grid: &GridSpec, thickness: f64) -> LctCube {
    let mut values = Array3::zeros(grid.shape());
    let dv = grid.v.spacing();
    let half = 0.5 * thickness * dv * (1.0 + 1e-9);
    for (i, x) in grid.x.coords().enumerate() {
        for (j, y) in grid.y.coords().enumerate() {
            let d2 = x * x + y * y;
            let lo = ((d2 - half - grid.v.min) / dv).ceil().max(0.0) as usize;
            let hi_f = ((d2 + half - grid.v.min) / dv).floor();
            if hi_f < 0.0 {
                continue;
            }
            let hi = (hi_f as usize).min(grid.v.count - 1);
            if lo > hi {
                continue;
            }
            let w = 1.0 / (hi - lo + 1) as f64;
            for k in lo..=hi {
                values[[i, j, k]] = w;
            }
        }
    }
    LctCube {
        values,
        grid: *grid,
    }
}

fn integer_offset(a: &Axis, b: &Axis, name: &str) -> Result<isize> {
    if !a.same_spacing(b) {
        return Err(Error::GridMismatch(format!(
            "{name} spacing {} vs {}",
            a.spacing(),
            b.spacing()
        )));
    }
    let o = b.min / a.spacing();
    let r = o.round();
    if (o - r).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "{name} origin of the second operand is not on the lattice"
        )));
    }
    Ok(r as isize)
}

/// Linear convolution of `a` with `b` through the FFT, cropped to `a`'s grid.
/// `b`'s node at physical offset `o` moves mass from `p` to `p + o`.
pub fn convolve3d(a: &LctCube, b: &LctCube) -> Result<LctCube> {
    let off = [
        integer_offset(&a.grid.x, &b.grid.x, "x")?,
        integer_offset(&a.grid.y, &b.grid.y, "y")?,
        integer_offset(&a.grid.v, &b.grid.v, "v")?,
    ];
    let ad = a.values.dim();
    let bd = b.values.dim();
    let a_std = a.values.as_standard_layout();
    let b_std = b.values.as_standard_layout();
    let (full, dims) = fft::convolve_full(
        a_std.as_slice().expect("standard layout"),
        [ad.0, ad.1, ad.2],
        b_std.as_slice().expect("standard layout"),
        [bd.0, bd.1, bd.2],
    );
    let valid = [ad.0 + bd.0 - 1, ad.1 + bd.1 - 1, ad.2 + bd.2 - 1];
    let mut out = Array3::zeros(ad);
    for ((i, j, k), o) in out.indexed_iter_mut() {
        let m = [
            i as isize - off[0],
            j as isize - off[1],
            k as isize - off[2],
        ];
        if m.iter()
            .zip(&valid)
            .all(|(&m, &v)| m >= 0 && (m as usize) < v)
        {
            let (m0, m1, m2) = (m[0] as usize, m[1] as usize, m[2] as usize);
            *o = full[(m0 * dims[1] + m1) * dims[2] + m2];
        }
    }
    Ok(LctCube {
        values: out,
        grid: a.grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LctForwardOptions {
    pub depth_sampling: Sampling,
    pub thickness: f64,
}

impl Default for LctForwardOptions {
    fn default() -> Self {
        LctForwardOptions {
            depth_sampling: Sampling::Point,
            thickness: 1.0,
        }
    }
}

/// Forward model in LCT space: `R_z{rho} (*) h` on `grid`. The x/y axes of
/// `grid` must equal the volume's; `grid.v` doubles as the `u` axis.
pub fn lct_forward(volume: &AlbedoVolume, grid: &GridSpec) -> Result<LctCube> {
    lct_forward_with(volume, grid, &LctForwardOptions::default())
}

pub fn lct_forward_with(
    volume: &AlbedoVolume,
    grid: &GridSpec,
    opts: &LctForwardOptions,
) -> Result<LctCube> {
    if volume.grid.x != grid.x || volume.grid.y != grid.y {
        return Err(Error::GridMismatch(
            "LCT grid must share the volume's x/y axes".into(),
        ));
    }
    let q = resample_depth_with(volume, &grid.v, opts.depth_sampling)?;
    let kernel_grid = kernel_grid_for(grid)?;
    let h = psf_kernel(&kernel_grid, opts.thickness);
    convolve3d(&q, &h)
}

/// Kernel grid covering every lateral offset between two nodes of `grid`,
/// with `v` starting at the parabola apex.
pub fn kernel_grid_for(grid: &GridSpec) -> Result<GridSpec> {
    let sym = |a: &Axis| {
        let half = a.spacing() * (a.count as f64 - 1.0);
        Axis::new(-half, half, 2 * a.count - 1)
    };
    GridSpec::new(
        sym(&grid.x)?,
        sym(&grid.y)?,
        Axis::from_spacing(0.0, grid.v.spacing(), grid.v.count)?,
    )
}
