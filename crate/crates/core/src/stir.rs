//! Canonical space-time impulse response of an object and rendering of
//! measurements from it by table lookup.
//!
//! The STIR is the LCT-space response `I(x, y, v)` of an object whose centroid
//! sits at `(0, 0, z_ref)`. Moving the object by `(dx, dy)` parallel to the
//! wall and to depth `z` translates the response by `(dx, dy, z^2 - z_ref^2)`,
//! so a hypothesis is rendered by reading shifted columns.

use std::path::Path;

use nalgebra::Vector3;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_f64, read_json, write_f64, write_json};
use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::lct::{Axis, GridSpec};
use crate::simulator::ObjectModel;

/// Gaussian blurs are truncated at this many standard deviations.
const BLUR_TRUNCATION: f64 = 4.0;
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalStir {
    /// `(n_x, n_y, n_v)` density, `v` contiguous.
    #[serde(skip)]
    pub values: Array3<f64>,
    /// Where the stored values live. Moved by [`CanonicalStir::reanchor`].
    pub grid: GridSpec,
    /// `v` axis every rendering is sampled on.
    pub output_v: Axis,
    /// Centroid position the response was computed for.
    pub reference: Vector3<f64>,
    /// Standard deviation of the `v` blur applied at precompute, m^2.
    pub pulse_sigma_v: f64,
    /// Some parabola left the grid and was cropped.
    pub overflow: bool,
}

/// Width in `v` of a Gaussian pulse of `sigma` seconds returning from
/// `v = mu`: `sigma * c * sqrt(mu)`.
pub fn pulse_sigma_v(sigma: f64, mu: f64) -> f64 {
    sigma * SPEED_OF_LIGHT * mu.max(0.0).sqrt()
}

/// Unit-sum discrete Gaussian of `sigma` cells, truncated at four sigma.
pub fn gaussian_taps(sigma_cells: f64) -> Vec<f64> {
    if !(sigma_cells > 0.0) {
        return vec![1.0];
    }
    let half = (BLUR_TRUNCATION * sigma_cells).ceil() as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma_cells * sigma_cells)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Blurs every `(x, y)` column along the last axis; zero outside the grid.
pub fn blur_v(values: &mut Array3<f64>, sigma_cells: f64) {
    let taps = gaussian_taps(sigma_cells);
    if taps.len() == 1 {
        return;
    }
    let half = (taps.len() / 2) as isize;
    let nv = values.dim().2;
    let mut tmp = vec![0.0; nv];
    for mut col in values.lanes_mut(ndarray::Axis(2)) {
        if col.iter().all(|v| *v == 0.0) {
            continue;
        }
        tmp.iter_mut().for_each(|t| *t = 0.0);
        for (k, &c) in col.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let lo = (k as isize - half).max(0) as usize;
            let hi = ((k as isize + half) as usize).min(nv - 1);
            for (j, t) in tmp.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *t += c * taps[(j as isize - k as isize + half) as usize];
            }
        }
        for (c, t) in col.iter_mut().zip(&tmp) {
            *c = *t;
        }
    }
}

/// Sum of point parabolas `h(x - q_x, y - q_y, v - q_z^2)` of the object
/// placed at `(0, 0, reference_depth)`, each carrying its albedo as mass, then
/// blurred along `v` by the pulse width evaluated at unit depth.
pub fn precompute_canonical_stir(
    object: &ObjectModel,
    grid: &GridSpec,
    pulse_sigma: f64,
    reference_depth: f64,
) -> Result<CanonicalStir> {
    grid.x.validate()?;
    grid.y.validate()?;
    grid.v.validate()?;
    if !(pulse_sigma >= 0.0) {
        return Err(Error::Config("pulse_sigma must be >= 0".into()));
    }
    let reference = Vector3::new(0.0, 0.0, reference_depth);
    let dv = grid.v.spacing();
    let nv = grid.v.count;
    let mut values = Array3::<f64>::zeros(grid.shape());
    let mut overflow = false;
    let xs: Vec<f64> = grid.x.coords().collect();
    let ys: Vec<f64> = grid.y.coords().collect();
    for (p, rho) in object.points().iter().zip(object.albedo()) {
        let q = p + reference;
        if !(q.z > 0.0) {
            return Err(Error::ObjectBehindWall(q.z));
        }
        let w = rho / dv;
        let qv = q.z * q.z;
        for (i, x) in xs.iter().enumerate() {
            let dx2 = (x - q.x).powi(2);
            for (j, y) in ys.iter().enumerate() {
                let pos = grid.v.position(dx2 + (y - q.y).powi(2) + qv);
                let k = pos.floor();
                let f = pos - k;
                let k = k as isize;
                if k < 0 || k as usize >= nv || (k as usize == nv - 1 && f > SNAP) {
                    overflow = true;
                    continue;
                }
                let k = k as usize;
                values[[i, j, k]] += (1.0 - f) * w;
                if f > 0.0 && k + 1 < nv {
                    values[[i, j, k + 1]] += f * w;
                }
            }
        }
    }
    let pulse_sigma_v = pulse_sigma_v(pulse_sigma, 1.0);
    blur_v(&mut values, pulse_sigma_v / dv);
    if overflow {
        log::warn!("object parabolas exceed the STIR grid and were cropped");
    }
    Ok(CanonicalStir {
        values,
        grid: *grid,
        output_v: grid.v,
        reference,
        pulse_sigma_v,
        overflow,
    })
}

/// Per-axis read position: lower node, fraction, or `None` when outside.
#[inline]
fn locate(pos: f64, n: usize) -> Option<(usize, f64)> {
    let r = pos.round();
    if (pos - r).abs() < SNAP {
        if r < 0.0 || r > (n - 1) as f64 {
            return None;
        }
        return Some((r as usize, 0.0));
    }
    if pos < 0.0 || pos > (n - 1) as f64 {
        return None;
    }
    let k = pos.floor() as usize;
    Some((k, pos - k as f64))
}

impl CanonicalStir {
    pub fn new(
        values: Array3<f64>,
        grid: GridSpec,
        reference: Vector3<f64>,
        pulse_sigma_v: f64,
    ) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "STIR values {:?} vs grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("STIR values".into()));
        }
        Ok(CanonicalStir {
            values,
            grid,
            output_v: grid.v,
            reference,
            pulse_sigma_v,
            overflow: false,
        })
    }

    pub fn n_v(&self) -> usize {
        self.output_v.count
    }

    /// Moves the stored response by `offset = (dx, dy, dv)` without touching
    /// the output axis.
    pub fn reanchor(&self, offset: Vector3<f64>) -> CanonicalStir {
        let mut s = self.clone();
        s.grid.x = s.grid.x.shifted(offset.x);
        s.grid.y = s.grid.y.shifted(offset.y);
        s.grid.v = s.grid.v.shifted(offset.z);
        s
    }

    /// Shift `(dx, dy, dv)` of an object whose centroid is at `position`.
    pub fn shift_for(&self, position: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            position.x - self.reference.x,
            position.y - self.reference.y,
            position.z * position.z - self.reference.z * self.reference.z,
        )
    }

    /// Renders one column per wall point into `out` (`wall_points.len() * n_v`).
    pub fn render_into(&self, wall_points: &[Vector3<f64>], shift: &Vector3<f64>, out: &mut [f64]) {
        let nv_out = self.output_v.count;
        debug_assert_eq!(out.len(), wall_points.len() * nv_out);
        out.iter_mut().for_each(|o| *o = 0.0);
        let (nx, ny, nv) = self.values.dim();
        let data = self.values.as_slice().expect("STIR values are contiguous");

        // Output node j reads stored position j + offset.
        let offset = (self.output_v.min - shift.z - self.grid.v.min) / self.grid.v.spacing();
        let (m, f) = {
            let r = offset.round();
            if (offset - r).abs() < SNAP {
                (r as isize, 0.0)
            } else {
                let fl = offset.floor();
                (fl as isize, offset - fl)
            }
        };
        let (sx, sy) = (self.grid.x.spacing(), self.grid.y.spacing());
        for (px, w) in wall_points.iter().enumerate() {
            let Some((i, fx)) = locate((w.x - shift.x - self.grid.x.min) / sx, nx) else {
                continue;
            };
            let Some((j, fy)) = locate((w.y - shift.y - self.grid.y.min) / sy, ny) else {
                continue;
            };
            let dst = &mut out[px * nv_out..(px + 1) * nv_out];
            let taps = [
                (i, j, (1.0 - fx) * (1.0 - fy)),
                (i + 1, j, fx * (1.0 - fy)),
                (i, j + 1, (1.0 - fx) * fy),
                (i + 1, j + 1, fx * fy),
            ];
            for (ci, cj, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                let col = &data[(ci * ny + cj) * nv..(ci * ny + cj + 1) * nv];
                accumulate_shifted(dst, col, m, f, wt);
            }
        }
    }

    /// [`render_into`](Self::render_into) into a fresh `(n_px, n_v)` buffer.
    pub fn render(&self, wall_points: &[Vector3<f64>], shift: &Vector3<f64>) -> Vec<f64> {
        let mut out = vec![0.0; wall_points.len() * self.output_v.count];
        self.render_into(wall_points, shift, &mut out);
        out
    }
}

/// `dst[j] += wt * ((1 - f) col[j + m] + f col[j + m + 1])`, zero outside `col`.
#[inline]
fn accumulate_shifted(dst: &mut [f64], col: &[f64], m: isize, f: f64, wt: f64) {
    let n = col.len() as isize;
    let len = dst.len() as isize;
    let a = wt * (1.0 - f);
    // First term: valid j with 0 <= j + m < n.
    let lo = (-m).max(0);
    let hi = (n - m).min(len);
    if a != 0.0 && lo < hi {
        let s = (lo + m) as usize;
        for (d, c) in dst[lo as usize..hi as usize].iter_mut().zip(&col[s..]) {
            *d += a * c;
        }
    }
    if f != 0.0 {
        let b = wt * f;
        let lo = (-m - 1).max(0);
        let hi = (n - m - 1).min(len);
        if lo < hi {
            let s = (lo + m + 1) as usize;
            for (d, c) in dst[lo as usize..hi as usize].iter_mut().zip(&col[s..]) {
                *d += b * c;
            }
        }
    }
}

/// [`CanonicalStir::render`] as a free function.
pub fn render_mas(
    stir: &CanonicalStir,
    wall_points: &[Vector3<f64>],
    shift: &Vector3<f64>,
) -> Vec<f64> {
    stir.render(wall_points, shift)
}

const STIR_FORMAT: &str = "nlos-stir";
const STIR_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StirHeader {
    format: String,
    version: u32,
    stir: CanonicalStir,
}

/// Writes `dir/stir.json` and the raw `dir/values.f64`.
pub fn write_stir(stir: &CanonicalStir, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f64(&dir.join("values.f64"), stir.values.iter().copied())?;
    write_json(
        &dir.join("stir.json"),
        &StirHeader {
            format: STIR_FORMAT.into(),
            version: STIR_VERSION,
            stir: stir.clone(),
        },
    )
}

pub fn read_stir(dir: &Path) -> Result<CanonicalStir> {
    let h: StirHeader = read_json(&dir.join("stir.json"))?;
    if h.format != STIR_FORMAT || h.version != STIR_VERSION {
        return Err(Error::CorruptManifest(format!(
            "unsupported format {} v{}",
            h.format, h.version
        )));
    }
    let mut stir = h.stir;
    stir.grid.x.validate()?;
    stir.grid.y.validate()?;
    stir.grid.v.validate()?;
    let shape = stir.grid.shape();
    let vals = read_f64(&dir.join("values.f64"), shape.0 * shape.1 * shape.2)?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("STIR values".into()));
    }
    stir.values = Array3::from_shape_vec(shape, vals).expect("length checked");
    Ok(stir)
}
