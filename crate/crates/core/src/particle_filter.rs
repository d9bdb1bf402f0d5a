//! Sequential Monte Carlo core shared by tracking and localization.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lct::Axis;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Motion-prior standard deviation per axis and frame, meters.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// `[min, max]` per state axis for initialization.
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
}

fn default_particles() -> usize {
    1000
}
fn default_radius() -> f64 {
    0.05
}
fn default_eta() -> f64 {
    4.0
}

impl FilterConfig {
    pub fn new(bounds: Vec<[f64; 2]>, seed: u64) -> Self {
        FilterConfig {
            particles: default_particles(),
            radius: default_radius(),
            eta: default_eta(),
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("need at least one particle".into()));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::Config("radius must be finite and >= 0".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("bounds are empty".into()));
        }
        if self
            .bounds
            .iter()
            .any(|[a, b]| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config("each bound needs min <= max".into()));
        }
        Ok(())
    }
}

/// Weighted samples `(K, d)`. `epoch` counts propagation/resampling steps and
/// keys the random streams so each step draws fresh numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub states: Array2<f64>,
    pub weights: Array1<f64>,
    pub seed: u64,
    pub epoch: u64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }
}

pub fn init_uniform(cfg: &FilterConfig, d: usize) -> Result<ParticleSet> {
    cfg.validate()?;
    if cfg.bounds.len() != d {
        return Err(Error::BoundsDimensionMismatch {
            bounds: cfg.bounds.len(),
            dim: d,
        });
    }
    let k = cfg.particles;
    let mut states = Array2::zeros((k, d));
    for (i, mut row) in states.rows_mut().into_iter().enumerate() {
        let mut rng = seeds::stream(cfg.seed, seeds::TAG_INIT, 0, i as u64);
        for (x, [lo, hi]) in row.iter_mut().zip(&cfg.bounds) {
            let u: f64 = rng.random();
            *x = lo + u * (hi - lo);
        }
    }
    Ok(ParticleSet {
        states,
        weights: Array1::from_elem(k, 1.0 / k as f64),
        seed: cfg.seed,
        epoch: 0,
    })
}

/// Adds `N(0, r^2)` to every coordinate; weights are unchanged.
pub fn propagate(p: &ParticleSet, r: f64) -> ParticleSet {
    let mut out = p.clone();
    out.epoch += 1;
    if r > 0.0 {
        for (i, mut row) in out.states.rows_mut().into_iter().enumerate() {
            let mut rng = seeds::stream(p.seed, seeds::TAG_PROPAGATE, p.epoch, i as u64);
            for x in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += r * z;
            }
        }
    }
    out
}

/// `(<i, r> / (|i| |r|))^eta`, with the cosine clamped to `[0, 1]` and zero
/// whenever either input has zero norm.
pub fn score_dot(measurement: &[f64], rendered: &[f64], eta: f64) -> Result<f64> {
    if measurement.len() != rendered.len() {
        return Err(Error::LengthMismatch(format!(
            "measurement {} vs rendering {}",
            measurement.len(),
            rendered.len()
        )));
    }
    let (mut dot, mut nm, mut nr) = (0.0, 0.0, 0.0);
    for (a, b) in measurement.iter().zip(rendered) {
        dot += a * b;
        nm += a * a;
        nr += b * b;
    }
    Ok(cosine_power(dot, nm, nr, eta))
}

/// Score from precomputed `dot`, `|i|^2`, `|r|^2`.
#[inline]
pub(crate) fn cosine_power(dot: f64, nm2: f64, nr2: f64, eta: f64) -> f64 {
    if nm2 <= 0.0 || nr2 <= 0.0 {
        return 0.0;
    }
    let c = (dot / (nm2.sqrt() * nr2.sqrt())).clamp(0.0, 1.0);
    c.powf(eta)
}

pub fn normalize_weights(p: &ParticleSet) -> Result<ParticleSet> {
    let s: f64 = p.weights.sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    let mut out = p.clone();
    out.weights.mapv_inplace(|w| w / s);
    Ok(out)
}

/// Indices chosen by residual resampling of normalized `weights`: index `k`
/// first appears `floor(K w_k)` times, the remaining slots are drawn from
/// the residuals with `rng`.
pub fn residual_resample_indices<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let k = weights.len();
    let mut out = Vec::with_capacity(k);
    let mut residual = Vec::with_capacity(k);
    for (i, w) in weights.iter().enumerate() {
        let expected = k as f64 * w;
        // Guard against products like 5 * 0.6 = 2.9999999999999996.
        let copies = (expected + 1e-9).floor().max(0.0) as usize;
        out.extend(std::iter::repeat_n(i, copies));
        residual.push((expected - copies as f64).max(0.0));
    }
    out.truncate(k);
    let remaining = k - out.len();
    if remaining > 0 {
        let total: f64 = residual.iter().sum();
        let mut cdf = Vec::with_capacity(k);
        let mut acc = 0.0;
        for r in &residual {
            acc += if total > 0.0 {
                r / total
            } else {
                1.0 / k as f64
            };
            cdf.push(acc);
        }
        for _ in 0..remaining {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|c| *c <= u).min(k - 1);
            out.push(idx);
        }
    }
    out
}

pub fn residual_resample(p: &ParticleSet) -> ParticleSet {
    let mut rng = seeds::stream(p.seed, seeds::TAG_RESAMPLE, p.epoch, 0);
    let idx =
        residual_resample_indices(p.weights.as_slice().expect("contiguous weights"), &mut rng);
    let k = p.len();
    let mut states = Array2::zeros(p.states.dim());
    for (dst, &src) in idx.iter().enumerate() {
        states.row_mut(dst).assign(&p.states.row(src));
    }
    ParticleSet {
        states,
        weights: Array1::from_elem(k, 1.0 / k as f64),
        seed: p.seed,
        epoch: p.epoch + 1,
    }
}

pub fn mean_estimate(p: &ParticleSet) -> Array1<f64> {
    let s: f64 = p.weights.sum();
    let mut m = Array1::zeros(p.dim());
    for (row, w) in p.states.rows().into_iter().zip(p.weights.iter()) {
        m.scaled_add(*w, &row);
    }
    if s > 0.0 {
        m /= s;
    }
    m
}

/// Weighted sample covariance of the states.
pub fn covariance(p: &ParticleSet) -> DMatrix<f64> {
    let d = p.dim();
    let mean = mean_estimate(p);
    let s: f64 = p.weights.sum();
    let mut c = DMatrix::zeros(d, d);
    for (row, w) in p.states.rows().into_iter().zip(p.weights.iter()) {
        let x = DVector::from_iterator(d, row.iter().zip(mean.iter()).map(|(a, b)| a - b));
        c += (&x * x.transpose()) * *w;
    }
    if s > 0.0 {
        c /= s;
    }
    c
}

/// Scott's rule for an isotropic kernel: `sigma * n^(-1 / (d + 4))`, with
/// `sigma` the root mean per-axis variance.
pub fn scott_bandwidth(p: &ParticleSet) -> f64 {
    let d = p.dim() as f64;
    let w = &p.weights;
    let s = w.sum();
    let n_eff = if s > 0.0 {
        s * s / w.iter().map(|v| v * v).sum::<f64>()
    } else {
        p.len() as f64
    };
    let sigma = (covariance(p).trace() / d).sqrt();
    sigma * n_eff.powf(-1.0 / (d + 4.0))
}

/// Weighted isotropic Gaussian KDE evaluated on a regular grid over the
/// state axes. Returns densities of shape `(axes[0].count, axes[1].count, ...)`.
pub fn kde(p: &ParticleSet, bandwidth: f64, axes: &[Axis]) -> Result<ArrayD<f64>> {
    if axes.len() != p.dim() {
        return Err(Error::BoundsDimensionMismatch {
            bounds: axes.len(),
            dim: p.dim(),
        });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config("bandwidth must be positive".into()));
    }
    let d = axes.len();
    let shape: Vec<usize> = axes.iter().map(|a| a.count).collect();
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    let s: f64 = p.weights.sum();
    if !(s > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let norm = (2.0 * std::f64::consts::PI * bandwidth * bandwidth).powf(-(d as f64) / 2.0);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let reach = 5.0 * bandwidth;
    for (row, w) in p.states.rows().into_iter().zip(p.weights.iter()) {
        if *w == 0.0 {
            continue;
        }
        // Per-axis 1D factors over the nodes within reach.
        let mut ranges = Vec::with_capacity(d);
        for (a, x) in axes.iter().zip(row.iter()) {
            let lo = a.position(x - reach).ceil().max(0.0) as usize;
            let hi_f = a.position(x + reach).floor();
            if hi_f < 0.0 || lo >= a.count {
                ranges.push((0, Vec::new()));
                continue;
            }
            let hi = (hi_f as usize).min(a.count - 1);
            let f: Vec<f64> = (lo..=hi)
                .map(|i| (-(a.coord(i) - x).powi(2) * inv).exp())
                .collect();
            ranges.push((lo, f));
        }
        if ranges.iter().any(|(_, f)| f.is_empty()) {
            continue;
        }
        let scale = norm * w / s;
        let mut idx = vec![0usize; d];
        'outer: loop {
            let mut v = scale;
            let mut pos = Vec::with_capacity(d);
            for (k, (lo, f)) in ranges.iter().enumerate() {
                v *= f[idx[k]];
                pos.push(lo + idx[k]);
            }
            out[IxDyn(&pos)] += v;
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < ranges[k].1.len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
    }
    Ok(out)
}

/// One k-means cluster: centre and member count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub mean: Vec<f64>,
    pub population: usize,
}

const KMEANS_RESTARTS: u64 = 10;
const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// Lloyd's k-means with seeded k-means++ starts; the restart with the lowest
/// inertia wins. Clusters are returned by descending population, ties by
/// cluster index.
pub fn kmeans_modes(p: &ParticleSet, m: usize) -> Result<Vec<Mode>> {
    let k = p.len();
    if m == 0 || k < m {
        return Err(Error::TooFewParticles {
            particles: k,
            clusters: m,
        });
    }
    let d = p.dim();
    let pts: Vec<&[f64]> = p
        .states
        .as_slice()
        .expect("contiguous states")
        .chunks_exact(d)
        .collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = seeds::stream(p.seed, seeds::TAG_KMEANS, p.epoch, restart);
        let mut centers: Vec<Vec<f64>> = vec![pts[rng.random_range(0..k)].to_vec()];
        let mut nearest: Vec<f64> = pts.iter().map(|x| dist2(x, &centers[0])).collect();
        while centers.len() < m {
            let total: f64 = nearest.iter().sum();
            let pick = if total > 0.0 {
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut idx = k - 1;
                for (i, dd) in nearest.iter().enumerate() {
                    acc += dd;
                    if acc > u {
                        idx = i;
                        break;
                    }
                }
                idx
            } else {
                rng.random_range(0..k)
            };
            centers.push(pts[pick].to_vec());
            for (n, x) in nearest.iter_mut().zip(&pts) {
                *n = n.min(dist2(x, centers.last().expect("just pushed")));
            }
        }

        let mut assign = vec![0usize; k];
        let scale = centers
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(1.0);
        for _ in 0..KMEANS_MAX_ITER {
            for (a, x) in assign.iter_mut().zip(&pts) {
                *a = (0..m)
                    .min_by(|&i, &j| dist2(x, &centers[i]).total_cmp(&dist2(x, &centers[j])))
                    .expect("m >= 1");
            }
            let mut sums = vec![vec![0.0; d]; m];
            let mut counts = vec![0usize; m];
            for (a, x) in assign.iter().zip(&pts) {
                counts[*a] += 1;
                for (s, v) in sums[*a].iter_mut().zip(x.iter()) {
                    *s += v;
                }
            }
            let mut shift: f64 = 0.0;
            for c in 0..m {
                if counts[c] == 0 {
                    continue;
                }
                let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                shift = shift.max(dist2(&new, &centers[c]).sqrt());
                centers[c] = new;
            }
            if shift <= KMEANS_TOL * scale {
                break;
            }
        }
        let inertia: f64 = assign
            .iter()
            .zip(&pts)
            .map(|(a, x)| dist2(x, &centers[*a]))
            .sum();
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, centers, assign));
        }
    }
    let (_, centers, assign) = best.expect("at least one restart");
    let mut modes: Vec<(usize, Mode)> = centers
        .into_iter()
        .enumerate()
        .map(|(c, mean)| {
            let population = assign.iter().filter(|a| **a == c).count();
            (c, Mode { mean, population })
        })
        .collect();
    modes.sort_by(|a, b| b.1.population.cmp(&a.1.population).then(a.0.cmp(&b.0)));
    Ok(modes.into_iter().map(|(_, m)| m).collect())
}
