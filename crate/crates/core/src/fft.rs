//! Zero-padded 3D FFT convolution on row-major buffers.

use rustfft::{num_complex::Complex, FftDirection, FftPlanner};

/// Smallest `2^a 3^b 5^c >= n`.
pub(crate) fn fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut p = p35;
            while p < n {
                p *= 2;
            }
            best = best.min(p);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// In-place 3D transform of a row-major `dims` buffer (last axis contiguous).
pub(crate) fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let [d0, d1, d2] = dims;
    debug_assert_eq!(data.len(), d0 * d1 * d2);

    let f2 = planner.plan_fft(d2, direction);
    f2.process(data);

    let f1 = planner.plan_fft(d1, direction);
    let mut line = vec![Complex::new(0.0, 0.0); d1.max(d0)];
    for a in 0..d0 {
        for c in 0..d2 {
            for b in 0..d1 {
                line[b] = data[(a * d1 + b) * d2 + c];
            }
            f1.process(&mut line[..d1]);
            for b in 0..d1 {
                data[(a * d1 + b) * d2 + c] = line[b];
            }
        }
    }

    let f0 = planner.plan_fft(d0, direction);
    for b in 0..d1 {
        for c in 0..d2 {
            for a in 0..d0 {
                line[a] = data[(a * d1 + b) * d2 + c];
            }
            f0.process(&mut line[..d0]);
            for a in 0..d0 {
                data[(a * d1 + b) * d2 + c] = line[a];
            }
        }
    }
}

/// Full linear convolution of two real row-major volumes; returns the buffer
/// and its padded dims. Entry `m` of the result holds `sum_j a[j] b[m - j]`.
pub(crate) fn convolve_full(
    a: &[f64],
    a_dims: [usize; 3],
    b: &[f64],
    b_dims: [usize; 3],
) -> (Vec<f64>, [usize; 3]) {
    let dims = [
        fast_len(a_dims[0] + b_dims[0] - 1),
        fast_len(a_dims[1] + b_dims[1] - 1),
        fast_len(a_dims[2] + b_dims[2] - 1),
    ];
    let total = dims[0] * dims[1] * dims[2];
    let embed = |src: &[f64], sd: [usize; 3]| {
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for i in 0..sd[0] {
            for j in 0..sd[1] {
                let s = (i * sd[1] + j) * sd[2];
                let d = (i * dims[1] + j) * dims[2];
                for k in 0..sd[2] {
                    buf[d + k].re = src[s + k];
                }
            }
        }
        buf
    };
    let mut fa = embed(a, a_dims);
    let mut fb = embed(b, b_dims);
    fft3(&mut fa, dims, FftDirection::Forward);
    fft3(&mut fb, dims, FftDirection::Forward);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    fft3(&mut fa, dims, FftDirection::Inverse);
    let scale = 1.0 / total as f64;
    (fa.into_iter().map(|c| c.re * scale).collect(), dims)
}
