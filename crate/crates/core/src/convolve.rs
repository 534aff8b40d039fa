//! Linear 2-D convolution by Fourier-domain multiplication.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Smallest 5-smooth integer `>= n`.
fn fft_friendly_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Convolve `input` with the separable kernel `k(m1) k(m2)`, where `kernel`
/// holds `k(-h), ..., k(h)` (odd length). The output has the shape of the
/// input ("same" mode, zero boundary).
pub(crate) fn convolve_separable_same(input: &DMatrix<Complex64>, kernel: &[f64]) -> DMatrix<Complex64> {
    assert!(kernel.len() % 2 == 1, "kernel must have odd length");
    let (rows, cols) = input.shape();
    let h = kernel.len() / 2;
    let p = fft_friendly_len(rows.max(cols) + h);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);

    // Kernel spectrum: k(m) stored at index m mod p.
    let mut kspec = vec![Complex64::new(0.0, 0.0); p];
    for (idx, &v) in kernel.iter().enumerate() {
        let m = idx as isize - h as isize;
        kspec[m.rem_euclid(p as isize) as usize] = Complex64::new(v, 0.0);
    }
    fwd.process(&mut kspec);

    // Row-major padded buffer, p x p.
    let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
    for i in 0..rows {
        for j in 0..cols {
            buf[i * p + j] = input[(i, j)];
        }
    }

    transform_rows(&mut buf, p, &fwd);
    transpose_square(&mut buf, p);
    transform_rows(&mut buf, p, &fwd);

    buf.par_chunks_mut(p).enumerate().for_each(|(q1, row)| {
        for (q2, v) in row.iter_mut().enumerate() {
            *v *= kspec[q1] * kspec[q2];
        }
    });

    transform_rows(&mut buf, p, &inv);
    transpose_square(&mut buf, p);
    transform_rows(&mut buf, p, &inv);

    let scale = 1.0 / (p * p) as f64;
    DMatrix::from_fn(rows, cols, |i, j| buf[i * p + j] * scale)
}

fn transform_rows(buf: &mut [Complex64], p: usize, plan: &Arc<dyn Fft<f64>>) {
    buf.par_chunks_mut(p).for_each(|row| plan.process(row));
}

fn transpose_square(buf: &mut [Complex64], p: usize) {
    for i in 0..p {
        for j in (i + 1)..p {
            buf.swap(i * p + j, j * p + i);
        }
    }
}
