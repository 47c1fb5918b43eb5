//! Gaussian smoothing with half-sample symmetric reflection at the borders.

/// Normalized taps for offsets `-r..=r`, `r = ceil(3 sigma)`. `sigma = 0`
/// gives the identity kernel `[1]`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Maps any index onto `0..n` by mirroring about the edges (`x[-1] = x[0]`),
/// repeating as often as needed for kernels wider than the signal.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Convolves `len` samples read through `get` with `kernel`.
pub(crate) fn convolve<F: Fn(usize) -> f64>(len: usize, kernel: &[f64], get: F) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let padded: Vec<f64> = (-r..len as i64 + r).map(|i| get(reflect(i, len))).collect();
    padded
        .windows(kernel.len())
        .map(|w| w.iter().zip(kernel).map(|(a, b)| a * b).sum())
        .collect()
}

/// Separable 2-D smoothing of a row-major `width x height` plane.
pub(crate) fn smooth_plane(values: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let mut rows = vec![0f64; values.len()];
    for y in 0..height {
        let line = &values[y * width..(y + 1) * width];
        let out = convolve(width, &kernel, |x| line[x] as f64);
        rows[y * width..(y + 1) * width].copy_from_slice(&out);
    }
    let mut result = vec![0f32; values.len()];
    for x in 0..width {
        let out = convolve(height, &kernel, |y| rows[y * width + x]);
        for (y, v) in out.into_iter().enumerate() {
            result[y * width + x] = v as f32;
        }
    }
    result
}
