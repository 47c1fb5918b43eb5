//! Plane resampling with pixel-center (align-corners = false) sampling.
//!
//! Source coordinate of destination pixel `x` is `(x + 0.5) * src / dst - 0.5`.
//! Bilinear clamps that coordinate into the source; bicubic (Keys, a = -0.5)
//! clamps the tap indices instead, which keeps linear ramps exact away from
//! the borders.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMethod {
    Bilinear,
    Bicubic,
}

const CUBIC_A: f64 = -0.5;

pub(crate) fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

#[inline]
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

/// Per-axis sampling taps: `(index, weight)` lists for each destination position.
fn taps(src_len: usize, dst_len: usize, method: ResizeMethod) -> Vec<Vec<(usize, f64)>> {
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|d| {
            let s = source_coord(d, src_len, dst_len);
            match method {
                ResizeMethod::Bilinear => {
                    let s = s.clamp(0.0, last as f64);
                    let i0 = s.floor() as usize;
                    let i1 = (i0 + 1).min(src_len - 1);
                    let f = s - i0 as f64;
                    vec![(i0, 1.0 - f), (i1, f)]
                }
                ResizeMethod::Bicubic => {
                    let base = s.floor();
                    let f = s - base;
                    (-1..=2)
                        .map(|k| {
                            let idx = (base as isize + k).clamp(0, last) as usize;
                            (idx, cubic_weight(f - k as f64))
                        })
                        .collect()
                }
            }
        })
        .collect()
}

/// Resample a row-major `src_w x src_h` plane to `dst_w x dst_h`. Output is not
/// clamped; bicubic may overshoot the input range.
pub fn resize_plane(
    src: &[f32],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
    method: ResizeMethod,
) -> Vec<f32> {
    assert_eq!(src.len(), src_w * src_h, "plane size does not match dims");
    assert!(src_w > 0 && src_h > 0 && dst_w > 0 && dst_h > 0);

    let xt = taps(src_w, dst_w, method);
    let yt = taps(src_h, dst_h, method);

    // Horizontal pass into an intermediate dst_w x src_h buffer.
    let mut tmp = vec![0f64; dst_w * src_h];
    for y in 0..src_h {
        let row = &src[y * src_w..(y + 1) * src_w];
        for (x, tx) in xt.iter().enumerate() {
            tmp[y * dst_w + x] = tx.iter().map(|&(i, w)| row[i] as f64 * w).sum();
        }
    }

    let mut out = vec![0f32; dst_w * dst_h];
    for (y, ty) in yt.iter().enumerate() {
        for x in 0..dst_w {
            let v: f64 = ty.iter().map(|&(i, w)| tmp[i * dst_w + x] * w).sum();
            out[y * dst_w + x] = v as f32;
        }
    }
    out
}
