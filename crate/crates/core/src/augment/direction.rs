//! Mean motion direction of a cube.
//!
//! Each of the five temporal patches gets a gradient-magnitude weighted center
//! of mass, once for the whole patch and once per 2x2 sub-bin. Consecutive
//! centers of the same region give 4 + 16 = 20 displacement vectors, which are
//! hard-binned by orientation (8 bins of 45 degrees starting at +x, y down)
//! with magnitude weighting. The ninth entry is the summed magnitude.

use crate::cubes::{gradient_features, voxel_index, CUBE_VOXELS, DEPTH, PATCH};

pub const DIRECTION_BINS: usize = 8;
pub const DIRECTION_DIM: usize = DIRECTION_BINS + 1;

const HALF: usize = PATCH / 2;
/// Whole patch followed by the four sub-bins in raster order.
const REGIONS: [(usize, usize, usize, usize); 5] = [
    (0, PATCH, 0, PATCH),
    (0, HALF, 0, HALF),
    (0, HALF, HALF, PATCH),
    (HALF, PATCH, 0, HALF),
    (HALF, PATCH, HALF, PATCH),
];

/// Angles this close to a bin edge (in units of bins) snap onto it, so that
/// axis-aligned motion is not split by rounding noise.
const EDGE_SNAP: f64 = 1e-6;

pub fn mean_direction_features(voxels: &[f32]) -> [f32; DIRECTION_DIM] {
    mean_direction_from_magnitudes(&gradient_features(voxels))
}

/// Same as [`mean_direction_features`] for precomputed per-voxel gradient magnitudes.
pub fn mean_direction_from_magnitudes(magnitudes: &[f32]) -> [f32; DIRECTION_DIM] {
    assert_eq!(magnitudes.len(), CUBE_VOXELS);
    let mut hist = [0f64; DIRECTION_DIM];
    for &(y0, y1, x0, x1) in &REGIONS {
        let centers: Vec<Option<(f64, f64)>> = (0..DEPTH)
            .map(|t| center_of_mass(magnitudes, t, y0, y1, x0, x1))
            .collect();
        for pair in centers.windows(2) {
            if let (Some((ax, ay)), Some((bx, by))) = (pair[0], pair[1]) {
                let (dx, dy) = (bx - ax, by - ay);
                let mag = dx.hypot(dy);
                if mag > 0.0 {
                    hist[orientation_bin(dx, dy)] += mag;
                    hist[DIRECTION_BINS] += mag;
                }
            }
        }
    }
    hist.map(|v| v as f32)
}

fn center_of_mass(m: &[f32], t: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Option<(f64, f64)> {
    let (mut total, mut sx, mut sy) = (0f64, 0f64, 0f64);
    for y in y0..y1 {
        for x in x0..x1 {
            let w = m[voxel_index(t, y, x)] as f64;
            total += w;
            sx += w * x as f64;
            sy += w * y as f64;
        }
    }
    (total > 0.0).then(|| (sx / total, sy / total))
}

/// Bin `b` covers `[45b, 45(b+1))` degrees.
pub fn orientation_bin(dx: f64, dy: f64) -> usize {
    let mut q = dy.atan2(dx).to_degrees() / 45.0;
    if q < 0.0 {
        q += DIRECTION_BINS as f64;
    }
    let nearest = q.round();
    if (q - nearest).abs() < EDGE_SNAP {
        q = nearest;
    }
    (q.floor() as usize) % DIRECTION_BINS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::PATCH_PIXELS;

    #[test]
    fn bins_follow_image_convention() {
        assert_eq!(orientation_bin(1.0, 0.0), 0);
        assert_eq!(orientation_bin(1.0, -1e-17), 0);
        assert_eq!(orientation_bin(1.0, 1.0), 1);
        assert_eq!(orientation_bin(0.0, 1.0), 2);
        assert_eq!(orientation_bin(-1.0, 0.0), 4);
        assert_eq!(orientation_bin(0.0, -1.0), 6);
        assert_eq!(orientation_bin(1.0, -0.1), 7);
    }

    #[test]
    fn static_cube_has_empty_histogram() {
        assert_eq!(mean_direction_features(&[0.4; CUBE_VOXELS]), [0.0; DIRECTION_DIM]);
    }

    #[test]
    fn stationary_texture_has_no_displacement() {
        // Same spatial pattern in every frame: centers never move.
        let mut v = vec![0f32; CUBE_VOXELS];
        for t in 0..DEPTH {
            for i in 0..PATCH_PIXELS {
                v[t * PATCH_PIXELS + i] = ((i * 37) % 11) as f32 / 11.0;
            }
        }
        let h = mean_direction_features(&v);
        assert!(h.iter().all(|&x| x.abs() < 1e-6), "{h:?}");
    }
}
