//! Spatio-temporal cubes on the fixed 12x16 grid of a 120x160 frame.
//!
//! Voxels are stored in `(t, y, x)` raster order: `t * 100 + y * 10 + x`.

use crate::error::{Error, Result};
use crate::ingest::FrameSequence;

pub const FRAME_WIDTH: usize = 160;
pub const FRAME_HEIGHT: usize = 120;
pub const PATCH: usize = 10;
pub const DEPTH: usize = 5;
pub const GRID_ROWS: usize = FRAME_HEIGHT / PATCH;
pub const GRID_COLS: usize = FRAME_WIDTH / PATCH;
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLS;
pub const CUBE_VOXELS: usize = PATCH * PATCH * DEPTH;
pub const PATCH_PIXELS: usize = PATCH * PATCH;

/// Default threshold on the raw gradient norm below which a cube is static.
pub const DEFAULT_TAU_STATIC: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalCube {
    pub grid_row: usize,
    pub grid_col: usize,
    /// Index of the last of the five stacked frames.
    pub end_frame: usize,
    pub voxels: Vec<f32>,
    /// Unit-norm gradient features when active, zeros otherwise.
    pub features: Vec<f32>,
    /// L2 norm of the raw gradient features.
    pub raw_norm: f32,
    pub active: bool,
}

#[inline]
pub fn voxel_index(t: usize, y: usize, x: usize) -> usize {
    t * PATCH_PIXELS + y * PATCH + x
}

/// Copies the 10x10x5 block for one grid cell ending at `end_frame`.
pub fn cube_voxels(seq: &FrameSequence, grid_row: usize, grid_col: usize, end_frame: usize) -> Vec<f32> {
    let mut voxels = Vec::with_capacity(CUBE_VOXELS);
    let first = end_frame + 1 - DEPTH;
    for frame in &seq.frames[first..=end_frame] {
        for y in 0..PATCH {
            let row = (grid_row * PATCH + y) * FRAME_WIDTH + grid_col * PATCH;
            voxels.extend_from_slice(&frame.pixels[row..row + PATCH]);
        }
    }
    voxels
}

fn check_sequence(seq: &FrameSequence) -> Result<()> {
    let (w, h) = seq.dims();
    if (w, h) != (FRAME_WIDTH, FRAME_HEIGHT) {
        return Err(Error::InvalidArgument(format!(
            "cube extraction needs {FRAME_WIDTH}x{FRAME_HEIGHT} frames, got {w}x{h}"
        )));
    }
    if seq.len() < DEPTH {
        return Err(Error::InvalidArgument(format!(
            "cube extraction needs at least {DEPTH} frames, got {}",
            seq.len()
        )));
    }
    Ok(())
}

/// Builds the cube for one cell, computing its features and static flag.
pub fn build_cube(
    seq: &FrameSequence,
    grid_row: usize,
    grid_col: usize,
    end_frame: usize,
    tau_static: f32,
) -> SpatioTemporalCube {
    let voxels = cube_voxels(seq, grid_row, grid_col, end_frame);
    let mut features = gradient_features(&voxels);
    let raw_norm = l2_norm(&features);
    let active = !is_static(&features, tau_static) && raw_norm > 0.0;
    if active {
        l2_normalize(&mut features);
    } else {
        features.iter_mut().for_each(|v| *v = 0.0);
    }
    SpatioTemporalCube {
        grid_row,
        grid_col,
        end_frame,
        voxels,
        features,
        raw_norm,
        active,
    }
}

/// All 192 cubes ending at frame `end_frame`, in grid raster order.
pub fn cubes_at(seq: &FrameSequence, end_frame: usize, tau_static: f32) -> Result<Vec<SpatioTemporalCube>> {
    check_sequence(seq)?;
    if end_frame + 1 < DEPTH || end_frame >= seq.len() {
        return Err(Error::InvalidArgument(format!(
            "end frame {end_frame} outside [{}, {})",
            DEPTH - 1,
            seq.len()
        )));
    }
    Ok((0..GRID_ROWS)
        .flat_map(|r| (0..GRID_COLS).map(move |c| (r, c)))
        .map(|(r, c)| build_cube(seq, r, c, end_frame, tau_static))
        .collect())
}

/// End-frame indices visited with the given temporal stride: 4, 4+s, 4+2s, ...
pub fn end_frames(n_frames: usize, stride: usize) -> impl Iterator<Item = usize> {
    (DEPTH - 1..n_frames).step_by(stride.max(1))
}

/// Extracts every cube of a 120x160 sequence at the given temporal stride.
/// Static cubes are kept but marked inactive.
pub fn extract_cubes(seq: &FrameSequence, temporal_stride: usize, tau_static: f32) -> Result<Vec<SpatioTemporalCube>> {
    check_sequence(seq)?;
    if temporal_stride == 0 {
        return Err(Error::InvalidArgument("temporal stride must be >= 1".into()));
    }
    let mut out = Vec::new();
    for t in end_frames(seq.len(), temporal_stride) {
        out.extend(cubes_at(seq, t, tau_static)?);
    }
    Ok(out)
}

/// Finite difference along one axis: central inside, one-sided at the ends.
#[inline]
fn axis_diff(v: &[f32], idx: usize, pos: usize, len: usize, step: usize) -> f32 {
    if len < 2 {
        0.0
    } else if pos == 0 {
        v[idx + step] - v[idx]
    } else if pos == len - 1 {
        v[idx] - v[idx - step]
    } else {
        (v[idx + step] - v[idx - step]) / 2.0
    }
}

/// Per-voxel 3D gradient magnitude of a 10x10x5 block (unnormalized).
pub fn gradient_features(voxels: &[f32]) -> Vec<f32> {
    assert_eq!(voxels.len(), CUBE_VOXELS, "cube must hold {CUBE_VOXELS} voxels");
    let mut out = Vec::with_capacity(CUBE_VOXELS);
    for t in 0..DEPTH {
        for y in 0..PATCH {
            for x in 0..PATCH {
                let i = voxel_index(t, y, x);
                let gx = axis_diff(voxels, i, x, PATCH, 1);
                let gy = axis_diff(voxels, i, y, PATCH, PATCH);
                let gt = axis_diff(voxels, i, t, DEPTH, PATCH_PIXELS);
                out.push((gx * gx + gy * gy + gt * gt).sqrt());
            }
        }
    }
    out
}

pub fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt() as f32
}

/// Scales `v` to unit L2 norm in place. A zero vector is left unchanged and
/// `false` is returned.
pub fn l2_normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    true
}

/// A cube is static when its raw gradient energy is below `tau_static`.
pub fn is_static(raw_features: &[f32], tau_static: f32) -> bool {
    l2_norm(raw_features) < tau_static
}
