//! Augmented cube features.
//!
//! Layout of the 785-dim vector:
//!
//! | range        | block                              |
//! |--------------|------------------------------------|
//! | `[0, 500)`   | unit-norm 3D gradient magnitudes   |
//! | `[500, 520)` | spatial pyramid location one-hots  |
//! | `[520, 529)` | mean direction histogram + sum     |
//! | `[529, 785)` | appearance (conv5 or handcrafted)  |

mod appearance;
mod direction;

use std::ops::Range;

pub use appearance::{
    handcrafted_appearance, resize_activation_maps, write_nncf, AppearanceGrid, AppearanceProvider,
    FileAppearance, HandcraftedAppearance, NncfHeader, ZeroAppearance, APPEARANCE_DIM,
    CONV_MAP_SIZE, NNCF_MAGIC, NNCF_VERSION,
};
pub use direction::{
    mean_direction_features, mean_direction_from_magnitudes, orientation_bin, DIRECTION_BINS,
    DIRECTION_DIM,
};

use crate::cubes::{l2_normalize, SpatioTemporalCube, CUBE_VOXELS, GRID_COLS, GRID_ROWS};
use crate::error::{Error, Result};

pub const GRADIENT_DIM: usize = CUBE_VOXELS;
pub const LOCATION_DIM: usize = 20;
pub const FEATURE_DIM: usize = GRADIENT_DIM + LOCATION_DIM + DIRECTION_DIM + APPEARANCE_DIM;

pub const GRADIENT_BLOCK: Range<usize> = 0..GRADIENT_DIM;
pub const LOCATION_BLOCK: Range<usize> = GRADIENT_BLOCK.end..GRADIENT_BLOCK.end + LOCATION_DIM;
pub const DIRECTION_BLOCK: Range<usize> = LOCATION_BLOCK.end..LOCATION_BLOCK.end + DIRECTION_DIM;
pub const APPEARANCE_BLOCK: Range<usize> = DIRECTION_BLOCK.end..FEATURE_DIM;

/// What to do when the appearance provider has no data for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingAppearancePolicy {
    Fail,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCube {
    pub grid_row: usize,
    pub grid_col: usize,
    pub end_frame: usize,
    pub features: Vec<f32>,
}

/// Two-level spatial pyramid one-hot: 2x2 bins then 4x4 bins.
pub fn location_encoding(grid_row: usize, grid_col: usize) -> Result<[f32; LOCATION_DIM]> {
    if grid_row >= GRID_ROWS || grid_col >= GRID_COLS {
        return Err(Error::InvalidArgument(format!(
            "grid cell ({grid_row}, {grid_col}) outside {GRID_ROWS}x{GRID_COLS}"
        )));
    }
    let mut out = [0f32; LOCATION_DIM];
    let coarse = (grid_row * 2 / GRID_ROWS) * 2 + grid_col * 2 / GRID_COLS;
    let fine = (grid_row * 4 / GRID_ROWS) * 4 + grid_col * 4 / GRID_COLS;
    out[coarse] = 1.0;
    out[4 + fine] = 1.0;
    Ok(out)
}

/// Concatenates the four blocks for an active cube. With `normalize_blocks`
/// the direction and appearance blocks are each scaled to unit L2 norm
/// (zero blocks stay zero).
pub fn augment_cube(
    cube: &SpatioTemporalCube,
    appearance: &AppearanceGrid,
    normalize_blocks: bool,
) -> Result<AugmentedCube> {
    if !cube.active {
        return Err(Error::InvalidArgument(format!(
            "cube ({}, {}) at frame {} is static",
            cube.grid_row, cube.grid_col, cube.end_frame
        )));
    }
    let mut features = Vec::with_capacity(FEATURE_DIM);
    features.extend_from_slice(&cube.features);
    features.extend_from_slice(&location_encoding(cube.grid_row, cube.grid_col)?);

    let mut direction = direction::mean_direction_features(&cube.voxels);
    let mut app = appearance.cell(cube.grid_row, cube.grid_col).to_vec();
    if normalize_blocks {
        l2_normalize(&mut direction);
        l2_normalize(&mut app);
    }
    features.extend_from_slice(&direction);
    features.extend_from_slice(&app);
    debug_assert_eq!(features.len(), FEATURE_DIM);

    Ok(AugmentedCube {
        grid_row: cube.grid_row,
        grid_col: cube.grid_col,
        end_frame: cube.end_frame,
        features,
    })
}

/// Fetches the appearance grid for a frame, applying the missing-data policy.
pub fn appearance_for(
    provider: &dyn AppearanceProvider,
    frame_index: usize,
    policy: MissingAppearancePolicy,
) -> Result<AppearanceGrid> {
    match provider.provide(frame_index) {
        Err(Error::MissingAppearance(_)) if policy == MissingAppearancePolicy::Zeros => {
            Ok(AppearanceGrid::zeros())
        }
        other => other,
    }
}

/// [`augment_cube`] pulling the appearance of the cube's last frame from `provider`.
pub fn augment_cube_with(
    cube: &SpatioTemporalCube,
    provider: &dyn AppearanceProvider,
    policy: MissingAppearancePolicy,
    normalize_blocks: bool,
) -> Result<AugmentedCube> {
    let grid = appearance_for(provider, cube.end_frame, policy)?;
    augment_cube(cube, &grid, normalize_blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::{build_cube, FRAME_HEIGHT, FRAME_WIDTH};
    use crate::ingest::{FrameSequence, GrayFrame};

    #[test]
    fn block_layout() {
        assert_eq!(FEATURE_DIM, 785);
        assert_eq!(LOCATION_BLOCK, 500..520);
        assert_eq!(DIRECTION_BLOCK, 520..529);
        assert_eq!(APPEARANCE_BLOCK, 529..785);
    }

    fn ones(v: &[f32]) -> Vec<usize> {
        v.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, _)| i).collect()
    }

    #[test]
    fn location_corners_and_quadrant_boundary() {
        assert_eq!(ones(&location_encoding(0, 0).unwrap()), vec![0, 4]);
        assert_eq!(ones(&location_encoding(11, 15).unwrap()), vec![3, 19]);
        let a = location_encoding(5, 7).unwrap();
        let b = location_encoding(6, 8).unwrap();
        // rows 0..6 / cols 0..8 are the top-left quadrant.
        assert_eq!(ones(&a[..4]), vec![0]);
        assert_eq!(ones(&b[..4]), vec![3]);
        assert!(location_encoding(12, 0).is_err());
        assert!(location_encoding(0, 16).is_err());
    }

    #[test]
    fn location_always_two_ones() {
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                let v = location_encoding(r, c).unwrap();
                assert_eq!(ones(&v).len(), 2);
                assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
                assert_eq!(v[..4].iter().sum::<f32>(), 1.0);
            }
        }
    }

    fn moving_bar_sequence() -> FrameSequence {
        let frames = (0..5)
            .map(|t| {
                let px = (0..FRAME_HEIGHT * FRAME_WIDTH)
                    .map(|i| {
                        let x = i % FRAME_WIDTH;
                        if x % 10 == 2 + t { 0.1 } else { 0.6 }
                    })
                    .collect();
                GrayFrame::new(FRAME_WIDTH, FRAME_HEIGHT, px, t).unwrap()
            })
            .collect();
        FrameSequence::new(frames).unwrap()
    }

    #[test]
    fn augmented_blocks_are_the_sub_operations() {
        let seq = moving_bar_sequence();
        let cube = build_cube(&seq, 3, 9, 4, 0.1);
        assert!(cube.active);
        let grid = handcrafted_appearance(&seq.frames[4]);
        let aug = augment_cube(&cube, &grid, false).unwrap();
        assert_eq!(aug.features.len(), FEATURE_DIM);
        assert_eq!(&aug.features[GRADIENT_BLOCK], &cube.features[..]);
        assert_eq!(&aug.features[LOCATION_BLOCK], &location_encoding(3, 9).unwrap()[..]);
        assert_eq!(&aug.features[DIRECTION_BLOCK], &mean_direction_features(&cube.voxels)[..]);
        assert_eq!(&aug.features[APPEARANCE_BLOCK], grid.cell(3, 9));

        let normed = augment_cube(&cube, &grid, true).unwrap();
        let norm = |r: Range<usize>| normed.features[r].iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm(DIRECTION_BLOCK) - 1.0).abs() < 1e-6);
        assert!((norm(APPEARANCE_BLOCK) - 1.0).abs() < 1e-6);
        assert_eq!(&normed.features[..DIRECTION_BLOCK.start], &aug.features[..DIRECTION_BLOCK.start]);
    }

    #[test]
    fn zero_provider_gives_zero_appearance() {
        let seq = moving_bar_sequence();
        let cube = build_cube(&seq, 0, 0, 4, 0.1);
        let aug = augment_cube_with(&cube, &ZeroAppearance, MissingAppearancePolicy::Fail, true).unwrap();
        assert!(aug.features[APPEARANCE_BLOCK].iter().all(|&v| v == 0.0));
        assert_eq!(&aug.features[LOCATION_BLOCK], &location_encoding(0, 0).unwrap()[..]);
    }

    #[test]
    fn missing_appearance_policy() {
        let seq = moving_bar_sequence();
        let cube = build_cube(&seq, 0, 0, 4, 0.1);
        let short = FrameSequence::new(seq.frames[..3].to_vec()).unwrap();
        let provider = HandcraftedAppearance::new(&short).unwrap();
        assert!(matches!(
            augment_cube_with(&cube, &provider, MissingAppearancePolicy::Fail, true),
            Err(Error::MissingAppearance(4))
        ));
        let aug = augment_cube_with(&cube, &provider, MissingAppearancePolicy::Zeros, true).unwrap();
        assert!(aug.features[APPEARANCE_BLOCK].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_cube_is_rejected() {
        let frames = (0..5).map(|i| GrayFrame::filled(FRAME_WIDTH, FRAME_HEIGHT, 0.5, i)).collect();
        let seq = FrameSequence::new(frames).unwrap();
        let cube = build_cube(&seq, 0, 0, 4, 0.1);
        assert!(!cube.active);
        assert!(augment_cube(&cube, &AppearanceGrid::zeros(), true).is_err());
    }
}
