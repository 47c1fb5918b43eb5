//! Per-cell appearance descriptors: providers, the NNCF container and the
//! 13x13 -> 12x16 activation map resize.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::cubes::{FRAME_HEIGHT, FRAME_WIDTH, GRID_COLS, GRID_ROWS, PATCH};
use crate::error::{Error, Result};
use crate::ingest::{resize_plane, FrameSequence, GrayFrame, ResizeMethod};

pub const APPEARANCE_DIM: usize = 256;
/// Spatial size of the raw conv5 maps.
pub const CONV_MAP_SIZE: usize = 13;

pub const NNCF_MAGIC: &[u8; 4] = b"NNCF";
pub const NNCF_VERSION: u32 = 1;
const NNCF_HEADER: u64 = 24;

/// A 12x16 grid of 256-dim appearance vectors, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceGrid {
    data: Vec<f32>,
}

impl AppearanceGrid {
    pub const LEN: usize = GRID_ROWS * GRID_COLS * APPEARANCE_DIM;

    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; Self::LEN],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::LEN {
            return Err(Error::DimensionMismatch {
                expected: Self::LEN,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "appearance value {i} is not finite"
            )));
        }
        Ok(Self { data })
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * GRID_COLS + col) * APPEARANCE_DIM;
        &self.data[start..start + APPEARANCE_DIM]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Source of per-frame appearance grids. Implementations are read-only and
/// may be shared across scoring threads.
pub trait AppearanceProvider: Send + Sync {
    fn provide(&self, frame_index: usize) -> Result<AppearanceGrid>;
}

/// Motion-only runs: every cell gets a zero appearance block.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroAppearance;

impl AppearanceProvider for ZeroAppearance {
    fn provide(&self, _frame_index: usize) -> Result<AppearanceGrid> {
        Ok(AppearanceGrid::zeros())
    }
}

/// Gradient-energy descriptors computed from the working frames themselves.
pub struct HandcraftedAppearance<'a> {
    seq: &'a FrameSequence,
}

impl<'a> HandcraftedAppearance<'a> {
    pub fn new(seq: &'a FrameSequence) -> Result<Self> {
        let dims = seq.dims();
        if dims != (FRAME_WIDTH, FRAME_HEIGHT) {
            return Err(Error::InvalidArgument(format!(
                "handcrafted appearance needs {FRAME_WIDTH}x{FRAME_HEIGHT} frames, got {}x{}",
                dims.0, dims.1
            )));
        }
        Ok(Self { seq })
    }
}

impl AppearanceProvider for HandcraftedAppearance<'_> {
    fn provide(&self, frame_index: usize) -> Result<AppearanceGrid> {
        let frame = self
            .seq
            .frames
            .get(frame_index)
            .ok_or(Error::MissingAppearance(frame_index))?;
        Ok(handcrafted_appearance(frame))
    }
}

const SCALES: [usize; 4] = [1, 2, 4, 8];
const ORIENTATIONS: usize = 16;
const QUADRANTS: usize = 4;

/// Oriented gradient energies per cell: 4 scales x 4 cell quadrants x 16
/// signed orientations = 256 values. Gradients at scale `s` use pixel
/// differences `s` apart with edge clamping.
pub fn handcrafted_appearance(frame: &GrayFrame) -> AppearanceGrid {
    assert_eq!((frame.width, frame.height), (FRAME_WIDTH, FRAME_HEIGHT));
    let (w, h) = (FRAME_WIDTH as isize, FRAME_HEIGHT as isize);
    let px = |x: isize, y: isize| frame.pixels[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut data = vec![0f32; AppearanceGrid::LEN];
    let half = PATCH / 2;

    for (si, &s) in SCALES.iter().enumerate() {
        let s = s as isize;
        let denom = (2 * s) as f32;
        for y in 0..FRAME_HEIGHT {
            for x in 0..FRAME_WIDTH {
                let (xi, yi) = (x as isize, y as isize);
                let gx = (px(xi + s, yi) - px(xi - s, yi)) / denom;
                let gy = (px(xi, yi + s) - px(xi, yi - s)) / denom;
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut angle = gy.atan2(gx).to_degrees();
                if angle < 0.0 {
                    angle += 360.0;
                }
                let bin = ((angle / (360.0 / ORIENTATIONS as f32)) as usize) % ORIENTATIONS;
                let (row, col) = (y / PATCH, x / PATCH);
                let quadrant = ((y % PATCH) / half) * 2 + (x % PATCH) / half;
                let offset = (row * GRID_COLS + col) * APPEARANCE_DIM
                    + (si * QUADRANTS + quadrant) * ORIENTATIONS
                    + bin;
                data[offset] += mag;
            }
        }
    }
    AppearanceGrid { data }
}

/// Channel-wise bicubic resize of `rows x cols x 256` maps onto the 12x16 cube grid.
pub fn resize_activation_maps(maps: &[f32], rows: usize, cols: usize) -> Result<AppearanceGrid> {
    if maps.len() != rows * cols * APPEARANCE_DIM {
        return Err(Error::DimensionMismatch {
            expected: rows * cols * APPEARANCE_DIM,
            found: maps.len(),
        });
    }
    if (rows, cols) == (GRID_ROWS, GRID_COLS) {
        return AppearanceGrid::from_vec(maps.to_vec());
    }
    let mut data = vec![0f32; AppearanceGrid::LEN];
    let mut plane = vec![0f32; rows * cols];
    for ch in 0..APPEARANCE_DIM {
        for (i, p) in plane.iter_mut().enumerate() {
            *p = maps[i * APPEARANCE_DIM + ch];
        }
        let out = resize_plane(&plane, cols, rows, GRID_COLS, GRID_ROWS, ResizeMethod::Bicubic);
        for (i, v) in out.into_iter().enumerate() {
            data[i * APPEARANCE_DIM + ch] = v;
        }
    }
    AppearanceGrid::from_vec(data)
}

/// Header of an NNCF appearance file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NncfHeader {
    pub version: u32,
    pub n_frames: u32,
    pub rows: u32,
    pub cols: u32,
    pub channels: u32,
}

impl NncfHeader {
    fn frame_values(&self) -> usize {
        self.rows as usize * self.cols as usize * self.channels as usize
    }

    fn encode(&self) -> [u8; NNCF_HEADER as usize] {
        let mut out = [0u8; NNCF_HEADER as usize];
        out[..4].copy_from_slice(NNCF_MAGIC);
        for (i, v) in [self.version, self.n_frames, self.rows, self.cols, self.channels]
            .iter()
            .enumerate()
        {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Writes raw maps (`rows x cols x 256` per frame, channel-minor) as NNCF.
pub fn write_nncf(path: &Path, rows: usize, cols: usize, frames: &[Vec<f32>]) -> Result<()> {
    let header = NncfHeader {
        version: NNCF_VERSION,
        n_frames: frames.len() as u32,
        rows: rows as u32,
        cols: cols as u32,
        channels: APPEARANCE_DIM as u32,
    };
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    out.write_all(&header.encode()).map_err(io)?;
    for (i, f) in frames.iter().enumerate() {
        if f.len() != header.frame_values() {
            return Err(Error::InvalidArgument(format!(
                "frame {i} holds {} values, expected {}",
                f.len(),
                header.frame_values()
            )));
        }
        for v in f {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Appearance read from an NNCF file, one frame at a time.
#[derive(Debug, Clone)]
pub struct FileAppearance {
    path: PathBuf,
    header: NncfHeader,
}

impl FileAppearance {
    pub fn open(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let io = |e| Error::io(path, e);
        let mut file = File::open(path).map_err(io)?;
        let actual = file.metadata().map_err(io)?.len();
        let mut raw = [0u8; NNCF_HEADER as usize];
        if actual < NNCF_HEADER {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: NNCF_HEADER,
                actual,
            });
        }
        file.read_exact(&mut raw).map_err(io)?;
        if &raw[..4] != NNCF_MAGIC {
            return Err(Error::format(path, "bad magic, expected NNCF"));
        }
        let word = |i: usize| u32::from_le_bytes(raw[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let header = NncfHeader {
            version: word(0),
            n_frames: word(1),
            rows: word(2),
            cols: word(3),
            channels: word(4),
        };
        if header.version != NNCF_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported NNCF version {}, expected {NNCF_VERSION}", header.version),
            ));
        }
        if header.channels as usize != APPEARANCE_DIM {
            return Err(Error::format(
                path,
                format!("{} channels, expected {APPEARANCE_DIM}", header.channels),
            ));
        }
        let dims = (header.rows as usize, header.cols as usize);
        if dims != (CONV_MAP_SIZE, CONV_MAP_SIZE) && dims != (GRID_ROWS, GRID_COLS) {
            return Err(Error::format(
                path,
                format!(
                    "maps are {}x{}, expected {CONV_MAP_SIZE}x{CONV_MAP_SIZE} or {GRID_ROWS}x{GRID_COLS}",
                    dims.0, dims.1
                ),
            ));
        }
        let expected = NNCF_HEADER + 4 * header.frame_values() as u64 * header.n_frames as u64;
        if actual < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> NncfHeader {
        self.header
    }

    pub fn n_frames(&self) -> usize {
        self.header.n_frames as usize
    }

    /// The stored maps of one frame, before any resizing.
    pub fn raw_frame(&self, frame_index: usize) -> Result<Vec<f32>> {
        if frame_index >= self.n_frames() {
            return Err(Error::MissingAppearance(frame_index));
        }
        let values = self.header.frame_values();
        let io = |e| Error::io(&self.path, e);
        let mut file = File::open(&self.path).map_err(io)?;
        file.seek(SeekFrom::Start(NNCF_HEADER + (4 * values * frame_index) as u64))
            .map_err(io)?;
        let mut bytes = vec![0u8; 4 * values];
        file.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl AppearanceProvider for FileAppearance {
    fn provide(&self, frame_index: usize) -> Result<AppearanceGrid> {
        let raw = self.raw_frame(frame_index)?;
        resize_activation_maps(&raw, self.header.rows as usize, self.header.cols as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::resize::cubic_weight;

    fn dyadic_frame(offset: f32) -> GrayFrame {
        let px = (0..FRAME_WIDTH * FRAME_HEIGHT)
            .map(|i| ((i * 7919 % 97) as f32) / 256.0 + offset)
            .collect();
        GrayFrame::new(FRAME_WIDTH, FRAME_HEIGHT, px, 0).unwrap()
    }

    #[test]
    fn constant_frame_gives_zero_descriptor() {
        let g = handcrafted_appearance(&GrayFrame::filled(FRAME_WIDTH, FRAME_HEIGHT, 0.3, 0));
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brightness_offset_does_not_change_descriptor() {
        let a = handcrafted_appearance(&dyadic_frame(0.0));
        let b = handcrafted_appearance(&dyadic_frame(0.5));
        assert_eq!(a, b);
        assert!(a.as_slice().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn descriptor_checksum_is_stable() {
        let g = handcrafted_appearance(&dyadic_frame(0.0));
        let sum: f64 = g.as_slice().iter().map(|&v| v as f64).sum();
        let weighted: f64 = g
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| v as f64 * ((i % 1013) as f64))
            .sum();
        // Golden values recorded from the first verified run.
        assert!((sum - GOLDEN_SUM).abs() < 1e-6 * GOLDEN_SUM, "sum {sum}");
        assert!((weighted - GOLDEN_WEIGHTED).abs() < 1e-6 * GOLDEN_WEIGHTED, "weighted {weighted}");
    }
    const GOLDEN_SUM: f64 = 3932.3262516869;
    const GOLDEN_WEIGHTED: f64 = 1972298.845815199;

    fn ramp_maps() -> Vec<f32> {
        let mut maps = vec![0f32; CONV_MAP_SIZE * CONV_MAP_SIZE * APPEARANCE_DIM];
        for r in 0..CONV_MAP_SIZE {
            for c in 0..CONV_MAP_SIZE {
                for ch in 0..APPEARANCE_DIM {
                    maps[(r * CONV_MAP_SIZE + c) * APPEARANCE_DIM + ch] =
                        ch as f32 * 0.01 + 0.5 * r as f32 + 0.25 * c as f32;
                }
            }
        }
        maps
    }

    /// Direct 4x4 bicubic evaluation at a source coordinate, edge-clamped taps.
    fn bicubic_at(maps: &[f32], ch: usize, sy: f64, sx: f64) -> f64 {
        let (by, bx) = (sy.floor(), sx.floor());
        let mut acc = 0.0;
        for ky in -1..=2isize {
            for kx in -1..=2isize {
                let r = (by as isize + ky).clamp(0, 12) as usize;
                let c = (bx as isize + kx).clamp(0, 12) as usize;
                let w = cubic_weight(sy - by - ky as f64) * cubic_weight(sx - bx - kx as f64);
                acc += w * maps[(r * CONV_MAP_SIZE + c) * APPEARANCE_DIM + ch] as f64;
            }
        }
        acc
    }

    #[test]
    fn ramp_resize_matches_direct_bicubic() {
        let maps = ramp_maps();
        let grid = resize_activation_maps(&maps, 13, 13).unwrap();
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                let sy = (r as f64 + 0.5) * 13.0 / 12.0 - 0.5;
                let sx = (c as f64 + 0.5) * 13.0 / 16.0 - 0.5;
                for ch in [0, 17, 255] {
                    let got = grid.cell(r, c)[ch] as f64;
                    assert!((got - bicubic_at(&maps, ch, sy, sx)).abs() < 1e-5);
                    // Away from the clamped border the cubic reproduces the ramp.
                    if (1.0..11.0).contains(&sy) && (1.0..11.0).contains(&sx) {
                        let ramp = ch as f64 * 0.01 + 0.5 * sy + 0.25 * sx;
                        assert!((got - ramp).abs() < 1e-4, "{got} vs {ramp}");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_maps_stay_constant_and_channels_are_independent() {
        let maps = vec![1.5f32; 13 * 13 * APPEARANCE_DIM];
        let grid = resize_activation_maps(&maps, 13, 13).unwrap();
        assert!(grid.as_slice().iter().all(|&v| (v - 1.5).abs() < 1e-5));

        let ramp = ramp_maps();
        let mut swapped = ramp.clone();
        for px in swapped.chunks_mut(APPEARANCE_DIM) {
            px.swap(3, 200);
        }
        let a = resize_activation_maps(&ramp, 13, 13).unwrap();
        let b = resize_activation_maps(&swapped, 13, 13).unwrap();
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                assert_eq!(a.cell(r, c)[3], b.cell(r, c)[200]);
                assert_eq!(a.cell(r, c)[200], b.cell(r, c)[3]);
            }
        }
        assert!(resize_activation_maps(&maps[1..], 13, 13).is_err());
    }

    #[test]
    fn nncf_round_trip_and_random_access() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.nncf");
        let frames: Vec<Vec<f32>> = (0..3)
            .map(|f| (0..13 * 13 * APPEARANCE_DIM).map(|i| (f * 1000 + i) as f32 * 0.125).collect())
            .collect();
        write_nncf(&path, 13, 13, &frames).unwrap();
        let provider = FileAppearance::open(&path).unwrap();
        assert_eq!(provider.n_frames(), 3);
        assert_eq!(provider.raw_frame(2).unwrap(), frames[2]);
        assert_eq!(provider.raw_frame(0).unwrap(), frames[0]);
        let grid = provider.provide(2).unwrap();
        assert_eq!(grid, resize_activation_maps(&frames[2], 13, 13).unwrap());
        assert!(matches!(provider.provide(3), Err(Error::MissingAppearance(3))));
    }

    #[test]
    fn nncf_accepts_pre_resized_grids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.nncf");
        let frame: Vec<f32> = (0..AppearanceGrid::LEN).map(|i| i as f32).collect();
        write_nncf(&path, GRID_ROWS, GRID_COLS, std::slice::from_ref(&frame)).unwrap();
        let grid = FileAppearance::open(&path).unwrap().provide(0).unwrap();
        assert_eq!(grid.as_slice(), &frame[..]);
    }

    #[test]
    fn nncf_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nncf");
        let frames = vec![vec![0f32; 13 * 13 * APPEARANCE_DIM]; 2];
        write_nncf(&path, 13, 13, &frames).unwrap();
        let full = std::fs::read(&path).unwrap();

        std::fs::write(&path, &full[..full.len() - 10]).unwrap();
        let err = FileAppearance::open(&path).unwrap_err();
        let expected = full.len() as u64;
        let actual = expected - 10;
        assert!(
            matches!(err, Error::Truncated { expected: e, actual: a, .. } if e == expected && a == actual),
            "{err}"
        );
        assert!(err.to_string().contains(&expected.to_string()));

        let mut bad = full.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(FileAppearance::open(&path).unwrap_err().to_string().contains("magic"));

        let mut v2 = full;
        v2[4] = 2;
        std::fs::write(&path, &v2).unwrap();
        assert!(FileAppearance::open(&path).unwrap_err().to_string().contains("version"));
    }
}
