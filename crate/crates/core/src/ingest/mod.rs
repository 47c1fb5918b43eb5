//! Frame loading, conversion to gray and resizing.

pub(crate) mod resize;

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use resize::{resize_plane, ResizeMethod};

use crate::error::{Error, Result};

/// Magic bytes of the raw-gray video container.
pub const RAW_GRAY_MAGIC: &[u8; 4] = b"NNCV";
const RAW_GRAY_HEADER: usize = 16;

/// A single-channel frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub index: usize,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, index: usize) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "frame {index}: {} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "frame {index}: pixel {p} = {} outside [0,1]",
                pixels[p]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32, index: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            index,
        }
    }

    pub(crate) fn from_bytes(width: usize, height: usize, bytes: &[u8], index: usize) -> Self {
        Self {
            width,
            height,
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
            index,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Frames of one video, all with identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<GrayFrame>,
    pub source_fps: Option<f64>,
}

impl FrameSequence {
    /// Builds a sequence, renumbering frames from 0.
    pub fn new(mut frames: Vec<GrayFrame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            let (w, h) = (first.width, first.height);
            if let Some(bad) = frames.iter().find(|f| f.width != w || f.height != h) {
                return Err(Error::FrameDims {
                    path: PathBuf::from(format!("<frame {}>", bad.index)),
                    expected_w: w,
                    expected_h: h,
                    found_w: bad.width,
                    found_h: bad.height,
                });
            }
        }
        for (i, f) in frames.iter_mut().enumerate() {
            f.index = i;
        }
        Ok(Self {
            frames,
            source_fps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the frames, `(0, 0)` when empty.
    pub fn dims(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0))
    }

    /// Resizes every frame; a no-op clone when the dimensions already match.
    pub fn resized(&self, width: usize, height: usize, method: ResizeMethod) -> Result<Self> {
        if self.dims() == (width, height) {
            return Ok(self.clone());
        }
        let frames = self
            .frames
            .par_iter()
            .map(|f| resize_frame(f, width, height, method))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frames,
            source_fps: self.source_fps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    PgmDir,
    PngDir,
    RawGray,
}

impl InputFormat {
    /// Picks a format from the path: a file is raw-gray, a directory is
    /// PGM or PNG depending on which extension it holds.
    pub fn detect(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        if path.is_file() {
            return Ok(InputFormat::RawGray);
        }
        let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        for entry in entries.flatten() {
            match extension(&entry.path()).as_deref() {
                Some("pgm") => return Ok(InputFormat::PgmDir),
                Some("png") => return Ok(InputFormat::PngDir),
                _ => {}
            }
        }
        Err(Error::format(path, "directory contains no .pgm or .png frames"))
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Loads a video as gray frames in `[0,1]`.
pub fn load_sequence(path: &Path, format: InputFormat) -> Result<FrameSequence> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    match format {
        InputFormat::RawGray => load_raw_gray(path),
        InputFormat::PgmDir => load_image_dir(path, "pgm"),
        InputFormat::PngDir => load_image_dir(path, "png"),
    }
}

fn load_image_dir(dir: &Path, ext: &str) -> Result<FrameSequence> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && extension(p).as_deref() == Some(ext))
        .collect();
    if files.is_empty() {
        return Err(Error::format(dir, format!("no .{ext} files")));
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let frames = files
        .par_iter()
        .enumerate()
        .map(|(i, p)| load_image(p, i))
        .collect::<Result<Vec<_>>>()?;

    let (w, h) = (frames[0].width, frames[0].height);
    for (f, p) in frames.iter().zip(&files) {
        if f.width != w || f.height != h {
            return Err(Error::FrameDims {
                path: p.clone(),
                expected_w: w,
                expected_h: h,
                found_w: f.width,
                found_h: f.height,
            });
        }
    }
    FrameSequence::new(frames)
}

/// Decodes one image file; color is converted with luma weights
/// 0.299 R + 0.587 G + 0.114 B.
pub fn load_image(path: &Path, index: usize) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                let y = 0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect()
    } else {
        img.to_luma8().as_raw().iter().map(|&b| b as f32 / 255.0).collect()
    };
    Ok(GrayFrame {
        width: w,
        height: h,
        pixels,
        index,
    })
}

/// Header of a raw-gray (`NNCV`) container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawGrayHeader {
    pub width: u32,
    pub height: u32,
    pub n_frames: u32,
}

impl RawGrayHeader {
    pub fn encode(&self) -> [u8; RAW_GRAY_HEADER] {
        let mut out = [0u8; RAW_GRAY_HEADER];
        out[..4].copy_from_slice(RAW_GRAY_MAGIC);
        out[4..8].copy_from_slice(&self.width.to_le_bytes());
        out[8..12].copy_from_slice(&self.height.to_le_bytes());
        out[12..16].copy_from_slice(&self.n_frames.to_le_bytes());
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RAW_GRAY_HEADER {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: RAW_GRAY_HEADER as u64,
                actual: bytes.len() as u64,
            });
        }
        if &bytes[..4] != RAW_GRAY_MAGIC {
            return Err(Error::format(path, "bad magic, expected NNCV"));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        Ok(Self {
            width: word(4),
            height: word(8),
            n_frames: word(12),
        })
    }

    fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

fn load_raw_gray(path: &Path) -> Result<FrameSequence> {
    let (header, body) = read_raw_gray(path)?;
    let n = header.frame_bytes();
    let frames = body
        .chunks_exact(n.max(1))
        .take(header.n_frames as usize)
        .enumerate()
        .map(|(i, c)| GrayFrame::from_bytes(header.width as usize, header.height as usize, c, i))
        .collect();
    FrameSequence::new(frames)
}

/// Reads and validates a raw-gray file, returning its header and frame bytes.
pub fn read_raw_gray(path: &Path) -> Result<(RawGrayHeader, Vec<u8>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let header = RawGrayHeader::decode(path, &bytes)?;
    if header.width == 0 || header.height == 0 {
        return Err(Error::format(path, "zero frame dimension"));
    }
    let expected = RAW_GRAY_HEADER as u64 + header.frame_bytes() as u64 * header.n_frames as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    bytes.truncate(expected as usize);
    bytes.drain(..RAW_GRAY_HEADER);
    Ok((header, bytes))
}

/// Writes frames as 8-bit raw-gray; intensities are rounded to the nearest
/// multiple of 1/255.
pub fn save_raw_gray(seq: &FrameSequence, path: &Path) -> Result<()> {
    let (w, h) = seq.dims();
    let header = RawGrayHeader {
        width: w as u32,
        height: h as u32,
        n_frames: seq.len() as u32,
    };
    let frames = seq
        .frames
        .iter()
        .map(|f| f.pixels.iter().map(|&v| quantize(v)).collect::<Vec<u8>>());
    write_raw_gray(path, header, frames)
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn write_raw_gray(
    path: &Path,
    header: RawGrayHeader,
    frames: impl Iterator<Item = Vec<u8>>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(&header.encode()).map_err(io)?;
    for frame in frames {
        out.write_all(&frame).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Resizes a frame, clamping the result to `[0,1]`.
pub fn resize_frame(
    frame: &GrayFrame,
    width: usize,
    height: usize,
    method: ResizeMethod,
) -> Result<GrayFrame> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {width}x{height} has a zero dimension"
        )));
    }
    let mut pixels = resize_plane(
        &frame.pixels,
        frame.width,
        frame.height,
        width,
        height,
        method,
    );
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    Ok(GrayFrame {
        width,
        height,
        pixels,
        index: frame.index,
    })
}
