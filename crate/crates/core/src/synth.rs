//! Deterministic synthetic surveillance clips with ground truth.
//!
//! Actors are dark Gaussian blobs over a faint static texture. Normal actors
//! travel along evenly spaced lanes and wrap around the frame edges; anomalies
//! are blobs confined to a region, moving faster or in a different direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, MaskSet};
use crate::ingest::{FrameSequence, GrayFrame};

const BACKGROUND_LEVEL: f32 = 0.6;
const BLOB_CONTRAST: f32 = 0.45;
/// Peak-to-peak texture amplitude. Small enough that background cubes stay
/// below the default static threshold.
const TEXTURE_AMPLITUDE: f32 = 0.004;
const MIN_BLOB_SIZE: f32 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ActorSpec {
    /// Blob diameter in pixels.
    pub size: f32,
    /// Pixels per frame.
    pub speed: f32,
    /// Degrees, 0 = +x, 90 = +y (down).
    pub direction: f32,
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySpec {
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub region: Region,
    pub size: f32,
    pub speed: f32,
    pub direction: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    width: usize,
    height: usize,
    n_frames: usize,
    seed: u64,
    normal_actors: Vec<ActorSpec>,
    anomalies: Vec<AnomalySpec>,
}

impl SynthSpec {
    pub fn new(
        width: usize,
        height: usize,
        n_frames: usize,
        seed: u64,
        normal_actors: Vec<ActorSpec>,
        anomalies: Vec<AnomalySpec>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if width == 0 || height == 0 || n_frames == 0 {
            return bad(format!("empty clip {width}x{height}x{n_frames}"));
        }
        for (i, a) in normal_actors.iter().enumerate() {
            if !(a.size >= MIN_BLOB_SIZE && a.speed.is_finite() && a.direction.is_finite()) {
                return bad(format!("actor {i}: size must be >= {MIN_BLOB_SIZE} and motion finite"));
            }
        }
        for (i, a) in anomalies.iter().enumerate() {
            if a.start_frame >= a.end_frame || a.end_frame > n_frames {
                return bad(format!(
                    "anomaly {i}: frames [{}, {}) not inside [0, {n_frames})",
                    a.start_frame, a.end_frame
                ));
            }
            let r = a.region;
            if r.width == 0 || r.height == 0 || r.x + r.width > width || r.y + r.height > height {
                return bad(format!("anomaly {i}: region {r:?} outside {width}x{height}"));
            }
            if !(a.size >= MIN_BLOB_SIZE && a.speed.is_finite() && a.direction.is_finite()) {
                return bad(format!("anomaly {i}: size must be >= {MIN_BLOB_SIZE} and motion finite"));
            }
        }
        Ok(Self {
            width,
            height,
            n_frames,
            seed,
            normal_actors,
            anomalies,
        })
    }

    /// Six horizontal walkers, alternating left and right, 1.0 to 1.5 px/frame.
    pub fn default_actors() -> Vec<ActorSpec> {
        [(12.0, 1.0, 0.0), (14.0, 1.2, 180.0), (12.0, 1.5, 0.0), (16.0, 1.0, 180.0), (12.0, 1.3, 0.0), (14.0, 1.1, 180.0)]
            .into_iter()
            .map(|(size, speed, direction)| ActorSpec { size, speed, direction })
            .collect()
    }

    /// 160x120, 600 frames, seed 42: a fast runner in frames 150..200 and a
    /// blob crossing the lanes vertically in frames 400..450.
    pub fn benchmark() -> Self {
        let anomalies = vec![
            AnomalySpec {
                start_frame: 150,
                end_frame: 200,
                region: Region { x: 0, y: 0, width: 160, height: 120 },
                size: 14.0,
                speed: 6.0,
                direction: 0.0,
            },
            AnomalySpec {
                start_frame: 400,
                end_frame: 450,
                region: Region { x: 40, y: 20, width: 80, height: 80 },
                size: 14.0,
                speed: 1.5,
                direction: 90.0,
            },
        ];
        Self::new(160, 120, 600, 42, Self::default_actors(), anomalies).unwrap()
    }

    /// Normal-only clip with the benchmark's actors, another seed and 300 frames.
    pub fn benchmark_training() -> Self {
        Self::new(160, 120, 300, 1042, Self::default_actors(), Vec::new()).unwrap()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal_actors(&self) -> &[ActorSpec] {
        &self.normal_actors
    }

    pub fn anomalies(&self) -> &[AnomalySpec] {
        &self.anomalies
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_frames(self, n_frames: usize) -> Result<Self> {
        let anomalies = self
            .anomalies
            .into_iter()
            .filter(|a| a.start_frame < n_frames)
            .map(|a| AnomalySpec { end_frame: a.end_frame.min(n_frames), ..a })
            .collect();
        Self::new(self.width, self.height, n_frames, self.seed, self.normal_actors, anomalies)
    }
}

fn unit(direction_deg: f32) -> (f32, f32) {
    let r = direction_deg.to_radians();
    (r.cos(), r.sin())
}

/// Wraps `v` into `[lo, lo + len)`.
fn wrap(v: f32, lo: f32, len: f32) -> f32 {
    lo + (v - lo).rem_euclid(len)
}

struct Blob {
    cx: f32,
    cy: f32,
    size: f32,
}

impl Blob {
    fn sigma(&self) -> f32 {
        self.size / 4.0
    }

    /// Pixels the blob can touch noticeably (3 sigma box), clipped.
    fn bbox(&self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let r = 3.0 * self.sigma();
        let clip = |v: f32, n: usize| v.max(0.0).min(n as f32) as usize;
        (
            clip((self.cx - r).floor(), w),
            clip((self.cx + r).ceil() + 1.0, w),
            clip((self.cy - r).floor(), h),
            clip((self.cy + r).ceil() + 1.0, h),
        )
    }

    fn paint(&self, px: &mut [f32], w: usize, h: usize) {
        let s2 = 2.0 * self.sigma() * self.sigma();
        let (x0, x1, y0, y1) = self.bbox(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d2 = (x as f32 - self.cx).powi(2) + (y as f32 - self.cy).powi(2);
                px[y * w + x] -= BLOB_CONTRAST * (-d2 / s2).exp();
            }
        }
    }

    fn mark(&self, mask: &mut [bool], w: usize, h: usize) {
        let r2 = (self.size / 2.0).powi(2);
        let (x0, x1, y0, y1) = self.bbox(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                if (x as f32 - self.cx).powi(2) + (y as f32 - self.cy).powi(2) <= r2 {
                    mask[y * w + x] = true;
                }
            }
        }
    }
}

struct Walker {
    x0: f32,
    y0: f32,
    dx: f32,
    dy: f32,
    size: f32,
}

/// Renders the clip and its ground truth. Deterministic in `spec`.
pub fn generate(spec: &SynthSpec) -> (FrameSequence, GroundTruth) {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture: Vec<f32> = (0..w * h)
        .map(|_| BACKGROUND_LEVEL + TEXTURE_AMPLITUDE * (rng.random::<f32>() - 0.5))
        .collect();

    let n_actors = spec.normal_actors.len();
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    let walkers: Vec<Walker> = spec
        .normal_actors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let (ux, uy) = unit(a.direction);
            let (nx, ny) = (-uy, ux);
            let span = nx.abs() * w as f32 + ny.abs() * h as f32;
            let lane = ((i as f32 + 0.5) / n_actors as f32 - 0.5) * span;
            let along = (rng.random::<f32>() - 0.5) * (ux.abs() * w as f32 + uy.abs() * h as f32);
            Walker {
                x0: cx + nx * lane + ux * along,
                y0: cy + ny * lane + uy * along,
                dx: ux * a.speed,
                dy: uy * a.speed,
                size: a.size,
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut labels = Vec::with_capacity(spec.n_frames);
    let mut masks = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        let mut px = texture.clone();
        for wk in &walkers {
            let m = wk.size;
            let blob = Blob {
                cx: wrap(wk.x0 + wk.dx * t as f32, -m, w as f32 + 2.0 * m),
                cy: wrap(wk.y0 + wk.dy * t as f32, -m, h as f32 + 2.0 * m),
                size: m,
            };
            blob.paint(&mut px, w, h);
        }
        let mut mask = vec![false; w * h];
        for a in spec.anomalies.iter().filter(|a| (a.start_frame..a.end_frame).contains(&t)) {
            let r = a.region;
            let (ux, uy) = unit(a.direction);
            let k = (t - a.start_frame) as f32 * a.speed;
            let blob = Blob {
                cx: wrap(r.x as f32 + r.width as f32 / 2.0 + ux * k, r.x as f32, r.width as f32),
                cy: wrap(r.y as f32 + r.height as f32 / 2.0 + uy * k, r.y as f32, r.height as f32),
                size: a.size,
            };
            blob.paint(&mut px, w, h);
            blob.mark(&mut mask, w, h);
        }
        px.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        labels.push(mask.iter().any(|&m| m));
        masks.push(mask);
        frames.push(GrayFrame::new(w, h, px, t).expect("clamped pixels"));
    }

    let seq = FrameSequence::new(frames).expect("uniform frame size");
    let masks = MaskSet::new(w, h, masks).expect("mask sizes match");
    let gt = GroundTruth::new(labels, Some(masks)).expect("labels follow masks");
    (seq, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::{extract_cubes, DEFAULT_TAU_STATIC};

    fn small(anomalies: Vec<AnomalySpec>) -> SynthSpec {
        SynthSpec::new(160, 120, 40, 7, SynthSpec::default_actors(), anomalies).unwrap()
    }

    #[test]
    fn no_anomalies_means_no_positive_labels() {
        let (seq, gt) = generate(&small(Vec::new()));
        assert_eq!(seq.len(), 40);
        assert!(gt.frame_labels.iter().all(|&l| !l));
        assert!(gt.masks.as_ref().unwrap().frames.iter().all(|m| m.iter().all(|&p| !p)));
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = generate(&small(Vec::new())).0;
        let b = generate(&small(Vec::new())).0;
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            let ba: Vec<u32> = fa.pixels.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = fb.pixels.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ba, bb);
        }
        let c = generate(&small(Vec::new()).with_seed(8)).0;
        assert_ne!(a.frames[0].pixels, c.frames[0].pixels);
    }

    #[test]
    fn benchmark_labels_are_exactly_the_bursts() {
        let spec = SynthSpec::benchmark();
        let (seq, gt) = generate(&spec);
        assert_eq!(seq.dims(), (160, 120));
        assert_eq!(seq.len(), 600);
        for (t, &l) in gt.frame_labels.iter().enumerate() {
            assert_eq!(l, (150..200).contains(&t) || (400..450).contains(&t), "frame {t}");
        }
    }

    #[test]
    fn mask_sits_on_the_dark_blob() {
        let region = Region { x: 50, y: 30, width: 40, height: 40 };
        let spec = SynthSpec::new(
            160,
            120,
            10,
            3,
            Vec::new(),
            vec![AnomalySpec { start_frame: 2, end_frame: 5, region, size: 10.0, speed: 4.0, direction: 0.0 }],
        )
        .unwrap();
        let (seq, gt) = generate(&spec);
        let masks = gt.masks.unwrap();
        let frame = &seq.frames[2];
        let mask = &masks.frames[2];
        let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
        for (p, &m) in frame.pixels.iter().zip(mask) {
            if m {
                inside += p;
                n_in += 1;
            } else {
                outside += p;
                n_out += 1;
            }
        }
        assert!(n_in > 0);
        assert!(inside / (n_in as f32) < outside / (n_out as f32) - 0.1);
        // Blob starts at the region centre.
        assert!(mask[50 * 160 + 70]);
        assert!(!gt.frame_labels[1] && gt.frame_labels[4] && !gt.frame_labels[5]);
    }

    #[test]
    fn background_is_static_and_actors_are_not() {
        let spec = SynthSpec::new(160, 120, 10, 1, Vec::new(), Vec::new()).unwrap();
        let cubes = extract_cubes(&generate(&spec).0, 1, DEFAULT_TAU_STATIC).unwrap();
        assert!(cubes.iter().all(|c| !c.active));
        let cubes = extract_cubes(&generate(&small(Vec::new())).0, 1, DEFAULT_TAU_STATIC).unwrap();
        assert!(cubes.iter().any(|c| c.active));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let region = Region { x: 150, y: 0, width: 20, height: 10 };
        let a = AnomalySpec { start_frame: 0, end_frame: 5, region, size: 8.0, speed: 1.0, direction: 0.0 };
        assert!(SynthSpec::new(160, 120, 10, 0, Vec::new(), vec![a.clone()]).is_err());
        let inside = Region { x: 0, ..region };
        let late = AnomalySpec { region: inside, end_frame: 11, ..a.clone() };
        assert!(SynthSpec::new(160, 120, 10, 0, Vec::new(), vec![late]).is_err());
        let tiny = ActorSpec { size: 1.0, speed: 1.0, direction: 0.0 };
        assert!(SynthSpec::new(160, 120, 10, 0, vec![tiny], Vec::new()).is_err());
        assert!(SynthSpec::new(0, 120, 10, 0, Vec::new(), Vec::new()).is_err());
    }
}
