//! Frame- and pixel-level ROC analysis and ground-truth IO.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::smooth_plane;
use crate::ingest::{load_sequence, read_raw_gray, write_raw_gray, InputFormat, RawGrayHeader};

pub const DEFAULT_SIGMA_SPATIAL: f64 = 20.0;
pub const DEFAULT_MAX_THRESHOLDS: usize = 1000;

/// Binary anomaly masks at full frame resolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<bool>>,
}

impl MaskSet {
    pub fn new(width: usize, height: usize, frames: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(i) = frames.iter().position(|m| m.len() != width * height) {
            return Err(Error::GroundTruth {
                frame: i,
                message: format!("mask has {} pixels, expected {width}x{height}", frames[i].len()),
            });
        }
        Ok(Self { width, height, frames })
    }

    pub fn anomalous_pixels(&self, frame: usize) -> usize {
        self.frames[frame].iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub frame_labels: Vec<bool>,
    pub masks: Option<MaskSet>,
}

impl GroundTruth {
    /// Checks that a frame is labelled anomalous exactly when its mask is non-empty.
    pub fn new(frame_labels: Vec<bool>, masks: Option<MaskSet>) -> Result<Self> {
        if let Some(m) = &masks {
            if m.frames.len() != frame_labels.len() {
                return Err(Error::GroundTruth {
                    frame: m.frames.len().min(frame_labels.len()),
                    message: format!("{} labels but {} masks", frame_labels.len(), m.frames.len()),
                });
            }
            for (i, &label) in frame_labels.iter().enumerate() {
                let any = m.frames[i].iter().any(|&p| p);
                if any != label {
                    return Err(Error::GroundTruth {
                        frame: i,
                        message: format!("label {} but mask is {}", label as u8, if any { "non-empty" } else { "empty" }),
                    });
                }
            }
        }
        Ok(Self { frame_labels, masks })
    }

    /// Ground truth whose labels are derived from the masks.
    pub fn from_masks(masks: MaskSet) -> Self {
        let labels = masks.frames.iter().map(|m| m.iter().any(|&p| p)).collect();
        Self { frame_labels: labels, masks: Some(masks) }
    }

    pub fn len(&self) -> usize {
        self.frame_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_labels.is_empty()
    }

    pub fn check_frames(&self, n_frames: usize) -> Result<()> {
        if self.len() != n_frames {
            return Err(Error::GroundTruth {
                frame: self.len().min(n_frames),
                message: format!("{} ground-truth frames for a {n_frames}-frame video", self.len()),
            });
        }
        Ok(())
    }

    /// Writes `frame_index,label` rows.
    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["frame_index", "label"]).map_err(|e| csv_error(path, e))?;
        for (i, &l) in self.frame_labels.iter().enumerate() {
            w.write_record([i.to_string(), (l as u8).to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the masks as a raw-gray video, 255 marking anomalous pixels.
    pub fn write_masks(&self, path: &Path) -> Result<()> {
        let m = self
            .masks
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("ground truth has no pixel masks".into()))?;
        let header = RawGrayHeader {
            width: m.width as u32,
            height: m.height as u32,
            n_frames: m.frames.len() as u32,
        };
        let frames = m.frames.iter().map(|f| f.iter().map(|&p| if p { 255 } else { 0 }).collect());
        write_raw_gray(path, header, frames)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn parse_label(path: &Path, line: usize, field: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::format(path, format!("line {}: label {other:?} is not 0 or 1", line + 1))),
    }
}

/// Reads frame labels: `frame_index,label` rows (optional header), or a
/// single line of comma-separated labels.
pub fn load_labels(path: &Path) -> Result<Vec<bool>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    if rows.first().is_some_and(|r| r.get(0).is_some_and(|f| f.parse::<u64>().is_err())) {
        rows.remove(0);
    }
    if rows.len() == 1 && rows[0].len() != 2 {
        return rows[0].iter().map(|f| parse_label(path, 0, f)).collect();
    }
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != 2 {
            return Err(Error::format(path, format!("line {}: expected frame_index,label", i + 1)));
        }
        let idx: usize = r[0]
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad frame index {:?}", i + 1, &r[0])))?;
        if idx != i {
            return Err(Error::format(path, format!("line {}: frame index {idx}, expected {i}", i + 1)));
        }
        labels.push(parse_label(path, i, &r[1])?);
    }
    Ok(labels)
}

/// Reads masks from a raw-gray file or a directory of images; any nonzero
/// pixel is anomalous.
pub fn load_masks(path: &Path) -> Result<MaskSet> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    if path.is_file() {
        let (h, body) = read_raw_gray(path)?;
        let n = (h.width * h.height) as usize;
        let frames = body.chunks_exact(n).map(|c| c.iter().map(|&b| b != 0).collect()).collect();
        return MaskSet::new(h.width as usize, h.height as usize, frames);
    }
    let seq = load_sequence(path, InputFormat::detect(path)?)?;
    let (w, h) = seq.dims();
    let frames = seq.frames.iter().map(|f| f.pixels.iter().map(|&p| p > 0.0).collect()).collect();
    MaskSet::new(w, h, frames)
}

/// Loads labels and optional masks. Without a label file the labels are
/// derived from the masks.
pub fn load_ground_truth(labels: Option<&Path>, masks: Option<&Path>) -> Result<GroundTruth> {
    let masks = masks.map(load_masks).transpose()?;
    match (labels, masks) {
        (Some(l), m) => GroundTruth::new(load_labels(l)?, m),
        (None, Some(m)) => Ok(GroundTruth::from_masks(m)),
        (None, None) => Err(Error::InvalidArgument("ground truth needs labels or masks".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// Descending; the first entry is `+inf`, where nothing is flagged.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

/// ROC over thresholds drawn from `scores` itself; a sample is flagged when
/// its score is `>=` the threshold.
fn roc_curve(scores: &[f64], labels: &[bool], thresholds: Option<&[f64]>) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {i} is NaN")));
    }
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut out = RocResult {
        thresholds: vec![f64::INFINITY],
        tpr: vec![0.0],
        fpr: vec![0.0],
        auc: 0.0,
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let push = |theta: f64, tp: usize, fp: usize, out: &mut RocResult| {
        out.thresholds.push(theta);
        out.tpr.push(tp as f64 / p as f64);
        out.fpr.push(fp as f64 / n as f64);
    };
    let mut i = 0;
    match thresholds {
        None => {
            while i < order.len() {
                let theta = scores[order[i]];
                while i < order.len() && scores[order[i]] == theta {
                    if labels[order[i]] { tp += 1 } else { fp += 1 }
                    i += 1;
                }
                push(theta, tp, fp, &mut out);
            }
        }
        Some(ts) => {
            for &theta in ts {
                while i < order.len() && scores[order[i]] >= theta {
                    if labels[order[i]] { tp += 1 } else { fp += 1 }
                    i += 1;
                }
                push(theta, tp, fp, &mut out);
            }
            if tp < p || fp < n {
                push(scores[order[order.len() - 1]], p, n, &mut out);
            }
        }
    }
    out.auc = out
        .fpr
        .windows(2)
        .zip(out.tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
        .sum();
    Ok(out)
}

/// Frame-level ROC: a frame is positive when it holds any anomalous pixel.
pub fn frame_level_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    roc_curve(scores, labels, None)
}

/// A per-pixel score map at frame resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// 2-D Gaussian smoothing of every map, reflecting at the borders.
pub fn smooth_pixel_maps(maps: &[PixelMap], sigma_s: f64) -> Result<Vec<PixelMap>> {
    if !(sigma_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_s must be >= 0, got {sigma_s}")));
    }
    Ok(maps
        .par_iter()
        .map(|m| PixelMap {
            width: m.width,
            height: m.height,
            values: smooth_plane(&m.values, m.width, m.height, sigma_s),
        })
        .collect())
}

/// Minimum number of flagged mask pixels for a detection: strictly more than
/// 40% of `mask_pixels`.
pub fn required_coverage(mask_pixels: usize) -> usize {
    2 * mask_pixels / 5 + 1
}

/// The highest threshold at which the frame counts as flagged. For a positive
/// frame that is the `required_coverage`-th largest map value inside the mask
/// (or `-inf` when the mask is too small to ever be covered); for a negative
/// frame it is the map maximum.
fn frame_key(map: &PixelMap, mask: &[bool], positive: bool) -> f64 {
    if !positive {
        return map.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    }
    let mut inside: Vec<f32> = map.values.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    let q = required_coverage(inside.len());
    if q > inside.len() {
        return f64::NEG_INFINITY;
    }
    let (_, kth, _) = inside.select_nth_unstable_by(q - 1, |a, b| b.total_cmp(a));
    *kth as f64
}

/// Pixel-level ROC. At threshold θ a positive frame is a true positive when
/// more than 40% of its mask pixels have map value `>= θ`; a negative frame is
/// a false positive when any pixel reaches θ. Thresholds run over the
/// distinct map values, thinned to at most `max_thresholds` quantiles when
/// given.
pub fn pixel_level_auc(maps: &[PixelMap], gt: &GroundTruth, max_thresholds: Option<usize>) -> Result<RocResult> {
    let masks = gt
        .masks
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("pixel-level AUC needs pixel masks".into()))?;
    if maps.len() != masks.frames.len() {
        return Err(Error::DimensionMismatch {
            expected: masks.frames.len(),
            found: maps.len(),
        });
    }
    if let Some(m) = maps.iter().find(|m| (m.width, m.height) != (masks.width, masks.height)) {
        return Err(Error::InvalidArgument(format!(
            "map is {}x{}, masks are {}x{}",
            m.width, m.height, masks.width, masks.height
        )));
    }
    let keys: Vec<f64> = maps
        .par_iter()
        .zip(&masks.frames)
        .zip(&gt.frame_labels)
        .map(|((m, mask), &l)| frame_key(m, mask, l))
        .collect();

    match max_thresholds {
        None => roc_curve(&keys, &gt.frame_labels, None),
        Some(limit) => {
            let mut values: Vec<f32> = maps.iter().flat_map(|m| m.values.iter().copied()).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            values.dedup();
            let limit = limit.max(2);
            let thresholds: Vec<f64> = if values.len() <= limit {
                values.iter().map(|&v| v as f64).collect()
            } else {
                (0..limit)
                    .map(|i| values[i * (values.len() - 1) / (limit - 1)] as f64)
                    .collect()
            };
            roc_curve(&keys, &gt.frame_labels, Some(&thresholds))
        }
    }
}

/// Writes `metric,value` rows.
pub fn write_report(path: &Path, rows: &[(&str, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["metric", "value"]).map_err(|e| csv_error(path, e))?;
    for (name, v) in rows {
        w.write_record([name.to_string(), v.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `threshold,fpr,tpr` rows.
pub fn write_roc(path: &Path, roc: &RocResult) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("threshold,fpr,tpr\n");
    for i in 0..roc.thresholds.len() {
        s.push_str(&format!("{},{},{}\n", roc.thresholds[i], roc.fpr[i], roc.tpr[i]));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn separated_and_constant_scores() {
        let labels = [false, false, true, true];
        assert_eq!(frame_level_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap().auc, 1.0);
        assert_eq!(frame_level_auc(&[0.3; 4], &labels).unwrap().auc, 0.5);
        assert_eq!(frame_level_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap().auc, 0.0);
        assert!(matches!(frame_level_auc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
        assert!(frame_level_auc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn curve_endpoints_and_monotone() {
        let roc = frame_level_auc(&[0.5, 0.1, 0.7, 0.5, 0.2], &[true, false, true, false, false]).unwrap();
        assert_eq!(roc.thresholds[0], f64::INFINITY);
        assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        assert!(roc.thresholds.windows(2).all(|w| w[0] > w[1]));
        assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn matches_pairwise_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..=200);
            // Coarse scores so ties are common.
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            labels[0] = true;
            labels[1] = false;
            let auc = frame_level_auc(&scores, &labels).unwrap().auc;
            assert!((auc - pairwise_auc(&scores, &labels)).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            scores in prop::collection::vec(-5.0f64..5.0, 4..60),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = frame_level_auc(&scores, &labels).unwrap().auc;
            let t: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            let b = frame_level_auc(&t, &labels).unwrap().auc;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn smoothing_commutes_with_offset(vals in prop::collection::vec(0.0f32..1.0, 48), c in -2.0f32..2.0) {
            let m = PixelMap { width: 8, height: 6, values: vals.clone() };
            let shifted = PixelMap { values: vals.iter().map(|v| v + c).collect(), ..m.clone() };
            let a = smooth_pixel_maps(&[m], 1.5).unwrap();
            let b = smooth_pixel_maps(&[shifted], 1.5).unwrap();
            for (x, y) in a[0].values.iter().zip(&b[0].values) {
                prop_assert!((x + c - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn spatial_smoothing_identity_and_mass() {
        let mut values = vec![0f32; 41 * 41];
        values[20 * 41 + 20] = 1.0;
        let m = PixelMap { width: 41, height: 41, values };
        assert_eq!(smooth_pixel_maps(&[m.clone()], 0.0).unwrap()[0], m);
        let s = &smooth_pixel_maps(&[m], 3.0).unwrap()[0];
        let sum: f64 = s.values.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let peak = s.values.iter().cloned().fold(0.0, f32::max);
        assert_eq!(s.values[20 * 41 + 20], peak);
        assert_eq!(s.values[20 * 41 + 17], s.values[17 * 41 + 20]);
        assert!(smooth_pixel_maps(&[], -1.0).is_err());
    }

    fn mask_frames(w: usize, h: usize, boxes: &[Option<(usize, usize, usize, usize)>]) -> MaskSet {
        let frames = boxes
            .iter()
            .map(|b| {
                let mut m = vec![false; w * h];
                if let Some((x0, y0, x1, y1)) = *b {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            m[y * w + x] = true;
                        }
                    }
                }
                m
            })
            .collect();
        MaskSet::new(w, h, frames).unwrap()
    }

    #[test]
    fn perfect_maps_score_one() {
        let masks = mask_frames(10, 10, &[None, Some((2, 2, 5, 5)), None, Some((0, 0, 10, 3))]);
        let gt = GroundTruth::from_masks(masks.clone());
        let maps: Vec<PixelMap> = masks
            .frames
            .iter()
            .map(|f| PixelMap { width: 10, height: 10, values: f.iter().map(|&b| b as u8 as f32).collect() })
            .collect();
        assert_eq!(pixel_level_auc(&maps, &gt, None).unwrap().auc, 1.0);
        assert_eq!(pixel_level_auc(&maps, &gt, Some(DEFAULT_MAX_THRESHOLDS)).unwrap().auc, 1.0);
    }

    #[test]
    fn forty_percent_coverage_is_not_enough() {
        assert_eq!(required_coverage(10), 5);
        assert_eq!(required_coverage(11), 5);
        assert_eq!(required_coverage(3), 2);
        // Mask of 10 pixels; exactly 4 of them lit at 1.0.
        let masks = mask_frames(10, 1, &[Some((0, 0, 10, 1)), None]);
        let gt = GroundTruth::from_masks(masks);
        let mut lit = vec![0f32; 10];
        lit[..4].fill(1.0);
        let maps = vec![
            PixelMap { width: 10, height: 1, values: lit.clone() },
            PixelMap { width: 10, height: 1, values: vec![0.5; 10] },
        ];
        let roc = pixel_level_auc(&maps, &gt, None).unwrap();
        // At θ = 1.0 the positive frame is not yet detected.
        let i = roc.thresholds.iter().position(|&t| t == 1.0);
        assert!(i.is_none() || roc.tpr[i.unwrap()] == 0.0);
        // Positive key is 0.0 < negative key 0.5.
        assert_eq!(roc.auc, 0.0);
        lit[4] = 1.0;
        let maps = vec![PixelMap { width: 10, height: 1, values: lit }, maps[1].clone()];
        assert_eq!(pixel_level_auc(&maps, &gt, None).unwrap().auc, 1.0);
    }

    #[test]
    fn full_frame_masks_reduce_to_a_frame_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (w, h, n) = (6, 5, 30);
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let masks = MaskSet::new(w, h, labels.iter().map(|&l| vec![l; w * h]).collect()).unwrap();
        let gt = GroundTruth::new(labels.clone(), Some(masks)).unwrap();
        let maps: Vec<PixelMap> = (0..n)
            .map(|_| PixelMap { width: w, height: h, values: (0..w * h).map(|_| rng.random::<f32>()).collect() })
            .collect();
        // Oracle: positive frames need the 13th largest pixel (> 40% of 30).
        let key = |m: &PixelMap, l: bool| {
            let mut v: Vec<f64> = m.values.iter().map(|&x| x as f64).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            if l { v[12] } else { v[0] }
        };
        let keys: Vec<f64> = maps.iter().zip(&labels).map(|(m, &l)| key(m, l)).collect();
        let expected = pairwise_auc(&keys, &labels);
        let got = pixel_level_auc(&maps, &gt, None).unwrap().auc;
        assert!((got - expected).abs() < 1e-12);
        let thinned = pixel_level_auc(&maps, &gt, Some(DEFAULT_MAX_THRESHOLDS)).unwrap().auc;
        assert!((thinned - got).abs() < 1e-3);
        let coarse = pixel_level_auc(&maps, &gt, Some(3)).unwrap();
        assert_eq!(coarse.thresholds.len(), 4);
    }

    #[test]
    fn mask_shape_mismatch_is_an_error() {
        let gt = GroundTruth::from_masks(mask_frames(4, 4, &[Some((0, 0, 1, 1)), None]));
        let maps = vec![PixelMap { width: 3, height: 4, values: vec![0.0; 12] }; 2];
        assert!(pixel_level_auc(&maps, &gt, None).is_err());
        assert!(pixel_level_auc(&maps[..1], &gt, None).is_err());
    }

    #[test]
    fn labels_parse_both_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "0,0,1,1,0\n").unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec![false, false, true, true, false]);
        fs::write(&p, "frame_index,label\n0,1\n1,0\n2,1\n").unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec![true, false, true]);
        fs::write(&p, "0,1\n2,0\n").unwrap();
        assert!(matches!(load_labels(&p), Err(Error::Format { .. })));
        fs::write(&p, "0,0,2\n").unwrap();
        assert!(load_labels(&p).is_err());
        assert!(matches!(load_labels(&dir.path().join("none.csv")), Err(Error::MissingPath(_))));
    }

    #[test]
    fn label_mask_consistency_is_enforced() {
        let masks = mask_frames(4, 4, &[None, None]);
        let err = GroundTruth::new(vec![false, true], Some(masks)).unwrap_err();
        assert!(matches!(err, Error::GroundTruth { frame: 1, .. }));
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gt = GroundTruth::from_masks(mask_frames(5, 4, &[None, Some((1, 1, 3, 2)), None]));
        let (l, m) = (dir.path().join("gt.csv"), dir.path().join("masks.nncv"));
        gt.write_labels(&l).unwrap();
        gt.write_masks(&m).unwrap();
        assert_eq!(load_ground_truth(Some(&l), Some(&m)).unwrap(), gt);
        assert_eq!(load_ground_truth(None, Some(&m)).unwrap(), gt);
        assert!(gt.check_frames(3).is_ok() && gt.check_frames(4).is_err());
    }

    #[test]
    fn masks_from_image_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3u8 {
            let mut img = image::GrayImage::new(4, 3);
            if i == 1 {
                img.put_pixel(2, 1, image::Luma([200]));
            }
            img.save(dir.path().join(format!("{i:03}.pgm"))).unwrap();
        }
        let gt = load_ground_truth(None, Some(dir.path())).unwrap();
        assert_eq!(gt.frame_labels, vec![false, true, false]);
        assert_eq!(gt.masks.as_ref().unwrap().anomalous_pixels(1), 1);
        assert!(gt.masks.unwrap().frames[1][4 + 2]);
    }
}
