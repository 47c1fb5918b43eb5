//! Training the cluster-wise one-class SVMs and scoring test videos.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{
    appearance_for, augment_cube, AppearanceGrid, AppearanceProvider, AugmentedCube, MissingAppearancePolicy,
    FEATURE_DIM,
};
use crate::cluster::{
    best_of_restarts, choose_k, prune_small_clusters, KMeansConfig, DEFAULT_MIN_CLUSTER_SIZE,
};
use crate::cubes::{
    cubes_at, end_frames, DEFAULT_TAU_STATIC, DEPTH, FRAME_HEIGHT, FRAME_WIDTH, GRID_CELLS, GRID_COLS, GRID_ROWS,
};
use crate::error::{Error, Result};
use crate::eval::PixelMap;
use crate::filter::{convolve, gaussian_kernel};
use crate::ingest::{resize_plane, FrameSequence, ResizeMethod};
use crate::ocsvm::{train_ocsvm, NuProperty, OcsvmConfig, OneClassSvmModel};
use crate::samples::{dot, Samples};

pub const MODEL_MAGIC: &[u8; 4] = b"NNCM";
pub const MODEL_VERSION: u32 = 1;
pub const MAP_MAGIC: &[u8; 4] = b"NNCA";
pub const MAP_VERSION: u32 = 1;
pub const DEFAULT_SIGMA_TEMPORAL: f64 = 10.0;
pub const DEFAULT_TEST_STRIDE: usize = 2;
pub const DEFAULT_TRAIN_STRIDE: usize = 1;

/// Which appearance block the model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppearanceSource {
    /// Zero block: motion features only.
    None,
    Handcrafted,
    /// Precomputed activation maps from an NNCF file.
    File,
}

impl AppearanceSource {
    fn code(self) -> u32 {
        match self {
            AppearanceSource::None => 0,
            AppearanceSource::Handcrafted => 1,
            AppearanceSource::File => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(AppearanceSource::None),
            1 => Some(AppearanceSource::Handcrafted),
            2 => Some(AppearanceSource::File),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub tau_static: f32,
    pub normalize_blocks: bool,
    pub appearance: AppearanceSource,
    pub missing: MissingAppearancePolicy,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tau_static: DEFAULT_TAU_STATIC,
            normalize_blocks: true,
            appearance: AppearanceSource::Handcrafted,
            missing: MissingAppearancePolicy::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub train_stride: usize,
    /// Fixed cluster count; `None` picks one cluster per 1000 samples.
    pub k: Option<usize>,
    pub min_cluster_size: usize,
    pub kmeans: KMeansConfig,
    pub svm: OcsvmConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            train_stride: DEFAULT_TRAIN_STRIDE,
            k: None,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            kmeans: KMeansConfig::default(),
            svm: OcsvmConfig::default(),
            seed: 0,
        }
    }
}

/// Linear scoring function `⟨w, x⟩ − ρ` with single-precision parameters,
/// exactly as stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub w: Vec<f32>,
    pub rho: f32,
}

impl LinearScorer {
    pub fn from_svm(m: &OneClassSvmModel) -> Self {
        Self {
            w: m.w.iter().map(|&v| v as f32).collect(),
            rho: m.rho as f32,
        }
    }

    #[inline]
    pub fn decision(&self, x: &[f32]) -> f64 {
        dot(x, &self.w) - self.rho as f64
    }
}

/// Per-cluster normality scorers learned for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityModel {
    pub scorers: Vec<LinearScorer>,
    pub features: FeatureConfig,
    /// Abnormality given to static cells of frames with no active cell.
    pub static_floor: f32,
    pub k: usize,
    pub min_cluster_size: usize,
}

impl NormalityModel {
    /// Number of retained clusters.
    pub fn r(&self) -> usize {
        self.scorers.len()
    }

    /// Abnormality `−max_j g_j(x)`; positive means outside every cluster.
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        if x.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    #[inline]
    fn score_unchecked(&self, x: &[f32]) -> f64 {
        -self
            .scorers
            .iter()
            .map(|s| s.decision(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + self.scorers.len() * (8 + 4 * FEATURE_DIM));
        let u32s = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(MODEL_MAGIC);
        u32s(&mut out, MODEL_VERSION);
        u32s(&mut out, FEATURE_DIM as u32);
        let flags = self.features.normalize_blocks as u32
            | ((self.features.missing == MissingAppearancePolicy::Zeros) as u32) << 1
            | self.features.appearance.code() << 8;
        u32s(&mut out, flags);
        out.extend_from_slice(&self.features.tau_static.to_le_bytes());
        out.extend_from_slice(&self.static_floor.to_le_bytes());
        u32s(&mut out, self.k as u32);
        u32s(&mut out, self.min_cluster_size as u32);
        u32s(&mut out, self.scorers.len() as u32);
        for s in &self.scorers {
            u32s(&mut out, s.w.len() as u32);
            out.extend_from_slice(&s.rho.to_le_bytes());
            for v in &s.w {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { path, bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::format(path, "bad magic, expected NNCM"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported model version {version} (this build reads version {MODEL_VERSION})"),
            ));
        }
        let dim = r.u32()? as usize;
        if dim != FEATURE_DIM {
            return Err(Error::format(path, format!("feature dimension {dim}, expected {FEATURE_DIM}")));
        }
        let flags = r.u32()?;
        let appearance = AppearanceSource::from_code(flags >> 8)
            .ok_or_else(|| Error::format(path, format!("unknown appearance source {}", flags >> 8)))?;
        let features = FeatureConfig {
            normalize_blocks: flags & 1 != 0,
            missing: if flags & 2 != 0 { MissingAppearancePolicy::Zeros } else { MissingAppearancePolicy::Fail },
            appearance,
            tau_static: r.f32()?,
        };
        let static_floor = r.f32()?;
        let k = r.u32()? as usize;
        let min_cluster_size = r.u32()? as usize;
        let n_models = r.u32()? as usize;
        if n_models == 0 {
            return Err(Error::format(path, "model holds no clusters"));
        }
        let mut scorers = Vec::with_capacity(n_models.min(1 << 16));
        for j in 0..n_models {
            let m = r.u32()? as usize;
            if m != dim {
                return Err(Error::format(path, format!("cluster {j}: weight length {m}, expected {dim}")));
            }
            let rho = r.f32()?;
            let w = r
                .take(4 * m)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            scorers.push(LinearScorer { w, rho });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            scorers,
            features,
            static_floor,
            k,
            min_cluster_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }
}

struct ByteReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Training diagnostics that are not persisted with the model.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub n_cubes: usize,
    pub n_active: usize,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub retained: Vec<usize>,
    pub kmeans_energy: f64,
    pub svms: Vec<OneClassSvmModel>,
    pub nu_checks: Vec<NuProperty>,
}

fn check_working_size(seq: &FrameSequence) -> Result<()> {
    if seq.dims() != (FRAME_WIDTH, FRAME_HEIGHT) {
        let (w, h) = seq.dims();
        return Err(Error::InvalidArgument(format!(
            "expected {FRAME_WIDTH}x{FRAME_HEIGHT} working frames, got {w}x{h}"
        )));
    }
    if seq.len() < DEPTH {
        return Err(Error::InvalidArgument(format!(
            "need at least {DEPTH} frames, got {}",
            seq.len()
        )));
    }
    Ok(())
}

/// Augmented features of the active cubes ending at frame `t`.
fn frame_features(
    seq: &FrameSequence,
    t: usize,
    provider: &dyn AppearanceProvider,
    cfg: &FeatureConfig,
) -> Result<Vec<AugmentedCube>> {
    let cubes = cubes_at(seq, t, cfg.tau_static)?;
    if !cubes.iter().any(|c| c.active) {
        return Ok(Vec::new());
    }
    let grid: AppearanceGrid = appearance_for(provider, t, cfg.missing)?;
    cubes
        .iter()
        .filter(|c| c.active)
        .map(|c| augment_cube(c, &grid, cfg.normalize_blocks))
        .collect()
}

/// Collects the augmented active cubes of a training video.
pub fn training_samples(
    seq: &FrameSequence,
    provider: &dyn AppearanceProvider,
    cfg: &FeatureConfig,
    stride: usize,
) -> Result<(Samples, usize)> {
    check_working_size(seq)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("training stride must be >= 1".into()));
    }
    let frames: Vec<usize> = end_frames(seq.len(), stride).collect();
    let per_frame = frames
        .par_iter()
        .map(|&t| frame_features(seq, t, provider, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n_active = per_frame.iter().map(Vec::len).sum();
    let mut samples = Samples::with_capacity(FEATURE_DIM, n_active);
    for cube in per_frame.iter().flatten() {
        samples.push(&cube.features)?;
    }
    Ok((samples, frames.len() * GRID_CELLS))
}

/// Clusters the training cubes, drops small clusters and fits one SVM per
/// retained cluster on that cluster's members.
pub fn train(
    seq: &FrameSequence,
    provider: &dyn AppearanceProvider,
    cfg: &TrainConfig,
) -> Result<(NormalityModel, TrainReport)> {
    let (samples, n_cubes) = training_samples(seq, provider, &cfg.features, cfg.train_stride)?;
    train_on_samples(&samples, n_cubes, cfg)
}

/// [`train`] on precomputed feature vectors.
pub fn train_on_samples(samples: &Samples, n_cubes: usize, cfg: &TrainConfig) -> Result<(NormalityModel, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::AllStatic);
    }
    if samples.dim() != FEATURE_DIM {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_DIM,
            found: samples.dim(),
        });
    }
    if let Some((sample, component)) = samples.find_non_finite() {
        return Err(Error::NonFinite { sample, component });
    }
    let n = samples.len();
    let k = cfg.k.unwrap_or_else(|| choose_k(n)).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters = best_of_restarts(samples, k, &cfg.kmeans, &mut rng)?;
    let pruned = prune_small_clusters(&clusters, cfg.min_cluster_size);
    let retained = pruned.retained_clusters();
    log::info!(
        "k-means: {n} samples, k = {k}, energy {:.4}, {} clusters retained (min size {})",
        clusters.energy,
        retained.len(),
        cfg.min_cluster_size
    );

    let members: Vec<Vec<usize>> = retained.iter().map(|&j| pruned.members(j)).collect();
    for (&j, m) in retained.iter().zip(&members) {
        if m.len() < 2 {
            return Err(Error::ClusterTooSmall { cluster: j, size: m.len() });
        }
    }
    let fitted = members
        .par_iter()
        .map(|m| {
            let x = samples.subset(m);
            let svm = train_ocsvm(&x, &cfg.svm)?;
            let nu = svm.nu_property(&x);
            Ok((svm, nu))
        })
        .collect::<Result<Vec<_>>>()?;
    let (svms, nu_checks): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    for ((j, m), nu) in retained.iter().zip(&members).zip(&nu_checks) {
        log::debug!(
            "cluster {j}: {} members, outlier fraction {:.4}, support fraction {:.4}",
            m.len(),
            nu.outlier_fraction,
            nu.support_fraction
        );
    }

    let mut model = NormalityModel {
        scorers: svms.iter().map(LinearScorer::from_svm).collect(),
        features: cfg.features,
        static_floor: 0.0,
        k,
        min_cluster_size: cfg.min_cluster_size,
    };
    model.static_floor = samples
        .rows()
        .map(|x| model.score_unchecked(x))
        .fold(f64::INFINITY, f64::min) as f32;

    let report = TrainReport {
        n_cubes,
        n_active: n,
        k,
        cluster_sizes: clusters.sizes.clone(),
        retained,
        kmeans_energy: clusters.energy,
        svms,
        nu_checks,
    };
    Ok((model, report))
}

/// Abnormality of one augmented cube.
pub fn score_cube(model: &NormalityModel, cube: &AugmentedCube) -> Result<f64> {
    model.score(&cube.features)
}

/// Abnormality per grid cell for one frame, raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub frame_index: usize,
    pub grid: Vec<f64>,
}

impl AnomalyMap {
    pub fn max(&self) -> f64 {
        self.grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreSeries {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl FrameScoreSeries {
    pub fn from_raw(raw: Vec<f64>, sigma_t: f64) -> Result<Self> {
        let smoothed = temporal_smooth(&raw, sigma_t)?;
        let normalized = normalize_scores(&smoothed);
        Ok(Self { raw, smoothed, normalized })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub stride: usize,
    pub sigma_t: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            stride: DEFAULT_TEST_STRIDE,
            sigma_t: DEFAULT_SIGMA_TEMPORAL,
        }
    }
}

/// Map for the cubes ending at frame `t`. Static cells take the lowest
/// abnormality among the frame's active cells, or the model floor when the
/// whole frame is static.
pub fn frame_map(
    model: &NormalityModel,
    seq: &FrameSequence,
    t: usize,
    provider: &dyn AppearanceProvider,
) -> Result<AnomalyMap> {
    let active = frame_features(seq, t, provider, &model.features)?;
    let mut grid = vec![f64::NAN; GRID_CELLS];
    for cube in &active {
        grid[cube.grid_row * GRID_COLS + cube.grid_col] = model.score_unchecked(&cube.features);
    }
    let floor = grid
        .iter()
        .filter(|v| !v.is_nan())
        .cloned()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .unwrap_or(model.static_floor as f64);
    for v in grid.iter_mut().filter(|v| v.is_nan()) {
        *v = floor;
    }
    Ok(AnomalyMap { frame_index: t, grid })
}

/// Scores every `stride`-th cube end frame and fills the remaining frames by
/// holding the latest map; the first four frames reuse the first map. Returns
/// one map per frame and the frame score series.
pub fn score_sequence(
    model: &NormalityModel,
    seq: &FrameSequence,
    provider: &dyn AppearanceProvider,
    cfg: &ScoreConfig,
) -> Result<(Vec<AnomalyMap>, FrameScoreSeries)> {
    check_working_size(seq)?;
    if cfg.stride == 0 {
        return Err(Error::InvalidArgument("test stride must be >= 1".into()));
    }
    let frames: Vec<usize> = end_frames(seq.len(), cfg.stride).collect();
    let computed = frames
        .par_iter()
        .map(|&t| frame_map(model, seq, t, provider))
        .collect::<Result<Vec<_>>>()?;

    let mut maps = Vec::with_capacity(seq.len());
    let mut src = 0;
    for f in 0..seq.len() {
        while src + 1 < computed.len() && computed[src + 1].frame_index <= f {
            src += 1;
        }
        maps.push(AnomalyMap {
            frame_index: f,
            grid: computed[src].grid.clone(),
        });
    }
    let raw = maps.iter().map(AnomalyMap::max).collect();
    let series = FrameScoreSeries::from_raw(raw, cfg.sigma_t)?;
    Ok((maps, series))
}

/// Gaussian smoothing over frames, radius `ceil(3 sigma)`, mirrored at the ends.
pub fn temporal_smooth(series: &[f64], sigma_t: f64) -> Result<Vec<f64>> {
    if !(sigma_t >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_t must be >= 0, got {sigma_t}")));
    }
    if sigma_t == 0.0 || series.is_empty() {
        return Ok(series.to_vec());
    }
    Ok(convolve(series.len(), &gaussian_kernel(sigma_t), |i| series[i]))
}

/// Min-max scaling to `[0, 1]`; a constant series maps to zeros.
pub fn normalize_scores(series: &[f64]) -> Vec<f64> {
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; series.len()];
    }
    series.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Bilinear resize of the 12x16 grid to `width x height` pixels.
pub fn upsample_map(map: &AnomalyMap, width: usize, height: usize) -> Result<PixelMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("upsample target {width}x{height} is empty")));
    }
    let grid: Vec<f32> = map.grid.iter().map(|&v| v as f32).collect();
    let values = resize_plane(&grid, GRID_COLS, GRID_ROWS, width, height, ResizeMethod::Bilinear);
    Ok(PixelMap { width, height, values })
}

/// Writes `frame_index,raw,smoothed,normalized` rows.
pub fn write_scores(path: &Path, series: &FrameScoreSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["frame_index", "raw", "smoothed", "normalized"]).map_err(err)?;
    for i in 0..series.len() {
        w.write_record([
            i.to_string(),
            series.raw[i].to_string(),
            series.smoothed[i].to_string(),
            series.normalized[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<FrameScoreSeries> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = FrameScoreSeries { raw: vec![], smoothed: vec![], normalized: vec![] };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::format(path, format!("row {}: column {k} is not a number", i + 1)))
        };
        if field(0)? as usize != i {
            return Err(Error::format(path, format!("row {}: frame index out of order", i + 1)));
        }
        out.raw.push(field(1)?);
        out.smoothed.push(field(2)?);
        out.normalized.push(field(3)?);
    }
    Ok(out)
}

/// Writes per-frame grids: magic `NNCA`, u32 version, frames, rows, cols,
/// then float32 values in frame and raster order.
pub fn write_maps(path: &Path, maps: &[AnomalyMap]) -> Result<()> {
    let mut out = Vec::with_capacity(20 + maps.len() * GRID_CELLS * 4);
    out.extend_from_slice(MAP_MAGIC);
    for v in [MAP_VERSION, maps.len() as u32, GRID_ROWS as u32, GRID_COLS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for m in maps {
        for &v in &m.grid {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_maps(path: &Path) -> Result<Vec<AnomalyMap>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader { path, bytes: &bytes, pos: 0 };
    if r.take(4)? != MAP_MAGIC {
        return Err(Error::format(path, "bad magic, expected NNCA"));
    }
    let version = r.u32()?;
    if version != MAP_VERSION {
        return Err(Error::format(path, format!("unsupported map version {version}")));
    }
    let n = r.u32()? as usize;
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    if (rows, cols) != (GRID_ROWS, GRID_COLS) {
        return Err(Error::format(path, format!("grid {rows}x{cols}, expected {GRID_ROWS}x{GRID_COLS}")));
    }
    (0..n)
        .map(|f| {
            let grid = r
                .take(GRID_CELLS * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok(AnomalyMap { frame_index: f, grid })
        })
        .collect()
}
