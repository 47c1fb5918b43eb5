//! First-stage outlier elimination: k-means++ seeded Lloyd iterations, best of
//! several restarts by energy, then removal of clusters that are too small.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::samples::{sq_dist, Samples};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 500;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Average number of training cubes per cluster used to pick `k`.
pub const SAMPLES_PER_CLUSTER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once the relative energy improvement falls to this value or below.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances of the samples to their assigned centroids.
    pub energy: f64,
    pub retained: Vec<bool>,
    pub iterations: usize,
    /// Energy after each assignment step.
    pub energy_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn retained_clusters(&self) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.retained[j]).collect()
    }

    /// Sample indices assigned to cluster `j`, ascending.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == j)
            .map(|(i, _)| i)
            .collect()
    }
}

/// About one cluster per thousand samples, at least one.
pub fn choose_k(n_samples: usize) -> usize {
    ((n_samples + SAMPLES_PER_CLUSTER / 2) / SAMPLES_PER_CLUSTER).max(1)
}

/// k-means++ seeding: the first centroid uniformly, each further one with
/// probability proportional to its squared distance to the nearest seed.
pub fn kmeans_pp_init<R: Rng + ?Sized>(data: &Samples, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot seed {k} centroids from {n} samples"
        )));
    }
    let to_f64 = |i: usize| data.row(i).iter().map(|&v| v as f64).collect::<Vec<_>>();
    let mut centroids = Vec::with_capacity(k * data.dim());
    let first = to_f64(rng.random_range(0..n));
    let mut nearest: Vec<f64> = data.rows().map(|x| sq_dist(x, &first)).collect();
    centroids.extend(first);

    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the final sum.
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let c = to_f64(pick);
        for (d, x) in nearest.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.extend(c);
    }
    Ok(centroids)
}

/// Nearest centroid per sample (lowest index on ties) and the squared distance to it.
fn assign(data: &Samples, centroids: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let dim = data.dim();
    data.as_flat()
        .par_chunks(dim.max(1))
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for j in 0..k {
                let d = sq_dist(x, &centroids[j * dim..(j + 1) * dim]);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from the given centroids. Ends right after an assignment
/// step, so assignments are always nearest-centroid for the returned centroids.
/// A cluster that empties is re-seeded at the sample farthest from its centroid.
pub fn lloyd(data: &Samples, init_centroids: &[f64], max_iter: usize, tol: f64) -> Result<ClusterModel> {
    let dim = data.dim();
    if dim == 0 || init_centroids.is_empty() || init_centroids.len() % dim != 0 {
        return Err(Error::InvalidArgument("centroid matrix does not match the data width".into()));
    }
    if init_centroids.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("initial centroids must be finite".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("no samples to cluster".into()));
    }
    let k = init_centroids.len() / dim;
    let mut centroids = init_centroids.to_vec();
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let (next, dists) = assign(data, &centroids, k);
        let energy: f64 = dists.iter().sum();
        let changed = next != assignments;
        assignments = next;
        let converged = match trace.last() {
            _ if energy == 0.0 || !changed => true,
            Some(&prev) => prev - energy <= tol * prev,
            None => false,
        };
        trace.push(energy);
        if converged || iterations >= max_iter.max(1) {
            break;
        }
        update_centroids(data, &assignments, &dists, &mut centroids, k);
    }

    let mut sizes = vec![0; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(ClusterModel {
        centroids,
        dim,
        assignments,
        sizes,
        energy: *trace.last().unwrap(),
        retained: vec![true; k],
        iterations,
        energy_trace: trace,
    })
}

fn update_centroids(data: &Samples, assignments: &[usize], dists: &[f64], centroids: &mut [f64], k: usize) {
    let dim = data.dim();
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (x, &a) in data.rows().zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x) {
            *s += v as f64;
        }
    }
    let mut taken = vec![false; dists.len()];
    for j in 0..k {
        let c = &mut centroids[j * dim..(j + 1) * dim];
        if counts[j] > 0 {
            for (c, s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *c = s / counts[j] as f64;
            }
        } else {
            let far = (0..dists.len())
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                taken[i] = true;
                for (c, &v) in c.iter_mut().zip(data.row(i)) {
                    *c = v as f64;
                }
            }
        }
    }
}

/// Runs `cfg.restarts` independent seedings + Lloyd runs. Each restart gets
/// its own generator seeded from `rng`, so results do not depend on threading.
pub fn run_restarts<R: Rng + ?Sized>(
    data: &Samples,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<Vec<ClusterModel>> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..cfg.restarts).map(|_| rng.random()).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            let init = kmeans_pp_init(data, k, &mut local)?;
            lloyd(data, &init, cfg.max_iter, cfg.tol)
        })
        .collect()
}

/// The minimum-energy partition over `cfg.restarts` runs (first one on ties).
pub fn best_of_restarts<R: Rng + ?Sized>(
    data: &Samples,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<ClusterModel> {
    let runs = run_restarts(data, k, cfg, rng)?;
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, m)| if m.energy < runs[b].energy { i } else { b });
    Ok(runs.into_iter().nth(best).unwrap())
}

/// Keeps clusters with at least `min_size` members. If none qualifies the
/// largest one (lowest index on ties) is kept.
pub fn prune_small_clusters(model: &ClusterModel, min_size: usize) -> ClusterModel {
    let mut out = model.clone();
    out.retained = model.sizes.iter().map(|&s| s >= min_size).collect();
    if !out.retained.iter().any(|&r| r) {
        let largest = model
            .sizes
            .iter()
            .enumerate()
            .fold(0, |b, (j, &s)| if s > model.sizes[b] { j } else { b });
        out.retained[largest] = true;
    }
    out
}
