use super::AnalysisError;
use crate::vector::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 8,
            seed: 0,
            restarts: 5,
            max_iters: 100,
        }
    }
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub item_id: u64,
    pub cluster: usize,
    /// Euclidean, between the unit-normalised item and its centroid.
    pub distance_to_centroid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<ClusterAssignment>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Restart that produced this result.
    pub restart: usize,
    pub iterations: usize,
    /// Inertia after every assignment step, one list per restart.
    pub inertia_traces: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Only duplicates remain; take the first unused point.
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[next] = true;
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
        centroids.push(points[next].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, cent) in centroids.iter().enumerate() {
                let d = sq_dist(p, cent);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

struct Run {
    labels: Vec<usize>,
    sq: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Run {
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let (mut labels, mut sq) = assign(points, &centroids);
    let mut trace = vec![sq.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((cent, sum), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // An empty cluster keeps its previous centroid.
            if n > 0 {
                *cent = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
        let (next, next_sq) = assign(points, &centroids);
        trace.push(next_sq.iter().sum());
        let stable = next == labels;
        labels = next;
        sq = next_sq;
        if stable {
            break;
        }
    }
    Run {
        inertia: sq.iter().sum(),
        labels,
        sq,
        centroids,
        iterations,
        trace,
    }
}

/// k-means++ seeded Lloyd iterations on unit-normalised copies of the items,
/// best of `restarts` by inertia (ties to the lower restart index). Each
/// restart draws from its own ChaCha stream, so results do not depend on
/// thread scheduling.
pub fn kmeans_cluster(items: &[(u64, Embedding)], cfg: &KMeansConfig) -> Result<KMeansResult, AnalysisError> {
    let n = items.len();
    if cfg.k == 0 || cfg.restarts == 0 {
        return Err(AnalysisError::InvalidK(cfg.k));
    }
    if cfg.k > n {
        return Err(AnalysisError::KTooLarge { k: cfg.k, n });
    }
    let dim = items[0].1.dim();
    let mut points = Vec::with_capacity(n);
    for (_, e) in items {
        if e.dim() != dim {
            return Err(crate::vector::VectorError::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
            }
            .into());
        }
        points.push(e.normalize()?.into_values());
    }

    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            lloyd(&points, cfg.k, cfg.max_iters, &mut rng)
        })
        .collect();

    let inertia_traces = runs.iter().map(|r| r.trace.clone()).collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia < a.1.inertia { b } else { a })
        .expect("at least one restart");

    let assignments = items
        .iter()
        .zip(best.labels.iter().zip(&best.sq))
        .map(|((id, _), (&cluster, &sq))| ClusterAssignment {
            item_id: *id,
            cluster,
            distance_to_centroid: sq.sqrt(),
        })
        .collect();
    Ok(KMeansResult {
        assignments,
        centroids: best.centroids,
        inertia: best.inertia,
        restart,
        iterations: best.iterations,
        inertia_traces,
    })
}

/// For each cluster, up to `m` members closest to its centroid (ascending
/// distance, ties by item id). Clusters without members get an empty list.
pub fn label_clusters(result: &KMeansResult, m: usize) -> Vec<Vec<ClusterAssignment>> {
    let mut per: Vec<Vec<ClusterAssignment>> = vec![Vec::new(); result.centroids.len()];
    for a in &result.assignments {
        per[a.cluster].push(a.clone());
    }
    for list in &mut per {
        list.sort_by(|a, b| {
            a.distance_to_centroid
                .total_cmp(&b.distance_to_centroid)
                .then(a.item_id.cmp(&b.item_id))
        });
        list.truncate(m);
    }
    per
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn items(points: &[Vec<f64>]) -> Vec<(u64, Embedding)> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i as u64, Embedding::new(p.clone(), "m").unwrap()))
            .collect()
    }

    /// Three tight blobs around orthogonal axes.
    fn blobs(seed: u64, per: usize) -> (Vec<(u64, Embedding)>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..per {
                let mut p: Vec<f64> = (0..8)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        0.01 * z
                    })
                    .collect();
                p[c] += 1.0;
                pts.push(p);
                labels.push(c);
            }
        }
        (items(&pts), labels)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn recovers_blobs() {
        let (data, truth) = blobs(1, 20);
        let r = kmeans_cluster(&data, &KMeansConfig::new(3, 9)).unwrap();
        let got: Vec<usize> = r.assignments.iter().map(|a| a.cluster).collect();
        assert!(same_partition(&got, &truth));
        assert_eq!(r.inertia_traces.len(), 5);
        for t in &r.inertia_traces {
            for w in t.windows(2) {
                assert!(w[1] <= w[0], "{t:?}");
            }
        }
    }

    #[test]
    fn k_equals_n_and_one() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let r = kmeans_cluster(&items(&pts), &KMeansConfig::new(3, 0)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut clusters: Vec<usize> = r.assignments.iter().map(|a| a.cluster).collect();
        clusters.sort();
        assert_eq!(clusters, vec![0, 1, 2]);

        let r = kmeans_cluster(&items(&pts), &KMeansConfig::new(1, 0)).unwrap();
        let mean = [0.0, 1.0 / 3.0];
        for (c, m) in r.centroids[0].iter().zip(mean) {
            assert!((c - m).abs() < 1e-15);
        }
    }

    #[test]
    fn inputs_are_normalised() {
        let pts = vec![vec![10.0, 0.0], vec![0.0, 0.5]];
        let r = kmeans_cluster(&items(&pts), &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(r.centroids[0], vec![0.5, 0.5]);
    }

    #[test]
    fn errors() {
        let pts = items(&[vec![1.0, 0.0]]);
        assert!(matches!(
            kmeans_cluster(&pts, &KMeansConfig::new(2, 0)),
            Err(AnalysisError::KTooLarge { k: 2, n: 1 })
        ));
        assert!(matches!(kmeans_cluster(&pts, &KMeansConfig::new(0, 0)), Err(AnalysisError::InvalidK(0))));
        let mixed = vec![
            (0, Embedding::new(vec![1.0, 0.0], "m").unwrap()),
            (1, Embedding::new(vec![1.0], "m").unwrap()),
        ];
        assert!(kmeans_cluster(&mixed, &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (data, _) = blobs(5, 15);
        let a = kmeans_cluster(&data, &KMeansConfig::new(4, 77)).unwrap();
        let b = kmeans_cluster(&data, &KMeansConfig::new(4, 77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_do_not_break_init() {
        let pts = vec![vec![1.0, 0.0]; 4];
        let r = kmeans_cluster(&items(&pts), &KMeansConfig::new(3, 1)).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn exemplars() {
        let (data, truth) = blobs(2, 10);
        let r = kmeans_cluster(&data, &KMeansConfig::new(3, 4)).unwrap();
        let ex = label_clusters(&r, 5);
        assert_eq!(ex.len(), 3);
        for (c, list) in ex.iter().enumerate() {
            assert_eq!(list.len(), 5);
            for w in list.windows(2) {
                assert!(w[0].distance_to_centroid <= w[1].distance_to_centroid);
            }
            let label = truth[list[0].item_id as usize];
            assert!(list.iter().all(|a| a.cluster == c && truth[a.item_id as usize] == label));
        }

        let single = kmeans_cluster(&items(&[vec![0.3, 0.4]]), &KMeansConfig::new(1, 0)).unwrap();
        let ex = label_clusters(&single, 5);
        assert_eq!(ex, vec![vec![single.assignments[0].clone()]]);
    }
}
