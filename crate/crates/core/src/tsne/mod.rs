//! Exact (O(n²)) t-SNE to two dimensions.

mod export;

pub use export::{export_layout, read_layout, LayoutFormat, LayoutRow};

use crate::vector::Embedding;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsneError {
    #[error("t-SNE needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid t-SNE configuration: {0}")]
    InvalidConfig(String),
    #[error("all distances in the row are zero")]
    DegenerateRow,
    #[error("point {index} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layout I/O on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Floor applied to joint and low-dimensional affinities.
pub const P_FLOOR: f64 = 1e-12;
pub const MAX_BISECTION_STEPS: usize = 50;
pub const PERPLEXITY_TOLERANCE: f64 = 1e-5;
/// Relative spread below which a row counts as equidistant.
pub const EQUIDISTANT_TOLERANCE: f64 = 1e-12;
pub const INIT_STDEV: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations that use early exaggeration and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<(), TsneError> {
        let bad = |m: &str| Err(TsneError::InvalidConfig(m.into()));
        if !(self.perplexity > 1.0) {
            return bad("perplexity must exceed 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration > 0.0) {
            return bad("learning rate and exaggeration must be positive");
        }
        if !(0.0..1.0).contains(&self.initial_momentum) || !(0.0..1.0).contains(&self.final_momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points: at most `(n - 1) / 3` (but
    /// never capped below `min(2, n - 1)`), never below 1.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        let neighbours = n.saturating_sub(1) as f64;
        let cap = (neighbours / 3.0).max(neighbours.min(2.0)).max(1.0);
        self.perplexity.min(cap).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    /// `P(j|i)` in row order.
    pub conditional: Vec<f64>,
    /// `2^H` of `conditional`.
    pub perplexity: f64,
    pub steps: usize,
}

/// Row probabilities and Shannon entropy (nats) at precision `beta = 1/(2σ²)`.
fn row_at(d: &[f64], dmin: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = d.iter().map(|&x| (-(x - dmin) * beta).exp()).collect();
    let sum: f64 = p.iter().sum();
    let mut weighted = 0.0;
    for (pi, &x) in p.iter().zip(d) {
        weighted += (x - dmin) * pi;
    }
    let h = sum.ln() + beta * weighted / sum;
    p.iter_mut().for_each(|v| *v /= sum);
    (p, h)
}

/// Finds σ so that the conditional distribution over `distances` (squared
/// Euclidean to every *other* point) has perplexity `perplexity`.
///
/// Bisects the precision geometrically once bracketed, doubling or halving
/// until then; stops at relative error [`PERPLEXITY_TOLERANCE`] or after
/// [`MAX_BISECTION_STEPS`], keeping the best candidate seen.
pub fn calibrate_sigma(distances: &[f64], perplexity: f64) -> Result<Calibration, TsneError> {
    if distances.is_empty() {
        return Err(TsneError::TooFewPoints(1));
    }
    if distances.iter().all(|&d| d == 0.0) {
        return Err(TsneError::DegenerateRow);
    }
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = distances.iter().copied().fold(0.0, f64::max);
    if dmax - dmin <= dmax * EQUIDISTANT_TOLERANCE {
        // Every precision yields the uniform row.
        let k = distances.len() as f64;
        return Ok(Calibration {
            sigma: f64::INFINITY,
            conditional: vec![1.0 / k; distances.len()],
            perplexity: k,
            steps: 0,
        });
    }
    let target_h = perplexity.ln();

    let mut beta = 1.0 / (dmax - dmin).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut best: Option<(f64, f64, Vec<f64>, f64, usize)> = None;
    for step in 0..=MAX_BISECTION_STEPS {
        let (p, h) = row_at(distances, dmin, beta);
        let perp = h.exp();
        let err = (perp - perplexity).abs() / perplexity;
        if best.as_ref().map_or(true, |b| err < b.0) {
            best = Some((err, beta, p, perp, step));
        }
        if err <= PERPLEXITY_TOLERANCE || step == MAX_BISECTION_STEPS {
            break;
        }
        // Entropy falls as precision rises.
        if h > target_h {
            lo = beta;
            beta = if hi.is_finite() { (lo * hi).sqrt() } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo > 0.0 { (lo * hi).sqrt() } else { beta / 2.0 };
        }
    }
    let (_, beta, conditional, perplexity, steps) = best.expect("loop runs at least once");
    Ok(Calibration {
        sigma: (1.0 / (2.0 * beta)).sqrt(),
        conditional,
        perplexity,
        steps,
    })
}

fn check_inputs(points: &[Embedding]) -> Result<usize, TsneError> {
    let n = points.len();
    if n < 2 {
        return Err(TsneError::TooFewPoints(n));
    }
    let dim = points[0].dim();
    for (index, p) in points.iter().enumerate() {
        if p.dim() != dim {
            return Err(TsneError::DimensionMismatch {
                index,
                expected: dim,
                actual: p.dim(),
            });
        }
    }
    Ok(n)
}

fn squared_distances(points: &[Embedding]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (a, b) in points[i].values().iter().zip(points[j].values()) {
                let t = a - b;
                acc += t * t;
            }
            d[i * n + j] = acc;
            d[j * n + i] = acc;
        }
    }
    d
}

/// Symmetric joint affinities, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointP {
    pub n: usize,
    pub p: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Rows whose points coincide with every other point (uniform rows).
    pub degenerate_rows: Vec<usize>,
}

impl JointP {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

/// `p_ij = (P(j|i) + P(i|j)) / 2n`, diagonal 0, off-diagonal entries floored
/// at [`P_FLOOR`].
pub fn joint_p(points: &[Embedding], cfg: &TsneConfig) -> Result<JointP, TsneError> {
    cfg.validate()?;
    let n = check_inputs(points)?;
    let perplexity = cfg.effective_perplexity(n);
    let d = squared_distances(points);

    let mut cond = vec![0.0; n * n];
    let mut sigmas = vec![f64::INFINITY; n];
    let mut degenerate_rows = Vec::new();
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| d[i * n + j]));
        let probs = match calibrate_sigma(&row, perplexity) {
            Ok(c) => {
                sigmas[i] = c.sigma;
                c.conditional
            }
            Err(TsneError::DegenerateRow) => {
                degenerate_rows.push(i);
                vec![1.0 / (n - 1) as f64; n - 1]
            }
            Err(e) => return Err(e),
        };
        let mut it = probs.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = it.next().expect("one probability per neighbour");
        }
    }

    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = ((cond[i * n + j] + cond[j * n + i]) / denom).max(P_FLOOR);
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    Ok(JointP {
        n,
        p,
        sigmas,
        degenerate_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneLayout {
    pub points: Vec<[f64; 2]>,
    /// Group tag per point; empty when unlabelled.
    pub labels: Vec<String>,
    pub item_ids: Vec<String>,
    /// KL(P || Q) after each iteration, measured against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    pub perplexity: f64,
}

impl TsneLayout {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_item_ids(mut self, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.item_ids = ids.into_iter().map(Into::into).collect();
        self.item_ids.resize(self.points.len(), String::new());
        self
    }

    pub fn with_labels(mut self, labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.labels = labels.into_iter().map(Into::into).collect();
        self.labels.resize(self.points.len(), String::new());
        self
    }

    pub fn rms_radius(&self) -> f64 {
        let s: f64 = self.points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
        (s / self.points.len().max(1) as f64).sqrt()
    }
}

fn recenter(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in y.iter() {
        mx += p[0];
        my += p[1];
    }
    mx /= n;
    my /= n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

/// Gradient descent with momentum, per-coordinate gains and early
/// exaggeration, starting from a seeded Gaussian (stdev [`INIT_STDEV`]).
/// The layout is re-centred after every step.
pub fn tsne_embed(points: &[Embedding], cfg: &TsneConfig) -> Result<TsneLayout, TsneError> {
    let jp = joint_p(points, cfg)?;
    let n = jp.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, INIT_STDEV).expect("positive stdev");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    recenter(&mut y);

    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0f64; n * n];
    let mut grad = vec![[0.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let early = iter < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };

        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                z += 2.0 * v;
            }
        }

        for g in grad.iter_mut() {
            *g = [0.0, 0.0];
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let q = (w / z).max(P_FLOOR);
                let m = 4.0 * (exaggeration * jp.p[i * n + j] - q) * w;
                grad[i][0] += m * (y[i][0] - y[j][0]);
                grad[i][1] += m * (y[i][1] - y[j][1]);
            }
        }

        for i in 0..n {
            for c in 0..2 {
                let g = grad[i][c];
                let u = update[i][c];
                gains[i][c] = if (g > 0.0) != (u > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8).max(0.01)
                };
                update[i][c] = momentum * u - cfg.learning_rate * gains[i][c] * g;
                y[i][c] += update[i][c];
            }
        }
        recenter(&mut y);

        kl_trace.push(kl_divergence(&jp, &y));
    }

    Ok(TsneLayout {
        labels: vec![String::new(); n],
        item_ids: (0..n).map(|i| i.to_string()).collect(),
        points: y,
        kl_trace,
        perplexity: cfg.effective_perplexity(n),
    })
}

/// KL(P || Q) for layout `y`.
pub fn kl_divergence(jp: &JointP, y: &[[f64; 2]]) -> f64 {
    let n = jp.n;
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            z += 2.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(P_FLOOR);
            let p = jp.p[i * n + j];
            kl += p * (p / q).ln();
        }
    }
    kl
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec(), "m").unwrap()
    }

    fn blobs(per: usize, dim: usize, seed: u64) -> (Vec<Embedding>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for b in 0..2 {
            for _ in 0..per {
                let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
                v[0] += 20.0 * b as f64;
                pts.push(emb(&v));
                labels.push(b);
            }
        }
        (pts, labels)
    }

    #[test]
    fn equidistant_row_is_uniform_at_once() {
        let c = calibrate_sigma(&[4.0, 4.0], 2.0).unwrap();
        assert_eq!(c.conditional, vec![0.5, 0.5]);
        assert_eq!(c.steps, 0);
        assert!((c.perplexity - 2.0).abs() < 1e-12);
    }

    #[test]
    fn low_perplexity_concentrates_on_near_neighbour() {
        let c = calibrate_sigma(&[1.0, 9.0], 1.0001).unwrap();
        assert!(c.conditional[0] > 0.99, "{:?}", c.conditional);
        // Independent evaluation of the formula at the returned sigma.
        let w: Vec<f64> = [1.0f64, 9.0].iter().map(|d| (-d / (2.0 * c.sigma * c.sigma)).exp()).collect();
        assert!((w[0] / (w[0] + w[1]) - c.conditional[0]).abs() < 1e-9);
    }

    #[test]
    fn zero_row_is_degenerate() {
        assert!(matches!(calibrate_sigma(&[0.0, 0.0], 2.0), Err(TsneError::DegenerateRow)));
    }

    #[test]
    fn two_points_share_half() {
        let jp = joint_p(&[emb(&[0.0, 0.0]), emb(&[1.0, 1.0])], &TsneConfig::default()).unwrap();
        assert_eq!(jp.get(0, 1), 0.5);
        assert_eq!(jp.get(1, 0), 0.5);
        assert_eq!(jp.get(0, 0), 0.0);
    }

    #[test]
    fn square_neighbours_outweigh_diagonal() {
        let pts = [emb(&[0.0, 0.0]), emb(&[1.0, 0.0]), emb(&[1.0, 1.0]), emb(&[0.0, 1.0])];
        let cfg = TsneConfig {
            perplexity: 1.5,
            ..TsneConfig::default()
        };
        let jp = joint_p(&pts, &cfg).unwrap();
        for i in 0..4 {
            let a = jp.get(i, (i + 1) % 4);
            let b = jp.get(i, (i + 3) % 4);
            let diag = jp.get(i, (i + 2) % 4);
            assert!((a - b).abs() < 1e-15);
            assert!(diag < a);
        }
    }

    #[test]
    fn duplicates_get_uniform_rows() {
        let pts = vec![emb(&[1.0, 2.0]); 3];
        let jp = joint_p(&pts, &TsneConfig::default()).unwrap();
        assert_eq!(jp.degenerate_rows, vec![0, 1, 2]);
        let total: f64 = jp.p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn input_checks() {
        assert!(matches!(tsne_embed(&[emb(&[1.0])], &TsneConfig::default()), Err(TsneError::TooFewPoints(1))));
        assert!(matches!(
            tsne_embed(&[emb(&[1.0]), emb(&[1.0, 2.0])], &TsneConfig::default()),
            Err(TsneError::DimensionMismatch { index: 1, .. })
        ));
        let bad = TsneConfig {
            perplexity: 0.5,
            ..TsneConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TsneError::InvalidConfig(_))));
        assert_eq!(TsneConfig::default().effective_perplexity(130), 30.0);
        assert_eq!(TsneConfig::default().effective_perplexity(31), 10.0);
        assert_eq!(TsneConfig::default().effective_perplexity(2), 1.0);
        assert_eq!(TsneConfig::default().effective_perplexity(3), 2.0);
        assert_eq!(TsneConfig::default().effective_perplexity(7), 2.0);
    }

    #[test]
    fn two_points_end_symmetric() {
        let cfg = TsneConfig {
            iterations: 300,
            ..TsneConfig::default()
        };
        let l = tsne_embed(&[emb(&[0.0, 1.0]), emb(&[3.0, 1.0])], &cfg).unwrap();
        let [a, b] = [l.points[0], l.points[1]];
        assert!(a.iter().chain(&b).all(|v| v.is_finite()));
        assert_ne!(a, b);
        assert!((a[0] + b[0]).abs() < 1e-9 && (a[1] + b[1]).abs() < 1e-9);
    }

    #[test]
    fn blobs_separate_and_layout_is_deterministic() {
        let (pts, labels) = blobs(20, 16, 3);
        let cfg = TsneConfig {
            seed: 11,
            ..TsneConfig::default()
        };
        let a = tsne_embed(&pts, &cfg).unwrap();
        let b = tsne_embed(&pts, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kl_trace.len(), 1000);
        assert!(a.kl_trace.iter().all(|k| k.is_finite()));
        let late: f64 = a.kl_trace[900..].iter().sum::<f64>() / 100.0;
        let mid: f64 = a.kl_trace[300..400].iter().sum::<f64>() / 100.0;
        assert!(late <= mid);

        let (mx, my) = a
            .points
            .iter()
            .fold((0.0, 0.0), |acc, p| (acc.0 + p[0], acc.1 + p[1]));
        assert!(mx.abs() < 1e-6 && my.abs() < 1e-6);

        let n = pts.len();
        let mut preserved = 0;
        for i in 0..n {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dx = a.points[i][0] - a.points[j][0];
                    let dy = a.points[i][1] - a.points[j][1];
                    (dx * dx + dy * dy, j)
                })
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0));
            let same = d[..5].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
            if same >= 3 {
                preserved += 1;
            }
        }
        assert!(preserved as f64 >= 0.9 * n as f64);
    }

    #[test]
    fn duplicate_inputs_land_together() {
        let (mut pts, _) = blobs(50, 8, 4);
        pts.push(pts[3].clone());
        let cfg = TsneConfig {
            seed: 2,
            ..TsneConfig::default()
        };
        let l = tsne_embed(&pts, &cfg).unwrap();
        let (a, b) = (l.points[3], l.points[pts.len() - 1]);
        let gap = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!(gap <= 0.01 * l.rms_radius(), "gap {gap} radius {}", l.rms_radius());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn calibration_hits_target(seed in 0u64..10_000, len in 5usize..60, frac in 0.1f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let row: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..50.0)).collect();
            let target = 1.0 + frac * (len as f64 - 1.0);
            let c = calibrate_sigma(&row, target).unwrap();
            prop_assert!((c.perplexity - target).abs() / target <= PERPLEXITY_TOLERANCE);
            let total: f64 = c.conditional.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn joint_is_symmetric_and_normalised(seed in 0u64..1000, n in 2usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Embedding> = (0..n)
                .map(|_| emb(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()))
                .collect();
            let jp = joint_p(&pts, &TsneConfig::default()).unwrap();
            for i in 0..n {
                prop_assert_eq!(jp.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(jp.get(i, j), jp.get(j, i));
                }
            }
            let total: f64 = jp.p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }
    }
}
