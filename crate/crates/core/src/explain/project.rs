//! PCA and exact t-SNE for planar embedding maps.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::team::TeamLabel;

pub const MAP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// Step size; `None` picks `n / (4 · early_exaggeration)`, which keeps
    /// the exaggerated phase stable for any point count.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub instance_id: String,
    pub x: f64,
    pub y: f64,
    pub team: TeamLabel,
}

/// What a map needs to place new queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projector {
    Pca { mean: Vec<f64>, components: [Vec<f64>; 2] },
    /// Training embeddings, aligned with the map points.
    Tsne { embeddings: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMap {
    pub schema_version: u32,
    pub method: ProjectionMethod,
    pub points: Vec<MapPoint>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_initial: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_final: Option<f64>,
    pub projector: Projector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub x: f64,
    pub y: f64,
    /// t-SNE has no out-of-sample map; the query takes the place of its
    /// nearest training embedding.
    pub approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest_instance_id: Option<String>,
}

impl ProjectionMap {
    pub fn dimension(&self) -> usize {
        match &self.projector {
            Projector::Pca { mean, .. } => mean.len(),
            Projector::Tsne { embeddings } => embeddings.first().map_or(0, Vec::len),
        }
    }

    pub fn filtered(&self, team: TeamLabel) -> Vec<&MapPoint> {
        self.points.iter().filter(|p| p.team == team).collect()
    }
}

/// Top two principal directions of the rows of `x` (after centring):
/// returns `(mean, [c1, c2])`. Signs are fixed so the largest-magnitude
/// entry of each component is positive.
pub fn pca(x: &Array2<f64>) -> (Array1<f64>, [Array1<f64>; 2]) {
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let centred = x - &mean;
    let cov = centred.t().dot(&centred) / n.max(1) as f64;

    // subspace iteration on two vectors
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = Array2::from_shape_simple_fn((d, 2), || normal.sample(&mut rng));
    orthonormalize(&mut v);
    for _ in 0..2000 {
        let mut w = cov.dot(&v);
        orthonormalize(&mut w);
        let change = (&w.t().dot(&v)).mapv(f64::abs);
        v = w;
        if (change[[0, 0]] - 1.0).abs() < 1e-15 && (change[[1, 1]] - 1.0).abs() < 1e-15 {
            break;
        }
    }
    // Rayleigh-Ritz on the 2-d subspace
    let b = v.t().dot(&cov).dot(&v);
    let (p, q, r) = (b[[0, 0]], b[[0, 1]], b[[1, 1]]);
    let theta = 0.5 * (2.0 * q).atan2(p - r);
    let (c, s) = (theta.cos(), theta.sin());
    let c1 = &v.column(0) * c + &v.column(1) * s;
    let c2 = &v.column(1) * c - &v.column(0) * s;
    let fix = |a: Array1<f64>| {
        let k = a.iter().enumerate().fold(0, |b, (i, v)| if v.abs() > a[b].abs() + 1e-12 { i } else { b });
        if a[k] < 0.0 {
            -a
        } else {
            a
        }
    };
    (mean, [fix(c1), fix(c2)])
}

fn orthonormalize(v: &mut Array2<f64>) {
    let d = v.nrows();
    for j in 0..v.ncols() {
        for k in 0..j {
            let proj = v.column(j).dot(&v.column(k));
            let prev = v.column(k).to_owned();
            v.column_mut(j).scaled_add(-proj, &prev);
        }
        let mut norm = v.column(j).dot(&v.column(j)).sqrt();
        if norm < 1e-300 {
            // rank-deficient data: any unit vector orthogonal to the rest
            for e in 0..d {
                let mut u = Array1::zeros(d);
                u[e] = 1.0;
                for k in 0..j {
                    let proj = u.dot(&v.column(k));
                    u.scaled_add(-proj, &v.column(k));
                }
                norm = u.dot(&u).sqrt();
                if norm > 1e-6 {
                    v.column_mut(j).assign(&u);
                    break;
                }
            }
        }
        v.column_mut(j).mapv_inplace(|x| x / norm);
    }
}

fn sq_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &x.row(i) - &x.row(j);
            let v = diff.dot(&diff);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Symmetric joint probabilities with per-point bandwidths matched to
/// `perplexity` by bisection.
fn joint_probabilities(x: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let d2 = sq_distances(x);
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut row = vec![0.0; n];
        for _ in 0..100 {
            let mut sum = 0.0;
            let min = (0..n).filter(|&j| j != i).map(|j| d2[[i, j]]).fold(f64::INFINITY, f64::min);
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d2[[i, j]] - min) * beta).exp() };
                sum += row[j];
            }
            let mut h = 0.0;
            for j in 0..n {
                row[j] /= sum;
                if row[j] > 0.0 {
                    h -= row[j] * row[j].ln();
                }
            }
            if (h - target).abs() < 1e-5 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    let sym = (&p + &p.t()) / (2.0 * n as f64);
    sym.mapv(|v| v.max(1e-12))
}

fn student_q(y: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = y.nrows();
    let d2 = sq_distances(y);
    let mut num = d2.mapv(|v| 1.0 / (1.0 + v));
    for i in 0..n {
        num[[i, i]] = 0.0;
    }
    let total = num.sum();
    let q = num.mapv(|v| (v / total).max(1e-12));
    (q, num)
}

/// KL(P‖Q) of a joint distribution `p` and the Student-t affinities of
/// the layout `y`.
pub fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (q, _) = student_q(y);
    let n = p.nrows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kl += p[[i, j]] * (p[[i, j]] / q[[i, j]]).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE with early exaggeration, momentum and adaptive gains.
/// Returns the layout and the KL divergence before and after.
fn tsne(x: &Array2<f64>, cfg: &TsneConfig) -> (Array2<f64>, f64, f64, f64) {
    let n = x.nrows();
    let perplexity = cfg.perplexity.min((n as f64 - 1.0) / 3.0).max(1.0);
    let p = joint_probabilities(x, perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("finite std");
    let mut y = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut rng));
    let kl_initial = kl_divergence(&p, &y);
    let lr = cfg.learning_rate.unwrap_or(n as f64 / (4.0 * cfg.early_exaggeration)).max(1e-3);
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iterations { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < 250 { 0.5 } else { 0.8 };
        let (q, num) = student_q(&y);
        let mut grad = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = 4.0 * (exaggeration * p[[i, j]] - q[[i, j]]) * num[[i, j]];
                for k in 0..2 {
                    grad[[i, k]] += w * (y[[i, k]] - y[[j, k]]);
                }
            }
        }
        ndarray::Zip::from(&mut gains).and(&grad).and(&update).for_each(|g, &dg, &u| {
            *g = if dg * u < 0.0 { *g + 0.2 } else { (*g * 0.8).max(0.01) };
        });
        update = &update * momentum - &(&gains * &grad) * lr;
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("non-empty");
        y -= &mean;
    }
    let kl_final = kl_divergence(&p, &y);
    (y, kl_initial, kl_final, perplexity)
}

/// Fits a planar map of `embeddings` (one row per instance).
pub fn fit_projection(
    embeddings: &Array2<f64>,
    instance_ids: &[String],
    labels: &[TeamLabel],
    method: ProjectionMethod,
    tsne_config: &TsneConfig,
) -> Result<ProjectionMap> {
    let n = embeddings.nrows();
    if n < 3 {
        return Err(Error::arg(format!("need at least 3 points for a map, got {n}")));
    }
    if instance_ids.len() != n || labels.len() != n {
        return Err(Error::arg("ids and labels must align with embedding rows"));
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite embedding"));
    }
    let points = |coords: &Array2<f64>| {
        (0..n)
            .map(|i| MapPoint {
                instance_id: instance_ids[i].clone(),
                x: coords[[i, 0]],
                y: coords[[i, 1]],
                team: labels[i],
            })
            .collect()
    };
    Ok(match method {
        ProjectionMethod::Pca => {
            let (mean, [c1, c2]) = pca(embeddings);
            let centred = embeddings - &mean;
            let mut coords = Array2::zeros((n, 2));
            coords.column_mut(0).assign(&centred.dot(&c1));
            coords.column_mut(1).assign(&centred.dot(&c2));
            ProjectionMap {
                schema_version: MAP_SCHEMA_VERSION,
                method,
                points: points(&coords),
                seed: 0,
                iterations: None,
                perplexity: None,
                kl_initial: None,
                kl_final: None,
                projector: Projector::Pca { mean: mean.to_vec(), components: [c1.to_vec(), c2.to_vec()] },
            }
        }
        ProjectionMethod::Tsne => {
            let (coords, kl0, kl1, perplexity) = tsne(embeddings, tsne_config);
            ProjectionMap {
                schema_version: MAP_SCHEMA_VERSION,
                method,
                points: points(&coords),
                seed: tsne_config.seed,
                iterations: Some(tsne_config.iterations),
                perplexity: Some(perplexity),
                kl_initial: Some(kl0),
                kl_final: Some(kl1),
                projector: Projector::Tsne { embeddings: embeddings.rows().into_iter().map(|r| r.to_vec()).collect() },
            }
        }
    })
}

/// Places a query embedding on a fitted map.
pub fn project_query(map: &ProjectionMap, query: ArrayView1<f64>) -> Result<QueryPoint> {
    let d = map.dimension();
    if query.len() != d {
        return Err(Error::arg(format!("query has dimension {}, map expects {d}", query.len())));
    }
    match &map.projector {
        Projector::Pca { mean, components } => {
            let centred: Vec<f64> = query.iter().zip(mean).map(|(q, m)| q - m).collect();
            let dot = |c: &Vec<f64>| c.iter().zip(&centred).map(|(a, b)| a * b).sum();
            Ok(QueryPoint { x: dot(&components[0]), y: dot(&components[1]), approximate: false, nearest_instance_id: None })
        }
        Projector::Tsne { embeddings } => {
            let dist = |e: &Vec<f64>| e.iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let best = (0..embeddings.len())
                .min_by(|&a, &b| dist(&embeddings[a]).total_cmp(&dist(&embeddings[b])))
                .ok_or_else(|| Error::arg("empty map"))?;
            let p = &map.points[best];
            Ok(QueryPoint { x: p.x, y: p.y, approximate: true, nearest_instance_id: Some(p.instance_id.clone()) })
        }
    }
}
