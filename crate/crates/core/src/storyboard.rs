//! Storyboards: top-scoring images with a minimum capture-order spacing, and
//! an unsupervised clustering baseline over the same features.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{unit_cosine_distance, FeatureStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryboardSpec {
    /// Number of images wanted.
    pub n_images: usize,
    /// Minimum difference in capture index between any two selected images.
    pub min_separation: usize,
}

impl StoryboardSpec {
    pub fn new(n_images: usize, min_separation: usize) -> Result<Self> {
        if n_images == 0 {
            return Err(Error::invalid("a storyboard needs at least one image"));
        }
        Ok(StoryboardSpec {
            n_images,
            min_separation,
        })
    }
}

/// Result of [`select_top_spaced`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    /// Selected ids in capture order.
    pub ids: Vec<String>,
    /// Capture indices of `ids`.
    pub indices: Vec<usize>,
    /// Set when fewer than `n_images` images satisfied the spacing rule.
    pub short: bool,
}

/// Greedy spaced selection over scores given in capture order.
///
/// Candidates are visited by descending score (earlier index first on ties);
/// a candidate is accepted when it is at least `min_separation` indices away
/// from everything accepted so far. Returns accepted indices in ascending order.
pub fn select_top_spaced_indices<T: Scalar>(
    scores: &[T],
    spec: &StoryboardSpec,
) -> Result<Vec<usize>> {
    if let Some(k) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score at capture index {k} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut accepted: Vec<usize> = Vec::with_capacity(spec.n_images);
    for candidate in order {
        if accepted.len() == spec.n_images {
            break;
        }
        if accepted
            .iter()
            .all(|&a| a.abs_diff(candidate) >= spec.min_separation)
        {
            accepted.push(candidate);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

pub fn select_top_spaced<T: Scalar>(
    scores: &HashMap<String, T>,
    capture_order: &[String],
    spec: &StoryboardSpec,
) -> Result<Selection> {
    let ordered = capture_order
        .iter()
        .map(|id| {
            scores
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no score for image {id:?}")))
        })
        .collect::<Result<Vec<T>>>()?;
    let indices = select_top_spaced_indices(&ordered, spec)?;
    Ok(Selection {
        ids: indices.iter().map(|&k| capture_order[k].clone()).collect(),
        short: indices.len() < spec.n_images,
        indices,
    })
}

/// Condensed upper-triangular storage of a symmetric distance matrix.
struct Condensed<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Condensed<T> {
    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> T {
        self.data[self.offset(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, value: T) {
        let k = self.offset(i, j);
        self.data[k] = value;
    }
}

/// Average-linkage agglomerative clustering of the store on cosine distance,
/// stopped at `n_clusters`. Clusters are labelled by their smallest capture
/// index and returned sorted by it; members are in capture order.
///
/// Ties between equally distant cluster pairs go to the pair with the
/// smallest labels.
pub fn average_linkage<T: Scalar>(
    store: &FeatureStore<T>,
    n_clusters: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = store.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::invalid(format!(
            "cannot form {n_clusters} clusters from {n} images"
        )));
    }
    let mut dist = Condensed {
        n,
        data: Vec::with_capacity(n * n.saturating_sub(1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            dist.data
                .push(unit_cosine_distance(store.unit(i), store.unit(j)));
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
    let nearest_of = |i: usize, active: &[bool], dist: &Condensed<T>| -> Option<(T, usize)> {
        let mut best: Option<(T, usize)> = None;
        for j in (0..n).filter(|&j| j != i && active[j]) {
            let d = dist.get(i, j);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        best
    };
    let mut nearest: Vec<Option<(T, usize)>> =
        (0..n).map(|i| nearest_of(i, &active, &dist)).collect();

    let mut remaining = n;
    while remaining > n_clusters {
        let mut best: Option<(T, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            if let Some((d, j)) = nearest[i] {
                let (a, b) = (i.min(j), i.max(j));
                let better = match best {
                    None => true,
                    Some((bd, ba, bb)) => d < bd || (d == bd && (a, b) < (ba, bb)),
                };
                if better {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");

        let (sa, sb) = (T::lit(size[a] as f64), T::lit(size[b] as f64));
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let merged = (sa * dist.get(a, k) + sb * dist.get(b, k)) / (sa + sb);
            dist.set(a, k, merged);
        }
        active[b] = false;
        size[a] += size[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        remaining -= 1;

        nearest[b] = None;
        nearest[a] = nearest_of(a, &active, &dist);
        for k in (0..n).filter(|&k| active[k] && k != a) {
            match nearest[k] {
                Some((_, j)) if j == a || j == b => nearest[k] = nearest_of(k, &active, &dist),
                Some((d, j)) => {
                    let da = dist.get(a, k);
                    if da < d || (da == d && a < j) {
                        nearest[k] = Some((da, a));
                    }
                }
                None => nearest[k] = nearest_of(k, &active, &dist),
            }
        }
    }

    Ok((0..n)
        .filter(|&k| active[k])
        .map(|k| {
            let mut m = std::mem::take(&mut members[k]);
            m.sort_unstable();
            m
        })
        .collect())
}

/// Member minimizing the summed cosine distance to the rest of its cluster;
/// earliest capture index on ties.
pub fn medoid<T: Scalar>(store: &FeatureStore<T>, members: &[usize]) -> Option<usize> {
    let mut best: Option<(T, usize)> = None;
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    for &candidate in &sorted {
        let total: T = sorted
            .iter()
            .map(|&other| unit_cosine_distance(store.unit(candidate), store.unit(other)))
            .sum();
        if best.is_none_or(|(bt, _)| total < bt) {
            best = Some((total, candidate));
        }
    }
    best.map(|(_, k)| k)
}

/// Clustering storyboard: one medoid per average-linkage cluster, in capture order.
pub fn cluster_baseline<T: Scalar>(
    store: &FeatureStore<T>,
    n_images: usize,
) -> Result<Vec<String>> {
    let clusters = average_linkage(store, n_images)?;
    let mut picks: Vec<usize> = clusters
        .iter()
        .filter_map(|members| medoid(store, members))
        .collect();
    picks.sort_unstable();
    let records = store.records();
    Ok(picks
        .into_iter()
        .map(|k| records[k].image_id.clone())
        .collect())
}

/// One row of a storyboard manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub score: Option<f64>,
    pub capture_index: usize,
}

pub fn manifest<T: Scalar>(
    store: &FeatureStore<T>,
    ids: &[String],
    scores: Option<&HashMap<String, T>>,
) -> Result<Vec<ManifestEntry>> {
    ids.iter()
        .map(|id| {
            let capture_index = store
                .position(id)
                .ok_or_else(|| Error::invalid(format!("image {id:?} not in feature store")))?;
            Ok(ManifestEntry {
                id: id.clone(),
                path: store.records()[capture_index].image_path.clone(),
                score: scores.and_then(|s| s.get(id)).map(|s| s.as_f64()),
                capture_index,
            })
        })
        .collect()
}
