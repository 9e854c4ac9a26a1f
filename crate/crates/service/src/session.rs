//! Live comparison session. Judgments go to a durable log; a recompute runs
//! EP and then the GP over that log to produce the current score snapshot.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use interest_core::ranker::infer_ep;
use interest_core::saliency::{load_image, occlusion_map};
use interest_core::storyboard::{
    cluster_baseline, manifest, select_top_spaced, ManifestEntry, StoryboardSpec,
};
use interest_core::{
    Comparison, EpOptions, Extractor, FeatureStore, GpModel, InterestPosterior, KernelConfig,
    OcclusionConfig, PriorConfig, SaliencyMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::journal::{ComparisonLog, SkipLog, SkipRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub prior: PriorConfig,
    pub ep: EpOptions,
    pub kernel: KernelConfig,
    pub rng_seed: u64,
    /// Start a background recompute after every this many judgments.
    pub auto_recompute_every: Option<usize>,
    pub occlusion: OcclusionConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            prior: PriorConfig::default(),
            ep: EpOptions::default(),
            kernel: KernelConfig::default(),
            rng_seed: 0,
            auto_recompute_every: Some(25),
            occlusion: OcclusionConfig::default(),
        }
    }
}

/// The pair shown after `k` recorded answers (judgments plus skips).
///
/// Each position draws from its own ChaCha stream, so the sequence depends
/// only on the seed and survives restarts, and reading it changes nothing.
pub fn pair_at(seed: u64, k: u64, n_images: usize) -> Result<(usize, usize)> {
    if n_images < 2 {
        return Err(ServiceError::Precondition(format!(
            "need at least two images to form a pair, have {n_images}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let a = rng.random_range(0..n_images);
    let mut b = rng.random_range(0..n_images - 1);
    if b >= a {
        b += 1;
    }
    Ok((a, b))
}

/// One complete recompute result. Readers hold an `Arc` to it, so a newer
/// snapshot never mixes with an older one.
#[derive(Debug)]
pub struct Snapshot {
    /// GP-smoothed scores for every image in the store, in capture order.
    pub scores: InterestPosterior,
    pub model: GpModel,
    /// Number of leading log entries this snapshot was computed from.
    pub covered: usize,
    pub ep_converged: bool,
    pub ep_iterations: usize,
    pub computed_at: DateTime<Utc>,
}

impl Snapshot {
    pub fn score_map(&self) -> HashMap<String, f64> {
        self.scores.score_map()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "lowercase")]
pub enum RecomputeStatus {
    Idle,
    Running,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub recompute: RecomputeStatus,
    pub warning: Option<String>,
    pub images: usize,
    pub judgments: usize,
    pub skips: usize,
    pub covered: Option<usize>,
    pub ep_converged: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ack {
    pub log_len: usize,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoryboardMethod {
    Interest,
    Cluster,
}

impl std::str::FromStr for StoryboardMethod {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interest" => Ok(StoryboardMethod::Interest),
            "cluster" => Ok(StoryboardMethod::Cluster),
            other => Err(ServiceError::Validation(format!(
                "unknown storyboard method {other:?}; use interest or cluster"
            ))),
        }
    }
}

/// Pure pipeline: EP over the judgments, GP fit on the compared images,
/// prediction for the whole store.
pub fn compute_snapshot(
    store: &FeatureStore,
    comparisons: &[Comparison],
    config: &SessionConfig,
) -> Result<Snapshot> {
    if comparisons.is_empty() {
        return Err(ServiceError::Precondition(
            "no judgments recorded yet".into(),
        ));
    }
    let posterior = infer_ep(comparisons, &store.ids(), &config.prior, &config.ep)?;
    let model = GpModel::fit(store, &posterior.observed(), &config.kernel)?;
    let scores = model.predict_store(store)?;
    Ok(Snapshot {
        scores,
        model,
        covered: comparisons.len(),
        ep_converged: posterior.converged,
        ep_iterations: posterior.iterations,
        computed_at: Utc::now(),
    })
}

pub struct Session {
    store: Arc<FeatureStore>,
    log: Mutex<ComparisonLog>,
    skips: Mutex<SkipLog>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    status: Mutex<RecomputeStatus>,
    warning: Mutex<Option<String>>,
    run: Mutex<()>,
    extractor: Option<Box<dyn Extractor + Send>>,
    config: SessionConfig,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Session {
    pub fn open(
        store: FeatureStore,
        log_path: impl AsRef<Path>,
        skip_path: impl AsRef<Path>,
        config: SessionConfig,
    ) -> Result<Self> {
        let log = ComparisonLog::open(log_path)?;
        for (k, c) in log.entries().iter().enumerate() {
            for id in [&c.winner_id, &c.loser_id] {
                if store.position(id).is_none() {
                    return Err(ServiceError::Validation(format!(
                        "log entry {} references image {id:?} missing from the feature store",
                        k + 1
                    )));
                }
            }
        }
        Ok(Session {
            store: Arc::new(store),
            log: Mutex::new(log),
            skips: Mutex::new(SkipLog::open(skip_path)?),
            snapshot: RwLock::new(None),
            status: Mutex::new(RecomputeStatus::Idle),
            warning: Mutex::new(None),
            run: Mutex::new(()),
            extractor: None,
            config,
        })
    }

    pub fn with_extractor(mut self, extractor: Box<dyn Extractor + Send>) -> Self {
        self.extractor = Some(extractor);
        self
    }

    pub fn store(&self) -> &FeatureStore {
        &self.store
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn comparisons(&self) -> Vec<Comparison> {
        lock(&self.log).entries().to_vec()
    }

    fn answered(&self) -> u64 {
        (lock(&self.log).len() + lock(&self.skips).len()) as u64
    }

    /// The pair awaiting an answer. Repeated calls return the same pair until
    /// a judgment or skip is recorded.
    pub fn sample_pair(&self) -> Result<(String, String)> {
        let (a, b) = pair_at(self.config.rng_seed, self.answered(), self.store.len())?;
        let records = self.store.records();
        Ok((records[a].image_id.clone(), records[b].image_id.clone()))
    }

    fn check_pair(&self, a: &str, b: &str) -> Result<()> {
        for id in [a, b] {
            if self.store.position(id).is_none() {
                return Err(ServiceError::Validation(format!("unknown image {id:?}")));
            }
        }
        if a == b {
            return Err(ServiceError::Validation(format!(
                "an image cannot be compared with itself ({a:?})"
            )));
        }
        Ok(())
    }

    /// Appends a judgment; returns only once it is on disk.
    pub fn record_comparison(&self, winner: &str, loser: &str, session: &str) -> Result<Ack> {
        self.check_pair(winner, loser)?;
        let comparison = Comparison::new(winner, loser, session)?;
        let log_len = lock(&self.log).append(&comparison)?;
        Ok(Ack {
            log_len,
            comparison,
        })
    }

    pub fn record_skip(&self, a: &str, b: &str, session: &str) -> Result<usize> {
        self.check_pair(a, b)?;
        let record = SkipRecord {
            a: a.into(),
            b: b.into(),
            session: session.into(),
            timestamp: Utc::now(),
        };
        Ok(lock(&self.skips).append(&record)?)
    }

    pub fn auto_recompute_due(&self, log_len: usize) -> bool {
        matches!(self.config.auto_recompute_every, Some(k) if k > 0 && log_len.is_multiple_of(k))
    }

    /// Recomputes from the current log. Runs one at a time; a caller that
    /// finds the log already covered by the latest snapshot gets that
    /// snapshot back without recomputing.
    pub fn recompute(&self) -> Result<Arc<Snapshot>> {
        let _running = lock(&self.run);
        let comparisons = self.comparisons();
        if comparisons.is_empty() {
            return Err(ServiceError::Precondition(
                "no judgments recorded yet".into(),
            ));
        }
        if let Some(current) = self.snapshot() {
            if current.covered == comparisons.len() {
                return Ok(current);
            }
        }

        *lock(&self.status) = RecomputeStatus::Running;
        match compute_snapshot(&self.store, &comparisons, &self.config) {
            Ok(snapshot) => {
                let snapshot = Arc::new(snapshot);
                *lock(&self.warning) = (!snapshot.ep_converged).then(|| {
                    format!(
                        "EP stopped after {} sweeps without meeting the tolerance",
                        snapshot.ep_iterations
                    )
                });
                *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Some(snapshot.clone());
                *lock(&self.status) = RecomputeStatus::Idle;
                tracing::info!(
                    covered = snapshot.covered,
                    converged = snapshot.ep_converged,
                    "scores updated"
                );
                Ok(snapshot)
            }
            Err(e) => {
                tracing::warn!(error = %e, "recompute failed; keeping previous scores");
                *lock(&self.status) = RecomputeStatus::Failed(e.to_string());
                Err(e)
            }
        }
    }

    /// Fires a recompute on a background thread.
    pub fn spawn_recompute(self: &Arc<Self>) {
        let session = Arc::clone(self);
        std::thread::spawn(move || {
            let _ = session.recompute();
        });
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    pub fn status(&self) -> StatusReport {
        let snapshot = self.snapshot();
        StatusReport {
            recompute: lock(&self.status).clone(),
            warning: lock(&self.warning).clone(),
            images: self.store.len(),
            judgments: lock(&self.log).len(),
            skips: lock(&self.skips).len(),
            covered: snapshot.as_ref().map(|s| s.covered),
            ep_converged: snapshot.as_ref().map(|s| s.ep_converged),
        }
    }

    fn require_snapshot(&self) -> Result<Arc<Snapshot>> {
        self.snapshot().ok_or_else(|| {
            ServiceError::Precondition("no scores yet; run a recompute first".into())
        })
    }

    pub fn storyboard(
        &self,
        n_images: usize,
        min_separation: usize,
        method: StoryboardMethod,
    ) -> Result<Vec<ManifestEntry>> {
        let spec = StoryboardSpec::new(n_images, min_separation)?;
        match method {
            StoryboardMethod::Interest => {
                let scores = self.require_snapshot()?.score_map();
                let selection = select_top_spaced(&scores, &self.store.ids(), &spec)?;
                Ok(manifest(&self.store, &selection.ids, Some(&scores))?)
            }
            StoryboardMethod::Cluster => {
                let ids = cluster_baseline(&self.store, n_images)?;
                let scores = self.snapshot().map(|s| s.score_map());
                Ok(manifest(&self.store, &ids, scores.as_ref())?)
            }
        }
    }

    pub fn saliency(
        &self,
        id: &str,
        window: Option<u32>,
        stride: Option<u32>,
    ) -> Result<SaliencyMap> {
        let snapshot = self.require_snapshot()?;
        let extractor = self
            .extractor
            .as_deref()
            .ok_or_else(|| ServiceError::Precondition("no feature extractor configured".into()))?;
        let path = self
            .store
            .resolve_path(id)
            .ok_or_else(|| ServiceError::NotFound(format!("image {id:?}")))?;
        let cfg = OcclusionConfig {
            window_px: window.unwrap_or(self.config.occlusion.window_px),
            stride_px: stride.unwrap_or(self.config.occlusion.stride_px),
            ..self.config.occlusion
        };
        let image = load_image(path)?;
        Ok(occlusion_map(&image, extractor, &snapshot.model, &cfg)?)
    }
}
