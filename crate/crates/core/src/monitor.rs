//! Monitoring-miner logic: audit random windows of each worker's committed
//! history, score behavior, and publish the reliable set that aggregation
//! draws from.
//!
//! The default detector scores a worker by how far its local models move
//! from the global model they were trained on, relative to everyone else in
//! the same round:
//!
//! ```text
//! d(i, r)  = || LM(i, r) - GM(r) ||_2
//! m(r)     = median over audited workers j of d(j, r)
//! score(i) = median over window rounds r of d(i, r) / m(r)
//! ```
//!
//! Invalid proofs score `+inf`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merkle::{self, MerklePath, UpdateRecord, Window};
use crate::types::{Digest, ModelParams, Round, WorkerId};

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    /// Audit window size `z`.
    pub window: usize,
    /// Inclusion threshold on the behavior score.
    pub tau: f64,
    /// Maximum tolerated staleness of the reliable set, in rounds.
    pub max_lag: u64,
    /// Audit every `cadence` rounds.
    pub cadence: u64,
    /// Restrict window starts to the most recent `lookback + 1` positions.
    /// `None` draws from the whole history.
    pub lookback: Option<usize>,
    /// Keep workers out once they have been caught.
    pub sticky: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            window: 2,
            tau: 2.0,
            max_lag: 2,
            cadence: 1,
            lookback: Some(0),
            sticky: true,
        }
    }
}

impl MonitorConfig {
    /// Whether an audit runs after round `round` has been committed.
    pub fn is_audit_round(&self, round: Round) -> bool {
        round + 1 >= self.window as Round && round.is_multiple_of(self.cadence.max(1))
    }

    /// First audit round, which is also the round the system becomes
    /// protected.
    pub fn first_audit_round(&self) -> Round {
        (0..).find(|r| self.is_audit_round(*r)).expect("unbounded")
    }
}

/// A worker's answer to an audit request.
pub trait AuditResponder {
    /// Records and proofs for `window`, proven against the tree as it stood
    /// after `tree_len` leaves. `None` models a worker that does not answer.
    fn open(&self, window: Window, tree_len: usize) -> Option<Vec<(UpdateRecord, MerklePath)>>;
}

/// The revealed window `H(i, z)` of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub worker: WorkerId,
    pub window: Window,
    pub records: Vec<UpdateRecord>,
    pub proofs_valid: bool,
    pub responded: bool,
}

/// Ask `worker` to open `window` and check every proof against the root it
/// committed for `committed_round`.
pub fn audit_worker(
    worker: WorkerId,
    responder: &dyn AuditResponder,
    committed_round: Round,
    committed_root: &Digest,
    window: Window,
) -> AuditResult {
    let Some(opened) = responder.open(window, committed_round as usize + 1) else {
        return AuditResult {
            worker,
            window,
            records: Vec::new(),
            proofs_valid: false,
            responded: false,
        };
    };
    let history = committed_round as usize + 1;
    let consecutive = opened.len() == window.len()
        && opened
            .iter()
            .zip(window.rounds())
            .all(|((rec, _), r)| rec.round == r && rec.worker == worker);
    let proofs_ok = opened
        .iter()
        .all(|(rec, path)| merkle::verify_at(committed_root, &rec.leaf_digest(), path, rec.round as usize, history));
    AuditResult {
        worker,
        window,
        records: opened.into_iter().map(|(r, _)| r).collect(),
        proofs_valid: consecutive && proofs_ok,
        responded: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorScore {
    pub worker: WorkerId,
    /// `f64::INFINITY` marks a failed audit.
    pub score: f64,
    pub round: Round,
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-worker update distances and per-round population medians for one
/// audit round.
#[derive(Debug, Clone, Default)]
pub struct Population {
    distances: BTreeMap<WorkerId, BTreeMap<Round, f64>>,
    medians: BTreeMap<Round, f64>,
}

impl Population {
    pub fn from_audits(audits: &[AuditResult], resolve: &dyn Fn(&Digest) -> Option<ModelParams>) -> Self {
        let mut distances: BTreeMap<WorkerId, BTreeMap<Round, f64>> = BTreeMap::new();
        for a in audits.iter().filter(|a| a.proofs_valid) {
            let mut per_round = BTreeMap::new();
            let mut ok = true;
            for rec in &a.records {
                match resolve(&rec.global_model_digest) {
                    Some(gm) if gm.dim() == rec.local_model.dim() => {
                        per_round.insert(rec.round, rec.local_model.l2_distance(&gm));
                    }
                    _ => ok = false,
                }
            }
            if ok {
                distances.insert(a.worker, per_round);
            }
        }
        let mut by_round: BTreeMap<Round, Vec<f64>> = BTreeMap::new();
        for per_round in distances.values() {
            for (r, d) in per_round {
                by_round.entry(*r).or_default().push(*d);
            }
        }
        let medians = by_round.into_iter().map(|(r, mut v)| (r, median(&mut v))).collect();
        Self { distances, medians }
    }

    pub fn median_at(&self, round: Round) -> Option<f64> {
        self.medians.get(&round).copied()
    }

    pub fn distance(&self, worker: WorkerId, round: Round) -> Option<f64> {
        self.distances.get(&worker)?.get(&round).copied()
    }
}

/// Score one audit against its population.
pub fn score_behavior(audit: &AuditResult, population: &Population, at: Round) -> BehaviorScore {
    let inf = BehaviorScore {
        worker: audit.worker,
        score: f64::INFINITY,
        round: at,
    };
    if !audit.proofs_valid || audit.records.is_empty() {
        return inf;
    }
    let mut ratios = Vec::with_capacity(audit.records.len());
    for rec in &audit.records {
        let (Some(d), Some(m)) = (population.distance(audit.worker, rec.round), population.median_at(rec.round))
        else {
            return inf;
        };
        ratios.push(if m > 0.0 {
            d / m
        } else if d == 0.0 {
            1.0
        } else {
            f64::INFINITY
        });
    }
    BehaviorScore {
        worker: audit.worker,
        score: median(&mut ratios),
        round: at,
    }
}

/// Pluggable scoring rule over one round's audits.
pub trait Detector: Send + Sync {
    fn score_all(
        &self,
        audits: &[AuditResult],
        resolve: &dyn Fn(&Digest) -> Option<ModelParams>,
        at: Round,
    ) -> Vec<BehaviorScore>;
}

/// Median normalized update distance (see module docs).
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedDistance;

impl Detector for NormalizedDistance {
    fn score_all(
        &self,
        audits: &[AuditResult],
        resolve: &dyn Fn(&Digest) -> Option<ModelParams>,
        at: Round,
    ) -> Vec<BehaviorScore> {
        let pop = Population::from_audits(audits, resolve);
        audits.iter().map(|a| score_behavior(a, &pop, at)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliableSet {
    pub round: Round,
    pub workers: BTreeSet<WorkerId>,
    pub protected: bool,
}

impl ReliableSet {
    /// The pre-protection set: everyone, unprotected.
    pub fn unprotected(workers: impl IntoIterator<Item = WorkerId>) -> Self {
        Self {
            round: 0,
            workers: workers.into_iter().collect(),
            protected: false,
        }
    }
}

/// Workers scoring at most `tau`, excluding `barred`. If fewer than two
/// pass, the two lowest finite scores are taken instead.
pub fn publish_reliable_set(
    scores: &[BehaviorScore],
    tau: f64,
    round: Round,
    barred: &BTreeSet<WorkerId>,
) -> Result<ReliableSet> {
    if !scores.iter().any(|s| s.score.is_finite()) {
        return Err(Error::NoReliableWorkers(round));
    }
    let mut workers: BTreeSet<WorkerId> = scores
        .iter()
        .filter(|s| s.score <= tau && !barred.contains(&s.worker))
        .map(|s| s.worker)
        .collect();
    if workers.len() < 2 {
        let mut finite: Vec<&BehaviorScore> = scores.iter().filter(|s| s.score.is_finite()).collect();
        finite.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.worker.cmp(&b.worker)));
        workers = finite.iter().take(2).map(|s| s.worker).collect();
    }
    Ok(ReliableSet {
        round,
        workers,
        protected: true,
    })
}

/// True iff the reliable set is fresh enough for FL round `current`.
pub fn sync_check(set: &ReliableSet, current: Round, max_lag: u64) -> bool {
    current.saturating_sub(set.round) <= max_lag
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLogEntry {
    pub audit_round: Round,
    pub worker: WorkerId,
    pub window: Window,
    pub responded: bool,
    pub proofs_valid: bool,
    /// `None` for an infinite score.
    pub score: Option<f64>,
    pub included: bool,
    pub records: Vec<LoggedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    pub round: Round,
    pub local_model: Vec<f64>,
    pub global_model_digest: Digest,
}

/// Stateful monitoring track: remembers who has been caught and whether
/// protection has started.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub cfg: MonitorConfig,
    caught: BTreeSet<WorkerId>,
    latest: Option<ReliableSet>,
    log: Vec<AuditLogEntry>,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            cfg,
            caught: BTreeSet::new(),
            latest: None,
            log: Vec::new(),
        }
    }

    pub fn latest(&self) -> Option<&ReliableSet> {
        self.latest.as_ref()
    }

    pub fn is_protected(&self) -> bool {
        self.latest.is_some()
    }

    pub fn caught(&self) -> &BTreeSet<WorkerId> {
        &self.caught
    }

    pub fn log(&self) -> &[AuditLogEntry] {
        &self.log
    }

    /// Score a finished audit round and publish the resulting set. Returns
    /// `None`, keeping the previous set, when no worker answered.
    pub fn conclude(
        &mut self,
        round: Round,
        audits: &[AuditResult],
        detector: &dyn Detector,
        resolve: &dyn Fn(&Digest) -> Option<ModelParams>,
    ) -> Result<Option<ReliableSet>> {
        let scores = detector.score_all(audits, resolve, round);
        if self.cfg.sticky {
            for (a, s) in audits.iter().zip(&scores) {
                // unresponsive workers are only skipped for this round
                if a.responded && s.score > self.cfg.tau {
                    self.caught.insert(a.worker);
                }
            }
        }
        let set = match publish_reliable_set(&scores, self.cfg.tau, round, &self.caught) {
            Ok(set) => Some(set),
            Err(Error::NoReliableWorkers(_)) => None,
            Err(e) => return Err(e),
        };
        for (a, s) in audits.iter().zip(&scores) {
            self.log.push(AuditLogEntry {
                audit_round: round,
                worker: a.worker,
                window: a.window,
                responded: a.responded,
                proofs_valid: a.proofs_valid,
                score: s.score.is_finite().then_some(s.score),
                included: set.as_ref().is_some_and(|set| set.workers.contains(&a.worker)),
                records: a
                    .records
                    .iter()
                    .map(|r| LoggedRecord {
                        round: r.round,
                        local_model: r.local_model.weights.clone(),
                        global_model_digest: r.global_model_digest,
                    })
                    .collect(),
            });
        }
        if set.is_some() {
            self.latest = set.clone();
        }
        Ok(set)
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for e in &self.log {
            writeln!(f, "{}", serde_json::to_string(e).expect("serializable")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}
