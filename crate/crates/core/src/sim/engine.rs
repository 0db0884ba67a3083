use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::event::{EventKind, EventQueue, SimEvent};
use super::latency::{DelayClass, Leg};
use super::metrics::{self, PhaseMetrics, RoundMetrics, RunSummary};
use super::{Scenario, SimConfig};
use crate::attack::{maybe_poison, AttackConfig};
use crate::crypto::{Keyring, Signature};
use crate::error::{Error, Result};
use crate::fl::{self, Dataset, Row};
use crate::ledger::{root_payload, Ledger};
use crate::merkle::{open_window, MerklePath, MerkleTree, UpdateRecord, Window};
use crate::monitor::{
    audit_worker, AuditLogEntry, AuditResponder, AuditResult, Monitor, NormalizedDistance, ReliableSet,
};
use crate::oracle;
use crate::seed::{self, label};
use crate::types::{Digest, ModelParams, NodeId, Round, WorkerId};

/// Everything a finished run produced.
pub struct RunOutput {
    pub config: SimConfig,
    pub metrics: Vec<RoundMetrics>,
    pub phases: Vec<PhaseMetrics>,
    pub summary: RunSummary,
    pub dataset: Dataset,
    pub ledger: Ledger,
    pub audit_log: Vec<AuditLogEntry>,
    /// Reliable sets in publication order.
    pub published: Vec<ReliableSet>,
    /// Processed events, filled when `config.trace` is set.
    pub trace: Vec<SimEvent>,
}

#[derive(Serialize)]
struct ModelLine<'a> {
    height: u64,
    digest: Digest,
    weights: &'a [f64],
}

impl RunOutput {
    /// Write `metrics.csv`, `phases.csv`, `summary.json`, `dataset.csv`,
    /// `chain.jsonl`, `models.jsonl`, `audit.jsonl` and, when traced,
    /// `trace.jsonl` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        metrics::write_metrics_csv(&self.metrics, &dir.join("metrics.csv"))?;
        metrics::write_phases_csv(&self.phases, &dir.join("phases.csv"))?;
        metrics::write_summary_json(&self.summary, &dir.join("summary.json"))?;
        fl::write_csv(&self.dataset.rows, &dir.join("dataset.csv"))?;
        self.ledger.write_jsonl(&dir.join("chain.jsonl"))?;

        let mut models = String::new();
        for b in self.ledger.chain() {
            let params = self.ledger.store().get(&b.global_model_digest).expect("committed model stored");
            let line = ModelLine {
                height: b.height,
                digest: b.global_model_digest,
                weights: &params.weights,
            };
            models.push_str(&serde_json::to_string(&line).expect("serializable"));
            models.push('\n');
        }
        write_file(&dir.join("models.jsonl"), &models)?;

        let mut audits = String::new();
        for e in &self.audit_log {
            audits.push_str(&serde_json::to_string(e).expect("serializable"));
            audits.push('\n');
        }
        write_file(&dir.join("audit.jsonl"), &audits)?;

        if self.config.trace {
            let mut trace = String::new();
            for e in &self.trace {
                trace.push_str(&serde_json::to_string(e).expect("serializable"));
                trace.push('\n');
            }
            write_file(&dir.join("trace.jsonl"), &trace)?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

struct Worker {
    id: WorkerId,
    rows: Vec<Row>,
    tree: MerkleTree,
    records: Vec<UpdateRecord>,
    /// Local model of the round in flight.
    pending: Option<ModelParams>,
    /// Signed root of the round in flight.
    root: Option<(Digest, Signature)>,
}

/// A worker answering an audit from its own history, or not at all.
struct Responder<'a> {
    worker: &'a Worker,
    dropped: bool,
}

impl AuditResponder for Responder<'_> {
    fn open(&self, window: Window, tree_len: usize) -> Option<Vec<(UpdateRecord, MerklePath)>> {
        if self.dropped {
            return None;
        }
        let tree = self.worker.tree.prefix(tree_len).ok()?;
        open_window(&tree, &self.worker.records[..tree_len], window).ok()
    }
}

struct Cycle {
    round: Round,
    start: f64,
    window: Option<Window>,
    audits: Vec<AuditResult>,
    set: Option<ReliableSet>,
}

struct PendingAggregate {
    params: ModelParams,
    set_size: usize,
    protected: bool,
    sync_wait: f64,
}

struct Engine {
    cfg: SimConfig,
    attack: AttackConfig,
    rows: Vec<Row>,
    queue: EventQueue,
    trace: Vec<SimEvent>,
    ledger: Ledger,
    workers: Vec<Worker>,

    current: Round,
    round_start: f64,
    updates: BTreeMap<WorkerId, ModelParams>,
    updates_at: Option<f64>,
    aggregating: Option<PendingAggregate>,
    fl_view: Option<ReliableSet>,
    /// Round of the last finished monitoring cycle, published or not.
    last_cycle: Option<Round>,
    stopped: bool,

    monitor: Monitor,
    roots_in: BTreeMap<Round, Vec<(WorkerId, Digest, Signature)>>,
    mon_ready: VecDeque<Round>,
    cycle: Option<Cycle>,
    registered: BTreeMap<(WorkerId, Round), Digest>,
    mon_busy: BTreeMap<Round, f64>,
    published: Vec<ReliableSet>,

    epsilon: f64,
    streak: usize,
    convergence: Option<(Round, f64)>,
    metrics: Vec<RoundMetrics>,
    phases: Vec<PhaseMetrics>,
}

/// Run one scenario to convergence or to the round budget.
pub fn run_scenario(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dataset = fl::generate_dataset(cfg.seed, cfg.dataset);
    let obs: Vec<oracle::Obs> = dataset.rows.iter().map(|r| (r.features, r.label.target())).collect();
    let plateau = oracle::centralized_baseline(&obs).plateau_loss;

    let keyring = Keyring::generate(cfg.seed, cfg.workers, cfg.miners());
    let init = fl::init_model(cfg.seed);
    let ledger = Ledger::genesis(keyring, cfg.miners(), &init, cfg.on_chain_model);
    let workers = fl::shard_round_robin(&dataset.rows, cfg.workers as usize)
        .into_iter()
        .map(|s| Worker {
            id: s.owner,
            rows: s.rows,
            tree: MerkleTree::new(),
            records: Vec::new(),
            pending: None,
            root: None,
        })
        .collect();

    let mut engine = Engine {
        cfg: cfg.clone(),
        attack: cfg.attack_config(),
        rows: dataset.rows.clone(),
        queue: EventQueue::new(),
        trace: Vec::new(),
        ledger,
        workers,
        current: 0,
        round_start: 0.0,
        updates: BTreeMap::new(),
        updates_at: None,
        aggregating: None,
        fl_view: None,
        last_cycle: None,
        stopped: false,
        monitor: Monitor::new(cfg.monitor.clone()),
        roots_in: BTreeMap::new(),
        mon_ready: VecDeque::new(),
        cycle: None,
        registered: BTreeMap::new(),
        mon_busy: BTreeMap::new(),
        published: Vec::new(),
        epsilon: cfg.epsilon_factor * plateau,
        streak: 0,
        convergence: None,
        metrics: Vec::new(),
        phases: Vec::new(),
    };
    engine.start_round(0, 0.0);
    while let Some(ev) = engine.queue.pop() {
        if engine.cfg.trace {
            engine.trace.push(ev);
        }
        engine.handle(ev)?;
    }
    Ok(engine.finish(dataset, plateau))
}

impl Engine {
    fn delay(&self, class: DelayClass, round: Round, node: u32, leg: Leg) -> f64 {
        self.cfg.latency.sample(self.cfg.seed, class, round, node, leg)
    }

    fn fl_leader(&self) -> NodeId {
        NodeId::Miner(0)
    }

    fn mon_leader(&self) -> NodeId {
        NodeId::Miner(self.cfg.miners_fl)
    }

    fn worker_index(node: NodeId) -> usize {
        match node {
            NodeId::Worker(w) => w as usize,
            NodeId::Miner(_) => unreachable!("worker event on a miner"),
        }
    }

    fn handle(&mut self, ev: SimEvent) -> Result<()> {
        let now = ev.time_ms;
        let r = ev.round;
        match ev.kind {
            EventKind::ModelDownloaded => self.on_download(Self::worker_index(ev.node), r, now),
            EventKind::TrainDone => self.on_trained(Self::worker_index(ev.node), r, now),
            EventKind::UpdateSent => {
                let w = Self::worker_index(ev.node);
                let lm = self.workers[w].pending.take().expect("trained before upload");
                self.updates.insert(WorkerId(w as u32), lm);
                if self.updates.len() == self.workers.len() {
                    self.updates_at = Some(now);
                    self.try_aggregate(now)?;
                }
                Ok(())
            }
            EventKind::RootSubmitted => {
                let w = Self::worker_index(ev.node);
                let (root, sig) = self.workers[w].root.take().expect("root signed before submission");
                let inbox = self.roots_in.entry(r).or_default();
                inbox.push((WorkerId(w as u32), root, sig));
                if inbox.len() == self.workers.len() {
                    self.mon_ready.push_back(r);
                    self.try_start_cycle(now);
                }
                Ok(())
            }
            EventKind::AuditRequest => {
                let w = Self::worker_index(ev.node);
                let back = self.delay(DelayClass::WorkerMiner, r, w as u32, Leg::AuditResponse);
                self.queue.schedule(now + back, EventKind::AuditResponse, ev.node, r);
                Ok(())
            }
            EventKind::AuditResponse => self.on_audit_response(Self::worker_index(ev.node), r, now),
            EventKind::ReliableSetPublished => self.on_cycle_end(r, now),
            EventKind::AggregateDone => {
                let consensus = self.delay(DelayClass::Consensus, r, 0, Leg::Compute);
                let agg = self.aggregating.as_ref().expect("aggregation in flight");
                self.ledger.set_global_model(&agg.params)?;
                self.queue.schedule(now + consensus, EventKind::ConsensusDone, self.fl_leader(), r);
                Ok(())
            }
            EventKind::ConsensusDone => self.on_commit(r, now),
        }
    }

    fn start_round(&mut self, r: Round, t0: f64) {
        self.current = r;
        self.round_start = t0;
        self.updates.clear();
        self.updates_at = None;
        for w in 0..self.workers.len() {
            let d = self.delay(DelayClass::WorkerMiner, r, w as u32, Leg::Download);
            self.queue
                .schedule(t0 + d, EventKind::ModelDownloaded, NodeId::Worker(w as u32), r);
        }
    }

    fn on_download(&mut self, w: usize, r: Round, now: f64) -> Result<()> {
        let gm = self.ledger.fetch_global_model(r)?.clone();
        let worker = &self.workers[w];
        let honest = fl::local_train(&gm, &worker.rows, &self.cfg.train)?;
        let lm = maybe_poison(worker.id, r, honest, &self.attack, self.cfg.seed);
        self.workers[w].pending = Some(lm);
        let t = self.delay(DelayClass::Train, r, w as u32, Leg::Compute);
        self.queue.schedule(now + t, EventKind::TrainDone, NodeId::Worker(w as u32), r);
        Ok(())
    }

    fn on_trained(&mut self, w: usize, r: Round, now: f64) -> Result<()> {
        let gm_digest = self.ledger.get_global_model(r)?;
        let worker = &mut self.workers[w];
        let record = UpdateRecord {
            worker: worker.id,
            round: r,
            local_model: worker.pending.clone().expect("trained"),
            global_model_digest: gm_digest,
        };
        worker.tree.append_leaf(&record)?;
        worker.records.push(record);
        let root = worker.tree.root()?;
        let key = self.ledger.keyring().key(NodeId::Worker(w as u32)).expect("worker key");
        let sig = key.sign(&root_payload(WorkerId(w as u32), r, &root));
        self.workers[w].root = Some((root, sig));

        let node = NodeId::Worker(w as u32);
        let up = self.delay(DelayClass::WorkerMiner, r, w as u32, Leg::UploadFl);
        self.queue.schedule(now + up, EventKind::UpdateSent, node, r);
        if self.cfg.scenario.has_monitor() {
            let up = self.delay(DelayClass::WorkerMiner, r, w as u32, Leg::UploadMon);
            self.queue.schedule(now + up, EventKind::RootSubmitted, node, r);
        }
        Ok(())
    }

    /// Split `per_worker` costs over the monitoring miners (worker `w` goes
    /// to miner `w mod m`) and return the slowest miner's total.
    fn parallel_cost(&self, per_worker: impl Iterator<Item = (usize, f64)>) -> f64 {
        let m = self.cfg.miners_mon as usize;
        let mut load = vec![0.0; m];
        for (w, c) in per_worker {
            load[w % m] += c;
        }
        load.into_iter().fold(0.0, f64::max)
    }

    fn try_start_cycle(&mut self, now: f64) {
        if self.cycle.is_some() {
            return;
        }
        let Some(r) = self.mon_ready.pop_front() else {
            return;
        };
        let inbox = self.roots_in.remove(&r).unwrap_or_default();
        let check = self.parallel_cost(
            (0..self.workers.len()).map(|w| (w, self.delay(DelayClass::Verify, r, w as u32, Leg::RootCheck))),
        );
        let mut inbox = inbox;
        inbox.sort_by_key(|(w, _, _)| *w);
        for (w, root, sig) in inbox {
            if self.ledger.record_root(w, r, root, sig).is_ok() {
                self.registered.insert((w, r), root);
            }
        }
        let window = if self.monitor.cfg.is_audit_round(r) {
            let mut rng = seed::stream(self.cfg.seed, &[label::MONITOR, r]);
            Window::random(r as usize + 1, self.monitor.cfg.window, self.monitor.cfg.lookback, &mut rng)
        } else {
            None
        };
        self.cycle = Some(Cycle {
            round: r,
            start: now,
            window,
            audits: Vec::new(),
            set: None,
        });
        if window.is_some() {
            for w in 0..self.workers.len() {
                let d = self.delay(DelayClass::WorkerMiner, r, w as u32, Leg::AuditRequest);
                self.queue
                    .schedule(now + check + d, EventKind::AuditRequest, NodeId::Worker(w as u32), r);
            }
        } else {
            let leader = self.mon_leader();
            self.queue
                .schedule(now + check, EventKind::ReliableSetPublished, leader, r);
        }
    }

    fn on_audit_response(&mut self, w: usize, r: Round, now: f64) -> Result<()> {
        let cycle = self.cycle.as_ref().expect("audit belongs to a running cycle");
        let window = cycle.window.expect("audit round");
        let worker_id = WorkerId(w as u32);
        let dropped = self.cfg.drop_rate > 0.0
            && seed::stream(self.cfg.seed, &[label::DROP, r, w as u64]).gen_bool(self.cfg.drop_rate);
        let responder = Responder {
            worker: &self.workers[w],
            dropped,
        };
        let audit = match self.registered.get(&(worker_id, r)) {
            Some(root) => audit_worker(worker_id, &responder, r, root, window),
            None => AuditResult {
                worker: worker_id,
                window,
                records: Vec::new(),
                proofs_valid: false,
                responded: !dropped,
            },
        };
        let cycle = self.cycle.as_mut().expect("running cycle");
        cycle.audits.push(audit);
        if cycle.audits.len() < self.workers.len() {
            return Ok(());
        }
        let mut audits = std::mem::take(&mut cycle.audits);
        audits.sort_by_key(|a| a.worker);
        let check = self.parallel_cost(audits.iter().map(|a| {
            let w = a.worker.0;
            (w as usize, a.records.len() as f64 * self.delay(DelayClass::Verify, r, w, Leg::Compute))
        }));
        let store = self.ledger.store();
        let resolve = |d: &Digest| store.get(d).cloned();
        let set = self.monitor.conclude(r, &audits, &NormalizedDistance, &resolve)?;
        let leader = self.mon_leader();
        let publish = self.delay(DelayClass::MinerMiner, r, self.cfg.miners_fl, Leg::Publish);
        let cycle = self.cycle.as_mut().expect("running cycle");
        cycle.set = set;
        self.queue
            .schedule(now + check + publish, EventKind::ReliableSetPublished, leader, r);
        Ok(())
    }

    fn on_cycle_end(&mut self, r: Round, now: f64) -> Result<()> {
        let cycle = self.cycle.take().expect("cycle running");
        debug_assert_eq!(cycle.round, r);
        self.mon_busy.insert(r, now - cycle.start);
        self.last_cycle = Some(r);
        if let Some(set) = cycle.set {
            self.published.push(set.clone());
            self.fl_view = Some(set);
        }
        self.try_start_cycle(now);
        self.try_aggregate(now)
    }

    /// Whether the FL track may aggregate round `r` now.
    fn may_aggregate(&self, r: Round) -> bool {
        match self.cfg.scenario {
            Scenario::NoAttack | Scenario::Attack => true,
            Scenario::DefenseCoupled => self.mon_busy.contains_key(&r),
            Scenario::DefenseDecoupled => {
                let cfg = &self.monitor.cfg;
                match self.last_cycle {
                    Some(c) => r.saturating_sub(c) <= cfg.max_lag,
                    None => r <= cfg.first_audit_round() + cfg.max_lag,
                }
            }
        }
    }

    fn try_aggregate(&mut self, now: f64) -> Result<()> {
        let r = self.current;
        if self.stopped || self.aggregating.is_some() {
            return Ok(());
        }
        let Some(arrived) = self.updates_at else {
            return Ok(());
        };
        if !self.may_aggregate(r) {
            return Ok(());
        }
        let chosen = |w: &WorkerId| self.fl_view.as_ref().is_none_or(|s| s.workers.contains(w));
        let ups: Vec<(ModelParams, usize)> = self
            .updates
            .iter()
            .filter(|(w, _)| chosen(w))
            .map(|(w, lm)| (lm.clone(), self.workers[w.0 as usize].rows.len()))
            .collect();
        let set_size = ups.len();
        let agg = fl::aggregate(&ups, fl::MODEL_DIM)?;
        self.aggregating = Some(PendingAggregate {
            params: agg.params,
            set_size,
            protected: self.fl_view.is_some(),
            sync_wait: now - arrived,
        });
        let exchange = self.delay(DelayClass::MinerMiner, r, 0, Leg::Exchange);
        let leader = self.fl_leader();
        self.queue.schedule(now + exchange, EventKind::AggregateDone, leader, r);
        Ok(())
    }

    fn on_commit(&mut self, r: Round, now: f64) -> Result<()> {
        let online: Vec<u32> = (0..self.cfg.miners()).collect();
        self.ledger.propose_and_commit(&online, now)?;
        let agg = self.aggregating.take().expect("aggregation in flight");
        let (loss, accuracy) = fl::evaluate(&agg.params, &self.rows);
        let e2e = now - self.round_start;
        self.metrics.push(RoundMetrics {
            round: r,
            sim_time_ms: now,
            e2e_delay_ms: e2e,
            loss,
            accuracy,
            reliable_set_size: agg.set_size,
            protected: agg.protected,
        });
        self.phases.push(PhaseMetrics {
            round: r,
            fl_busy_ms: e2e - agg.sync_wait,
            mon_busy_ms: 0.0,
            sync_wait_ms: agg.sync_wait,
        });

        if self.convergence.is_none() {
            if loss <= self.epsilon {
                self.streak += 1;
                if self.streak == self.cfg.sustain {
                    let first = self.metrics[self.metrics.len() - self.cfg.sustain].clone();
                    self.convergence = Some((first.round, first.sim_time_ms));
                }
            } else {
                self.streak = 0;
            }
        }
        let done = (self.convergence.is_some() && self.cfg.stop_at_convergence) || r + 1 >= self.cfg.rounds;
        if done {
            self.stopped = true;
        } else {
            self.start_round(r + 1, now);
        }
        Ok(())
    }

    fn finish(mut self, dataset: Dataset, plateau: f64) -> RunOutput {
        for p in &mut self.phases {
            p.mon_busy_ms = self.mon_busy.get(&p.round).copied().unwrap_or(0.0);
        }
        let n = self.metrics.len().max(1) as f64;
        let fl_busy_total: f64 = self.phases.iter().map(|p| p.fl_busy_ms).sum();
        let mon_busy_total: f64 = self.phases.iter().map(|p| p.mon_busy_ms).sum();
        let last = self.metrics.last();
        let caught: BTreeSet<WorkerId> = self.monitor.caught().clone();
        let summary = RunSummary {
            mode: self.cfg.scenario.to_string(),
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            attackers: self.attack.attackers.len() as u32,
            rounds_run: self.metrics.len() as u64,
            plateau_loss: plateau,
            epsilon: self.epsilon,
            convergence_round: self.convergence.map(|c| c.0),
            convergence_time_ms: self.convergence.map(|c| c.1),
            t_x_round: self.published.first().map(|s| s.round),
            fl_busy_total_ms: fl_busy_total,
            mon_busy_total_ms: mon_busy_total,
            fl_busy_mean_ms: fl_busy_total / n,
            mon_busy_mean_ms: mon_busy_total / n,
            e2e_mean_ms: self.metrics.iter().map(|m| m.e2e_delay_ms).sum::<f64>() / n,
            sync_wait_total_ms: self.phases.iter().map(|p| p.sync_wait_ms).sum(),
            final_loss: last.map_or(f64::NAN, |m| m.loss),
            final_accuracy: last.map_or(f64::NAN, |m| m.accuracy),
            caught: caught.iter().map(|w| w.0).collect(),
            chain_height: self.ledger.tip().height,
        };
        RunOutput {
            config: self.cfg,
            metrics: self.metrics,
            phases: self.phases,
            summary,
            dataset,
            ledger: self.ledger,
            audit_log: self.monitor.log().to_vec(),
            published: self.published,
            trace: self.trace,
        }
    }
}
