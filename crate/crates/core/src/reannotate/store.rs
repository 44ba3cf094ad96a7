//! Event-sourced vote store: an append-only `events.log` plus an optional
//! `state.snap`, replayed on open.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{
    resolve_vote, AnnotationEvent, CostLedger, QueueStats, ReannotateError, StateCounts, VoteOutcome, VoteRecord,
    VoteState,
};
use crate::inference::Prediction;
use crate::labels::BinaryLabel;
use crate::seed::sha256_hex;

pub const EVENTS_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "state.snap";

/// Millisecond wall clock, injectable for tests.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance_s(&self, s: f64) {
        self.0.fetch_add((s * 1000.0).round() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Unix milliseconds.
    pub ts: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum EventBody {
    Enqueue {
        item_id: String,
        original: BinaryLabel,
        model: Prediction,
    },
    Lease {
        item_id: String,
        annotator_id: String,
        lease_token: String,
        expires_at: u64,
    },
    Submit {
        item_id: String,
        annotator_id: String,
        lease_token: String,
        label: BinaryLabel,
        elapsed_s: f64,
    },
    Expire {
        item_id: String,
        lease_token: String,
    },
}

/// A granted lease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lease {
    pub item_id: String,
    pub lease_token: String,
    pub annotator_id: String,
    pub expires_at: u64,
    pub ttl_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TokenStatus {
    Active,
    Expired,
    Used,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TokenInfo {
    item_id: String,
    annotator_id: String,
    expires_at: u64,
    status: TokenStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// Sync the log to disk before acknowledging each append.
    pub fsync: bool,
    /// Write a snapshot after this many events since the last one.
    pub snapshot_every: Option<u64>,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            fsync: true,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    records: Vec<VoteRecord>,
    tokens: BTreeMap<String, TokenInfo>,
}

#[derive(Debug, Default)]
struct State {
    seq: u64,
    records: HashMap<String, VoteRecord>,
    tokens: HashMap<String, TokenInfo>,
    waiting: BTreeSet<(u64, String)>,
    active: HashMap<String, String>,
    counts: StateCounts,
    next_order: u64,
}

impl State {
    fn from_snapshot(snap: Snapshot) -> Self {
        let mut st = State {
            seq: snap.seq,
            ..Default::default()
        };
        for rec in snap.records {
            st.index(&rec);
            st.records.insert(rec.item_id.clone(), rec);
        }
        for (token, info) in snap.tokens {
            if info.status == TokenStatus::Active {
                st.active.insert(info.item_id.clone(), token.clone());
            }
            st.tokens.insert(token, info);
        }
        st
    }

    fn index(&mut self, rec: &VoteRecord) {
        self.counts.total += 1;
        self.counts.add(rec.state, 1);
        if rec.model_failed() {
            self.counts.model_failures += 1;
        }
        if matches!(rec.state, VoteState::Queued | VoteState::Failed) {
            self.waiting.insert((rec.order, rec.item_id.clone()));
        }
        self.next_order = self.next_order.max(rec.order + 1);
    }

    fn snapshot(&self) -> Snapshot {
        let mut records: Vec<VoteRecord> = self.records.values().cloned().collect();
        records.sort_by_key(|r| r.order);
        Snapshot {
            seq: self.seq,
            records,
            tokens: self.tokens.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    fn active_token<'a>(&'a self, item_id: &str, token: &str) -> Result<&'a TokenInfo, String> {
        let info = self.tokens.get(token).ok_or("unknown lease token")?;
        if info.item_id != item_id {
            return Err(format!("token belongs to {:?}", info.item_id));
        }
        if info.status != TokenStatus::Active {
            return Err(format!("lease is {:?}", info.status));
        }
        Ok(info)
    }

    /// Whether `body` is a legal next event.
    fn check(&self, body: &EventBody) -> Result<(), String> {
        match body {
            EventBody::Enqueue { item_id, .. } => {
                if self.records.contains_key(item_id) {
                    return Err(format!("item {item_id:?} enqueued twice"));
                }
            }
            EventBody::Lease {
                item_id, lease_token, ..
            } => {
                let rec = self.records.get(item_id).ok_or(format!("unknown item {item_id:?}"))?;
                if !self.waiting.contains(&(rec.order, item_id.clone())) {
                    return Err(format!("item {item_id:?} is not waiting ({})", rec.state.as_str()));
                }
                if self.tokens.contains_key(lease_token) {
                    return Err("lease token reused".into());
                }
            }
            EventBody::Submit {
                item_id,
                lease_token,
                elapsed_s,
                ..
            } => {
                self.active_token(item_id, lease_token)?;
                if !(elapsed_s.is_finite() && *elapsed_s >= 0.0) {
                    return Err(format!("bad elapsed_s {elapsed_s}"));
                }
            }
            EventBody::Expire { item_id, lease_token } => {
                self.active_token(item_id, lease_token)?;
            }
        }
        Ok(())
    }

    fn set_state(&mut self, item_id: &str, state: VoteState) -> &mut VoteRecord {
        let rec = self.records.get_mut(item_id).expect("checked item");
        self.counts.add(rec.state, -1);
        self.counts.add(state, 1);
        rec.state = state;
        rec
    }

    /// Apply an event that passed [`State::check`].
    fn apply(&mut self, ev: &Event) {
        match &ev.body {
            EventBody::Enqueue {
                item_id,
                original,
                model,
            } => {
                let rec = VoteRecord::new(item_id, self.next_order, *original, *model);
                self.index(&rec);
                self.records.insert(item_id.clone(), rec);
            }
            EventBody::Lease {
                item_id,
                annotator_id,
                lease_token,
                expires_at,
            } => {
                let order = self.set_state(item_id, VoteState::Leased).order;
                self.waiting.remove(&(order, item_id.clone()));
                self.active.insert(item_id.clone(), lease_token.clone());
                self.tokens.insert(
                    lease_token.clone(),
                    TokenInfo {
                        item_id: item_id.clone(),
                        annotator_id: annotator_id.clone(),
                        expires_at: *expires_at,
                        status: TokenStatus::Active,
                    },
                );
            }
            EventBody::Submit {
                item_id,
                annotator_id,
                lease_token,
                label,
                elapsed_s,
            } => {
                let rec = &self.records[item_id];
                let outcome = resolve_vote(rec.original, rec.model, Some(*label));
                let rec = self.set_state(item_id, outcome.state);
                rec.human = Some(*label);
                rec.final_label = outcome.final_label;
                rec.annotator_id = Some(annotator_id.clone());
                rec.elapsed_s = Some(*elapsed_s);
                self.active.remove(item_id);
                self.tokens.get_mut(lease_token).expect("checked token").status = TokenStatus::Used;
            }
            EventBody::Expire { item_id, lease_token } => {
                let back = self.records[item_id].waiting_state();
                let order = self.set_state(item_id, back).order;
                self.waiting.insert((order, item_id.clone()));
                self.active.remove(item_id);
                self.tokens.get_mut(lease_token).expect("checked token").status = TokenStatus::Expired;
            }
        }
        self.seq = ev.seq;
    }

    fn due_expiries(&self, now: u64) -> Vec<EventBody> {
        let mut due: Vec<(u64, &String, &String)> = self
            .active
            .iter()
            .filter(|(_, token)| self.tokens[*token].expires_at <= now)
            .map(|(item, token)| (self.records[item].order, item, token))
            .collect();
        due.sort();
        due.into_iter()
            .map(|(_, item, token)| EventBody::Expire {
                item_id: item.clone(),
                lease_token: token.clone(),
            })
            .collect()
    }
}

struct Inner {
    state: State,
    log: File,
    snapshot_seq: u64,
}

/// The vote table and lease queue. All mutations go through one lock and are
/// on disk before they are acknowledged.
pub struct Store {
    dir: PathBuf,
    opts: StoreOptions,
    clock: Arc<dyn Clock>,
    nonce: u64,
    inner: Mutex<Inner>,
    view: RwLock<(u64, StateCounts)>,
}

impl Store {
    pub fn open(dir: &Path, clock: Arc<dyn Clock>, opts: StoreOptions) -> Result<Self, ReannotateError> {
        fs::create_dir_all(dir).map_err(|e| ReannotateError::io(dir, e))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot = match fs::read_to_string(&snap_path) {
            Ok(text) => serde_json::from_str::<Snapshot>(&text).map_err(|e| ReannotateError::Corrupt {
                path: snap_path.clone(),
                line: e.line(),
                last_good_seq: 0,
                reason: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Snapshot::default(),
            Err(e) => return Err(ReannotateError::io(&snap_path, e)),
        };
        let snapshot_seq = snapshot.seq;
        let mut state = State::from_snapshot(snapshot);

        let log_path = dir.join(EVENTS_FILE);
        let text = match fs::read_to_string(&log_path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ReannotateError::io(&log_path, e)),
        };
        for (i, line) in text.lines().enumerate() {
            let corrupt = |state: &State, reason: String| ReannotateError::Corrupt {
                path: log_path.clone(),
                line: i + 1,
                last_good_seq: state.seq,
                reason,
            };
            let ev: Event = serde_json::from_str(line).map_err(|e| corrupt(&state, e.to_string()))?;
            if ev.seq <= snapshot_seq {
                continue;
            }
            if ev.seq != state.seq + 1 {
                return Err(corrupt(&state, format!("expected seq {}, found {}", state.seq + 1, ev.seq)));
            }
            state.check(&ev.body).map_err(|r| corrupt(&state, r))?;
            state.apply(&ev);
        }

        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ReannotateError::io(&log_path, e))?;
        if !text.is_empty() && !text.ends_with('\n') {
            log.write_all(b"\n").map_err(|e| ReannotateError::io(&log_path, e))?;
        }
        let view = RwLock::new((state.seq, state.counts));
        Ok(Store {
            dir: dir.to_path_buf(),
            opts,
            clock,
            nonce: rand::random(),
            inner: Mutex::new(Inner {
                state,
                log,
                snapshot_seq,
            }),
            view,
        })
    }

    pub fn open_default(dir: &Path) -> Result<Self, ReannotateError> {
        Self::open(dir, Arc::new(SystemClock), StoreOptions::default())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Sequence number of the last applied event.
    pub fn seq(&self) -> u64 {
        self.view.read().0
    }

    pub fn counts(&self) -> StateCounts {
        self.view.read().1
    }

    pub fn record(&self, item_id: &str) -> Option<VoteRecord> {
        self.inner.lock().state.records.get(item_id).cloned()
    }

    /// All records in ingest order.
    pub fn records(&self) -> Vec<VoteRecord> {
        self.inner.lock().state.snapshot().records
    }

    pub fn cost_ledger(&self) -> CostLedger {
        CostLedger::from_records(&self.records())
    }

    fn append(&self, inner: &mut Inner, bodies: Vec<EventBody>) -> Result<(), ReannotateError> {
        if bodies.is_empty() {
            return Ok(());
        }
        let ts = self.clock.now_ms();
        let events: Vec<Event> = bodies
            .into_iter()
            .zip(inner.state.seq + 1..)
            .map(|(body, seq)| Event { seq, ts, body })
            .collect();
        let mut buf = Vec::new();
        for ev in &events {
            serde_json::to_writer(&mut buf, ev).expect("event serializes");
            buf.push(b'\n');
        }
        let log_path = self.dir.join(EVENTS_FILE);
        inner.log.write_all(&buf).map_err(|e| ReannotateError::io(&log_path, e))?;
        if self.opts.fsync {
            inner.log.sync_data().map_err(|e| ReannotateError::io(&log_path, e))?;
        }
        for ev in &events {
            inner.state.apply(ev);
        }
        *self.view.write() = (inner.state.seq, inner.state.counts);
        if let Some(every) = self.opts.snapshot_every {
            if inner.state.seq - inner.snapshot_seq >= every {
                self.write_snapshot_locked(inner)?;
            }
        }
        Ok(())
    }

    fn expire_due(&self, inner: &mut Inner) -> Result<usize, ReannotateError> {
        let due = inner.state.due_expiries(self.clock.now_ms());
        let n = due.len();
        self.append(inner, due)?;
        Ok(n)
    }

    /// Return every lease past its deadline to the queue.
    pub fn expire_leases(&self) -> Result<usize, ReannotateError> {
        let mut inner = self.inner.lock();
        self.expire_due(&mut inner)
    }

    /// Record votes for items not yet in the store. Returns the counts over
    /// all of `inputs`, so a repeat call reports the same numbers.
    pub fn enqueue(&self, inputs: &[(String, BinaryLabel, Prediction)]) -> Result<QueueStats, ReannotateError> {
        let mut inner = self.inner.lock();
        let mut stats = QueueStats::default();
        let mut fresh = Vec::new();
        let mut seen = BTreeSet::new();
        for (item_id, original, model) in inputs {
            if !seen.insert(item_id.as_str()) {
                return Err(ReannotateError::Invalid(format!("item {item_id:?} listed twice")));
            }
            match inner.state.records.get(item_id) {
                Some(rec) if rec.original != *original || rec.model != *model => {
                    return Err(ReannotateError::EnqueueConflict {
                        item_id: item_id.clone(),
                    })
                }
                Some(_) => {}
                None => fresh.push(EventBody::Enqueue {
                    item_id: item_id.clone(),
                    original: *original,
                    model: *model,
                }),
            }
            match resolve_vote(*original, *model, None).state {
                VoteState::Agreed => stats.agreed += 1,
                VoteState::Failed => stats.failed += 1,
                _ => stats.queued += 1,
            }
        }
        self.append(&mut inner, fresh)?;
        Ok(stats)
    }

    /// Lease the oldest waiting item, or `None` when nothing is waiting.
    pub fn lease_next(&self, annotator_id: &str, ttl_s: f64) -> Result<Option<Lease>, ReannotateError> {
        if annotator_id.trim().is_empty() {
            return Err(ReannotateError::Invalid("empty annotator id".into()));
        }
        if !(ttl_s.is_finite() && ttl_s > 0.0) {
            return Err(ReannotateError::Invalid(format!("ttl_s must be positive, got {ttl_s}")));
        }
        let mut inner = self.inner.lock();
        self.expire_due(&mut inner)?;
        let Some((_, item_id)) = inner.state.waiting.first().cloned() else {
            return Ok(None);
        };
        let seq = inner.state.seq + 1;
        let lease_token = sha256_hex(format!("{}:{seq}:{item_id}", self.nonce).as_bytes())[..32].to_string();
        let expires_at = self.clock.now_ms() + (ttl_s * 1000.0).round() as u64;
        let lease = Lease {
            item_id: item_id.clone(),
            lease_token: lease_token.clone(),
            annotator_id: annotator_id.to_string(),
            expires_at,
            ttl_s,
        };
        self.append(
            &mut inner,
            vec![EventBody::Lease {
                item_id,
                annotator_id: annotator_id.to_string(),
                lease_token,
                expires_at,
            }],
        )?;
        Ok(Some(lease))
    }

    /// Accept a human label against a live lease.
    pub fn submit(&self, event: &AnnotationEvent) -> Result<VoteOutcome, ReannotateError> {
        if !(event.elapsed_s.is_finite() && event.elapsed_s >= 0.0) {
            return Err(ReannotateError::Invalid(format!(
                "elapsed_s must be a non-negative number, got {}",
                event.elapsed_s
            )));
        }
        let mut inner = self.inner.lock();
        self.expire_due(&mut inner)?;
        let info = inner
            .state
            .tokens
            .get(&event.lease_token)
            .ok_or(ReannotateError::UnknownLease)?
            .clone();
        if info.item_id != event.item_id {
            return Err(ReannotateError::LeaseMismatch {
                leased: info.item_id,
                submitted: event.item_id.clone(),
            });
        }
        match info.status {
            TokenStatus::Used => {
                return Err(ReannotateError::Duplicate {
                    item_id: info.item_id.clone(),
                    outcome: inner.state.records[&info.item_id].outcome(),
                })
            }
            TokenStatus::Expired => return Err(ReannotateError::LeaseExpired { item_id: info.item_id }),
            TokenStatus::Active => {}
        }
        let annotator_id = if event.annotator_id.trim().is_empty() {
            info.annotator_id
        } else {
            event.annotator_id.clone()
        };
        self.append(
            &mut inner,
            vec![EventBody::Submit {
                item_id: event.item_id.clone(),
                annotator_id,
                lease_token: event.lease_token.clone(),
                label: event.label,
                elapsed_s: event.elapsed_s,
            }],
        )?;
        Ok(inner.state.records[&event.item_id].outcome())
    }

    fn write_snapshot_locked(&self, inner: &mut Inner) -> Result<(), ReannotateError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec(&inner.state.snapshot()).expect("snapshot serializes");
        let write = || -> std::io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
            if let Ok(d) = File::open(&self.dir) {
                let _ = d.sync_all();
            }
            Ok(())
        };
        write().map_err(|e| ReannotateError::io(&path, e))?;
        inner.snapshot_seq = inner.state.seq;
        Ok(())
    }

    /// Write `state.snap` atomically.
    pub fn write_snapshot(&self) -> Result<(), ReannotateError> {
        let mut inner = self.inner.lock();
        self.write_snapshot_locked(&mut inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Negative as N, Positive as P};

    fn store(dir: &Path, clock: &Arc<ManualClock>) -> Store {
        Store::open(dir, clock.clone(), StoreOptions::default()).unwrap()
    }

    fn inputs() -> Vec<(String, BinaryLabel, Prediction)> {
        vec![
            ("a".into(), P, P.into()),
            ("b".into(), P, N.into()),
            ("c".into(), N, Prediction::PredictionFailed),
            ("d".into(), N, P.into()),
        ]
    }

    fn submit(s: &Store, lease: &Lease, label: BinaryLabel) -> Result<VoteOutcome, ReannotateError> {
        s.submit(&AnnotationEvent {
            item_id: lease.item_id.clone(),
            annotator_id: String::new(),
            label,
            elapsed_s: 30.0,
            lease_token: lease.lease_token.clone(),
        })
    }

    #[test]
    fn enqueue_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        let s = store(dir.path(), &clock);
        let st = s.enqueue(&inputs()).unwrap();
        assert_eq!(st, QueueStats { agreed: 1, queued: 2, failed: 1 });
        let seq = s.seq();
        assert_eq!(s.enqueue(&inputs()).unwrap(), st);
        assert_eq!(s.seq(), seq);
        let c = s.counts();
        assert_eq!((c.total, c.agreed, c.queued, c.failed, c.model_failures), (4, 1, 2, 1, 1));

        let mut changed = inputs();
        changed[1].2 = P.into();
        assert!(matches!(s.enqueue(&changed), Err(ReannotateError::EnqueueConflict { .. })));
    }

    #[test]
    fn lease_is_fifo_and_submit_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        let s = store(dir.path(), &clock);
        s.enqueue(&inputs()).unwrap();
        let l1 = s.lease_next("ann", 60.0).unwrap().unwrap();
        let l2 = s.lease_next("ann", 60.0).unwrap().unwrap();
        let l3 = s.lease_next("ann", 60.0).unwrap().unwrap();
        assert_eq!([&l1.item_id, &l2.item_id, &l3.item_id], ["b", "c", "d"]);
        assert!(s.lease_next("ann", 60.0).unwrap().is_none());
        assert_eq!(s.counts().leased, 3);

        let out = submit(&s, &l1, N).unwrap();
        assert_eq!(out, VoteOutcome { final_label: Some(N), state: VoteState::Resolved });
        assert!(matches!(submit(&s, &l1, N), Err(ReannotateError::Duplicate { .. })));
        assert_eq!(submit(&s, &l2, P).unwrap().final_label, Some(P));
        let rec = s.record("b").unwrap();
        assert_eq!((rec.human, rec.annotator_id.as_deref(), rec.elapsed_s), (Some(N), Some("ann"), Some(30.0)));
    }

    #[test]
    fn expiry_requeues_and_rejects_late_submit() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        let s = store(dir.path(), &clock);
        s.enqueue(&inputs()).unwrap();
        let l = s.lease_next("ann", 10.0).unwrap().unwrap();
        clock.advance_s(10.0);
        let before = s.record("b").unwrap();
        assert!(matches!(submit(&s, &l, N), Err(ReannotateError::LeaseExpired { .. })));
        let after = s.record("b").unwrap();
        assert_eq!(after.state, VoteState::Queued);
        assert_eq!(after.human, before.human);
        let again = s.lease_next("other", 10.0).unwrap().unwrap();
        assert_eq!(again.item_id, "b");
        assert_ne!(again.lease_token, l.lease_token);
        assert!(matches!(
            s.submit(&AnnotationEvent {
                item_id: "b".into(),
                annotator_id: "x".into(),
                label: N,
                elapsed_s: 1.0,
                lease_token: "nope".into()
            }),
            Err(ReannotateError::UnknownLease)
        ));
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        let records = {
            let s = store(dir.path(), &clock);
            s.enqueue(&inputs()).unwrap();
            let l = s.lease_next("ann", 60.0).unwrap().unwrap();
            submit(&s, &l, N).unwrap();
            s.lease_next("ann", 60.0).unwrap().unwrap();
            s.records()
        };
        let s = store(dir.path(), &clock);
        assert_eq!(s.records(), records);
        assert_eq!(s.counts().leased, 1);

        s.write_snapshot().unwrap();
        let seq = s.seq();
        drop(s);
        let s = store(dir.path(), &clock);
        assert_eq!((s.seq(), s.records()), (seq, records));
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        store(dir.path(), &clock).enqueue(&inputs()).unwrap();
        let log = dir.path().join(EVENTS_FILE);
        let mut text = fs::read_to_string(&log).unwrap();
        text.push_str("{\"seq\":5,\"ts\":1,\"kind\":\"LEA");
        fs::write(&log, text).unwrap();
        match Store::open(dir.path(), clock, StoreOptions::default()) {
            Err(ReannotateError::Corrupt { line, last_good_seq, .. }) => assert_eq!((line, last_good_seq), (5, 4)),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("corrupt log accepted"),
        }
    }

    #[test]
    fn event_wire_shape() {
        let ev = Event {
            seq: 3,
            ts: 7,
            body: EventBody::Expire {
                item_id: "x".into(),
                lease_token: "t".into(),
            },
        };
        let line = serde_json::to_string(&ev).unwrap();
        assert_eq!(line, r#"{"seq":3,"ts":7,"kind":"EXPIRE","item_id":"x","lease_token":"t"}"#);
        assert_eq!(serde_json::from_str::<Event>(&line).unwrap(), ev);
    }
}
