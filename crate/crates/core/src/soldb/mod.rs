//! Shared solution database.
//!
//! Every evaluated solution is appended to `records.log` (one JSON object per
//! line) and indexed in memory. Valid records compete for the best slot of the
//! feature cell named by their signature, so a single dominant solution can
//! hold at most one cell. Parents are drawn from the cell bests with a
//! softmax over score ranks.
//!
//! All methods take `&self`; a single mutex serializes writers and gives
//! readers a consistent view.

mod record;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use thiserror::Error;

pub use crate::canvas::Temperature;
pub use record::{
    BudgetStamp, FeatureSignature, MetricsRecord, ParseIdError, SolutionId, SolutionRecord,
    INVALID_SCORE,
};

pub const RECORDS_FILE: &str = "records.log";
pub const SNAPSHOTS_DIR: &str = "snapshots";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("solution {0} is already stored")]
    DuplicateId(SolutionId),
    #[error("parent {parent} of {child} is not in the database")]
    UnknownParent { child: SolutionId, parent: SolutionId },
    #[error("record violates invariants: {0}")]
    InvalidRecord(String),
    #[error("the database holds no valid solution")]
    EmptyDatabase,
    #[error("requested {k} parents but only {available} cell bests are available")]
    KTooLarge { k: usize, available: usize },
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<std::io::Error> for DbError {
    fn from(e: std::io::Error) -> Self {
        DbError::StorageFailure(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Valid, and strictly better than the previous best of its cell.
    AcceptedAsCellBest,
    /// Stored, but not a cell best.
    Archived,
    /// Valid, but its code is byte-identical to an earlier valid record; stored
    /// for lineage and never a cell best or elite.
    RejectedDuplicate,
}

#[derive(Default)]
struct Inner {
    records: Vec<SolutionRecord>,
    index: HashMap<SolutionId, usize>,
    codes: HashSet<String>,
    cells: BTreeMap<FeatureSignature, usize>,
    elite: Option<usize>,
    next_serial: u64,
    log: Option<File>,
}

impl Inner {
    fn admit(&mut self, record: SolutionRecord) -> Result<InsertOutcome, DbError> {
        let pos = self.records.len();
        let outcome = if !record.valid {
            InsertOutcome::Archived
        } else if self.codes.contains(&record.code) {
            InsertOutcome::RejectedDuplicate
        } else {
            self.codes.insert(record.code.clone());
            let beats_elite = self
                .elite
                .is_none_or(|e| record.score >= self.records[e].score);
            if beats_elite {
                self.elite = Some(pos);
            }
            match self.cells.get(&record.features) {
                Some(&incumbent) if self.records[incumbent].score >= record.score => {
                    InsertOutcome::Archived
                }
                _ => {
                    self.cells.insert(record.features.clone(), pos);
                    InsertOutcome::AcceptedAsCellBest
                }
            }
        };
        self.next_serial = self.next_serial.max(record.id.serial + 1);
        self.index.insert(record.id, pos);
        self.records.push(record);
        Ok(outcome)
    }

    fn validate(&self, record: &SolutionRecord) -> Result<(), DbError> {
        record.check().map_err(DbError::InvalidRecord)?;
        if self.index.contains_key(&record.id) {
            return Err(DbError::DuplicateId(record.id));
        }
        for parent in &record.parent_ids {
            if !self.index.contains_key(parent) {
                return Err(DbError::UnknownParent {
                    child: record.id,
                    parent: *parent,
                });
            }
        }
        Ok(())
    }

    /// Cell bests ordered best first; ties go to the more recent insertion.
    fn ranked_cell_bests(&self) -> Vec<usize> {
        let mut ranked: Vec<usize> = self.cells.values().copied().collect();
        ranked.sort_by(|&a, &b| {
            self.records[b]
                .score
                .total_cmp(&self.records[a].score)
                .then(b.cmp(&a))
        });
        ranked
    }
}

pub struct SolutionDb {
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl SolutionDb {
    /// A database that lives only in memory.
    pub fn in_memory() -> Self {
        SolutionDb {
            dir: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Opens (or creates) the database stored in `dir`, replaying its log.
    ///
    /// A trailing partial line left by a crash mid-append is cut off; any other
    /// unreadable line is a [`DbError::StorageFailure`].
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, DbError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(dir.join(SNAPSHOTS_DIR))?;
        let path = dir.join(RECORDS_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;

        let mut inner = Inner::default();
        let mut reader = BufReader::new(&file);
        let mut offset = 0u64;
        let mut line = String::new();
        let mut line_no = 0usize;
        let mut truncate_at = None;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = line.ends_with('\n');
            let parsed = serde_json::from_str::<SolutionRecord>(line.trim_end());
            match parsed {
                Ok(record) if complete => {
                    inner.validate(&record)?;
                    inner.admit(record)?;
                }
                _ if !complete => {
                    log::warn!("{}: dropping partial trailing record at line {line_no}", path.display());
                    truncate_at = Some(offset);
                    break;
                }
                Err(e) => {
                    return Err(DbError::StorageFailure(format!(
                        "{}: line {line_no}: {e}",
                        path.display()
                    )))
                }
                Ok(_) => unreachable!(),
            }
            offset += n as u64;
        }
        drop(reader);
        if let Some(at) = truncate_at {
            file.set_len(at)?;
            file.seek(SeekFrom::End(0))?;
        }
        inner.log = Some(file);
        Ok(SolutionDb {
            dir: Some(dir),
            inner: Mutex::new(inner),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Directory for a solution's experiment snapshots, when persistent.
    pub fn snapshot_dir(&self, id: &SolutionId) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(SNAPSHOTS_DIR).join(id.to_string()))
    }

    /// Persists `record` and updates the cell and elite indexes atomically.
    pub fn insert(&self, record: SolutionRecord) -> Result<InsertOutcome, DbError> {
        let mut inner = self.inner.lock();
        inner.validate(&record)?;
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_string(&record)
                .map_err(|e| DbError::StorageFailure(e.to_string()))?;
            line.push('\n');
            log.write_all(line.as_bytes())?;
            log.sync_data()?;
        }
        inner.admit(record)
    }

    /// Allocates the next id; `serial` increases monotonically per database.
    pub fn next_id(&self, lead: u32, round: u32, count: u32) -> SolutionId {
        let mut inner = self.inner.lock();
        let serial = inner.next_serial;
        inner.next_serial += 1;
        SolutionId {
            lead,
            round,
            count,
            serial,
        }
    }

    pub fn get(&self, id: &SolutionId) -> Option<SolutionRecord> {
        let inner = self.inner.lock();
        inner.index.get(id).map(|&i| inner.records[i].clone())
    }

    pub fn contains(&self, id: &SolutionId) -> bool {
        self.inner.lock().index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.inner.lock().records.iter().filter(|r| r.valid).count()
    }

    /// All records in insertion order.
    pub fn records(&self) -> Vec<SolutionRecord> {
        self.inner.lock().records.clone()
    }

    /// Best record per feature cell, ordered by cell key.
    pub fn cell_bests(&self) -> Vec<(FeatureSignature, SolutionRecord)> {
        let inner = self.inner.lock();
        inner
            .cells
            .iter()
            .map(|(k, &i)| (k.clone(), inner.records[i].clone()))
            .collect()
    }

    /// The valid record with the highest score; ties go to the newer one.
    pub fn current_elite(&self) -> Result<SolutionRecord, DbError> {
        let inner = self.inner.lock();
        inner
            .elite
            .map(|i| inner.records[i].clone())
            .ok_or(DbError::EmptyDatabase)
    }

    /// Selection probabilities of a single draw, best-ranked first.
    pub fn selection_probabilities(
        &self,
        temperature: Temperature,
    ) -> Result<Vec<(SolutionId, f64)>, DbError> {
        let inner = self.inner.lock();
        let ranked = inner.ranked_cell_bests();
        if ranked.is_empty() {
            return Err(DbError::EmptyDatabase);
        }
        let ranks: Vec<usize> = (0..ranked.len()).collect();
        let weights = rank_weights(&ranks, temperature);
        let total: f64 = weights.iter().sum();
        Ok(ranked
            .iter()
            .zip(weights)
            .map(|(&i, w)| (inner.records[i].id, w / total))
            .collect())
    }

    /// Draws `k` distinct cell-best records.
    ///
    /// Each draw picks among the remaining candidates with probability
    /// proportional to `exp(-rank / temperature)`, rank 0 being the best score.
    /// [`Temperature::Uniform`] gives equal weights.
    pub fn sample_parents<R: Rng + ?Sized>(
        &self,
        k: usize,
        temperature: Temperature,
        rng: &mut R,
    ) -> Result<Vec<SolutionRecord>, DbError> {
        let inner = self.inner.lock();
        let ranked = inner.ranked_cell_bests();
        if ranked.is_empty() {
            return Err(DbError::EmptyDatabase);
        }
        if k == 0 || k > ranked.len() {
            return Err(DbError::KTooLarge {
                k,
                available: ranked.len(),
            });
        }
        let mut remaining: Vec<usize> = (0..ranked.len()).collect();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let weights = rank_weights(&remaining, temperature);
            let slot = WeightedIndex::new(&weights)
                .expect("top remaining weight is 1")
                .sample(rng);
            let rank = remaining.remove(slot);
            picked.push(inner.records[ranked[rank]].clone());
        }
        Ok(picked)
    }
}

/// Unnormalized weights for the given (ascending) ranks. Shifted so the best
/// remaining rank has weight 1, which keeps tiny temperatures finite.
fn rank_weights(ranks: &[usize], temperature: Temperature) -> Vec<f64> {
    match temperature {
        Temperature::Uniform => vec![1.0; ranks.len()],
        Temperature::Value(tau) => {
            let base = ranks.iter().copied().min().unwrap_or(0);
            ranks
                .iter()
                .map(|&r| (-((r - base) as f64) / tau).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn rec(db: &SolutionDb, score: Option<f64>, cell: &[u32], code: &str) -> SolutionRecord {
        let id = db.next_id(1, 1, 0);
        SolutionRecord {
            id,
            idea: format!("idea {}", id.serial),
            code: code.to_string(),
            callbacks: None,
            experiment_summary: String::new(),
            metrics: MetricsRecord::default(),
            features: FeatureSignature(cell.to_vec()),
            score: score.unwrap_or(INVALID_SCORE),
            parent_ids: vec![],
            valid: score.is_some(),
            round: 1,
            lead: 1,
            attempts: 1,
            budget: BudgetStamp::default(),
        }
    }

    #[test]
    fn cell_best_then_archived() {
        let db = SolutionDb::in_memory();
        let a = rec(&db, Some(0.5), &[0, 0, 3], "a");
        assert_eq!(db.insert(a).unwrap(), InsertOutcome::AcceptedAsCellBest);
        let b = rec(&db, Some(0.4), &[0, 0, 3], "b");
        assert_eq!(db.insert(b).unwrap(), InsertOutcome::Archived);
        let c = rec(&db, Some(0.6), &[0, 0, 3], "c");
        assert_eq!(db.insert(c.clone()).unwrap(), InsertOutcome::AcceptedAsCellBest);
        assert_eq!(db.cell_bests()[0].1.id, c.id);
    }

    #[test]
    fn invalid_records_are_archived_only() {
        let db = SolutionDb::in_memory();
        let bad = rec(&db, None, &[3, 3, 3], "boom");
        let id = bad.id;
        assert_eq!(db.insert(bad).unwrap(), InsertOutcome::Archived);
        assert!(db.get(&id).is_some());
        assert!(db.cell_bests().is_empty());
        assert!(matches!(db.current_elite(), Err(DbError::EmptyDatabase)));
        assert!(matches!(
            db.sample_parents(1, Temperature::Uniform, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DbError::EmptyDatabase)
        ));
    }

    #[test]
    fn duplicate_id_and_unknown_parent() {
        let db = SolutionDb::in_memory();
        let a = rec(&db, Some(0.5), &[0], "a");
        db.insert(a.clone()).unwrap();
        assert!(matches!(db.insert(a.clone()), Err(DbError::DuplicateId(_))));
        let mut orphan = rec(&db, Some(0.1), &[1], "o");
        orphan.parent_ids = vec!["lead9_round9_count9_id999".parse().unwrap()];
        assert!(matches!(db.insert(orphan), Err(DbError::UnknownParent { .. })));
    }

    #[test]
    fn duplicate_code_is_rejected_from_cells() {
        let db = SolutionDb::in_memory();
        db.insert(rec(&db, Some(0.5), &[0], "same")).unwrap();
        let dup = rec(&db, Some(0.9), &[1], "same");
        assert_eq!(db.insert(dup).unwrap(), InsertOutcome::RejectedDuplicate);
        assert_eq!(db.cell_bests().len(), 1);
        assert_eq!(db.current_elite().unwrap().score, 0.5);
    }

    #[test]
    fn elite_prefers_newer_on_ties() {
        let db = SolutionDb::in_memory();
        db.insert(rec(&db, Some(0.8), &[0], "x")).unwrap();
        let b = rec(&db, Some(0.9), &[1], "y");
        db.insert(b.clone()).unwrap();
        assert_eq!(db.current_elite().unwrap().id, b.id);
        let c = rec(&db, Some(0.9), &[2], "z");
        db.insert(c.clone()).unwrap();
        assert_eq!(db.current_elite().unwrap().id, c.id);
    }

    #[test]
    fn id_counter() {
        let db = SolutionDb::in_memory();
        assert_eq!(db.next_id(1, 1, 0).to_string(), "lead1_round1_count0_id0");
        for _ in 0..20 {
            db.next_id(1, 1, 0);
        }
        assert!(db.next_id(1, 1, 0).to_string().ends_with("_id21"));
    }

    #[test]
    fn closed_form_probabilities() {
        let db = SolutionDb::in_memory();
        for (s, c) in [(0.9, 0), (0.7, 1), (0.5, 2)] {
            db.insert(rec(&db, Some(s), &[c], &format!("c{c}"))).unwrap();
        }
        let p = db.selection_probabilities(Temperature::Value(1.0)).unwrap();
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        let expected = [1.0 / z, (-1.0f64).exp() / z, (-2.0f64).exp() / z];
        for ((_, got), want) in p.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((p[0].1 - 0.665).abs() < 5e-4 && (p[1].1 - 0.245).abs() < 5e-4 && (p[2].1 - 0.090).abs() < 5e-4);
        let cold = db.selection_probabilities(Temperature::Value(1e-4)).unwrap();
        assert_eq!(cold[0].1, 1.0);
        let flat = db.selection_probabilities(Temperature::Uniform).unwrap();
        assert!(flat.iter().all(|(_, q)| (q - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn k_too_large() {
        let db = SolutionDb::in_memory();
        db.insert(rec(&db, Some(0.9), &[0], "only")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            db.sample_parents(2, Temperature::Uniform, &mut rng),
            Err(DbError::KTooLarge { k: 2, available: 1 })
        ));
        let two = {
            db.insert(rec(&db, Some(0.1), &[1], "other")).unwrap();
            db.sample_parents(2, Temperature::Value(1.0), &mut rng).unwrap()
        };
        assert_ne!(two[0].id, two[1].id);
    }

    #[test]
    fn reload_reproduces_state() {
        let dir = tempfile::tempdir().unwrap();
        let db = SolutionDb::open(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores = [0.3, 0.9, 0.1, 0.9, 0.5, 0.7];
        for (i, s) in scores.iter().enumerate() {
            let valid = i != 2;
            db.insert(rec(&db, valid.then_some(*s), &[(i % 3) as u32], &format!("code{i}"))).unwrap();
        }
        let draws_a: Vec<_> = (0..20)
            .map(|_| db.sample_parents(2, Temperature::Value(0.7), &mut rng).unwrap()[0].id)
            .collect();
        let elite = db.current_elite().unwrap().id;
        let cells = db.cell_bests();
        drop(db);

        let again = SolutionDb::open(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws_b: Vec<_> = (0..20)
            .map(|_| again.sample_parents(2, Temperature::Value(0.7), &mut rng).unwrap()[0].id)
            .collect();
        assert_eq!(draws_a, draws_b);
        assert_eq!(again.current_elite().unwrap().id, elite);
        assert_eq!(again.cell_bests(), cells);
        assert_eq!(again.next_id(1, 2, 0).serial, 6);
    }

    #[test]
    fn partial_trailing_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let db = SolutionDb::open(dir.path()).unwrap();
            db.insert(rec(&db, Some(0.4), &[0], "a")).unwrap();
        }
        let path = dir.path().join(RECORDS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"id\":\"lead1_round1_co").unwrap();
        drop(f);
        let db = SolutionDb::open(dir.path()).unwrap();
        assert_eq!(db.len(), 1);
        db.insert(rec(&db, Some(0.5), &[1], "b")).unwrap();
        drop(db);
        assert_eq!(SolutionDb::open(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_fails() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(RECORDS_FILE), "not json\n{}\n").unwrap();
        assert!(matches!(SolutionDb::open(dir.path()), Err(DbError::StorageFailure(_))));
    }

    proptest! {
        #[test]
        fn one_best_per_nonempty_cell(
            ops in proptest::collection::vec((proptest::option::of(-5.0f64..5.0), 0u32..4, any::<bool>()), 1..60)
        ) {
            let db = SolutionDb::in_memory();
            let mut cells_seen = HashSet::new();
            for (i, (score, cell, dominant)) in ops.iter().enumerate() {
                // the dominant record re-enters with a fresh id and a top score
                let (score, code) = if *dominant { (Some(100.0), format!("dominant{i}")) } else { (*score, format!("c{i}")) };
                let r = rec(&db, score, &[*cell], &code);
                if r.valid { cells_seen.insert(r.features.clone()); }
                db.insert(r).unwrap();
            }
            let bests = db.cell_bests();
            prop_assert_eq!(bests.len(), cells_seen.len());
            prop_assert!(bests.iter().all(|(_, r)| r.valid));
            // every cell best is the max of its cell (earliest among ties)
            let all = db.records();
            for (cell, best) in &bests {
                let max = all.iter().filter(|r| r.valid && &r.features == cell).map(|r| r.score).fold(f64::MIN, f64::max);
                prop_assert_eq!(best.score, max);
            }
        }

        #[test]
        fn rank_softmax_is_monotone(n in 1usize..12, tau in 0.01f64..20.0) {
            let ranks: Vec<usize> = (0..n).collect();
            let w = rank_weights(&ranks, Temperature::Value(tau));
            prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
        }
    }
}
