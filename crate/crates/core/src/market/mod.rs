//! The market: organizer (storage and in-memory index), checker and searcher.
//!
//! Layout under the market root:
//!
//! ```text
//! index.db            learnware index (status is authoritative here)
//! packages/<id>.zip   submitted packages, byte-for-byte
//! runtime/<id>/       extracted files of external models
//! ```

mod checker;
mod search;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

pub use checker::{check_learnware, CheckReport, Failure, FailureCode, PROBABILITY_TOLERANCE};
pub use search::{
    greedy_multiple_search, hetero_search, score, search_learnwares, solve_mixture_weights,
    GreedyOutcome, MixtureProblem, MultipleHit, MultipleStrategy, SearchOptions, SearchResult,
    SingleHit, DEFAULT_TAU, DEFAULT_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::hetero::SemanticProjector;
use crate::learnware::{Learnware, Status};
use crate::model::Model;
use crate::specification::{DataType, StatKind, UserInfo};
use crate::storage::{Index, IndexFilter, IndexRecord, LearnwarePackage};

/// Which learnwares a search looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Status(Status),
    All,
}

impl Default for Scope {
    fn default() -> Self {
        Scope::Status(Status::Verified)
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub record: IndexRecord,
    pub learnware: Arc<Learnware>,
}

pub struct Market {
    root: PathBuf,
    index: Index,
    projector: SemanticProjector,
    entries: RwLock<BTreeMap<String, Entry>>,
    writes: Mutex<()>,
}

impl std::fmt::Debug for Market {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Market")
            .field("root", &self.root)
            .finish_non_exhaustive()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Turns a package into a learnware whose external files (if any) live in
/// `runtime`, adding the projected spec when the semantic spec names every
/// feature.
pub fn assemble(
    id: &str,
    status: Status,
    pkg: &LearnwarePackage,
    runtime: &Path,
    projector: &SemanticProjector,
) -> Result<Learnware> {
    if runtime.exists() {
        fs::remove_dir_all(runtime)?;
    }
    let model: Model = pkg.instantiate(runtime)?;
    let mut stat_specs: BTreeMap<StatKind, _> =
        pkg.stat_specs.iter().map(|s| (s.kind, s.clone())).collect();
    if pkg.semantic.data_type == DataType::Table && !pkg.semantic.feature_descriptions.is_empty() {
        if let Some(rkme) = stat_specs.get(&StatKind::RkmeTable) {
            if rkme.payload.validate().is_ok() {
                if let Ok(h) =
                    projector.project_spec(&rkme.payload, &pkg.semantic.feature_descriptions)
                {
                    stat_specs.insert(StatKind::HeteroMapTable, h);
                }
            }
        }
    }
    Ok(Learnware {
        id: id.to_string(),
        name: pkg.name.clone(),
        semantic: pkg.semantic.clone(),
        stat_specs,
        model,
        status,
    })
}

impl Market {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(root, SemanticProjector::default())
    }

    pub fn open_with(root: impl AsRef<Path>, projector: SemanticProjector) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("packages"))?;
        fs::create_dir_all(root.join("runtime"))?;
        let index = Index::open(root.join("index.db"))?;
        let market = Self {
            root,
            index,
            projector,
            entries: RwLock::new(BTreeMap::new()),
            writes: Mutex::new(()),
        };
        market.reload()?;
        Ok(market)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn projector(&self) -> &SemanticProjector {
        &self.projector
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    fn package_path(&self, id: &str) -> PathBuf {
        self.root.join("packages").join(format!("{id}.zip"))
    }

    fn runtime_dir(&self, id: &str) -> PathBuf {
        self.root.join("runtime").join(id)
    }

    fn lock_writes(&self) -> std::sync::MutexGuard<'_, ()> {
        self.writes.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn build(&self, id: &str, status: Status, pkg: &LearnwarePackage) -> Result<Learnware> {
        assemble(id, status, pkg, &self.runtime_dir(id), &self.projector)
    }

    /// Stores a package and queues it for checking.
    pub fn insert(&self, pkg: &LearnwarePackage) -> Result<IndexRecord> {
        self.insert_bytes(&pkg.pack()?)
    }

    /// Stores a packed learnware as submitted. The package must unpack.
    pub fn insert_bytes(&self, bytes: &[u8]) -> Result<IndexRecord> {
        let pkg = LearnwarePackage::unpack(bytes)?;
        let _w = self.lock_writes();
        let id = self.index.fresh_id()?;
        let path = self.package_path(&id);
        write_atomic(&path, bytes)?;
        let learnware = match self.build(&id, Status::Waiting, &pkg) {
            Ok(lw) => lw,
            Err(e) => {
                let _ = fs::remove_file(&path);
                return Err(e);
            }
        };
        let record = match self
            .index
            .insert(&id, &path.to_string_lossy(), &pkg.name, &pkg.semantic)
        {
            Ok(r) => r,
            Err(e) => {
                let _ = fs::remove_file(&path);
                return Err(e);
            }
        };
        self.entries_mut().insert(
            id,
            Entry {
                record: record.clone(),
                learnware: Arc::new(learnware),
            },
        );
        Ok(record)
    }

    /// Replaces the content of `id`; the learnware goes back to `WAITING`.
    pub fn update(&self, id: &str, pkg: &LearnwarePackage) -> Result<IndexRecord> {
        self.update_bytes(id, &pkg.pack()?)
    }

    pub fn update_bytes(&self, id: &str, bytes: &[u8]) -> Result<IndexRecord> {
        let pkg = LearnwarePackage::unpack(bytes)?;
        let _w = self.lock_writes();
        self.index.get(id)?;
        if let Some(old) = self.entries_read().get(id) {
            if let Model::External(m) = &old.learnware.model {
                m.shutdown();
            }
        }
        let path = self.package_path(id);
        write_atomic(&path, bytes)?;
        let learnware = self.build(id, Status::Waiting, &pkg)?;
        let record = self
            .index
            .update(id, &path.to_string_lossy(), &pkg.name, &pkg.semantic)?;
        self.entries_mut().insert(
            id.to_string(),
            Entry {
                record: record.clone(),
                learnware: Arc::new(learnware),
            },
        );
        Ok(record)
    }

    pub fn delete(&self, id: &str) -> Result<IndexRecord> {
        let _w = self.lock_writes();
        let record = self.index.delete(id)?;
        if let Some(old) = self.entries_mut().remove(id) {
            if let Model::External(m) = &old.learnware.model {
                m.shutdown();
            }
        }
        let _ = fs::remove_file(self.package_path(id));
        let _ = fs::remove_dir_all(self.runtime_dir(id));
        Ok(record)
    }

    /// Rebuilds the in-memory state from the index. Records whose package
    /// cannot be read are skipped with a warning.
    pub fn reload(&self) -> Result<()> {
        let _w = self.lock_writes();
        let mut fresh = BTreeMap::new();
        for record in self.index.list(&IndexFilter::default())? {
            let loaded = fs::read(self.package_path(&record.id))
                .map_err(Error::from)
                .and_then(|b| LearnwarePackage::unpack(&b))
                .and_then(|pkg| self.build(&record.id, record.status, &pkg));
            match loaded {
                Ok(lw) => {
                    fresh.insert(
                        record.id.clone(),
                        Entry {
                            record,
                            learnware: Arc::new(lw),
                        },
                    );
                }
                Err(e) => {
                    tracing::warn!(id = %record.id, error = %e, "skipping unreadable learnware")
                }
            }
        }
        *self.entries_mut() = fresh;
        Ok(())
    }

    fn entries_read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Entry>> {
        self.entries.read().unwrap_or_else(|e| e.into_inner())
    }

    fn entries_mut(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Entry>> {
        self.entries.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get(&self, id: &str) -> Result<Entry> {
        self.entries_read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("learnware {id}")))
    }

    pub fn learnware(&self, id: &str) -> Result<Arc<Learnware>> {
        Ok(self.get(id)?.learnware)
    }

    /// Records matching `filter`, in insertion order.
    pub fn list(&self, filter: &IndexFilter) -> Vec<IndexRecord> {
        let mut out: Vec<IndexRecord> = self
            .entries_read()
            .values()
            .filter(|e| filter.matches(&e.record))
            .map(|e| e.record.clone())
            .collect();
        out.sort_by_key(|r| r.seq);
        out
    }

    /// All entries in insertion order.
    pub fn snapshot(&self) -> Vec<Entry> {
        let mut out: Vec<Entry> = self.entries_read().values().cloned().collect();
        out.sort_by_key(|e| e.record.seq);
        out
    }

    pub fn set_status(&self, id: &str, status: Status, failures: &[String]) -> Result<IndexRecord> {
        let _w = self.lock_writes();
        let record = self.index.set_status(id, status, failures)?;
        let mut entries = self.entries_mut();
        if let Some(e) = entries.get_mut(id) {
            let mut lw = (*e.learnware).clone();
            lw.status = status;
            e.learnware = Arc::new(lw);
            e.record = record.clone();
        }
        Ok(record)
    }

    /// `WAITING` ids in submission order, read from the index.
    pub fn waiting_queue(&self) -> Result<Vec<String>> {
        self.index.waiting_fifo()
    }

    pub fn package_bytes(&self, id: &str) -> Result<Vec<u8>> {
        self.get(id)?;
        Ok(fs::read(self.package_path(id))?)
    }

    /// Checks `id` and records the verdict. The check runs without holding
    /// any market lock.
    pub fn verify(&self, id: &str) -> Result<CheckReport> {
        let lw = self.learnware(id)?;
        let report = check_learnware(&lw);
        let status = if report.pass {
            Status::Verified
        } else {
            Status::Rejected
        };
        self.set_status(id, status, &report.codes())?;
        Ok(report)
    }

    /// Checks the head of the waiting queue, if any. The verdict is dropped
    /// when the record was updated or deleted while the check ran.
    pub fn verify_next(&self) -> Result<Option<(String, Option<CheckReport>)>> {
        let Some(id) = self.waiting_queue()?.into_iter().next() else {
            return Ok(None);
        };
        let entry = self.get(&id)?;
        let report = check_learnware(&entry.learnware);
        let _w = self.lock_writes();
        match self.index.get(&id) {
            Ok(now) if now.queue_seq == entry.record.queue_seq && now.status == Status::Waiting => {
            }
            Ok(_) | Err(Error::NotFound(_)) => return Ok(Some((id, None))),
            Err(e) => return Err(e),
        }
        let status = if report.pass {
            Status::Verified
        } else {
            Status::Rejected
        };
        let record = self.index.set_status(&id, status, &report.codes())?;
        if let Some(e) = self.entries_mut().get_mut(&id) {
            let mut lw = (*e.learnware).clone();
            lw.status = status;
            e.learnware = Arc::new(lw);
            e.record = record;
        }
        Ok(Some((id, Some(report))))
    }

    /// Drains the waiting queue in order.
    pub fn verify_pending(&self) -> Result<Vec<(String, CheckReport)>> {
        let mut out = Vec::new();
        for id in self.waiting_queue()? {
            let report = self.verify(&id)?;
            out.push((id, report));
        }
        Ok(out)
    }

    fn scoped(&self, scope: Scope) -> Vec<Arc<Learnware>> {
        self.snapshot()
            .into_iter()
            .filter(|e| match scope {
                Scope::All => true,
                Scope::Status(s) => e.record.status == s,
            })
            .map(|e| e.learnware)
            .collect()
    }

    pub fn search(&self, user: &UserInfo, opts: &SearchOptions) -> Result<SearchResult> {
        self.search_in(user, opts, Scope::default())
    }

    pub fn search_in(
        &self,
        user: &UserInfo,
        opts: &SearchOptions,
        scope: Scope,
    ) -> Result<SearchResult> {
        search_learnwares(user, &self.scoped(scope), opts, &self.projector)
    }

    pub fn hetero_search(&self, user: &UserInfo, opts: &SearchOptions) -> Result<SearchResult> {
        hetero_search(user, &self.scoped(Scope::default()), opts, &self.projector)
    }
}
