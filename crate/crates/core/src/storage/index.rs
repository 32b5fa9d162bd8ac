//! Persistent learnware index on SQLite in WAL mode.
//!
//! Every write is a single transaction committed with `synchronous=FULL`
//! before the call returns. The waiting queue is ordered by a sequence
//! number assigned at insert and on every reset to `WAITING`.

use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use rusqlite::{params, Connection, OptionalExtension, Row, TransactionBehavior};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learnware::Status;
use crate::specification::{DataType, SemanticSpec, TaskType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    pub path: String,
    pub status: Status,
    pub name: String,
    pub data_type: DataType,
    pub task_type: TaskType,
    pub scenarios: Vec<String>,
    pub description: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub created: i64,
    pub updated: i64,
    pub failures: Vec<String>,
    /// Insertion order.
    pub seq: i64,
    /// Position in the waiting queue; refreshed whenever the record returns to `WAITING`.
    pub queue_seq: i64,
    /// Order in which verdicts were recorded; absent while `WAITING`.
    pub decided_seq: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexFilter {
    pub status: Option<Status>,
    pub data_type: Option<DataType>,
    pub task_type: Option<TaskType>,
    pub scenario: Option<String>,
}

impl IndexFilter {
    pub fn matches(&self, r: &IndexRecord) -> bool {
        self.status.is_none_or(|s| s == r.status)
            && self.data_type.is_none_or(|d| d == r.data_type)
            && self.task_type.is_none_or(|t| t == r.task_type)
            && self
                .scenario
                .as_ref()
                .is_none_or(|s| r.scenarios.contains(s))
    }
}

pub fn now_secs() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

pub fn new_id() -> String {
    hex::encode(rand::random::<[u8; 6]>())
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS learnwares (
    id          TEXT PRIMARY KEY,
    path        TEXT NOT NULL,
    status      TEXT NOT NULL CHECK (status IN ('WAITING', 'VERIFIED', 'REJECTED')),
    name        TEXT NOT NULL,
    data_type   TEXT NOT NULL,
    task_type   TEXT NOT NULL,
    scenarios   TEXT NOT NULL,
    description TEXT NOT NULL,
    input_dim   INTEGER NOT NULL,
    output_dim  INTEGER NOT NULL,
    created     INTEGER NOT NULL,
    updated     INTEGER NOT NULL,
    failures    TEXT NOT NULL,
    seq         INTEGER NOT NULL,
    queue_seq   INTEGER NOT NULL,
    decided_seq INTEGER
);
CREATE INDEX IF NOT EXISTS learnwares_queue ON learnwares (status, queue_seq);
CREATE TABLE IF NOT EXISTS counters (name TEXT PRIMARY KEY, value INTEGER NOT NULL);
INSERT OR IGNORE INTO counters VALUES ('seq', 0);
";

pub struct Index {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for Index {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Index").finish_non_exhaustive()
    }
}

fn parse_err(col: usize, e: impl std::error::Error + Send + Sync + 'static) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(col, rusqlite::types::Type::Text, Box::new(e))
}

fn read_row(row: &Row<'_>) -> rusqlite::Result<IndexRecord> {
    let text = |i: usize| row.get::<_, String>(i);
    Ok(IndexRecord {
        id: text(0)?,
        path: text(1)?,
        status: text(2)?.parse().map_err(|e| parse_err(2, e))?,
        name: text(3)?,
        data_type: text(4)?.parse().map_err(|e| parse_err(4, e))?,
        task_type: text(5)?.parse().map_err(|e| parse_err(5, e))?,
        scenarios: serde_json::from_str(&text(6)?).map_err(|e| parse_err(6, e))?,
        description: text(7)?,
        input_dim: row.get::<_, i64>(8)? as usize,
        output_dim: row.get::<_, i64>(9)? as usize,
        created: row.get(10)?,
        updated: row.get(11)?,
        failures: serde_json::from_str(&text(12)?).map_err(|e| parse_err(12, e))?,
        seq: row.get(13)?,
        queue_seq: row.get(14)?,
        decided_seq: row.get(15)?,
    })
}

const COLUMNS: &str = "id, path, status, name, data_type, task_type, scenarios, description, \
                       input_dim, output_dim, created, updated, failures, seq, queue_seq, decided_seq";

fn next_seq(tx: &rusqlite::Transaction<'_>) -> rusqlite::Result<i64> {
    tx.query_row(
        "UPDATE counters SET value = value + 1 WHERE name = 'seq' RETURNING value",
        [],
        |r| r.get(0),
    )
}

impl Index {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// A random id not yet present in the index.
    pub fn fresh_id(&self) -> Result<String> {
        let conn = self.conn();
        loop {
            let id = new_id();
            let taken: bool = conn.query_row(
                "SELECT EXISTS(SELECT 1 FROM learnwares WHERE id = ?1)",
                [&id],
                |r| r.get(0),
            )?;
            if !taken {
                return Ok(id);
            }
        }
    }

    /// Inserts a new `WAITING` record and returns it with timestamps and
    /// sequence numbers filled in.
    pub fn insert(
        &self,
        id: &str,
        path: &str,
        name: &str,
        semantic: &SemanticSpec,
    ) -> Result<IndexRecord> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let seq = next_seq(&tx)?;
        let now = now_secs();
        let scenarios: Vec<String> = semantic.scenarios.iter().cloned().collect();
        let inserted = tx.execute(
            &format!("INSERT INTO learnwares ({COLUMNS}) VALUES (?1, ?2, 'WAITING', ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?10, '[]', ?11, ?11, NULL)"),
            params![
                id,
                path,
                name,
                semantic.data_type.as_str(),
                semantic.task_type.as_str(),
                serde_json::to_string(&scenarios).expect("strings serialize"),
                semantic.description,
                semantic.input_dim as i64,
                semantic.output_dim as i64,
                now,
                seq,
            ],
        );
        match inserted {
            Err(rusqlite::Error::SqliteFailure(e, _))
                if e.code == rusqlite::ErrorCode::ConstraintViolation =>
            {
                return Err(Error::Storage(format!("id {id} already exists")));
            }
            other => other?,
        };
        let record = tx.query_row(
            &format!("SELECT {COLUMNS} FROM learnwares WHERE id = ?1"),
            [id],
            read_row,
        )?;
        tx.commit()?;
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Result<IndexRecord> {
        self.conn()
            .query_row(
                &format!("SELECT {COLUMNS} FROM learnwares WHERE id = ?1"),
                [id],
                read_row,
            )
            .optional()?
            .ok_or_else(|| Error::NotFound(format!("learnware {id}")))
    }

    /// Records matching `filter` in insertion order.
    pub fn list(&self, filter: &IndexFilter) -> Result<Vec<IndexRecord>> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare_cached(&format!("SELECT {COLUMNS} FROM learnwares ORDER BY seq"))?;
        let rows = stmt.query_map([], read_row)?;
        let mut out = Vec::new();
        for r in rows {
            let r = r?;
            if filter.matches(&r) {
                out.push(r);
            }
        }
        Ok(out)
    }

    /// Ids in `WAITING` status, oldest first.
    pub fn waiting_fifo(&self) -> Result<Vec<String>> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT id FROM learnwares WHERE status = 'WAITING' ORDER BY queue_seq",
        )?;
        let ids = stmt
            .query_map([], |r| r.get(0))?
            .collect::<rusqlite::Result<Vec<String>>>()?;
        Ok(ids)
    }

    pub fn count(&self, status: Status) -> Result<usize> {
        let n: i64 = self.conn().query_row(
            "SELECT COUNT(*) FROM learnwares WHERE status = ?1",
            [status.as_str()],
            |r| r.get(0),
        )?;
        Ok(n as usize)
    }

    /// Moves a record to `status`, recording `failures` (kept only for `REJECTED`).
    pub fn set_status(&self, id: &str, status: Status, failures: &[String]) -> Result<IndexRecord> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let current: String = tx
            .query_row("SELECT status FROM learnwares WHERE id = ?1", [id], |r| {
                r.get(0)
            })
            .optional()?
            .ok_or_else(|| Error::NotFound(format!("learnware {id}")))?;
        let current: Status = current.parse()?;
        if !current.can_become(status) {
            return Err(Error::State(format!("{id}: {current} -> {status}")));
        }
        let failures = if status == Status::Rejected {
            failures.to_vec()
        } else {
            Vec::new()
        };
        let next = next_seq(&tx)?;
        let (queue_seq, decided_seq) = if status == Status::Waiting {
            (Some(next), None)
        } else {
            (None, Some(next))
        };
        tx.execute(
            "UPDATE learnwares SET status = ?2, failures = ?3, updated = ?4, queue_seq = COALESCE(?5, queue_seq), \
             decided_seq = ?6 WHERE id = ?1",
            params![
                id,
                status.as_str(),
                serde_json::to_string(&failures).expect("strings serialize"),
                now_secs(),
                queue_seq,
                decided_seq
            ],
        )?;
        let record = tx.query_row(
            &format!("SELECT {COLUMNS} FROM learnwares WHERE id = ?1"),
            [id],
            read_row,
        )?;
        tx.commit()?;
        Ok(record)
    }

    /// Replaces the semantic summary and package path of `id` and puts it
    /// back in the queue.
    pub fn update(
        &self,
        id: &str,
        path: &str,
        name: &str,
        semantic: &SemanticSpec,
    ) -> Result<IndexRecord> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let exists: bool = tx.query_row(
            "SELECT EXISTS(SELECT 1 FROM learnwares WHERE id = ?1)",
            [id],
            |r| r.get(0),
        )?;
        if !exists {
            return Err(Error::NotFound(format!("learnware {id}")));
        }
        let queue_seq = next_seq(&tx)?;
        let scenarios: Vec<String> = semantic.scenarios.iter().cloned().collect();
        tx.execute(
            "UPDATE learnwares SET path = ?2, status = 'WAITING', name = ?3, data_type = ?4, task_type = ?5, \
             scenarios = ?6, description = ?7, input_dim = ?8, output_dim = ?9, updated = ?10, failures = '[]', \
             queue_seq = ?11, decided_seq = NULL WHERE id = ?1",
            params![
                id,
                path,
                name,
                semantic.data_type.as_str(),
                semantic.task_type.as_str(),
                serde_json::to_string(&scenarios).expect("strings serialize"),
                semantic.description,
                semantic.input_dim as i64,
                semantic.output_dim as i64,
                now_secs(),
                queue_seq,
            ],
        )?;
        let record = tx.query_row(
            &format!("SELECT {COLUMNS} FROM learnwares WHERE id = ?1"),
            [id],
            read_row,
        )?;
        tx.commit()?;
        Ok(record)
    }

    pub fn delete(&self, id: &str) -> Result<IndexRecord> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let record = tx
            .query_row(
                &format!("SELECT {COLUMNS} FROM learnwares WHERE id = ?1"),
                [id],
                read_row,
            )
            .optional()?
            .ok_or_else(|| Error::NotFound(format!("learnware {id}")))?;
        tx.execute("DELETE FROM learnwares WHERE id = ?1", [id])?;
        tx.commit()?;
        Ok(record)
    }

    /// Runs SQLite's own consistency check.
    pub fn integrity_check(&self) -> Result<()> {
        let verdict: String = self
            .conn()
            .query_row("PRAGMA integrity_check", [], |r| r.get(0))?;
        if verdict != "ok" {
            return Err(Error::Storage(format!("index integrity check: {verdict}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn semantic() -> SemanticSpec {
        SemanticSpec {
            data_type: DataType::Table,
            task_type: TaskType::Regression,
            scenarios: ["a".to_string()].into(),
            description: String::new(),
            input_dim: 2,
            feature_descriptions: vec![],
            output_dim: 1,
            label_names: None,
        }
    }

    #[test]
    fn transitions_follow_the_table() {
        let dir = tempfile::tempdir().unwrap();
        let index = Index::open(dir.path().join("i.db")).unwrap();
        let id = index.fresh_id().unwrap();
        index.insert(&id, "p", "n", &semantic()).unwrap();
        index.set_status(&id, Status::Verified, &[]).unwrap();
        assert!(matches!(
            index.set_status(&id, Status::Rejected, &[]),
            Err(Error::State(_))
        ));
        assert!(matches!(
            index.set_status(&id, Status::Verified, &[]),
            Err(Error::State(_))
        ));
        index.set_status(&id, Status::Waiting, &[]).unwrap();
        let r = index
            .set_status(&id, Status::Rejected, &["MODEL_LOAD".into()])
            .unwrap();
        assert_eq!(r.failures, vec!["MODEL_LOAD"]);
        assert!(matches!(index.get("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn requeue_moves_to_the_back() {
        let dir = tempfile::tempdir().unwrap();
        let index = Index::open(dir.path().join("i.db")).unwrap();
        let ids: Vec<String> = (0..3).map(|_| index.fresh_id().unwrap()).collect();
        for id in &ids {
            index.insert(id, "p", "n", &semantic()).unwrap();
        }
        index.update(&ids[0], "p2", "n", &semantic()).unwrap();
        assert_eq!(
            index.waiting_fifo().unwrap(),
            vec![ids[1].clone(), ids[2].clone(), ids[0].clone()]
        );
        let listed: Vec<String> = index
            .list(&IndexFilter::default())
            .unwrap()
            .into_iter()
            .map(|r| r.id)
            .collect();
        assert_eq!(listed, ids);
    }

    #[test]
    fn ids_are_twelve_hex_chars() {
        let id = new_id();
        assert_eq!(id.len(), 12);
        assert!(id.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
