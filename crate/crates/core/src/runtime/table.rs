//! Session tables shared by the requests a monitor handles.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::value::Value;

pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Row {
    table: String,
    values: Vec<Value>,
    /// Seconds since the epoch.
    inserted: u64,
}

/// In-memory tables with optional append-only persistence.
#[derive(Debug)]
pub struct TableStore {
    rows: Mutex<BTreeMap<String, Vec<Row>>>,
    ttl: Duration,
    file: Option<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or_default()
}

impl Default for TableStore {
    fn default() -> Self {
        TableStore::new(DEFAULT_TTL)
    }
}

impl TableStore {
    pub fn new(ttl: Duration) -> Self {
        TableStore { rows: Mutex::new(BTreeMap::new()), ttl, file: None }
    }

    /// Opens a store backed by `path`, replaying the rows already written there.
    pub fn persistent(path: PathBuf, ttl: Duration) -> std::io::Result<Self> {
        let mut rows: BTreeMap<String, Vec<Row>> = BTreeMap::new();
        if path.exists() {
            for line in BufReader::new(std::fs::File::open(&path)?).lines() {
                if let Ok(row) = serde_json::from_str::<Row>(&line?) {
                    rows.entry(row.table.clone()).or_default().push(row);
                }
            }
        }
        Ok(TableStore { rows: Mutex::new(rows), ttl, file: Some(path) })
    }

    fn live(&self, row: &Row, at: u64) -> bool {
        at.saturating_sub(row.inserted) < self.ttl.as_secs()
    }

    /// Inserts a row; inserting an identical live row again has no effect.
    pub fn insert(&self, table: &str, values: Vec<Value>) -> std::io::Result<()> {
        let at = now();
        let mut rows = self.rows.lock().expect("table lock");
        let entry = rows.entry(table.to_string()).or_default();
        let canon: Vec<String> = values.iter().map(Value::canon).collect();
        if entry.iter().any(|r| self.live(r, at) && r.values.iter().map(Value::canon).eq(canon.iter().cloned())) {
            return Ok(());
        }
        let row = Row { table: table.to_string(), values, inserted: at };
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&row).expect("row serializes"))?;
        }
        entry.push(row);
        Ok(())
    }

    /// First live row satisfying `accept`, oldest first.
    pub fn find(&self, table: &str, mut accept: impl FnMut(&[Value]) -> bool) -> Option<Vec<Value>> {
        let at = now();
        let rows = self.rows.lock().expect("table lock");
        rows.get(table)?.iter().filter(|r| self.live(r, at)).find(|r| accept(&r.values)).map(|r| r.values.clone())
    }

    /// Live rows whose columns equal `key` wherever `key` has a value.
    pub fn lookup(&self, table: &str, key: &[Option<Value>]) -> Option<Vec<Value>> {
        self.find(table, |row| {
            row.len() == key.len() && row.iter().zip(key).all(|(v, k)| k.as_ref().is_none_or(|k| k.same(v)))
        })
    }

    pub fn len(&self, table: &str) -> usize {
        let at = now();
        self.rows.lock().expect("table lock").get(table).map_or(0, |rs| rs.iter().filter(|r| self.live(r, at)).count())
    }

    pub fn is_empty(&self, table: &str) -> bool {
        self.len(table) == 0
    }
}
