use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("item {key} already exists in table `{table}`")]
    AlreadyExists { table: String, key: String },
    #[error("no item {key} in table `{table}`")]
    NotFound { table: String, key: String },
    #[error("object `{0}` does not exist")]
    MissingObject(String),
}

/// Primary key of a key-value item: partition key plus optional sort key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub partition: String,
    pub sort: Option<String>,
}

impl ItemKey {
    pub fn new(partition: &str) -> ItemKey {
        ItemKey { partition: partition.to_owned(), sort: None }
    }

    pub fn sorted(partition: &str, sort: &str) -> ItemKey {
        ItemKey { partition: partition.to_owned(), sort: Some(sort.to_owned()) }
    }
}

impl std::fmt::Display for ItemKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.sort {
            Some(s) => write!(f, "({}, {s})", self.partition),
            None => write!(f, "({})", self.partition),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    KeyValue,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Create,
    Modify,
    Retrieve,
    Delete,
    Put,
    Get,
}

impl OpKind {
    pub fn is_write(self) -> bool {
        !matches!(self, OpKind::Retrieve | OpKind::Get)
    }
}

/// One storage operation with the bytes it moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreOp {
    pub store: StoreKind,
    pub op: OpKind,
    pub bytes: u64,
}

fn item_size(item: &Value) -> u64 {
    serde_json::to_vec(item).map_or(0, |v| v.len() as u64)
}

/// Tables of JSON items addressed by [`ItemKey`]. Every operation is logged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyValueStore {
    tables: BTreeMap<String, BTreeMap<ItemKey, Value>>,
    log: Vec<StoreOp>,
}

impl KeyValueStore {
    pub fn new() -> KeyValueStore {
        KeyValueStore::default()
    }

    fn record(&mut self, op: OpKind, bytes: u64) {
        self.log.push(StoreOp { store: StoreKind::KeyValue, op, bytes });
    }

    pub fn create(&mut self, table: &str, key: ItemKey, item: Value) -> Result<(), StoreError> {
        let rows = self.tables.entry(table.to_owned()).or_default();
        if rows.contains_key(&key) {
            return Err(StoreError::AlreadyExists { table: table.to_owned(), key: key.to_string() });
        }
        let bytes = item_size(&item);
        rows.insert(key, item);
        self.record(OpKind::Create, bytes);
        Ok(())
    }

    pub fn modify(&mut self, table: &str, key: &ItemKey, item: Value) -> Result<(), StoreError> {
        let slot = self
            .tables
            .get_mut(table)
            .and_then(|rows| rows.get_mut(key))
            .ok_or_else(|| StoreError::NotFound { table: table.to_owned(), key: key.to_string() })?;
        let bytes = item_size(&item);
        *slot = item;
        self.record(OpKind::Modify, bytes);
        Ok(())
    }

    pub fn retrieve(&mut self, table: &str, key: &ItemKey) -> Result<Value, StoreError> {
        let item = self
            .tables
            .get(table)
            .and_then(|rows| rows.get(key))
            .cloned()
            .ok_or_else(|| StoreError::NotFound { table: table.to_owned(), key: key.to_string() })?;
        self.record(OpKind::Retrieve, item_size(&item));
        Ok(item)
    }

    pub fn delete(&mut self, table: &str, key: &ItemKey) -> Result<Value, StoreError> {
        let item = self
            .tables
            .get_mut(table)
            .and_then(|rows| rows.remove(key))
            .ok_or_else(|| StoreError::NotFound { table: table.to_owned(), key: key.to_string() })?;
        self.record(OpKind::Delete, item_size(&item));
        Ok(item)
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn table(&self, table: &str) -> impl Iterator<Item = (&ItemKey, &Value)> {
        self.tables.get(table).into_iter().flatten()
    }

    pub fn log(&self) -> &[StoreOp] {
        &self.log
    }
}

/// Object metadata: contents are abstracted to a size and a checksum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMeta {
    pub size: u64,
    pub checksum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectStore {
    objects: BTreeMap<String, ObjectMeta>,
    log: Vec<StoreOp>,
}

impl ObjectStore {
    pub fn new() -> ObjectStore {
        ObjectStore::default()
    }

    pub fn put(&mut self, key: &str, size: u64, checksum: u64) {
        self.objects.insert(key.to_owned(), ObjectMeta { size, checksum });
        self.log.push(StoreOp { store: StoreKind::Object, op: OpKind::Put, bytes: size });
    }

    /// Places an object that existed before the workflow started, e.g. a
    /// benchmark input. Nothing is logged, so no transfer is charged.
    pub fn seed(&mut self, key: &str, size: u64, checksum: u64) {
        self.objects.insert(key.to_owned(), ObjectMeta { size, checksum });
    }

    pub fn get(&mut self, key: &str) -> Result<ObjectMeta, StoreError> {
        let meta = *self.objects.get(key).ok_or_else(|| StoreError::MissingObject(key.to_owned()))?;
        self.log.push(StoreOp { store: StoreKind::Object, op: OpKind::Get, bytes: meta.size });
        Ok(meta)
    }

    pub fn delete(&mut self, key: &str) -> Result<ObjectMeta, StoreError> {
        let meta = self.objects.remove(key).ok_or_else(|| StoreError::MissingObject(key.to_owned()))?;
        self.log.push(StoreOp { store: StoreKind::Object, op: OpKind::Delete, bytes: 0 });
        Ok(meta)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.objects.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn log(&self) -> &[StoreOp] {
        &self.log
    }
}
