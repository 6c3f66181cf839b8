//! Domain vocabulary shared by every protocol and checker: objects, keys,
//! tags, transactions, and the sequential semantics of the k-object store.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transaction touches no objects")]
    EmptySet,
    #[error("object {0} appears more than once")]
    DuplicateObject(ObjectId),
    #[error("write set objects must be strictly increasing (saw {0} after {1})")]
    NotIncreasing(ObjectId, ObjectId),
    #[error("object {id} outside 1..={k}")]
    ObjectOutOfRange { id: ObjectId, k: usize },
    #[error("state has {got} objects, expected {expected}")]
    StateLength { expected: usize, got: usize },
}

/// Role of a process in the simulated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Writer,
    Reader,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcessId {
    pub role: Role,
    pub index: u32,
}

impl ProcessId {
    pub const fn writer(index: u32) -> Self {
        Self { role: Role::Writer, index }
    }

    pub const fn reader(index: u32) -> Self {
        Self { role: Role::Reader, index }
    }

    pub const fn server(index: u32) -> Self {
        Self { role: Role::Server, index }
    }

    /// The server responsible for `object`.
    pub const fn server_of(object: ObjectId) -> Self {
        Self::server(object.0)
    }

    pub fn is_client(&self) -> bool {
        self.role != Role::Server
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.role {
            Role::Writer => 'w',
            Role::Reader => 'r',
            Role::Server => 's',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

/// Object `o_i`, 1-based. Server `s_i` stores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    /// Zero-based position in a k-tuple.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn check(self, k: usize) -> Result<(), ModelError> {
        if self.0 == 0 || self.0 as usize > k {
            return Err(ModelError::ObjectOutOfRange { id: self, k });
        }
        Ok(())
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// Identifier of a write transaction: (writer counter, writer index).
/// Writer index 0 is the placeholder of the initial pseudo-write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key {
    pub seq: u64,
    pub writer: u32,
}

impl Key {
    pub const INITIAL: Key = Key { seq: 0, writer: 0 };

    pub fn new(seq: u64, writer: u32) -> Self {
        Self { seq, writer }
    }

    pub fn is_initial(&self) -> bool {
        *self == Self::INITIAL
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, w{})", self.seq, self.writer)
    }
}

/// Serialization index, a 1-based position in a [`WriteLog`]. Tag 1 is the
/// initial pseudo-write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tag(pub u64);

impl Tag {
    pub const INITIAL: Tag = Tag(1);
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Opaque object value. Equality is byte equality; JSON carries base64.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Value(pub Vec<u8>);

impl Value {
    pub fn empty() -> Self {
        Self(Vec::new())
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Self(s.into_bytes())
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => write!(f, "{s:?}"),
            Err(_) => write!(f, "0x{}", hex::encode(&self.0)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BASE64.decode(s.as_bytes()).map(Value).map_err(serde::de::Error::custom)
    }
}

/// Set of objects updated by a write, one bit per object. Serialized as a
/// string such as `"1100"`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bitmap(Vec<bool>);

impl Bitmap {
    pub fn all_ones(k: usize) -> Self {
        Self(vec![true; k])
    }

    pub fn from_objects(k: usize, objects: impl IntoIterator<Item = ObjectId>) -> Self {
        let mut bits = vec![false; k];
        for o in objects {
            bits[o.slot()] = true;
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, object: ObjectId) -> bool {
        self.0.get(object.slot()).copied().unwrap_or(false)
    }
}

impl fmt::Display for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Bitmap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bitmap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("bad bitmap digit {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bitmap)
    }
}

/// Append-only list of (key, bitmap) entries. Entry 1 (tag 1) is the initial
/// pseudo-write covering every object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WriteLog {
    entries: Vec<(Key, Bitmap)>,
}

impl WriteLog {
    pub fn new(k: usize) -> Self {
        Self { entries: vec![(Key::INITIAL, Bitmap::all_ones(k))] }
    }

    /// Appends an entry and returns its tag (the new length).
    pub fn append(&mut self, key: Key, bitmap: Bitmap) -> Tag {
        self.entries.push((key, bitmap));
        self.len()
    }

    pub fn len(&self) -> Tag {
        Tag(self.entries.len() as u64)
    }

    pub fn entries(&self) -> &[(Key, Bitmap)] {
        &self.entries
    }

    /// Tag of the latest entry whose bitmap covers `object`.
    pub fn latest_for(&self, object: ObjectId) -> Tag {
        let pos = self
            .entries
            .iter()
            .rposition(|(_, b)| b.get(object))
            .expect("initial entry covers every object");
        Tag(pos as u64 + 1)
    }

    pub fn latest_key(&self, object: ObjectId) -> Key {
        self.entries[self.latest_for(object).0 as usize - 1].0
    }

    /// Latest key of every object `o_1..o_k`, in order.
    pub fn key_array(&self, k: usize) -> Vec<Key> {
        (1..=k as u32).map(|i| self.latest_key(ObjectId(i))).collect()
    }

    /// Largest tag among the entries selected for `objects`. This is the
    /// read-tag formula of the published pseudo-code. It is not a valid
    /// serialization tag: a read of objects untouched by a completed write
    /// gets a smaller tag than that write. Protocols use [`WriteLog::len`].
    pub fn touched_tag(&self, objects: &[ObjectId]) -> Tag {
        objects.iter().map(|&o| self.latest_for(o)).max().unwrap_or(Tag::INITIAL)
    }
}

/// A server's monotone set of (key, value) versions of its object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VersionStore {
    vals: BTreeMap<Key, Value>,
}

impl VersionStore {
    pub fn new(initial: Value) -> Self {
        Self { vals: BTreeMap::from([(Key::INITIAL, initial)]) }
    }

    /// Set insertion; a repeated (key, value) pair is a no-op. Returns false
    /// when the key already held a different value (never happens for keys
    /// minted by distinct writes).
    pub fn insert(&mut self, key: Key, value: Value) -> bool {
        match self.vals.get(&key) {
            Some(existing) => *existing == value,
            None => {
                self.vals.insert(key, value);
                true
            }
        }
    }

    pub fn get(&self, key: &Key) -> Option<&Value> {
        self.vals.get(key)
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn snapshot(&self) -> Vec<(Key, Value)> {
        self.vals.iter().map(|(k, v)| (*k, v.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Invocation {
    Read { read_set: Vec<ObjectId> },
    Write { write_set: Vec<(ObjectId, Value)> },
}

impl Invocation {
    /// Builds a READ; the object list is sorted.
    pub fn read(objects: impl IntoIterator<Item = ObjectId>) -> Self {
        let mut read_set: Vec<_> = objects.into_iter().collect();
        read_set.sort();
        Invocation::Read { read_set }
    }

    /// Builds a WRITE; items are sorted by object.
    pub fn write(items: impl IntoIterator<Item = (ObjectId, Value)>) -> Self {
        let mut write_set: Vec<_> = items.into_iter().collect();
        write_set.sort_by_key(|(o, _)| *o);
        Invocation::Write { write_set }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, Invocation::Read { .. })
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Invocation::Write { .. })
    }

    /// Objects touched, in invocation order.
    pub fn objects(&self) -> Vec<ObjectId> {
        match self {
            Invocation::Read { read_set } => read_set.clone(),
            Invocation::Write { write_set } => write_set.iter().map(|(o, _)| *o).collect(),
        }
    }

    pub fn written_value(&self, object: ObjectId) -> Option<&Value> {
        match self {
            Invocation::Write { write_set } => {
                write_set.iter().find(|(o, _)| *o == object).map(|(_, v)| v)
            }
            Invocation::Read { .. } => None,
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), ModelError> {
        let objects = self.objects();
        if objects.is_empty() {
            return Err(ModelError::EmptySet);
        }
        for o in &objects {
            o.check(k)?;
        }
        match self {
            Invocation::Read { .. } => {
                let mut seen = std::collections::BTreeSet::new();
                for o in objects {
                    if !seen.insert(o) {
                        return Err(ModelError::DuplicateObject(o));
                    }
                }
            }
            Invocation::Write { .. } => {
                for pair in objects.windows(2) {
                    if pair[0] == pair[1] {
                        return Err(ModelError::DuplicateObject(pair[0]));
                    }
                    if pair[1] < pair[0] {
                        return Err(ModelError::NotIncreasing(pair[1], pair[0]));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "UPPERCASE")]
pub enum Response {
    Values(Vec<Value>),
    Ack,
}

/// Current value of every object, position i holding `o_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SequentialState(pub Vec<Value>);

impl SequentialState {
    pub fn new(values: Vec<Value>) -> Self {
        Self(values)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, object: ObjectId) -> &Value {
        &self.0[object.slot()]
    }
}

/// The sequential function of the data type: READ projects, WRITE
/// overwrites exactly the written positions.
pub fn seq_apply(
    state: &SequentialState,
    inv: &Invocation,
) -> Result<(Response, SequentialState), ModelError> {
    inv.validate(state.k())?;
    match inv {
        Invocation::Read { read_set } => {
            let values = read_set.iter().map(|&o| state.get(o).clone()).collect();
            Ok((Response::Values(values), state.clone()))
        }
        Invocation::Write { write_set } => {
            let mut next = state.clone();
            for (o, v) in write_set {
                next.0[o.slot()] = v.clone();
            }
            Ok((Response::Ack, next))
        }
    }
}

/// Transaction identifier: issuing client plus its per-client counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId {
    pub client: ProcessId,
    pub seq: u32,
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.client, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnRecord {
    pub txn_id: TxnId,
    pub client: ProcessId,
    pub invocation: Invocation,
    pub inv_seq: u64,
    #[serde(default)]
    pub resp_seq: Option<u64>,
    #[serde(default)]
    pub response: Option<Response>,
    #[serde(default)]
    pub tag: Option<Tag>,
    /// Set by protocols that had to take an extra read round.
    #[serde(default)]
    pub fallback: bool,
}

impl TxnRecord {
    pub fn is_complete(&self) -> bool {
        self.resp_seq.is_some()
    }

    pub fn is_read(&self) -> bool {
        self.invocation.is_read()
    }

    pub fn is_write(&self) -> bool {
        self.invocation.is_write()
    }
}

/// `a → b`: a completed before b was invoked.
pub fn realtime_precedes(a: &TxnRecord, b: &TxnRecord) -> bool {
    a.resp_seq.is_some_and(|r| r < b.inv_seq)
}
