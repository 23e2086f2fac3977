//! Append-only record/replay store.
//!
//! Layout, one directory per endpoint:
//!
//! ```text
//! <root>/<endpoint>/entries.log   [u32 LE len][32-byte SHA-256 of payload][payload JSON] ...
//! <root>/<endpoint>/index.txt     "<digest hex> <byte offset>\n" ...
//! ```
//!
//! Both files only ever grow. A later index line for the same digest wins.
//! If the index is missing it is rebuilt by scanning the log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;
use crate::request::{CacheKey, ModelRequest, ModelResponse};

const LOG_FILE: &str = "entries.log";
const INDEX_FILE: &str = "index.txt";
const HEADER_LEN: usize = 4 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Always go to the network; nothing is stored.
    #[default]
    Off,
    /// Always go to the network and store every response.
    Record,
    /// Serve hits from the cache; misses go to the network and are stored.
    Replay,
    /// Serve hits from the cache; a miss is an error.
    StrictReplay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub request: ModelRequest,
    pub response: ModelResponse,
    pub recorded_at: u64,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct VerifyReport {
    pub endpoints: usize,
    pub entries: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

type Index = HashMap<CacheKey, u64>;

pub struct ResponseCache {
    root: PathBuf,
    /// Loaded once at open; never mutated.
    snapshot: HashMap<String, Index>,
    /// Entries recorded during this session.
    fresh: Mutex<HashMap<String, Index>>,
    writer: Mutex<()>,
}

fn endpoint_dir_name(endpoint_id: &str) -> String {
    endpoint_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn checksum(payload: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(payload));
    out
}

enum ReadOutcome {
    Entry(CacheEntry, u64),
    Eof,
}

/// Reads one entry starting at the reader's current position. `Ok(Eof)` only
/// when the reader is exactly at end of file.
fn read_entry<R: Read>(reader: &mut R) -> Result<ReadOutcome, String> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.to_string()),
        }
    }
    if filled == 0 {
        return Ok(ReadOutcome::Eof);
    }
    if filled < HEADER_LEN {
        return Err(format!("truncated entry header ({filled} of {HEADER_LEN} bytes)"));
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; len];
    reader
        .read_exact(&mut payload)
        .map_err(|_| format!("truncated entry payload (expected {len} bytes)"))?;
    if checksum(&payload) != header[4..] {
        return Err("checksum mismatch".to_string());
    }
    let entry: CacheEntry =
        serde_json::from_slice(&payload).map_err(|e| format!("undecodable entry: {e}"))?;
    Ok(ReadOutcome::Entry(entry, (HEADER_LEN + len) as u64))
}

fn load_index(dir: &Path) -> io::Result<Index> {
    let index_path = dir.join(INDEX_FILE);
    let mut index = Index::new();
    if index_path.exists() {
        for line in BufReader::new(File::open(&index_path)?).lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            if let (Some(digest), Some(offset)) = (parts.next(), parts.next()) {
                if let Ok(offset) = offset.parse::<u64>() {
                    index.insert(CacheKey::from_hex(digest), offset);
                }
            }
        }
        return Ok(index);
    }
    let log_path = dir.join(LOG_FILE);
    if log_path.exists() {
        let mut reader = BufReader::new(File::open(&log_path)?);
        let mut offset = 0u64;
        while let Ok(ReadOutcome::Entry(entry, size)) = read_entry(&mut reader) {
            index.insert(entry.key, offset);
            offset += size;
        }
    }
    Ok(index)
}

impl ResponseCache {
    /// Opens (or creates) a cache rooted at `root` and loads every endpoint
    /// index into memory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut snapshot = HashMap::new();
        for dir in fs::read_dir(&root)? {
            let dir = dir?;
            if dir.file_type()?.is_dir() {
                let name = dir.file_name().to_string_lossy().into_owned();
                snapshot.insert(name, load_index(&dir.path())?);
            }
        }
        Ok(Self {
            root,
            snapshot,
            fresh: Mutex::new(HashMap::new()),
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        let fresh = self.fresh.lock().unwrap();
        let mut total: usize = self.snapshot.values().map(Index::len).sum();
        for (endpoint, index) in fresh.iter() {
            let known = self.snapshot.get(endpoint);
            total += index
                .keys()
                .filter(|k| known.is_none_or(|s| !s.contains_key(*k)))
                .count();
        }
        total
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offset_of(&self, dir: &str, key: &CacheKey) -> Option<u64> {
        if let Some(offset) = self.snapshot.get(dir).and_then(|i| i.get(key)) {
            return Some(*offset);
        }
        self.fresh
            .lock()
            .unwrap()
            .get(dir)
            .and_then(|i| i.get(key))
            .copied()
    }

    /// Looks up a stored response. `Ok(None)` is a clean miss; a damaged
    /// entry is reported as [`GatewayError::Integrity`].
    pub fn replay(&self, request: &ModelRequest) -> Result<Option<ModelResponse>, GatewayError> {
        let key = CacheKey::for_request(request);
        let dir = endpoint_dir_name(&request.endpoint_id);
        let Some(offset) = self.offset_of(&dir, &key) else {
            return Ok(None);
        };
        let integrity = |reason: String| GatewayError::Integrity {
            key: key.clone(),
            reason,
        };
        let mut file = File::open(self.root.join(&dir).join(LOG_FILE))
            .map_err(|e| integrity(format!("log unreadable: {e}")))?;
        file.seek(SeekFrom::Start(offset))
            .map_err(|e| integrity(e.to_string()))?;
        match read_entry(&mut file).map_err(integrity)? {
            ReadOutcome::Eof => Err(integrity(format!("index points past end of log (offset {offset})"))),
            ReadOutcome::Entry(entry, _) if entry.key != key => Err(integrity(format!(
                "entry at offset {offset} belongs to key {}",
                entry.key
            ))),
            ReadOutcome::Entry(entry, _) => Ok(Some(entry.response)),
        }
    }

    /// Appends an entry. Writers are serialized; the log is flushed before
    /// the index line is written.
    pub fn record(&self, request: &ModelRequest, response: &ModelResponse) -> Result<CacheKey, GatewayError> {
        let key = CacheKey::for_request(request);
        let dir_name = endpoint_dir_name(&request.endpoint_id);
        let entry = CacheEntry {
            key: key.clone(),
            request: request.clone(),
            response: response.clone(),
            recorded_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let payload = serde_json::to_vec(&entry).expect("entry serialization is infallible");
        let len = u32::try_from(payload.len()).map_err(|_| {
            GatewayError::Io(io::Error::new(io::ErrorKind::InvalidInput, "entry too large"))
        })?;

        let _guard = self.writer.lock().unwrap();
        let dir = self.root.join(&dir_name);
        fs::create_dir_all(&dir)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOG_FILE))?;
        let offset = log.metadata()?.len();
        let mut buf = Vec::with_capacity(HEADER_LEN + payload.len());
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(&checksum(&payload));
        buf.extend_from_slice(&payload);
        log.write_all(&buf)?;
        log.sync_data()?;

        let mut index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(INDEX_FILE))?;
        writeln!(index, "{key} {offset}")?;
        index.sync_data()?;

        self.fresh
            .lock()
            .unwrap()
            .entry(dir_name)
            .or_default()
            .insert(key.clone(), offset);
        Ok(key)
    }

    /// Scans every log end to end: checksums, decodability, that each stored
    /// key matches its request, and that every index line resolves.
    pub fn verify(&self) -> Result<VerifyReport, GatewayError> {
        let mut report = VerifyReport::default();
        let mut dirs: Vec<_> = fs::read_dir(&self.root)?
            .filter_map(Result::ok)
            .filter(|d| d.path().is_dir())
            .map(|d| d.path())
            .collect();
        dirs.sort();
        for dir in dirs {
            report.endpoints += 1;
            let name = dir.file_name().unwrap().to_string_lossy().into_owned();
            let mut offsets: HashMap<u64, CacheKey> = HashMap::new();
            let log_path = dir.join(LOG_FILE);
            if log_path.exists() {
                let mut reader = BufReader::new(File::open(&log_path)?);
                let mut offset = 0u64;
                loop {
                    match read_entry(&mut reader) {
                        Ok(ReadOutcome::Eof) => break,
                        Ok(ReadOutcome::Entry(entry, size)) => {
                            let recomputed = CacheKey::for_request(&entry.request);
                            if recomputed != entry.key {
                                report.problems.push(format!(
                                    "{name}: entry at offset {offset} stores key {} but its request hashes to {recomputed}",
                                    entry.key
                                ));
                            }
                            offsets.insert(offset, entry.key);
                            report.entries += 1;
                            offset += size;
                        }
                        Err(reason) => {
                            report
                                .problems
                                .push(format!("{name}: offset {offset}: {reason}"));
                            break;
                        }
                    }
                }
            }
            for (key, offset) in load_index(&dir)? {
                match offsets.get(&offset) {
                    Some(stored) if *stored == key => {}
                    Some(stored) => report.problems.push(format!(
                        "{name}: index maps {key} to offset {offset}, which holds {stored}"
                    )),
                    None => report.problems.push(format!(
                        "{name}: index maps {key} to offset {offset}, which is not a valid entry"
                    )),
                }
            }
        }
        Ok(report)
    }
}
