//! Append-only expert tag log.
//!
//! The file starts with `{"format":"clickintent-tags","version":1}` on its
//! own line. Every following line is `<sha256-hex> <json>`, where the hash
//! covers the JSON bytes exactly as stored. Each append is flushed to disk
//! before it is acknowledged.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::GroupingKey;
use crate::{Error, Result};

pub const TAG_FORMAT_VERSION: u32 = 1;
const TAG_HEADER: &str = r#"{"format":"clickintent-tags","version":1}"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SuspectedCause,
    Benign,
    NeedsData,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "suspected_cause" => Ok(Self::SuspectedCause),
            "benign" => Ok(Self::Benign),
            "needs_data" => Ok(Self::NeedsData),
            _ => Err(Error::Input(format!("unknown verdict {s:?} (suspected_cause | benign | needs_data)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertTag {
    pub author: String,
    pub key: GroupingKey,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    pub timestamp_ms: i64,
}

impl ExpertTag {
    pub fn validate(&self) -> Result<()> {
        if self.author.trim().is_empty() {
            return Err(Error::Input("tag author is empty".into()));
        }
        if self.key.feature.is_empty() {
            return Err(Error::Input("tag grouping key has no feature".into()));
        }
        if self.timestamp_ms < 0 {
            return Err(Error::Input("tag timestamp is negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAck {
    /// 0-based position of the tag in the log.
    pub sequence: usize,
}

#[derive(Debug)]
pub struct TagStore {
    path: PathBuf,
    writer: Mutex<(File, usize)>,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Storage(format!("{}: {e}", path.display()))
}

impl TagStore {
    /// Opens or creates the log at `path`, verifying existing contents.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut file = OpenOptions::new().create(true).append(true).read(true).open(&path).map_err(|e| storage(&path, e))?;
        let len = file.metadata().map_err(|e| storage(&path, e))?.len();
        let count = if len == 0 {
            writeln!(file, "{TAG_HEADER}").map_err(|e| storage(&path, e))?;
            file.sync_all().map_err(|e| storage(&path, e))?;
            0
        } else {
            read_log(&path)?.len()
        };
        Ok(Self { path, writer: Mutex::new((file, count)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one tag; returns only after the record is on disk.
    pub fn record(&self, tag: &ExpertTag) -> Result<TagAck> {
        tag.validate()?;
        let json = serde_json::to_string(tag)?;
        let line = format!("{} {json}\n", hex::encode(Sha256::digest(json.as_bytes())));
        let mut guard = self.writer.lock().map_err(|_| Error::Storage("tag writer lock poisoned".into()))?;
        let (file, count) = &mut *guard;
        file.write_all(line.as_bytes()).map_err(|e| storage(&self.path, e))?;
        file.sync_data().map_err(|e| storage(&self.path, e))?;
        let ack = TagAck { sequence: *count };
        *count += 1;
        Ok(ack)
    }

    /// Tags in timestamp order (log order on ties), optionally for one key.
    pub fn list(&self, key: Option<&GroupingKey>) -> Result<Vec<ExpertTag>> {
        let mut tags = read_log(&self.path)?;
        if let Some(k) = key {
            tags.retain(|t| &t.key == k);
        }
        tags.sort_by_key(|t| t.timestamp_ms);
        Ok(tags)
    }
}

fn read_log(path: &Path) -> Result<Vec<ExpertTag>> {
    let file = File::open(path).map_err(|e| storage(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == TAG_HEADER => {}
        Some(Ok(h)) => {
            let v: serde_json::Value = serde_json::from_str(&h).unwrap_or_default();
            if v.get("format").and_then(|f| f.as_str()) == Some("clickintent-tags") {
                let found = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
                return Err(Error::Version { found, expected: TAG_FORMAT_VERSION });
            }
            return Err(Error::Format(format!("{} is not a tag store", path.display())));
        }
        Some(Err(e)) => return Err(storage(path, e)),
        None => return Ok(Vec::new()),
    }
    let mut tags = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| storage(path, e))?;
        let bad = || Error::Integrity(format!("{} record {}: checksum mismatch or torn write", path.display(), i + 1));
        let (sum, json) = line.split_once(' ').ok_or_else(bad)?;
        if hex::encode(Sha256::digest(json.as_bytes())) != sum {
            return Err(bad());
        }
        tags.push(serde_json::from_str(json)?);
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(author: &str, value: &str, ts: i64) -> ExpertTag {
        ExpertTag {
            author: author.into(),
            key: GroupingKey { feature: "page_type".into(), value: value.into() },
            verdict: Verdict::SuspectedCause,
            note: "spike after error page".into(),
            timestamp_ms: ts,
        }
    }

    #[test]
    fn record_then_list() {
        let dir = tempfile::tempdir().unwrap();
        let store = TagStore::open(dir.path().join("tags.log")).unwrap();
        let t = tag("ana", "error", 10);
        assert_eq!(store.record(&t).unwrap().sequence, 0);
        assert_eq!(store.list(None).unwrap(), vec![t]);
    }

    #[test]
    fn same_key_sorted_by_time() {
        let dir = tempfile::tempdir().unwrap();
        let store = TagStore::open(dir.path().join("tags.log")).unwrap();
        store.record(&tag("b", "error", 30)).unwrap();
        store.record(&tag("a", "error", 20)).unwrap();
        store.record(&tag("c", "home", 5)).unwrap();
        let key = GroupingKey { feature: "page_type".into(), value: "error".into() };
        let listed = store.list(Some(&key)).unwrap();
        assert_eq!(listed.iter().map(|t| t.timestamp_ms).collect::<Vec<_>>(), vec![20, 30]);
        assert_eq!(store.list(None).unwrap().len(), 3);
    }

    #[test]
    fn survives_reopen_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.log");
        {
            let store = TagStore::open(&path).unwrap();
            store.record(&tag("a", "error", 1)).unwrap();
        }
        let store = TagStore::open(&path).unwrap();
        assert_eq!(store.record(&tag("a", "error", 2)).unwrap().sequence, 1);
        assert_eq!(store.list(None).unwrap().len(), 2);

        let text = std::fs::read_to_string(&path).unwrap().replace("spike", "spoke");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(store.list(None), Err(Error::Integrity(_))));
    }

    #[test]
    fn invalid_tags_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = TagStore::open(dir.path().join("t")).unwrap();
        assert!(store.record(&tag("  ", "x", 0)).is_err());
        assert!(store.list(None).unwrap().is_empty());
        assert_eq!("needs-data".parse::<Verdict>().unwrap(), Verdict::NeedsData);
        assert!("maybe".parse::<Verdict>().is_err());

        let other = dir.path().join("other");
        std::fs::write(&other, "{\"format\":\"clickintent-tags\",\"version\":9}\n").unwrap();
        assert!(matches!(TagStore::open(&other), Err(Error::Version { found: 9, .. })));
        let missing = dir.path().join("no/such/dir/tags");
        assert!(matches!(TagStore::open(missing), Err(Error::Storage(_))));
    }
}
