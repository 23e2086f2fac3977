//! Append-only record of finished questions, used by `--resume`.
//!
//! Each line is one JSON [`JournalEntry`]. A torn final line from a killed
//! process is ignored on load.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ensemblex::Decision;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tracing::warn;

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub question_id: String,
    pub decision: Decision,
}

pub fn journal_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".journal.jsonl");
    out.with_file_name(name)
}

/// Reads every complete entry; later entries for the same id win.
pub fn load_journal(path: &Path) -> Result<HashMap<String, Decision>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut done = HashMap::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<JournalEntry>(line) {
            Ok(entry) => {
                done.insert(entry.question_id, entry.decision);
            }
            Err(e) if i + 1 == lines.len() => {
                warn!(path = %path.display(), error = %e, "ignoring torn last journal line");
            }
            Err(e) => {
                return Err(CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(done)
}

/// Cuts a partial last line left by a killed writer.
fn drop_torn_tail(path: &Path) -> Result<()> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let f = std::fs::OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        f.set_len(keep as u64).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

/// Single writer task fed through a channel.
pub struct JournalWriter {
    tx: mpsc::UnboundedSender<JournalEntry>,
    task: JoinHandle<std::io::Result<()>>,
    path: PathBuf,
}

impl JournalWriter {
    /// Opens the journal, truncating it unless `append` is set.
    pub async fn open(path: &Path, append: bool) -> Result<Self> {
        if append {
            drop_torn_tail(path)?;
        }
        let mut file = tokio::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .await
            .map_err(|e| CliError::io(path, e))?;
        let (tx, mut rx) = mpsc::unbounded_channel::<JournalEntry>();
        let task = tokio::spawn(async move {
            while let Some(entry) = rx.recv().await {
                let mut line = serde_json::to_vec(&entry).expect("journal entries serialize");
                line.push(b'\n');
                file.write_all(&line).await?;
                file.flush().await?;
            }
            Ok(())
        });
        Ok(Self {
            tx,
            task,
            path: path.to_path_buf(),
        })
    }

    pub fn sender(&self) -> mpsc::UnboundedSender<JournalEntry> {
        self.tx.clone()
    }

    /// Waits until every queued entry is on disk.
    pub async fn finish(self) -> Result<()> {
        drop(self.tx);
        self.task
            .await
            .map_err(|e| CliError::Data(format!("journal writer: {e}")))?
            .map_err(|e| CliError::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ensemblex::{Question, TopologyMode};

    fn entry(id: &str) -> JournalEntry {
        let q = Question::multi_choice(id, "?", ["a", "b"]).unwrap();
        JournalEntry {
            question_id: id.into(),
            decision: Decision::failed(&q, TopologyMode::GlobalPooling, "x"),
        }
    }

    #[tokio::test]
    async fn torn_tail_is_ignored_and_appends_resume_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let w = JournalWriter::open(&path, false).await.unwrap();
        w.sender().send(entry("a")).unwrap();
        w.sender().send(entry("b")).unwrap();
        w.finish().await.unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"question_id\":\"c\",\"deci");
        std::fs::write(&path, &bytes).unwrap();
        let done = load_journal(&path).unwrap();
        assert_eq!(done.len(), 2);

        let w = JournalWriter::open(&path, true).await.unwrap();
        w.sender().send(entry("c")).unwrap();
        w.finish().await.unwrap();
        let done = load_journal(&path).unwrap();
        assert_eq!(done.len(), 3);
        assert!(done.contains_key("c"));
    }

    #[test]
    fn path_sits_next_to_output() {
        assert_eq!(
            journal_path(Path::new("/x/sub.csv")),
            PathBuf::from("/x/sub.csv.journal.jsonl")
        );
    }
}
