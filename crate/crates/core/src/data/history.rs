use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::{Error, ItemId, Result, UserId};

/// Per-user, append-only history files (`user_<id>.hist`, one item id per line).
#[derive(Debug)]
pub struct HistoryLog {
    dir: PathBuf,
    append_lock: Mutex<()>,
}

impl HistoryLog {
    /// Opens (creating if needed) a history directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            append_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, user: UserId) -> PathBuf {
        self.dir.join(format!("user_{user}.hist"))
    }

    /// Appends `items` in order, preserving duplicates.
    pub fn append(&self, user: UserId, items: &[ItemId]) -> Result<()> {
        let _guard = self.append_lock.lock().expect("history lock poisoned");
        let mut file = OpenOptions::new().create(true).append(true).open(self.path(user))?;
        let mut buf = String::new();
        for i in items {
            buf.push_str(&i.to_string());
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    /// A user without a history file has an empty history.
    pub fn load(&self, user: UserId) -> Result<Vec<ItemId>> {
        let path = self.path(user);
        if !path.exists() {
            return Ok(Vec::new());
        }
        parse_history(BufReader::new(File::open(path)?))
    }
}

/// Parses one item id per line; blank lines are ignored.
pub fn parse_history<R: BufRead>(reader: R) -> Result<Vec<ItemId>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::format(idx + 1, format!("bad item id {t:?}")))?,
        );
    }
    Ok(out)
}
