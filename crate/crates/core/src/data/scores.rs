use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, ItemId, Result, UserId};

/// Sparse `(user, item) → score` table exported by an external feedback model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: HashMap<(UserId, ItemId), f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a strictly positive score; returns the previous value.
    pub fn insert(&mut self, user: UserId, item: ItemId, score: f64) -> Result<Option<f64>> {
        if !(score > 0.0 && score.is_finite()) {
            return Err(Error::AssumptionViolation(format!(
                "score {score} for user {user}, item {item} is not strictly positive"
            )));
        }
        Ok(self.entries.insert((user, item), score))
    }

    pub fn get(&self, user: UserId, item: ItemId) -> Result<f64> {
        self.entries
            .get(&(user, item))
            .copied()
            .ok_or(Error::MissingScore { user, item })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, ItemId, f64)> + '_ {
        self.entries.iter().map(|(&(u, i), &s)| (u, i, s))
    }

    pub fn users(&self) -> usize {
        self.entries.keys().map(|&(u, _)| u + 1).max().unwrap_or(0)
    }
}

/// Parses `user_id,item_id,score` lines; an optional non-numeric header line
/// is skipped. Duplicate pairs keep the last value.
pub fn parse_scores<R: BufRead>(reader: R) -> Result<ScoreTable> {
    let mut table = ScoreTable::new();
    let mut seen_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if !seen_data && fields[0].parse::<f64>().is_err() {
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != 3 {
            return Err(Error::format(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let user: UserId = fields[0]
            .parse()
            .map_err(|_| Error::format(lineno, format!("bad user id {:?}", fields[0])))?;
        let item: ItemId = fields[1]
            .parse()
            .map_err(|_| Error::format(lineno, format!("bad item id {:?}", fields[1])))?;
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| Error::format(lineno, format!("bad score {:?}", fields[2])))?;
        if !score.is_finite() {
            return Err(Error::format(lineno, "non-finite score"));
        }
        if table.insert(user, item, score)?.is_some() {
            log::warn!("line {lineno}: duplicate score for user {user}, item {item}; keeping the last value");
        }
    }
    Ok(table)
}

pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    parse_scores(BufReader::new(File::open(path)?))
}
