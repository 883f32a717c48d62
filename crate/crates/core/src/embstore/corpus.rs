use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::check_unique_ids;
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub id: String,
    pub text: String,
}

/// Ordered caption records. Position in the corpus is the caption index used
/// by every downstream stage. Texts may repeat; IDs may not.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaptionCorpus {
    records: Vec<CaptionRecord>,
}

impl CaptionCorpus {
    pub fn new(records: Vec<CaptionRecord>) -> Result<Self> {
        if let Some(row) = records.iter().position(|r| r.text.is_empty()) {
            return Err(Error::Shape {
                context: "corpus".into(),
                reason: format!("record {row} has empty text"),
            });
        }
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        check_unique_ids("corpus", &ids)?;
        Ok(CaptionCorpus { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CaptionRecord] {
        &self.records
    }

    pub fn id(&self, i: usize) -> &str {
        &self.records[i].id
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }
}

/// Reads a JSON-lines corpus: one `{"id": ..., "text": ...}` object per line.
pub fn read_corpus(path: &Path) -> Result<CaptionCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let parse_err = |reason: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            reason,
        };
        if line.trim().is_empty() {
            return Err(parse_err("blank line".into()));
        }
        let rec: CaptionRecord =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.text.is_empty() {
            return Err(parse_err("empty caption text".into()));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(format!("duplicate id {:?}", rec.id)));
        }
        records.push(rec);
    }
    Ok(CaptionCorpus { records })
}

pub fn write_corpus(corpus: &CaptionCorpus, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        for rec in corpus.records() {
            let line = serde_json::to_string(rec).expect("caption record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}
