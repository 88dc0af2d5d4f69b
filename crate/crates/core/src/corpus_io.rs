//! Reading and writing of manifests, word lists, frequency tables and
//! reports.
//!
//! Manifests are JSON Lines: one utterance object per line with keys `id`,
//! `reference`, optional `hypothesis` and optional `tags`. Unrecognized keys
//! are carried through unchanged. Word lists are UTF-8 text with one entry
//! per line, and frequency tables are `word<TAB>count` lines.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sot;
use crate::text_norm::normalize_phrase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
    /// Keys this crate does not interpret.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl UtteranceRecord {
    pub fn new(id: impl Into<String>, reference: impl Into<String>) -> Self {
        UtteranceRecord {
            id: id.into(),
            reference: reference.into(),
            hypothesis: None,
            tags: BTreeMap::new(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_hypothesis(mut self, hypothesis: impl Into<String>) -> Self {
        self.hypothesis = Some(hypothesis.into());
        self
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::parse(line, "record has an empty id"));
        }
        if self.reference.trim().is_empty() {
            return Err(Error::parse(
                line,
                format!("record {:?} has an empty reference", self.id),
            ));
        }
        Ok(())
    }
}

/// Streams manifest records, validating each line and rejecting repeated ids.
pub struct ManifestReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(reader: R) -> Self {
        ManifestReader {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<UtteranceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: UtteranceRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Some(Err(Error::parse(self.line_no, e))),
            };
            if let Err(e) = record.validate(self.line_no) {
                return Some(Err(e));
            }
            if !self.seen.insert(record.id.clone()) {
                return Some(Err(Error::validation(format!(
                    "line {}: duplicate utterance id {:?}",
                    self.line_no, record.id
                ))));
            }
            return Some(Ok(record));
        }
    }
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<UtteranceRecord>> {
    ManifestReader::new(reader).collect()
}

pub fn write_manifest<W: Write>(records: &[UtteranceRecord], writer: W) -> Result<()> {
    write_jsonl(records, writer)
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut writer: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListSource {
    FullRare,
    Common,
    PerUtterance,
    Lecture,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordList {
    pub entries: Vec<String>,
    pub source: ListSource,
}

impl WordList {
    /// Normalizes and deduplicates, keeping first occurrences in order.
    pub fn from_entries<I, S>(entries: I, source: ListSource) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for e in entries {
            if let Some(norm) = normalize_phrase(e.as_ref()) {
                if seen.insert(norm.clone()) {
                    out.push(norm);
                }
            }
        }
        WordList {
            entries: out,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_word_list<R: BufRead>(reader: R, source: ListSource) -> Result<WordList> {
    let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
    let list = WordList::from_entries(lines, source);
    if source == ListSource::FullRare && list.is_empty() {
        return Err(Error::validation("full rare-word list is empty"));
    }
    Ok(list)
}

pub fn write_word_list<W: Write>(list: &WordList, mut writer: W) -> Result<()> {
    for e in &list.entries {
        writeln!(writer, "{e}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Word occurrence counts keyed by normalized word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn add(&mut self, word: &str, count: u64) {
        if let Some(w) = normalize_phrase(word) {
            *self.counts.entry(w).or_default() += count;
        }
    }

    /// Counts the words of a transcript; speaker-change markers are skipped.
    pub fn count_text(&mut self, text: &str) {
        for seg in sot::parse_sot(text).segments {
            for tok in seg.tokens {
                *self.counts.entry(tok.into_string()).or_default() += 1;
            }
        }
    }

    pub fn from_references<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut table = FrequencyTable::default();
        for t in texts {
            table.count_text(t);
        }
        table
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn read_frequency_table<R: BufRead>(reader: R) -> Result<FrequencyTable> {
    let mut table = FrequencyTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected word<TAB>count"))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|e| Error::parse(i + 1, format!("bad count {count:?}: {e}")))?;
        table.add(word, count);
    }
    Ok(table)
}

pub fn write_frequency_table<W: Write>(table: &FrequencyTable, mut writer: W) -> Result<()> {
    for (w, c) in table.iter() {
        writeln!(writer, "{w}\t{c}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Serializes a report as a single pretty-printed JSON document.
pub fn write_report<T: Serialize, W: Write>(report: &T, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<T> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

pub fn read_manifest_file(path: &Path) -> Result<Vec<UtteranceRecord>> {
    read_manifest(open(path)?).map_err(|e| e.at_path(path))
}

pub fn write_manifest_file(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    write_manifest(records, create(path)?).map_err(|e| e.at_path(path))
}

pub fn read_word_list_file(path: &Path, source: ListSource) -> Result<WordList> {
    read_word_list(open(path)?, source).map_err(|e| e.at_path(path))
}

pub fn write_report_file<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_report(report, create(path)?).map_err(|e| e.at_path(path))
}
