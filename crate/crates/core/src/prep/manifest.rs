use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PrepError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub class_id: String,
    /// `None` until a split has been assigned; serialized as `null`.
    pub split: Option<Split>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, class_id: impl Into<String>, split: Option<Split>) -> Self {
        Self {
            sample_id: sample_id.into(),
            class_id: class_id.into(),
            split,
        }
    }
}

/// Ordered sample list. Records are kept sorted by `sample_id`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
    /// Free-text log of applied transforms, `; `-separated.
    pub provenance: String,
}

impl DatasetManifest {
    pub fn new(mut records: Vec<SampleRecord>) -> Result<Self, PrepError> {
        records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(w) = records.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
            return Err(PrepError::DuplicateSampleId(w[0].sample_id.clone()));
        }
        Ok(Self {
            records,
            provenance: String::new(),
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record count per class, keyed by class id.
    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.class_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    fn note(&mut self, step: String) {
        if !self.provenance.is_empty() {
            self.provenance.push_str("; ");
        }
        self.provenance.push_str(&step);
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, PrepError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SampleRecord = serde_json::from_str(&line).map_err(|e| PrepError::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), PrepError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PrepError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Reads a JSONL manifest: one `{"sample_id", "class_id", "split"}` object per line.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, PrepError> {
    let file = std::fs::File::open(path)?;
    DatasetManifest::from_jsonl(BufReader::new(file))
}

/// Drops every class with fewer than `min_samples` records.
pub fn filter_infrequent(m: &DatasetManifest, min_samples: usize) -> Result<DatasetManifest, PrepError> {
    if min_samples == 0 {
        return Err(PrepError::InvalidArgument("min_samples must be at least 1".into()));
    }
    let counts = m.class_counts();
    let records: Vec<SampleRecord> = m
        .records
        .iter()
        .filter(|r| counts[r.class_id.as_str()] >= min_samples)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(PrepError::EmptyResult { min_samples });
    }
    let kept = records
        .iter()
        .map(|r| r.class_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let mut out = DatasetManifest {
        records,
        provenance: m.provenance.clone(),
    };
    out.note(format!(
        "filter_infrequent(min_samples={min_samples}): kept {kept} of {} classes",
        counts.len()
    ));
    Ok(out)
}

/// Marks exactly `per_class` records of every class as validation, the rest as
/// train. Within a class the draw is uniform without replacement over its
/// records in `sample_id` order; classes are visited in `class_id` order.
pub fn make_val_split(m: &DatasetManifest, per_class: usize, seed: u64) -> Result<DatasetManifest, PrepError> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        by_class.entry(r.class_id.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Train; m.records.len()];
    for (class_id, members) in &by_class {
        if per_class == 0 {
            continue;
        }
        if members.len() <= per_class {
            return Err(PrepError::ClassTooSmall {
                class_id: (*class_id).to_owned(),
                count: members.len(),
                per_class,
            });
        }
        for pick in rand::seq::index::sample(&mut rng, members.len(), per_class) {
            split[members[pick]] = Split::Val;
        }
    }
    let records = m
        .records
        .iter()
        .zip(split)
        .map(|(r, s)| SampleRecord {
            split: Some(s),
            ..r.clone()
        })
        .collect();
    let mut out = DatasetManifest {
        records,
        provenance: m.provenance.clone(),
    };
    out.note(format!("make_val_split(per_class={per_class}, seed={seed})"));
    Ok(out)
}
