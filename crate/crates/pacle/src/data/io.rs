//! `pacle_ds_v1` dataset format: JSON Lines with a header line followed by
//! one record per line. Stages are 1-based in files.

use serde::{Deserialize, Serialize};

use super::{OfflineDataset, SampleRecord};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "pacle_ds_v1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    n: usize,
    #[serde(rename = "H")]
    horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct Line {
    i: usize,
    h: usize,
    s: usize,
    a: usize,
    r: f64,
    sp: usize,
    prov: String,
}

/// Serializes a dataset to JSON Lines.
pub fn write_jsonl(dataset: &OfflineDataset) -> String {
    let mut out = serde_json::to_string(&Header {
        format: DATASET_FORMAT.to_string(),
        n: dataset.len(),
        horizon: dataset.horizon(),
    })
    .expect("header serializes");
    out.push('\n');
    for r in dataset.records() {
        let line = Line {
            i: r.index,
            h: r.stage + 1,
            s: r.state,
            a: r.action,
            r: r.reward,
            sp: r.next_state,
            prov: r.provenance.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses a `pacle_ds_v1` document.
pub fn read_jsonl(text: &str) -> Result<OfflineDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Header = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Validation("empty dataset file".into()))?,
    )?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Validation(format!(
            "unsupported format {:?} (expected {DATASET_FORMAT:?})",
            header.format
        )));
    }
    let mut records = Vec::with_capacity(header.n);
    for line in lines {
        let l: Line = serde_json::from_str(line)?;
        if l.h == 0 || l.h > header.horizon {
            return Err(Error::Validation(format!(
                "record {} at stage {} with horizon {}",
                l.i, l.h, header.horizon
            )));
        }
        records.push(SampleRecord {
            index: l.i,
            stage: l.h - 1,
            state: l.s,
            action: l.a,
            reward: l.r,
            next_state: l.sp,
            provenance: l.prov,
        });
    }
    if records.len() != header.n {
        return Err(Error::Validation(format!(
            "header declares {} records, found {}",
            header.n,
            records.len()
        )));
    }
    OfflineDataset::from_records(records, header.horizon)
}
