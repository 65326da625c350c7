use super::{parse_error, read_bytes, write_atomic};
use crate::allocation::RegionTotals;
use crate::error::{Error, Result};
use crate::geometry::RegionSet;
use serde::Deserialize;
use std::path::Path;

#[derive(Deserialize)]
struct Row {
    region_id: String,
    time_index: i64,
    count: i64,
}

pub fn read_counts(path: &Path, regions: &RegionSet, n_times: usize) -> Result<RegionTotals> {
    parse_counts(&read_bytes(path)?, path, regions, n_times)
}

/// Parses a `region_id,time_index,count` table. Absent (region, time) pairs
/// count as zero; duplicates, unknown ids and negative counts are errors.
pub fn parse_counts(
    bytes: &[u8],
    path: &Path,
    regions: &RegionSet,
    n_times: usize,
) -> Result<RegionTotals> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| parse_error(path, e))?.clone();
    for col in ["region_id", "time_index", "count"] {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_error(path, format!("missing column `{col}`")));
        }
    }
    let mut counts = vec![vec![0u64; regions.len()]; n_times];
    let mut seen = vec![vec![false; regions.len()]; n_times];
    for (k, row) in reader.deserialize::<Row>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| parse_error(path, format!("line {line}: {e}")))?;
        let i = regions.index_of(&row.region_id).ok_or_else(|| {
            Error::Validation(format!(
                "{}: line {line} references unknown region id `{}`",
                path.display(),
                row.region_id
            ))
        })?;
        if row.time_index < 0 || row.time_index as usize >= n_times {
            return Err(Error::Validation(format!(
                "{}: line {line} has time index {} outside 0..{n_times}",
                path.display(),
                row.time_index
            )));
        }
        if row.count < 0 {
            return Err(Error::Validation(format!(
                "{}: line {line} has negative count {} for region `{}`",
                path.display(),
                row.count,
                row.region_id
            )));
        }
        let t = row.time_index as usize;
        if std::mem::replace(&mut seen[t][i], true) {
            return Err(Error::Validation(format!(
                "{}: line {line} repeats region `{}` at time {t}",
                path.display(),
                row.region_id
            )));
        }
        counts[t][i] = row.count as u64;
    }
    RegionTotals::new(counts)
}

/// Writes every (region, time) pair, time-major.
pub fn write_counts(path: &Path, regions: &RegionSet, totals: &RegionTotals) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| parse_error(path, e);
    w.write_record(["region_id", "time_index", "count"])
        .map_err(csv_err)?;
    for t in 0..totals.n_times() {
        for (i, r) in regions.iter().enumerate() {
            w.write_record([r.id.as_str(), &t.to_string(), &totals.get(t, i).to_string()])
                .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| parse_error(path, e))?;
    write_atomic(path, &bytes)
}
