use super::{read_json, sha256_hex, write_json};
use crate::error::Result;
use crate::geometry::{build_partition, CellPartition, Grid, RegionSet};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct CachedPartition {
    pub digest: String,
    pub path: PathBuf,
    pub partition: CellPartition,
    /// Whether the partition came from the cache.
    pub hit: bool,
}

/// Key of a partition: the grid specification and the raw regions file.
pub fn partition_digest(grid: &Grid, regions_bytes: &[u8]) -> String {
    let mut key = serde_json::to_vec(grid).expect("plain data");
    key.push(b'\n');
    key.extend_from_slice(regions_bytes);
    sha256_hex(&key)
}

/// Loads the partition for this grid and regions file from `dir`, building
/// and storing it when absent or unreadable.
pub fn load_or_build_partition(
    dir: &Path,
    grid: &Grid,
    regions: &RegionSet,
    regions_bytes: &[u8],
) -> Result<CachedPartition> {
    let digest = partition_digest(grid, regions_bytes);
    let path = dir.join(format!("partition-{digest}.json"));
    if path.exists() {
        match read_json::<CellPartition>(&path) {
            Ok(partition) if partition.n_cells() == grid.n_cells() => {
                return Ok(CachedPartition {
                    digest,
                    path,
                    partition,
                    hit: true,
                })
            }
            _ => log::warn!("discarding unreadable partition cache {}", path.display()),
        }
    }
    let partition = build_partition(grid, regions)?;
    write_json(&path, &partition)?;
    Ok(CachedPartition {
        digest,
        path,
        partition,
        hit: false,
    })
}
