//! Ejection-fraction labels for the three-class systolic function task.

use std::path::Path;

use serde::Deserialize;

use super::Dataset;
use crate::{Error, Result};

/// EF below 40%.
pub const EF_REDUCED: usize = 0;
/// EF in [40%, 54%].
pub const EF_MILDLY_REDUCED: usize = 1;
/// EF above 54%.
pub const EF_NORMAL: usize = 2;

pub fn bin_ef(ef: f64) -> Result<usize> {
    if !(0.0..=100.0).contains(&ef) {
        return Err(Error::Validation(format!("EF {ef} outside [0, 100]")));
    }
    Ok(if ef < 40.0 {
        EF_REDUCED
    } else if ef <= 54.0 {
        EF_MILDLY_REDUCED
    } else {
        EF_NORMAL
    })
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct EfRow {
    pub id: String,
    pub ef: f64,
}

/// Reads a CSV with header `id,ef`.
pub fn read_ef_table(path: impl AsRef<Path>) -> Result<Vec<EfRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Relabels a dataset from an EF table keyed by record id.
pub fn apply_ef_labels(ds: &Dataset, table: &[EfRow]) -> Result<Dataset> {
    let lookup: std::collections::HashMap<&str, f64> = table.iter().map(|r| (r.id.as_str(), r.ef)).collect();
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let ef = lookup
                .get(r.id.as_str())
                .ok_or_else(|| Error::Validation(format!("no EF value for record {}", r.id)))?;
            let mut out = r.clone();
            out.label = bin_ef(*ef)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(ds.dim(), 3, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::VideoRecord;

    #[test]
    fn boundaries() {
        assert_eq!(bin_ef(39.9).unwrap(), 0);
        assert_eq!(bin_ef(40.0).unwrap(), 1);
        assert_eq!(bin_ef(54.0).unwrap(), 1);
        assert_eq!(bin_ef(55.0).unwrap(), 2);
        assert!(bin_ef(-0.1).is_err());
        assert!(bin_ef(100.5).is_err());
        assert!(bin_ef(f64::NAN).is_err());
    }

    #[test]
    fn table_relabels_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ef.csv");
        std::fs::write(&path, "id,ef\nv1,35.5\nv2,61\n").unwrap();
        let table = read_ef_table(&path).unwrap();
        let recs = vec![
            VideoRecord::new("v1", 0, 1, vec![0.0]).unwrap(),
            VideoRecord::new("v2", 0, 1, vec![0.0]).unwrap(),
        ];
        let ds = Dataset::new(1, 1, recs).unwrap();
        let out = apply_ef_labels(&ds, &table).unwrap();
        assert_eq!(out.labels(), vec![0, 2]);
        assert_eq!(out.num_classes(), 3);
    }
}
