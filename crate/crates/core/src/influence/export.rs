use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of an influence matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub target_id: String,
    pub train_index: usize,
    pub train_x: f64,
    pub train_y: f64,
    pub train_tag: String,
    pub value: f64,
}

pub fn write_influence_csv(path: &Path, rows: &[InfluenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an influence CSV, rejecting files whose header or values do not
/// match the schema.
pub fn read_influence_csv(path: &Path) -> Result<Vec<InfluenceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = ["target_id", "train_index", "train_x", "train_y", "train_tag", "value"];
    let header = r.headers()?.clone();
    if header.iter().ne(expected) {
        return Err(Error::Schema(format!(
            "{}: expected columns {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: InfluenceRow = rec.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if !(row.value.is_finite() && row.train_x.is_finite() && row.train_y.is_finite()) {
            return Err(Error::Schema(format!("{}: non-finite value", path.display())));
        }
        rows.push(row);
    }
    Ok(rows)
}
