//! Field dumps: a sidecar JSON header plus raw little-endian f64 binary,
//! row-major over the real coordinates. The loader validates the declared
//! count against both the grid and the byte length.

use crate::error::{CmaError, Result};
use crate::field::ScalarField;
use crate::grid::GridSpec;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    pub res: usize,
    pub field: String,
    pub dtype: String,
    pub count: usize,
}

/// Write `<dir>/<name>.json` and `<dir>/<name>.bin`.
pub fn dump_scalar(dir: &Path, name: &str, f: &ScalarField) -> Result<()> {
    let grid = f.grid();
    let header = FieldHeader {
        n: grid.n(),
        res: grid.res(),
        field: name.to_string(),
        dtype: DTYPE.to_string(),
        count: grid.points(),
    };
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| CmaError::Io(format!("header encode: {e}")))?;
    fs::write(dir.join(format!("{name}.json")), json)?;
    let mut bytes = Vec::with_capacity(f.values().len() * 8);
    for v in f.values() {
        bytes.write_all(&v.to_le_bytes())?;
    }
    fs::write(dir.join(format!("{name}.bin")), bytes)?;
    Ok(())
}

pub fn load_scalar(dir: &Path, name: &str) -> Result<ScalarField> {
    let header_raw = fs::read_to_string(dir.join(format!("{name}.json")))?;
    let header: FieldHeader = serde_json::from_str(&header_raw)
        .map_err(|e| CmaError::Io(format!("header decode: {e}")))?;
    if header.dtype != DTYPE {
        return Err(CmaError::Io(format!("unsupported dtype {}", header.dtype)));
    }
    let grid = GridSpec::new(header.n, header.res)?;
    if header.count != grid.points() {
        return Err(CmaError::Io(format!(
            "count {} does not match grid {}^{}",
            header.count,
            header.res,
            2 * header.n
        )));
    }
    let bytes = fs::read(dir.join(format!("{name}.bin")))?;
    if bytes.len() != header.count * 8 {
        return Err(CmaError::Io(format!(
            "binary length {} does not match count {}",
            bytes.len(),
            header.count
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

/// Plot-ready CSV from named columns of equal length.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    if let Some(first) = columns.first() {
        if columns.iter().any(|(_, c)| c.len() != first.1.len()) {
            return Err(CmaError::Io("csv columns must have equal length".into()));
        }
    }
    let mut s = String::new();
    s.push_str(&columns.iter().map(|(h, _)| *h).collect::<Vec<_>>().join(","));
    s.push('\n');
    let rows = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|(_, c)| format!("{:.12e}", c[r])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(1, 16).unwrap();
        let f = ScalarField::from_fn(grid, |c| (c[0] - 0.3) * (c[1] + 1.0) + 1e-17);
        dump_scalar(dir.path(), "phi", &f).unwrap();
        let g = load_scalar(dir.path(), "phi").unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn loader_rejects_truncated_binary() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(1, 16).unwrap();
        let f = ScalarField::zeros(grid);
        dump_scalar(dir.path(), "phi", &f).unwrap();
        let bin = dir.path().join("phi.bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&bin, bytes).unwrap();
        assert!(load_scalar(dir.path(), "phi").is_err());
    }

    #[test]
    fn loader_rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(1, 16).unwrap();
        dump_scalar(dir.path(), "phi", &ScalarField::zeros(grid)).unwrap();
        let hpath = dir.path().join("phi.json");
        let mut h: FieldHeader =
            serde_json::from_str(&fs::read_to_string(&hpath).unwrap()).unwrap();
        h.count = 7;
        fs::write(&hpath, serde_json::to_string(&h).unwrap()).unwrap();
        assert!(load_scalar(dir.path(), "phi").is_err());
    }
}
