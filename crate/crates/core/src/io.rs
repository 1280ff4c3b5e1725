//! Artifact files: JSON when the path ends in `.json`, bincode otherwise.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn save<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let w = BufWriter::new(File::create(path)?);
    if is_json(path) {
        serde_json::to_writer_pretty(w, value)?;
    } else {
        bincode::serialize_into(w, value)?;
    }
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(if is_json(path) {
        serde_json::from_reader(r)?
    } else {
        bincode::deserialize_from(r)?
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![(1.5f64, "a".to_string()), (-0.1, "b".into())];
        for name in ["x.json", "x.bin"] {
            let p = dir.path().join(name);
            save(&v, &p).unwrap();
            let back: Vec<(f64, String)> = load(&p).unwrap();
            assert_eq!(back, v);
        }
    }
}
