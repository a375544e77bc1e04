//! Line-delimited JSON helpers shared by every artifact format.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses every non-blank line of `path`. Fails on the first malformed line.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_lenient(path)?.into_iter().map(|(_, r)| r).collect()
}

/// Parses every non-blank line, keeping per-line failures so callers can
/// report them and carry on. Each entry carries its 1-based line number.
pub fn read_lenient<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, Result<T>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((
            idx + 1,
            serde_json::from_str::<T>(&line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            }),
        ));
    }
    Ok(out)
}

pub fn to_string<T: Serialize>(items: &[T]) -> Result<String> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item)?);
        buf.push('\n');
    }
    Ok(buf)
}

/// Writes one object per line. The file is written next to its target and
/// renamed into place so readers never observe a partial artifact.
pub fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| Error::io(&tmp, e))?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// Serializes span lists as `[[start, end], ...]`, the form used by the
/// scorer interchange files.
pub mod span_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::corpus::CharSpan;

    pub fn serialize<S: Serializer>(spans: &[CharSpan], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[usize; 2]> = spans.iter().map(|c| [c.start, c.end]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CharSpan>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|[a, b]| CharSpan::new(a, b))
            .collect())
    }
}
