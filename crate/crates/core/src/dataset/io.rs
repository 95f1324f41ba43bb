use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{DatasetEntry, DatasetError, DatasetStats, SCHEMA_VERSION};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to a temporary file next to `path` and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn sort_entries(entries: &mut [DatasetEntry]) {
    entries.sort_by_key(DatasetEntry::sort_key);
}

/// Serializes entries, one JSON object per line, in canonical order.
pub fn to_jsonl(entries: &[DatasetEntry]) -> Vec<u8> {
    let mut order: Vec<&DatasetEntry> = entries.iter().collect();
    order.sort_by_key(|e| e.sort_key());
    let mut out = Vec::new();
    for e in order {
        serde_json::to_writer(&mut out, e).expect("entries serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_dataset(entries: &[DatasetEntry], path: &Path) -> Result<(), DatasetError> {
    write_atomic(path, &to_jsonl(entries))
}

fn parse_line(line: usize, text: &str) -> Result<DatasetEntry, DatasetError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DatasetError::Parse { line, message: e.to_string() })?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(found) => return Err(DatasetError::Version { line, found, expected: SCHEMA_VERSION }),
        None => return Err(DatasetError::Parse { line, message: "missing schema_version".into() }),
    }
    // Parse from text rather than the value tree to keep floats bit-exact.
    let entry: DatasetEntry =
        serde_json::from_str(text).map_err(|e| DatasetError::Parse { line, message: e.to_string() })?;
    entry.validate().map_err(|message| DatasetError::Invalid { line, message })?;
    Ok(entry)
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Reads every entry; the first bad line aborts with its line number.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetEntry>, DatasetError> {
    lines(path)?.into_iter().map(|(n, l)| parse_line(n, &l)).collect()
}

#[derive(Debug)]
pub struct TolerantRead {
    pub entries: Vec<DatasetEntry>,
    pub errors: Vec<DatasetError>,
}

/// Reads every well-formed entry and collects the errors of the others.
pub fn read_dataset_tolerant(path: &Path) -> Result<TolerantRead, DatasetError> {
    let mut out = TolerantRead { entries: Vec::new(), errors: Vec::new() };
    for (n, l) in lines(path)? {
        match parse_line(n, &l) {
            Ok(e) => out.entries.push(e),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

pub fn dataset_stats(path: &Path) -> Result<DatasetStats, DatasetError> {
    Ok(DatasetStats::from_entries(&read_dataset(path)?))
}
