use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use super::{DataError, Dataset, DatasetKind, DatasetManifest, KeystepRecord, Records, RefExpRecord};
use crate::scene::{View, ViewSet};

/// Width and height, both `u32` little-endian.
pub const GRID_HEADER: usize = 8;

pub(super) fn record_file_plan(r: &KeystepRecord) -> String {
    format!("records/{}_{}.json", r.episode, r.t)
}

pub(super) fn record_file_refexp(r: &RefExpRecord) -> String {
    format!("records/{}_{}_o{}.json", r.episode, r.t, r.object_id)
}

fn grid_files(episode: &str, t: usize, cam: usize) -> (String, String) {
    (format!("depth/{episode}_{t}_{cam}.bin"), format!("ids/{episode}_{t}_{cam}.bin"))
}

fn encode_grid<const N: usize>(width: u32, height: u32, values: impl Iterator<Item = [u8; N]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(GRID_HEADER + width as usize * height as usize * N);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    values.for_each(|b| out.extend_from_slice(&b));
    out
}

pub fn encode_f32_grid(width: u32, height: u32, values: &[f32]) -> Vec<u8> {
    encode_grid(width, height, values.iter().map(|v| v.to_le_bytes()))
}

pub fn encode_u32_grid(width: u32, height: u32, values: &[u32]) -> Vec<u8> {
    encode_grid(width, height, values.iter().map(|v| v.to_le_bytes()))
}

fn corrupt(file: &str, offset: usize, message: impl Into<String>) -> DataError {
    DataError::Corrupt { file: file.to_string(), offset: offset as u64, message: message.into() }
}

fn decode_grid<const N: usize>(file: &str, bytes: &[u8]) -> Result<(u32, u32, Vec<[u8; N]>), DataError> {
    if bytes.len() < GRID_HEADER {
        return Err(corrupt(file, bytes.len(), format!("truncated header ({} of {GRID_HEADER} bytes)", bytes.len())));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let expected = GRID_HEADER + width as usize * height as usize * N;
    if bytes.len() < expected {
        return Err(corrupt(file, bytes.len(), format!("data ends early: {width}x{height} needs {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(corrupt(file, expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let values = bytes[GRID_HEADER..].chunks_exact(N).map(|c| c.try_into().expect("exact chunk")).collect();
    Ok((width, height, values))
}

pub fn decode_f32_grid(file: &str, bytes: &[u8]) -> Result<(u32, u32, Vec<f32>), DataError> {
    let (w, h, v) = decode_grid::<4>(file, bytes)?;
    Ok((w, h, v.into_iter().map(f32::from_le_bytes).collect()))
}

pub fn decode_u32_grid(file: &str, bytes: &[u8]) -> Result<(u32, u32, Vec<u32>), DataError> {
    let (w, h, v) = decode_grid::<4>(file, bytes)?;
    Ok((w, h, v.into_iter().map(u32::from_le_bytes).collect()))
}

fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<(), DataError> {
    let path = root.join(rel);
    let io = |e| DataError::Io { file: path.display().to_string(), source: e };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(&path, bytes).map_err(io)
}

fn read_file(root: &Path, rel: &str) -> Result<Vec<u8>, DataError> {
    let path = root.join(rel);
    fs::read(&path).map_err(|e| DataError::Io { file: path.display().to_string(), source: e })
}

/// Byte offset of a JSON error from its 1-based line and column.
fn json_offset(text: &[u8], e: &serde_json::Error) -> usize {
    let mut offset = 0;
    for (i, line) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == e.line() {
            return (offset + e.column().saturating_sub(1)).min(text.len());
        }
        offset += line.len() + 1;
    }
    text.len()
}

fn parse_json<T: DeserializeOwned>(file: &str, bytes: &[u8]) -> Result<T, DataError> {
    serde_json::from_slice(bytes).map_err(|e| corrupt(file, json_offset(bytes, &e), e.to_string()))
}

fn to_json_line<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(value).expect("records serialize");
    bytes.push(b'\n');
    bytes
}

fn write_views(root: &Path, episode: &str, t: usize, views: &ViewSet) -> Result<(), DataError> {
    for (cam, v) in views.views.iter().enumerate() {
        let (depth, ids) = grid_files(episode, t, cam);
        write_file(root, &depth, &encode_f32_grid(v.width, v.height, &v.depth))?;
        write_file(root, &ids, &encode_u32_grid(v.width, v.height, &v.ids))?;
    }
    Ok(())
}

fn read_views(root: &Path, episode: &str, t: usize, cameras: usize) -> Result<ViewSet, DataError> {
    let mut views = Vec::with_capacity(cameras);
    for cam in 0..cameras {
        let (depth_file, ids_file) = grid_files(episode, t, cam);
        let (w, h, depth) = decode_f32_grid(&depth_file, &read_file(root, &depth_file)?)?;
        let (wi, hi, ids) = decode_u32_grid(&ids_file, &read_file(root, &ids_file)?)?;
        if (w, h) != (wi, hi) {
            return Err(corrupt(&ids_file, 0, format!("resolution {wi}x{hi} differs from depth {w}x{h}")));
        }
        views.push(View { width: w, height: h, depth, ids });
    }
    Ok(ViewSet { views })
}

/// Incremental dataset writer: records go to disk as they arrive, the manifest
/// last. View grids are written once per keystep.
pub struct DatasetWriter {
    dir: PathBuf,
    written: BTreeSet<(String, usize)>,
    files: Vec<String>,
}

impl DatasetWriter {
    pub fn create(dir: &Path) -> Result<Self, DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::Io { file: dir.display().to_string(), source: e })?;
        Ok(DatasetWriter { dir: dir.to_path_buf(), written: BTreeSet::new(), files: Vec::new() })
    }

    fn views(&mut self, episode: &str, t: usize, views: &ViewSet) -> Result<(), DataError> {
        if self.written.insert((episode.to_string(), t)) {
            write_views(&self.dir, episode, t, views)?;
        }
        Ok(())
    }

    pub fn plan(&mut self, r: &KeystepRecord) -> Result<(), DataError> {
        let file = record_file_plan(r);
        write_file(&self.dir, &file, &to_json_line(r))?;
        self.files.push(file);
        self.views(&r.episode, r.t, &r.views)
    }

    pub fn refexp(&mut self, r: &RefExpRecord) -> Result<(), DataError> {
        let file = record_file_refexp(r);
        write_file(&self.dir, &file, &to_json_line(r))?;
        self.files.push(file);
        self.views(&r.episode, r.t, &r.views)
    }

    /// Writes the manifest, which must list exactly the records written.
    pub fn finish(self, manifest: &DatasetManifest) -> Result<(), DataError> {
        if manifest.files != self.files {
            return Err(DataError::Manifest(format!(
                "manifest lists {} files but {} records were written",
                manifest.files.len(),
                self.files.len()
            )));
        }
        let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        bytes.push(b'\n');
        write_file(&self.dir, "manifest.json", &bytes)
    }
}

/// Writes `manifest.json`, one JSON file per record and the binary view grids.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    let mut w = DatasetWriter::create(dir)?;
    match &dataset.records {
        Records::Plan(records) => records.iter().try_for_each(|r| w.plan(r))?,
        Records::Refexp(records) => records.iter().try_for_each(|r| w.refexp(r))?,
    }
    w.finish(&dataset.manifest)
}

fn check_manifest(dir: &Path, m: &DatasetManifest) -> Result<(), DataError> {
    let total: usize = m.counts.values().sum();
    if total != m.files.len() {
        return Err(DataError::Manifest(format!("counts sum to {total} but {} files are listed", m.files.len())));
    }
    let listed: BTreeSet<&str> = m.files.iter().map(String::as_str).collect();
    if listed.len() != m.files.len() {
        return Err(DataError::Manifest("duplicate record file".into()));
    }
    let records = dir.join("records");
    if records.is_dir() {
        let entries = fs::read_dir(&records).map_err(|e| DataError::Io { file: records.display().to_string(), source: e })?;
        for entry in entries {
            let entry = entry.map_err(|e| DataError::Io { file: records.display().to_string(), source: e })?;
            let rel = format!("records/{}", entry.file_name().to_string_lossy());
            if !listed.contains(rel.as_str()) {
                return Err(DataError::Manifest(format!("{rel} is not listed in the manifest")));
            }
        }
    }
    Ok(())
}

/// Reads and checks a dataset's manifest against the files on disk.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DataError> {
    let manifest: DatasetManifest = parse_json("manifest.json", &read_file(dir, "manifest.json")?)?;
    check_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Streams the keystep records of a plan or long dataset in manifest order.
pub fn visit_plan_records(
    dir: &Path,
    mut f: impl FnMut(KeystepRecord) -> Result<(), DataError>,
) -> Result<DatasetManifest, DataError> {
    let manifest = read_manifest(dir)?;
    if manifest.kind == DatasetKind::Refexp {
        return Err(DataError::Manifest("expected a plan dataset, found refexp".into()));
    }
    let mut counted: BTreeMap<String, usize> = BTreeMap::new();
    for file in &manifest.files {
        let mut r: KeystepRecord = parse_json(file, &read_file(dir, file)?)?;
        r.views = read_views(dir, &r.episode, r.t, r.cameras.len())?;
        *counted.entry(r.key()).or_default() += 1;
        f(r)?;
    }
    if manifest.kind == DatasetKind::Plan && counted != manifest.counts {
        return Err(DataError::Manifest("per-variation counts disagree with the records".into()));
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let manifest = read_manifest(dir)?;
    let records = match manifest.kind {
        DatasetKind::Plan | DatasetKind::Long => {
            let mut out = Vec::with_capacity(manifest.files.len());
            visit_plan_records(dir, |r| {
                out.push(r);
                Ok(())
            })?;
            Records::Plan(out)
        }
        DatasetKind::Refexp => {
            let mut cache: BTreeMap<(String, usize), ViewSet> = BTreeMap::new();
            let mut out = Vec::with_capacity(manifest.files.len());
            for file in &manifest.files {
                let mut r: RefExpRecord = parse_json(file, &read_file(dir, file)?)?;
                let key = (r.episode.clone(), r.t);
                if !cache.contains_key(&key) {
                    cache.insert(key.clone(), read_views(dir, &r.episode, r.t, r.cameras.len())?);
                }
                r.views = cache[&key].clone();
                out.push(r);
            }
            Records::Refexp(out)
        }
    };
    Ok(Dataset { manifest, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_roundtrip_and_errors() {
        let bytes = encode_f32_grid(2, 1, &[1.5, -0.0]);
        assert_eq!(bytes.len(), GRID_HEADER + 8);
        let (w, h, v) = decode_f32_grid("d", &bytes).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(v[0].to_bits(), 1.5f32.to_bits());
        assert_eq!(v[1].to_bits(), (-0.0f32).to_bits());
        let err = decode_f32_grid("d.bin", &bytes[..11]).unwrap_err().to_string();
        assert!(err.contains("d.bin") && err.contains("byte 11"), "{err}");
        let err = decode_u32_grid("i.bin", &bytes[..3]).unwrap_err().to_string();
        assert!(err.contains("byte 3"), "{err}");
    }

    #[test]
    fn json_offset_points_at_the_error() {
        let text = b"{\"a\": 1,\n \"b\": x}";
        let e = serde_json::from_slice::<serde_json::Value>(text).unwrap_err();
        assert_eq!(text[json_offset(text, &e)], b'x');
    }
}
