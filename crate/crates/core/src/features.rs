//! Per-image feature vectors, cosine distance and the RBF-on-cosine kernel.
//!
//! Canonical file format is line-delimited JSON, one record per line:
//!
//! ```text
//! {"id": "frame_0001", "path": "images/frame_0001.png", "features": [0.12, ...]}
//! ```
//!
//! A binary sidecar is also accepted: a JSON header
//! `{"dim": D, "ids": [...], "paths": [...], "data": "features.bin"}` next to
//! a little-endian `f32` file holding the vectors row-major. Record paths
//! and `data` are relative to the directory holding the file being loaded.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    #[serde(rename = "id")]
    pub image_id: String,
    #[serde(rename = "path")]
    pub image_path: String,
    pub features: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig<T> {
    pub length_scale: T,
    /// Starting diagonal regularizer for the GP factorization.
    pub jitter: T,
}

impl<T: Scalar> Default for KernelConfig<T> {
    fn default() -> Self {
        KernelConfig {
            length_scale: T::one(),
            jitter: T::lit(1e-8),
        }
    }
}

impl<T: Scalar> KernelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > T::zero()) {
            return Err(Error::invalid("length_scale must be positive"));
        }
        if !(self.jitter >= T::zero()) || !self.jitter.is_finite() {
            return Err(Error::invalid("jitter must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BinaryHeader {
    dim: usize,
    ids: Vec<String>,
    paths: Vec<String>,
    data: String,
}

/// Immutable-after-load collection of feature vectors in insertion (capture) order.
#[derive(Debug, Clone)]
pub struct FeatureStore<T> {
    records: Vec<FeatureVector<T>>,
    /// Unit-normalized copies, used by kernel assembly.
    units: Vec<Vec<T>>,
    index: HashMap<String, usize>,
    dim: Option<usize>,
    base_dir: PathBuf,
}

impl<T: Scalar> Default for FeatureStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> FeatureStore<T> {
    pub fn new() -> Self {
        FeatureStore {
            records: Vec::new(),
            units: Vec::new(),
            index: HashMap::new(),
            dim: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn from_records(records: impl IntoIterator<Item = FeatureVector<T>>) -> Result<Self> {
        let mut store = Self::new();
        for (k, record) in records.into_iter().enumerate() {
            store.insert(record).map_err(|reason| Error::Load {
                path: PathBuf::from("<memory>"),
                record: k + 1,
                reason,
            })?;
        }
        Ok(store)
    }

    /// Appends a record, returning a description of the violated invariant on failure.
    pub fn insert(&mut self, record: FeatureVector<T>) -> std::result::Result<(), String> {
        let len = record.features.len();
        if len == 0 {
            return Err("empty feature vector".into());
        }
        match self.dim {
            Some(dim) if dim != len => {
                return Err(format!("dimension mismatch: expected {dim}, found {len}"));
            }
            _ => {}
        }
        if self.index.contains_key(&record.image_id) {
            return Err(format!("duplicate id {:?}", record.image_id));
        }
        if record.features.iter().any(|x| !x.is_finite()) {
            return Err("non-finite feature value".into());
        }
        let norm = norm(&record.features);
        if !(norm > T::zero()) {
            return Err("zero-norm feature vector".into());
        }
        self.dim = Some(len);
        self.units
            .push(record.features.iter().map(|&x| x / norm).collect());
        self.index
            .insert(record.image_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature dimension, undefined until the first record.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn records(&self) -> &[FeatureVector<T>] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector<T>> {
        self.index.get(id).map(|&k| &self.records[k])
    }

    /// Capture index of an id.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.image_id.clone()).collect()
    }

    pub(crate) fn unit(&self, k: usize) -> &[T] {
        &self.units[k]
    }

    /// Image path of a record, resolved against the store's base directory.
    pub fn resolve_path(&self, id: &str) -> Option<PathBuf> {
        self.get(id).map(|r| self.base_dir.join(&r.image_path))
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for record in &self.records {
            let line = serde_json::json!({
                "id": record.image_id,
                "path": record.image_path,
                "features": record.features.iter().map(|x| x.as_f64()).collect::<Vec<_>>(),
            });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the binary sidecar pair: `header` (JSON) and `data` (f32 LE).
    pub fn write_binary(&self, header: impl AsRef<Path>, data: impl AsRef<Path>) -> Result<()> {
        let header = header.as_ref();
        let data = data.as_ref();
        let mut out = BufWriter::new(fs::File::create(data)?);
        for record in &self.records {
            for x in &record.features {
                out.write_all(&(x.as_f64() as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        let data_name = if data.parent() == header.parent() {
            data.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned()
        } else {
            data.to_string_lossy().into_owned()
        };
        let head = BinaryHeader {
            dim: self.dim.unwrap_or(0),
            ids: self.records.iter().map(|r| r.image_id.clone()).collect(),
            paths: self.records.iter().map(|r| r.image_path.clone()).collect(),
            data: data_name,
        };
        fs::write(header, serde_json::to_vec_pretty(&head)?)?;
        Ok(())
    }
}

/// Loads a feature file: line-delimited JSON, or a binary-sidecar header.
pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureStore<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    if let Ok(header) = serde_json::from_str::<BinaryHeader>(&text) {
        return load_binary(path, header);
    }
    load_jsonl_from(path, BufReader::new(text.as_bytes()))
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_jsonl_from<T: Scalar>(path: &Path, reader: impl BufRead) -> Result<FeatureStore<T>> {
    #[derive(Deserialize)]
    struct Record {
        id: String,
        path: String,
        features: Vec<f64>,
    }

    let mut store = FeatureStore::new().with_base_dir(parent_dir(path));
    let mut record_no = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        record_no += 1;
        let load_err = |reason: String| Error::Load {
            path: path.to_path_buf(),
            record: record_no,
            reason,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| load_err(e.to_string()))?;
        let features = record
            .features
            .into_iter()
            .map(|x| T::from_f64(x).ok_or_else(|| load_err(format!("value {x} not representable"))))
            .collect::<Result<Vec<T>>>()?;
        store
            .insert(FeatureVector {
                image_id: record.id,
                image_path: record.path,
                features,
            })
            .map_err(load_err)?;
    }
    Ok(store)
}

fn load_binary<T: Scalar>(header_path: &Path, header: BinaryHeader) -> Result<FeatureStore<T>> {
    let base = parent_dir(header_path);
    let load_err = |record: usize, reason: String| Error::Load {
        path: header_path.to_path_buf(),
        record,
        reason,
    };
    if header.ids.len() != header.paths.len() {
        return Err(load_err(
            0,
            format!(
                "header lists {} ids but {} paths",
                header.ids.len(),
                header.paths.len()
            ),
        ));
    }
    let bytes = fs::read(base.join(&header.data))?;
    let expected = header.ids.len() * header.dim * 4;
    if bytes.len() != expected {
        return Err(load_err(
            0,
            format!(
                "binary data holds {} bytes, header implies {expected}",
                bytes.len()
            ),
        ));
    }
    let mut store = FeatureStore::new().with_base_dir(base);
    let row_bytes = header.dim * 4;
    for (k, (id, image_path)) in header.ids.into_iter().zip(header.paths).enumerate() {
        let row = &bytes[k * row_bytes..(k + 1) * row_bytes];
        let features = row
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        store
            .insert(FeatureVector {
                image_id: id,
                image_path,
                features,
            })
            .map_err(|reason| load_err(k + 1, reason))?;
    }
    Ok(store)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let aa: T = a.iter().map(|&x| x * x).sum();
    let bb: T = b.iter().map(|&x| x * x).sum();
    if !(aa > T::zero()) || !(bb > T::zero()) {
        return Err(Error::NumericalDomain(
            "cosine distance of a zero-norm vector".into(),
        ));
    }
    let ab: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    Ok(clamp_distance(T::one() - ab / (aa * bb).sqrt()))
}

/// Cosine distance between two already unit-normalized vectors.
pub(crate) fn unit_cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let ab: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    clamp_distance(T::one() - ab)
}

fn clamp_distance<T: Scalar>(d: T) -> T {
    d.max(T::zero()).min(T::lit(2.0))
}

/// `exp(-d / (2 l^2))` for a cosine distance `d`.
pub fn kernel_from_distance<T: Scalar>(distance: T, cfg: &KernelConfig<T>) -> T {
    let l = cfg.length_scale;
    (-distance / (T::lit(2.0) * l * l)).exp()
}

/// RBF kernel on cosine distance.
pub fn kernel_value<T: Scalar>(a: &[T], b: &[T], cfg: &KernelConfig<T>) -> Result<T> {
    Ok(kernel_from_distance(cosine_distance(a, b)?, cfg))
}
