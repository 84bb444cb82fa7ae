//! On-disk formats.
//!
//! Models and regressors share one envelope: a JSON header naming a sibling
//! binary payload of little-endian values. Model payload order is template
//! (3V f64), basis column-major (3V·B f64), joint regressor row-major
//! (J·V f64, only when `has_joints`), then a u32 face count followed by u32
//! vertex-index triples.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearShapeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub num_vertices: usize,
    pub num_coeffs: usize,
    pub has_joints: bool,
    #[serde(default)]
    pub num_joints: usize,
    pub payload: String,
    /// Optional explicit basis row count; must equal `3 · num_vertices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_rows: Option<usize>,
}

/// Payload path written next to a header at `header_path`.
pub fn payload_name(header_path: &Path) -> String {
    let stem = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "payload".to_string());
    format!("{stem}.bin")
}

pub(crate) fn resolve_payload(header_path: &Path, payload: &str) -> PathBuf {
    match header_path.parent() {
        Some(dir) => dir.join(payload),
        None => PathBuf::from(payload),
    }
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Little-endian writer for payloads.
#[derive(Default)]
pub(crate) struct PayloadWriter {
    bytes: Vec<u8>,
}

impl PayloadWriter {
    pub fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) {
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

/// Cursor over a payload that reports byte offsets in its errors.
pub(crate) struct PayloadReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, field: &str, n: usize) -> Result<&'a [u8]> {
        let end = self.offset + n;
        if end > self.bytes.len() {
            return Err(Error::format(
                field,
                format!(
                    "truncated payload: expected at least {end} bytes, got {}",
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(s)
    }

    pub fn f64s(&mut self, field: &str, count: usize) -> Result<Vec<f64>> {
        let start = self.offset;
        let raw = self.take(field, count * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                field,
                format!("non-finite value at byte offset {}", start + 8 * i),
            ));
        }
        Ok(values)
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        let raw = self.take(field, 4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }

    pub fn finish(self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::format(
                "payload",
                format!(
                    "expected {} bytes, got {} (trailing data at byte offset {})",
                    self.offset,
                    self.bytes.len(),
                    self.offset
                ),
            ));
        }
        Ok(())
    }
}

/// Writes `model` as `<path>` (JSON header) plus a sibling `.bin` payload.
pub fn save_model(model: &LinearShapeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_name(path);
    let header = ModelHeader {
        num_vertices: model.num_vertices(),
        num_coeffs: model.num_coeffs(),
        has_joints: model.joint_regressor().is_some(),
        num_joints: model.num_joints(),
        payload: payload.clone(),
        basis_rows: Some(model.basis().nrows()),
    };
    let mut w = PayloadWriter::default();
    w.f64s(model.template().iter());
    w.f64s(model.basis().iter());
    if let Some(jr) = model.joint_regressor() {
        w.f64s(jr.transpose().iter());
    }
    w.u32(model.faces().len() as u32);
    for f in model.faces() {
        for &i in f {
            w.u32(i);
        }
    }
    let payload_path = resolve_payload(path, &payload);
    std::fs::write(&payload_path, w.finish()).map_err(|e| Error::io(&payload_path, e))?;
    write_json(path, &header)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearShapeModel> {
    let path = path.as_ref();
    let header: ModelHeader = read_json(path)?;
    let v = header.num_vertices;
    let b = header.num_coeffs;
    if v == 0 {
        return Err(Error::format("num_vertices", "must be positive"));
    }
    if b == 0 {
        return Err(Error::format("num_coeffs", "must be positive"));
    }
    if let Some(rows) = header.basis_rows {
        if rows != 3 * v {
            return Err(Error::format(
                "basis_rows",
                format!("basis has {rows} rows but 3·num_vertices = {}", 3 * v),
            ));
        }
    }
    if header.has_joints && header.num_joints == 0 {
        return Err(Error::format(
            "num_joints",
            "has_joints is set but num_joints is 0",
        ));
    }
    let payload_path = resolve_payload(path, &header.payload);
    let bytes = std::fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let mut r = PayloadReader::new(&bytes);
    let template = r.f64s("template", 3 * v)?;
    let basis = r.f64s("basis", 3 * v * b)?;
    let jr = if header.has_joints {
        let j = header.num_joints;
        let vals = r.f64s("joint_regressor", j * v)?;
        Some(DMatrix::from_row_slice(j, v, &vals))
    } else {
        None
    };
    let nfaces = r.u32("faces")? as usize;
    let mut faces = Vec::with_capacity(nfaces);
    for _ in 0..nfaces {
        faces.push([r.u32("faces")?, r.u32("faces")?, r.u32("faces")?]);
    }
    r.finish()?;
    LinearShapeModel::new(
        DVector::from_vec(template),
        DMatrix::from_vec(3 * v, b, basis),
        jr,
        faces,
    )
    .map_err(|e| Error::format("model", e.to_string()))
}
