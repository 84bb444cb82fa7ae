//! Wavefront OBJ export with an optional per-vertex scalar sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Mesh;

/// Sidecar path for scalars exported alongside `obj_path`.
pub fn scalars_path(obj_path: &Path) -> PathBuf {
    let mut s = obj_path.as_os_str().to_owned();
    s.push(".scalars.csv");
    PathBuf::from(s)
}

pub fn obj_string(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Writes `mesh` to `path`; with `vertex_scalars`, also writes
/// `<path>.scalars.csv` with `vertex_index,value` rows.
pub fn export_obj(
    mesh: &Mesh,
    path: impl AsRef<Path>,
    vertex_scalars: Option<&[f64]>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(s) = vertex_scalars {
        crate::error::check_len("vertex scalars", mesh.vertices.len(), s.len())?;
    }
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))?;
    if let Some(s) = vertex_scalars {
        let mut csv = String::from("vertex_index,value\n");
        for (i, v) in s.iter().enumerate() {
            let _ = writeln!(csv, "{i},{v}");
        }
        let sidecar = scalars_path(path);
        std::fs::write(&sidecar, csv).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}
