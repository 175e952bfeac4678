use std::path::{Path, PathBuf};

use gw_bary::{io, GaugeKind, GmSpace, TriMesh};

use crate::args::Common;
use crate::Failure;

/// Reads one input by extension: `.json` spaces as stored, `.off`/`.obj`
/// meshes with a geodesic gauge, anything else as an edge list.
pub fn space(path: &Path, common: &Common) -> Result<GmSpace, Failure> {
    if !path.exists() {
        return Err(Failure::io(format!("input not found: {}", path.display())));
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let s = match ext.as_deref() {
        Some("json") => io::read_space_json(path)?,
        Some("off") | Some("obj") => {
            let kind = common.gauge.map_or(GaugeKind::DijkstraSq, GaugeKind::from);
            GmSpace::from_mesh(&TriMesh::read(path)?, kind)?.with_label(stem)
        }
        _ => {
            let kind = common.gauge.map_or(GaugeKind::Custom, GaugeKind::from);
            io::read_graph(path, None, kind)?
        }
    };
    if common.normalize.unwrap_or(false) {
        Ok(s.normalize_diameter()?)
    } else {
        Ok(s)
    }
}

pub fn spaces(paths: &[PathBuf], common: &Common) -> Result<Vec<GmSpace>, Failure> {
    paths.iter().map(|p| space(p, common)).collect()
}
