//! Triangle meshes: ASCII OFF / OBJ reading and OFF writing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    /// One vertex per row.
    pub vertices: Array2<f64>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Array2<f64>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.nrows();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v >= n)) {
            return Err(Error::InvalidInput(format!("face {f:?} out of range for {n} vertices")));
        }
        Ok(TriMesh { vertices, faces })
    }

    /// Undirected edges between vertices sharing a face, weighted by their
    /// Euclidean length. Each edge appears once.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if a == b {
                    continue;
                }
                let key = (a.min(b), a.max(b));
                seen.entry(key).or_insert_with(|| {
                    let d = &self.vertices.row(a) - &self.vertices.row(b);
                    d.dot(&d).sqrt()
                });
            }
        }
        seen.into_iter().map(|((a, b), w)| (a, b, w)).collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("off") => Self::parse_off(&text),
            Some("obj") => Self::parse_obj(&text),
            _ => Err(Error::InvalidInput(format!(
                "unrecognized mesh extension: {}",
                path.display()
            ))),
        }
    }

    pub fn parse_off(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                tokens.push((lineno + 1, tok));
            }
        }
        let mut it = tokens.into_iter();
        match it.next() {
            Some((_, "OFF")) => {}
            Some((line, tok)) => {
                return Err(Error::Parse { line, msg: format!("expected OFF header, found {tok:?}") })
            }
            None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
        }
        let mut next_num = |what: &str| -> Result<(usize, f64)> {
            let (line, tok) = it
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of file reading {what}") })?;
            tok.parse::<f64>()
                .map(|v| (line, v))
                .map_err(|_| Error::Parse { line, msg: format!("bad {what}: {tok:?}") })
        };
        let nv = next_num("vertex count")?.1 as usize;
        let nf = next_num("face count")?.1 as usize;
        let _ne = next_num("edge count")?;
        let mut vertices = Array2::zeros((nv, 3));
        for i in 0..nv {
            for k in 0..3 {
                vertices[[i, k]] = next_num("coordinate")?.1;
            }
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (line, arity) = next_num("face arity")?;
            if arity != 3.0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("only triangular faces are supported, found arity {arity}"),
                });
            }
            let mut f = [0usize; 3];
            for v in f.iter_mut() {
                let (line, idx) = next_num("face index")?;
                if idx < 0.0 || idx as usize >= nv {
                    return Err(Error::Parse { line, msg: format!("face index {idx} out of range") });
                }
                *v = idx as usize;
            }
            faces.push(f);
        }
        Self::new(vertices, faces)
    }

    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut verts: Vec<[f64; 3]> = Vec::new();
        let mut raw_faces: Vec<(usize, Vec<i64>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut p = [0.0; 3];
                    for c in p.iter_mut() {
                        let tok = parts.next().ok_or_else(|| Error::Parse {
                            line: line_no,
                            msg: "vertex needs three coordinates".into(),
                        })?;
                        *c = tok.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("bad coordinate {tok:?}"),
                        })?;
                    }
                    verts.push(p);
                }
                Some("f") => {
                    let idx = parts
                        .map(|tok| {
                            let head = tok.split('/').next().unwrap_or("");
                            head.parse::<i64>().map_err(|_| Error::Parse {
                                line: line_no,
                                msg: format!("bad face index {tok:?}"),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() != 3 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("only triangular faces are supported, found {} vertices", idx.len()),
                        });
                    }
                    raw_faces.push((line_no, idx));
                }
                _ => {}
            }
        }
        let nv = verts.len() as i64;
        let mut faces = Vec::with_capacity(raw_faces.len());
        for (line, idx) in raw_faces {
            let mut f = [0usize; 3];
            for (slot, &i) in f.iter_mut().zip(&idx) {
                let resolved = if i < 0 { nv + i } else { i - 1 };
                if resolved < 0 || resolved >= nv {
                    return Err(Error::Parse { line, msg: format!("face index {i} out of range") });
                }
                *slot = resolved as usize;
            }
            faces.push(f);
        }
        let mut vertices = Array2::zeros((verts.len(), 3));
        for (i, p) in verts.iter().enumerate() {
            for k in 0..3 {
                vertices[[i, k]] = p[k];
            }
        }
        Self::new(vertices, faces)
    }

    /// ASCII OFF. Vertices with fewer than three columns are zero-padded;
    /// extra columns are not allowed.
    pub fn to_off_string(&self) -> Result<String> {
        let d = self.vertices.ncols();
        if d > 3 {
            return Err(Error::InvalidInput(format!("OFF output needs at most 3 columns, got {d}")));
        }
        let mut s = String::new();
        let _ = writeln!(s, "OFF");
        let _ = writeln!(s, "{} {} 0", self.vertices.nrows(), self.faces.len());
        for row in self.vertices.rows() {
            let mut p = [0.0; 3];
            for (k, v) in row.iter().enumerate() {
                p[k] = *v;
            }
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
        }
        Ok(s)
    }

    pub fn write_off(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_off_string()?)?;
        Ok(())
    }
}
