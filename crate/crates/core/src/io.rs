//! File formats: gm-space JSON, edge lists, node weights, sparse plans
//! (coo-tsv and mcoo-tsv), CSV matrices and barycenter state manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::barycenter::{mean_gauge, BarycenterState, StopReason};
use crate::error::{Error, Result};
use crate::gluing::MultiCoupling;
use crate::gmspace::{GaugeKind, GmSpace};
use crate::metrics::GroundTruth;
use crate::ot::Coupling;

#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gauge: Option<GaugeRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gauge_kind: Option<GaugeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    faces: Option<Vec<[usize; 3]>>,
}

/// Nested rows or one flat row-major list.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum GaugeRows {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

fn rows_to_array(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::InvalidInput(format!("{what} rows have unequal lengths")));
    }
    Ok(Array2::from_shape_vec((r, c), rows.concat()).expect("checked shape"))
}

fn array_to_rows(a: ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Parses a gm-space JSON document. A pointwise `gauge_kind` with `coords`
/// and no explicit `gauge` regenerates the gauge from the coordinates.
pub fn parse_space_json(text: &str) -> Result<GmSpace> {
    let f: SpaceFile = serde_json::from_str(text)?;
    let weights = f.weights.map(Array1::from);
    let kind = f.gauge_kind.unwrap_or(GaugeKind::Custom);
    let coords = f.coords.as_deref().map(|c| rows_to_array(c, "coords")).transpose()?;
    let mut space = match (f.gauge, coords) {
        (Some(g), coords) => {
            let gauge = match g {
                GaugeRows::Nested(rows) => rows_to_array(&rows, "gauge")?,
                GaugeRows::Flat(v) => {
                    if v.len() != f.n * f.n {
                        return Err(Error::InvalidInput(format!(
                            "flat gauge has {} entries, expected {}",
                            v.len(),
                            f.n * f.n
                        )));
                    }
                    Array2::from_shape_vec((f.n, f.n), v).expect("checked length")
                }
            };
            let s = GmSpace::new(gauge, weights, kind)?;
            match coords {
                Some(c) => s.with_coords(c)?,
                None => s,
            }
        }
        (None, Some(c)) if kind.is_pointwise() => GmSpace::from_points(c, kind, weights)?,
        (None, Some(_)) => {
            return Err(Error::InvalidInput(format!(
                "a {kind:?} gauge cannot be regenerated from coordinates; include \"gauge\""
            )))
        }
        (None, None) => return Err(Error::InvalidInput("space file has neither gauge nor coords".into())),
    };
    if space.len() != f.n {
        return Err(Error::InvalidInput(format!("space file declares n = {} but has {} points", f.n, space.len())));
    }
    if let Some(faces) = f.faces {
        space = space.with_faces(faces)?;
    }
    if let Some(l) = f.label {
        space = space.with_label(l);
    }
    Ok(space)
}

/// Serializes a space. The gauge is omitted only when it is exactly what
/// the coordinates regenerate.
pub fn space_to_json(space: &GmSpace) -> Result<String> {
    let regenerable = space.kind().is_pointwise() && space.coords().is_some() && space.gauge_scale() == 1.0;
    let f = SpaceFile {
        n: space.len(),
        label: (!space.label().is_empty()).then(|| space.label().to_string()),
        weights: Some(space.weights().to_vec()),
        gauge: (!regenerable).then(|| GaugeRows::Nested(array_to_rows(space.gauge().view()))),
        coords: space.coords().map(|c| array_to_rows(c.view())),
        gauge_kind: Some(space.kind()),
        faces: space.faces().map(|f| f.to_vec()),
    };
    Ok(serde_json::to_string(&f)?)
}

pub fn read_space_json(path: &Path) -> Result<GmSpace> {
    parse_space_json(&fs::read_to_string(path)?)
}

pub fn write_space_json(space: &GmSpace, path: &Path) -> Result<()> {
    fs::write(path, space_to_json(space)?)?;
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("bad {what} {tok:?}") })
}

/// Edge list `u v [w]`, one edge per line (`w` defaults to 1). Returns the
/// node count (largest index + 1) and the edges.
pub fn parse_edge_list(text: &str) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (line, l) in data_lines(text) {
        let mut it = l.split_whitespace();
        let u: usize = parse_field(it.next(), line, "node")?;
        let v: usize = parse_field(it.next(), line, "node")?;
        let w: f64 = match it.next() {
            Some(t) => parse_field(Some(t), line, "weight")?,
            None => 1.0,
        };
        if it.next().is_some() {
            return Err(Error::Parse { line, msg: "expected `u v [w]`".into() });
        }
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Ok((n, edges))
}

/// One weight per line.
pub fn parse_node_weights(text: &str) -> Result<Array1<f64>> {
    data_lines(text)
        .map(|(line, l)| parse_field::<f64>(Some(l), line, "weight"))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

/// Reads a graph file (and optional node weights) into a space. The node
/// count is the larger of the edge list's and the weight file's.
pub fn read_graph(path: &Path, weights: Option<&Path>, kind: GaugeKind) -> Result<GmSpace> {
    let (n, edges) = parse_edge_list(&fs::read_to_string(path)?)?;
    let w = weights.map(|p| fs::read_to_string(p).map_err(Error::from).and_then(|t| parse_node_weights(&t))).transpose()?;
    let n = n.max(w.as_ref().map_or(0, |w| w.len()));
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(GmSpace::from_graph(n, &edges, kind, w)?.with_label(label))
}

fn fmt_mass(m: f64) -> String {
    format!("{m:.17e}")
}

pub fn coupling_to_tsv(plan: &Coupling) -> String {
    let (n, m) = plan.shape();
    let mut s = format!("{n} {m}\n");
    for &(i, j, v) in plan.entries() {
        let _ = writeln!(s, "{i}\t{j}\t{}", fmt_mass(v));
    }
    s
}

fn parse_header(text: &str) -> Result<(Vec<usize>, Vec<(usize, &str)>)> {
    let mut lines = data_lines(text);
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let dims = header
        .split_whitespace()
        .map(|t| parse_field::<usize>(Some(t), hl, "dimension"))
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, lines.collect()))
}

pub fn parse_coupling_tsv(text: &str) -> Result<Coupling> {
    let (dims, body) = parse_header(text)?;
    if dims.len() != 2 {
        return Err(Error::Parse { line: 1, msg: "expected header `n m`".into() });
    }
    let mut entries = Vec::with_capacity(body.len());
    for (line, l) in body {
        let mut it = l.split('\t');
        let i = parse_field(it.next(), line, "row index")?;
        let j = parse_field(it.next(), line, "column index")?;
        let v = parse_field(it.next(), line, "mass")?;
        entries.push((i, j, v));
    }
    Coupling::from_entries(dims[0], dims[1], entries)
}

pub fn multi_coupling_to_tsv(mu: &MultiCoupling) -> String {
    let mut s = mu.n_marginals().to_string();
    for d in mu.sizes() {
        let _ = write!(s, " {d}");
    }
    s.push('\n');
    for (t, m) in mu.iter() {
        for i in t {
            let _ = write!(s, "{i}\t");
        }
        s.push_str(&fmt_mass(m));
        s.push('\n');
    }
    s
}

pub fn parse_multi_coupling_tsv(text: &str) -> Result<MultiCoupling> {
    let (dims, body) = parse_header(text)?;
    let n = *dims.first().ok_or(Error::Parse { line: 1, msg: "empty header".into() })?;
    if dims.len() != n + 1 {
        return Err(Error::Parse { line: 1, msg: format!("header declares {n} marginals but lists {} sizes", dims.len() - 1) });
    }
    let mut tuples = Vec::with_capacity(body.len());
    for (line, l) in body {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != n + 1 {
            return Err(Error::Parse { line, msg: format!("expected {} fields", n + 1) });
        }
        let t = fields[..n]
            .iter()
            .map(|f| parse_field::<usize>(Some(f), line, "index"))
            .collect::<Result<Vec<_>>>()?;
        tuples.push((t, parse_field(Some(fields[n]), line, "mass")?));
    }
    MultiCoupling::from_tuples(dims[1..].to_vec(), tuples)
}

/// Square matrix as CSV with a header row of labels.
pub fn matrix_to_csv(labels: &[String], m: ArrayView2<f64>) -> Result<String> {
    if m.nrows() != labels.len() || m.ncols() != labels.len() {
        return Err(Error::InvalidInput(format!("{} labels for a {:?} matrix", labels.len(), m.dim())));
    }
    let mut s = labels.join(",");
    s.push('\n');
    for r in m.rows() {
        let row: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut vals = Vec::new();
    let mut rows = 0;
    for (i, l) in lines {
        let row = l
            .split(',')
            .map(|t| parse_field::<f64>(Some(t.trim()), i + 1, "value"))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != labels.len() {
            return Err(Error::Parse { line: i + 1, msg: format!("expected {} columns", labels.len()) });
        }
        vals.extend(row);
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, labels.len()), vals).expect("checked shape");
    Ok((labels, m))
}

/// Points as CSV without a header, one point per row.
pub fn points_to_csv(points: ArrayView2<f64>) -> String {
    let mut s = String::new();
    for r in points.rows() {
        let row: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(truth)?)?;
    Ok(())
}

/// On-disk description of a [`BarycenterState`]; paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateManifest {
    pub inputs: Vec<PathBuf>,
    pub rho: Vec<f64>,
    pub melting: PathBuf,
    pub plans: Vec<PathBuf>,
    pub loss_history: Vec<(usize, f64)>,
    pub stop_reason: StopReason,
}

/// Writes the melting, the plans, copies of the inputs and `state.json` into `dir`.
pub fn write_state(state: &BarycenterState, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut inputs = Vec::new();
    for (i, x) in state.inputs.iter().enumerate() {
        let p = PathBuf::from(format!("input_{i}.json"));
        write_space_json(x, &dir.join(&p))?;
        inputs.push(p);
    }
    let melting = PathBuf::from("melting.mcoo.tsv");
    fs::write(dir.join(&melting), multi_coupling_to_tsv(&state.melting))?;
    let mut plans = Vec::new();
    for (i, p) in state.plans.iter().enumerate() {
        let f = PathBuf::from(format!("plan_{i}.coo.tsv"));
        fs::write(dir.join(&f), coupling_to_tsv(p))?;
        plans.push(f);
    }
    let manifest = StateManifest {
        inputs,
        rho: state.rho.to_vec(),
        melting,
        plans,
        loss_history: state.loss_history.clone(),
        stop_reason: state.stop_reason,
    };
    let path = dir.join("state.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn read_state(manifest: &Path) -> Result<BarycenterState> {
    let m: StateManifest = serde_json::from_str(&fs::read_to_string(manifest)?)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let inputs = m.inputs.iter().map(|p| read_space_json(&base.join(p))).collect::<Result<Vec<_>>>()?;
    let melting = parse_multi_coupling_tsv(&fs::read_to_string(base.join(&m.melting))?)?;
    let plans = m
        .plans
        .iter()
        .map(|p| fs::read_to_string(base.join(p)).map_err(Error::from).and_then(|t| parse_coupling_tsv(&t)))
        .collect::<Result<Vec<_>>>()?;
    let rho = Array1::from(m.rho);
    let space = mean_gauge(&inputs, &melting, rho.view())?;
    Ok(BarycenterState { inputs, melting, rho, loss_history: m.loss_history, plans, space, stop_reason: m.stop_reason })
}
