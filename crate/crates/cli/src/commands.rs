use std::path::{Path, PathBuf};

use gw_bary::barycenter::{iterate_observed, lgw_matrix, melting_plan, simplex_grid, IterationReport, StopReason};
use gw_bary::embed::{embed_with_faces, EmbedKind, EmbeddedBarycenter};
use gw_bary::gw::{gw_functional, pairwise_matrix};
use gw_bary::metrics::{mre_pcc, nn_confusion, node_correctness};
use gw_bary::{io, solve_gw, BarycenterState, GaugeKind, GmSpace, GwInit, StopRule};
use ndarray::{Array1, Array2, ArrayView1};
use serde_json::{json, Value};

use crate::args::{Common, EmbedArg, GlueArg, SolverArg};
use crate::events::emit;
use crate::{load, Failure};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::from_io(path, e))
}

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    let dir = common.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Failure::from_io(&dir, e))?;
    Ok(dir)
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    write(path, serde_json::to_string_pretty(v).expect("serializable") + "\n")
}

fn stop_name(r: StopReason) -> Value {
    serde_json::to_value(r).expect("serializable")
}

fn check_strict(common: &Common, state: &BarycenterState) -> Result<(), Failure> {
    if common.strict() && state.stop_reason == StopReason::MaxOuter {
        return Err(Failure::not_converged(format!(
            "barycenter iteration hit the cap of {} outer iterations",
            state.loss_history.len()
        )));
    }
    Ok(())
}

fn run_iterate(inputs: &[GmSpace], rho: ArrayView1<f64>, anchor: usize, opts: &gw_bary::BaryOptions) -> Result<BarycenterState, Failure> {
    let observer = |r: &IterationReport<'_>| {
        emit("iteration", json!({ "iteration": r.iteration, "loss": r.loss, "support": r.melting.len() }));
    };
    let state = iterate_observed(inputs, rho, &inputs[anchor], opts, observer)?;
    for (i, x) in inputs.iter().enumerate() {
        let v = gw_functional(&state.space, x, &melting_plan(&state.melting, i)?)?;
        emit("pair", json!({ "input": i, "gw": v }));
    }
    Ok(state)
}

fn embed_kind(inputs: &[GmSpace], arg: EmbedArg) -> Option<EmbedKind> {
    if arg == EmbedArg::Heuristic {
        return None;
    }
    let kind = match inputs.first()?.kind() {
        GaugeKind::SqEuclid => EmbedKind::SqEuclid,
        GaugeKind::OneNorm => EmbedKind::OneNorm,
        GaugeKind::InnerProduct => EmbedKind::InnerProduct,
        _ => return None,
    };
    inputs.iter().all(|x| x.kind() == kind.gauge_kind()).then_some(kind)
}

/// Embeds when every input has coordinates; writes an OFF mesh when faces
/// transfer, a CSV point cloud otherwise.
fn write_embedding(
    state: &BarycenterState,
    rho: ArrayView1<f64>,
    common: &Common,
    anchor: usize,
    dir: &Path,
    stem: &str,
) -> Result<Option<(EmbeddedBarycenter, PathBuf)>, Failure> {
    if state.inputs.iter().any(|x| x.coords().is_none()) {
        return Ok(None);
    }
    let kind = embed_kind(&state.inputs, common.embed.unwrap_or(EmbedArg::Auto));
    let e = embed_with_faces(state, rho, kind, anchor)?;
    let path = if e.faces.is_some() {
        let p = dir.join(format!("{stem}.off"));
        write(&p, e.to_mesh()?.to_off_string()?)?;
        p
    } else {
        let p = dir.join(format!("{stem}_points.csv"));
        write(&p, io::points_to_csv(e.points.view()))?;
        p
    };
    Ok(Some((e, path)))
}

pub fn gw(paths: &[PathBuf], common: &Common) -> Result<(), Failure> {
    let inputs = load::spaces(paths, common)?;
    let (x, y) = (&inputs[0], &inputs[1]);
    let opts = common.gw_options(SolverArg::BcdExact)?;
    let mut best = solve_gw(x, y, &opts)?;
    // Spaces on the same measure also get a start at the identity coupling.
    if x.weights() == y.weights() {
        let alt = solve_gw(x, y, &opts.clone().with_init(GwInit::Identity))?;
        if alt.value < best.value {
            best = alt;
        }
    }
    for (k, v) in best.history.iter().enumerate() {
        emit("gw-iteration", json!({ "iteration": k + 1, "objective": v }));
    }
    emit("gw", json!({ "value": best.value, "iterations": best.iterations, "converged": best.converged }));
    let dir = out_dir(common)?;
    write(&dir.join("plan.coo.tsv"), io::coupling_to_tsv(&best.plan))?;
    write_json(
        &dir.join("gw.json"),
        &json!({
            "value": best.value,
            "iterations": best.iterations,
            "converged": best.converged,
            "history": best.history,
        }),
    )?;
    println!("{:.6}", best.value);
    if common.strict() && !best.converged {
        return Err(Failure::not_converged(format!("GW solve did not converge in {} iterations", best.iterations)));
    }
    Ok(())
}

pub fn barycenter(paths: &[PathBuf], common: &Common) -> Result<(), Failure> {
    let inputs = load::spaces(paths, common)?;
    let rho = common.rho(inputs.len())?;
    let anchor = common.anchor(inputs.len())?;
    let opts = common.bary_options(SolverArg::BcdExact, GlueArg::Nw, StopRule::LossIncrease)?;
    let state = run_iterate(&inputs, rho.view(), anchor, &opts)?;
    let dir = out_dir(common)?;
    io::write_state(&state, &dir.join("state"))?;
    io::write_space_json(&state.space.clone().with_label("barycenter"), &dir.join("barycenter.json"))?;
    let embedded = write_embedding(&state, rho.view(), common, anchor, &dir, "barycenter")?;
    let mut report = json!({
        "rho": rho.to_vec(),
        "loss": state.loss(),
        "loss_history": state.loss_history,
        "stop_reason": stop_name(state.stop_reason),
        "support": state.melting.len(),
    });
    if let Some((e, p)) = embedded {
        report["embedding"] = json!({ "file": p, "diameter": e.diameter, "pca_residual": e.pca_residual });
    }
    write_json(&dir.join("report.json"), &report)?;
    println!("{:.6}", state.loss().unwrap_or(0.0));
    check_strict(common, &state)
}

fn rho_tag(r: ArrayView1<f64>) -> String {
    r.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("_")
}

pub fn interpolate(paths: &[PathBuf], common: &Common) -> Result<(), Failure> {
    let inputs = load::spaces(paths, common)?;
    let n = inputs.len();
    let rho = common.rho(n)?;
    let anchor = common.anchor(n)?;
    let opts = common.bary_options(SolverArg::BcdExact, GlueArg::Nw, StopRule::FixedIters(3))?;
    let grid: Vec<Array1<f64>> = match common.rho_grid {
        Some(k) if k >= 1 => simplex_grid(n, k, false),
        Some(_) => return Err(Failure::precondition("--rho-grid must be at least 1")),
        None if common.rho.is_some() => vec![rho.clone()],
        None => simplex_grid(n, 4, false),
    };
    let state = run_iterate(&inputs, rho.view(), anchor, &opts)?;
    let dir = out_dir(common)?;
    io::write_state(&state, &dir.join("state"))?;
    let mut entries = Vec::new();
    for r in &grid {
        let stem = format!("interp_{}", rho_tag(r.view()));
        let y = state.reweigh(r.view())?.with_label(stem.clone());
        io::write_space_json(&y, &dir.join(format!("{stem}.json")))?;
        let mut entry = json!({ "rho": r.to_vec(), "space": format!("{stem}.json") });
        if let Some((e, p)) = write_embedding(&state, r.view(), common, anchor, &dir, &stem)? {
            entry["file"] = json!(p.file_name().map(|f| f.to_string_lossy().into_owned()));
            entry["diam"] = json!(e.diameter);
            entry["pca"] = json!(e.pca_residual);
        }
        emit("interpolant", entry.clone());
        entries.push(entry);
    }
    write_json(
        &dir.join("report.json"),
        &json!({
            "loss_history": state.loss_history,
            "stop_reason": stop_name(state.stop_reason),
            "support": state.melting.len(),
            "interpolants": entries,
        }),
    )?;
    check_strict(common, &state)
}

fn labels_of(inputs: &[PathBuf], labels: &[String]) -> Result<(Vec<String>, Vec<usize>), Failure> {
    if labels.len() != inputs.len() {
        return Err(Failure::precondition(format!("{} labels for {} inputs", labels.len(), inputs.len())));
    }
    let mut classes: Vec<String> = Vec::new();
    let ids = labels
        .iter()
        .map(|l| match classes.iter().position(|c| c == l) {
            Some(k) => k,
            None => {
                classes.push(l.clone());
                classes.len() - 1
            }
        })
        .collect();
    Ok((classes, ids))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn classify(
    paths: &[PathBuf],
    labels: &[String],
    restart_rounds: usize,
    mc_iterations: usize,
    common: &Common,
) -> Result<(), Failure> {
    let (classes, ids) = labels_of(paths, labels)?;
    let inputs = load::spaces(paths, common)?;
    let n = inputs.len();
    if n < 2 {
        return Err(Failure::precondition("classification needs at least two spaces"));
    }
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let seed = common.seed.unwrap_or(0);
    let dir = out_dir(common)?;

    let gw_opts = common.gw_options(SolverArg::BcdExact)?;
    let pairwise = pairwise_matrix(&inputs, &gw_opts, restart_rounds)?;
    emit("pairwise", json!({ "improved_per_round": pairwise.improved }));
    write(&dir.join("gw.csv"), io::matrix_to_csv(&names, pairwise.values.view())?)?;

    let opts = common.bary_options(SolverArg::BcdExact, GlueArg::Nw, StopRule::FixedIters(5))?;
    let rho = common.rho(n)?;
    let anchor = common.anchor(n)?;
    let mut lgw: Vec<gw_bary::Result<Array2<f64>>> = Vec::new();
    let observer = |r: &IterationReport<'_>| {
        emit("iteration", json!({ "iteration": r.iteration, "loss": r.loss, "support": r.melting.len() }));
        lgw.push(lgw_matrix(&inputs, r.melting));
    };
    let state = iterate_observed(&inputs, rho.view(), &inputs[anchor], &opts, observer)?;

    let mut per_iteration = Vec::new();
    for (k, m) in lgw.into_iter().enumerate() {
        let m = m?;
        write(&dir.join(format!("lgw_{}.csv", k + 1)), io::matrix_to_csv(&names, m.view())?)?;
        let (mre, pcc) = match mre_pcc(pairwise.values.view(), m.view()) {
            Ok(s) => (json!(s.mre), json!(if s.pcc.is_nan() { None } else { Some(s.pcc) })),
            Err(_) => (Value::Null, Value::Null),
        };
        emit("lgw", json!({ "iteration": k + 1, "mre": mre, "pcc": pcc }));
        per_iteration.push((json!({ "iteration": k + 1, "mre": mre, "pcc": pcc }), m));
    }
    let gw_conf = nn_confusion(pairwise.values.view(), &ids, mc_iterations, seed)?;
    let lgw_conf = match per_iteration.last() {
        Some((_, m)) => Some(rows(&nn_confusion(m.view(), &ids, mc_iterations, seed)?)),
        None => None,
    };
    write(&dir.join("confusion.csv"), io::matrix_to_csv(&classes, gw_conf.view())?)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "classes": classes,
            "inputs": names,
            "confusion": rows(&gw_conf),
            "lgw_confusion": lgw_conf,
            "lgw": per_iteration.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>(),
            "loss_history": state.loss_history,
            "stop_reason": stop_name(state.stop_reason),
        }),
    )?;
    check_strict(common, &state)
}

pub fn matching(paths: &[PathBuf], truth: Option<&Path>, common: &Common) -> Result<(), Failure> {
    let inputs = load::spaces(paths, common)?;
    if inputs.len() < 2 {
        return Err(Failure::precondition("matching needs at least two graphs"));
    }
    let truth = match truth {
        Some(p) if !p.exists() => return Err(Failure::io(format!("input not found: {}", p.display()))),
        Some(p) => Some(io::read_ground_truth(p)?),
        None => None,
    };
    let rho = common.rho(inputs.len())?;
    let anchor = common.anchor(inputs.len())?;
    let opts = common.bary_options(SolverArg::Proximal, GlueArg::Maxrule, StopRule::LossIncrease)?;
    let state = run_iterate(&inputs, rho.view(), anchor, &opts)?;
    let dir = out_dir(common)?;
    write(&dir.join("matching.mcoo.tsv"), io::multi_coupling_to_tsv(&state.melting))?;
    io::write_state(&state, &dir.join("state"))?;
    let mut metrics = json!({
        "loss": state.loss(),
        "loss_history": state.loss_history,
        "stop_reason": stop_name(state.stop_reason),
        "support": state.melting.len(),
    });
    if let Some(t) = &truth {
        let nc = node_correctness(&state.melting, t)?;
        metrics["nc1"] = json!(nc.nc1);
        metrics["nc_all"] = json!(nc.nc_all);
        println!("NC@1 {:.4} NC@all {:.4}", nc.nc1, nc.nc_all);
    }
    write_json(&dir.join("metrics.json"), &metrics)?;
    check_strict(common, &state)
}
