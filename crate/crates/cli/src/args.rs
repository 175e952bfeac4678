//! Command-line flags, the optional JSON config file and their merge into
//! solver options. Flags override the file; the file overrides defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gw_bary::{BaryOptions, GaugeKind, GlueRule, GwInit, GwOptions, OtOptions, StopRule};
use ndarray::Array1;
use serde::Deserialize;

use crate::Failure;

#[derive(Parser, Debug)]
#[command(name = "gw-bary", version, about = "Gromov-Wasserstein transport and free-support barycenters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// GW distance and optimal plan between two spaces.
    Gw {
        #[arg(num_args = 2, required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Barycenter of N spaces for one weight vector.
    Barycenter {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// One barycenter run, then re-weighted barycenters over a ρ grid.
    Interpolate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pairwise GW and LGW matrices plus nearest-neighbour confusion.
    Classify {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// One class label per input, comma separated.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// Triangle-inequality restart rounds for the pairwise matrix.
        #[arg(long)]
        restart_rounds: Option<usize>,
        /// Monte-Carlo draws of the confusion matrix.
        #[arg(long)]
        mc_iterations: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Simultaneous matching of N graphs through their barycenter.
    Match {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Ground-truth JSON (`{"ids": [[...], ...]}`); enables NC metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Gw { common, .. }
            | Command::Barycenter { common, .. }
            | Command::Interpolate { common, .. }
            | Command::Classify { common, .. }
            | Command::Match { common, .. } => common,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    BcdExact,
    BcdSinkhorn,
    Proximal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlueArg {
    Nw,
    Maxrule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopArg {
    LossIncrease,
    RelTol,
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeArg {
    SqEuclid,
    Euclid,
    OneNorm,
    InnerProduct,
    DijkstraSq,
    Dijkstra,
    Adjacency,
}

impl From<GaugeArg> for GaugeKind {
    fn from(g: GaugeArg) -> Self {
        match g {
            GaugeArg::SqEuclid => GaugeKind::SqEuclid,
            GaugeArg::Euclid => GaugeKind::Euclid,
            GaugeArg::OneNorm => GaugeKind::OneNorm,
            GaugeArg::InnerProduct => GaugeKind::InnerProduct,
            GaugeArg::DijkstraSq => GaugeKind::DijkstraSq,
            GaugeArg::Dijkstra => GaugeKind::Dijkstra,
            GaugeArg::Adjacency => GaugeKind::Custom,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedArg {
    /// Exact embedding when every input has a pointwise gauge, else heuristic.
    Auto,
    Heuristic,
}

/// Flags shared by all subcommands. Every field is optional so that the
/// config file can fill the gaps.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Common {
    /// Inner solver of the GW steps.
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Regularization strength of the entropic solvers.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Cap on block-coordinate descent iterations per GW solve.
    #[arg(long)]
    pub outer_max: Option<usize>,
    /// Relative objective change that stops the block-coordinate descent.
    #[arg(long)]
    pub outer_tol: Option<f64>,
    /// Extra random-vertex restarts per GW solve.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_enum)]
    pub glue: Option<GlueArg>,
    /// Barycenter stop rule.
    #[arg(long, value_enum)]
    pub stop: Option<StopArg>,
    /// Outer barycenter iterations: the count for `fixed`, the cap otherwise.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Threshold for `--stop rel-tol`.
    #[arg(long)]
    pub stop_tol: Option<f64>,
    /// Barycenter weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    /// Simplex grid resolution for `interpolate`.
    #[arg(long)]
    pub rho_grid: Option<usize>,
    /// Input used as the initial reference and as the face donor.
    #[arg(long)]
    pub anchor: Option<usize>,
    /// Gauge for mesh and graph inputs (JSON spaces carry their own).
    #[arg(long, value_enum)]
    pub gauge: Option<GaugeArg>,
    /// Rescale every input to gauge diameter one.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default)]
    pub normalize: Option<bool>,
    /// Embedding used for meshes and point clouds of barycenters.
    #[arg(long, value_enum)]
    pub embed: Option<EmbedArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exit with status 4 when a solver does not converge.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default)]
    pub strict: Option<bool>,
    /// Suppress JSON event lines on stderr.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default)]
    pub quiet: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! fill {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Common {
    /// Fills unset flags from the config file, if one was given.
    pub fn merged(&self) -> Result<Common, Failure> {
        let mut c = self.clone();
        let Some(path) = &self.config else { return Ok(c) };
        let text = read_text(path)?;
        let f: Common = serde_json::from_str(&text).map_err(|e| Failure::io(format!("config {}: {e}", path.display())))?;
        fill!(c, f, solver, epsilon, outer_max, outer_tol, restarts, glue, stop, iters, stop_tol, rho, rho_grid, anchor, gauge, normalize, embed, seed, threads, strict, quiet, out);
        Ok(c)
    }

    pub fn strict(&self) -> bool {
        self.strict.unwrap_or(false)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// GW solver options; `default_solver` applies when `--solver` is unset.
    pub fn gw_options(&self, default_solver: SolverArg) -> Result<GwOptions, Failure> {
        let solver = self.solver.unwrap_or(default_solver);
        let eps = self.epsilon.unwrap_or(match solver {
            SolverArg::BcdExact => 0.0,
            SolverArg::BcdSinkhorn => 1e-2,
            SolverArg::Proximal => 1e-2,
        });
        let mut inner = match solver {
            SolverArg::BcdExact => OtOptions::exact(),
            SolverArg::BcdSinkhorn => OtOptions::sinkhorn(eps),
            SolverArg::Proximal => OtOptions::kl_prox(eps),
        };
        inner.allow_unconverged = !self.strict();
        let mut gw = GwOptions::default().with_inner(inner);
        if let Some(m) = self.outer_max {
            gw.outer_max_iter = m;
        }
        if let Some(t) = self.outer_tol {
            gw.outer_tol = t;
        }
        gw.restarts = self.restarts.unwrap_or(0);
        gw.seed = self.seed.unwrap_or(0);
        gw.init = GwInit::Product;
        gw.validate().map_err(Failure::from)?;
        Ok(gw)
    }

    pub fn bary_options(&self, default_solver: SolverArg, default_glue: GlueArg, default_stop: StopRule) -> Result<BaryOptions, Failure> {
        let gw = self.gw_options(default_solver)?;
        let glue_rule = match self.glue.unwrap_or(default_glue) {
            GlueArg::Nw => GlueRule::NwCorner,
            GlueArg::Maxrule => GlueRule::MaxRule,
        };
        let max_outer = self.iters.unwrap_or(match default_stop {
            StopRule::FixedIters(k) => k,
            _ => 50,
        });
        let stop = match self.stop {
            None => match default_stop {
                StopRule::FixedIters(_) => StopRule::FixedIters(max_outer),
                s => s,
            },
            Some(StopArg::LossIncrease) => StopRule::LossIncrease,
            Some(StopArg::RelTol) => StopRule::RelTol(self.stop_tol.unwrap_or(1e-6)),
            Some(StopArg::Fixed) => StopRule::FixedIters(max_outer),
        };
        if max_outer == 0 {
            return Err(Failure::precondition("--iters must be at least 1"));
        }
        Ok(BaryOptions { glue_rule, gw, max_outer, stop, ..Default::default() })
    }

    /// `--rho`, or uniform weights.
    pub fn rho(&self, n: usize) -> Result<Array1<f64>, Failure> {
        match &self.rho {
            None => Ok(Array1::from_elem(n, 1.0 / n as f64)),
            Some(r) => {
                let r = Array1::from(r.clone());
                gw_bary::barycenter::check_rho(r.view(), n).map_err(Failure::from)?;
                Ok(r)
            }
        }
    }

    pub fn anchor(&self, n: usize) -> Result<usize, Failure> {
        let a = self.anchor.unwrap_or(0);
        if a >= n {
            return Err(Failure::precondition(format!("--anchor {a} but only {n} inputs")));
        }
        Ok(a)
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::from_io(path, e))
}
