//! Command-line front end. Every certifying subcommand emits a sealed envelope
//! `{schema, job, result, digest}`; `verify` checks the digest, recomputes the
//! result from the job and the graph files, and runs the independent checks.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extract::{extract_folner_from_function, verify_extraction, ExtractError, ExtractOptions};
use crate::folner::{folner_quality, min_folner_in_ball, FolnerError, FolnerFunction, DEFAULT_ENUM_BUDGET};
use crate::generators::{
    amealm_chain, make_cycle, make_grid, make_path, make_torus, make_tree_window, random_regular,
    schreier_quotient, CayleyWindowSpec, GenError,
};
use crate::graph::{load_graph, vertex_boundary, Graph, GraphError, VertexSet, Window};
use crate::hierarchy::{
    peel_local_hyperfinite, separator_measure_lp, validate_witness, witness_from_measure, Dichotomy,
    HierError, SeparatorMeasure, EXHAUSTIVE_MAX,
};
use crate::ratio::{self, Ratio};
use crate::spectra::{
    convergence_experiment, hausdorff_distance, laplacian_spectrum, neighborhood_distance, rows_to_csv,
    torus_spectrum_grid, LimitProxy, SpectraError,
};
use crate::tiling::{
    complete_tiling_hall, distribution_stats, enumerate_folner_family, fractional_from_distribution,
    ow_packing, propa_from_fractional, shifted_block_distribution, torus_blocks, FractionalCover, HallOutcome,
    Packing, TilingDistribution, TilingError,
};

pub const CERT_SCHEMA: &str = "folner-certificate/v1";
pub const VERIFICATION_SCHEMA: &str = "verification/v1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("budget of {0} steps exhausted")]
    Budget(u64),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Usage(e.to_string())
            }
        }
    )*};
}
usage_from!(GraphError, GenError, SpectraError, ExtractError, serde_json::Error, std::io::Error);

impl From<FolnerError> for CliError {
    fn from(e: FolnerError) -> Self {
        match e {
            FolnerError::BudgetExceeded { budget } => CliError::Budget(budget),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<HierError> for CliError {
    fn from(e: HierError) -> Self {
        match e {
            HierError::Budget(b) => CliError::Budget(b),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TilingError> for CliError {
    fn from(e: TilingError) -> Self {
        match e {
            TilingError::Budget(b) => CliError::Budget(b),
            e => CliError::Usage(e.to_string()),
        }
    }
}

fn parse_rational(s: &str) -> Result<Ratio, String> {
    ratio::parse_ratio(s).map_err(|e| e.to_string())
}

fn parse_set(s: &str) -> Result<VertexSet, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(VertexSet::from_unsorted)
}

#[derive(Clone, Debug)]
pub struct LatticeBasis(pub Vec<Vec<i64>>);

fn parse_lattice(s: &str) -> Result<LatticeBasis, String> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|t| t.trim().parse::<i64>().map_err(|e| format!("{t:?}: {e}")))
                .collect()
        })
        .collect::<Result<_, _>>()
        .map(LatticeBasis)
}

#[derive(Parser, Debug)]
#[command(name = "folner", version, about = "Følner sets, separator certificates, tilings and spectra")]
pub struct Cli {
    /// Seed for randomized generators.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Følner quality of a set, or the smallest ε-Følner set in a ball.
    Folner(FolnerArgs),
    /// Extracts a Følner set from a Følner function.
    Extract(ExtractArgs),
    /// Local hyperfiniteness by peeling small sets with small boundary.
    Peel(PeelArgs),
    /// Separator-measure LP: a measure certificate or dual weights.
    Seplp(SeplpArgs),
    /// Property A witness from a separator measure.
    Witness(WitnessArgs),
    /// Packing, then Hall completion to a tiling.
    Tile(TileArgs),
    /// Tiling distribution to fractional cover to Property A witness.
    Distill(DistillArgs),
    /// Laplacian spectrum.
    Spectrum(SpectrumArgs),
    /// Hausdorff distance between two spectra.
    Specdist(SpecdistArgs),
    /// Neighbourhood distance between two graphs.
    Neighdist(NeighdistArgs),
    /// Convergence table of a graph sequence against a limit proxy.
    Converge(ConvergeArgs),
    /// Graph generators.
    Gen(GenArgs),
    /// Re-checks a certificate against its graph files.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct OutArg {
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FolnerArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    /// Comma-separated vertex set to evaluate.
    #[arg(long, value_parser = parse_set, conflicts_with_all = ["x", "radius"])]
    pub set: Option<VertexSet>,
    #[arg(long, requires = "radius")]
    pub x: Option<usize>,
    #[arg(long, requires = "x")]
    pub radius: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// JSON object mapping vertex ids to "p/q" values.
    #[arg(long)]
    pub function: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    /// Run even when the defect precondition fails.
    #[arg(long)]
    pub relaxed: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct PeelArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct SeplpArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct WitnessArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// A separator measure, or a seplp certificate holding one.
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    /// Also write the witness vectors here.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct TileArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    /// Use the aligned b×b blocks of a 2-dimensional torus as the family and
    /// the shifted-block cover.
    #[arg(long, conflicts_with_all = ["r", "cap"])]
    pub blocks: Option<usize>,
    /// Diameter bound for an enumerated family.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 4096)]
    pub cap: usize,
    /// Fractional cover JSON; defaults to the shifted-block cover or the packing itself.
    #[arg(long)]
    pub cover: Option<PathBuf>,
    /// Matching distance bound for the Hall completion; defaults to the block side or `r`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop these packing tiles (by index) before completion.
    #[arg(long, value_delimiter = ',')]
    pub delete: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_rational)]
    pub eps: Ratio,
    /// Shifted b×b block distribution on a 2-dimensional torus.
    #[arg(long, conflicts_with = "distribution", required_unless_present = "distribution")]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub distribution: Option<PathBuf>,
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Print a JSON array instead of space-separated values.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SpecdistArgs {
    /// Graph file or JSON array of eigenvalues.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long, conflicts_with = "torus_proxy", required_unless_present = "torus_proxy")]
    pub b: Option<PathBuf>,
    /// Compare against the closed-form spectrum of the m×m torus.
    #[arg(long)]
    pub torus_proxy: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct NeighdistArgs {
    #[arg(long)]
    pub g: PathBuf,
    #[arg(long)]
    pub h: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub r_cap: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    /// Graphs of the sequence, in order.
    #[arg(long = "graph", required = true)]
    pub graphs: Vec<PathBuf>,
    /// Limit proxy given as a graph.
    #[arg(long, conflicts_with = "torus_proxy", required_unless_present = "torus_proxy")]
    pub proxy: Option<PathBuf>,
    /// Limit proxy: the square lattice with the m×m torus spectrum.
    #[arg(long)]
    pub torus_proxy: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub r_cap: usize,
    #[arg(long, default_value_t = 4096)]
    pub size_cap: usize,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(subcommand)]
    pub family: GenCommand,
    /// Graph text output; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Construction log output.
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum GenCommand {
    Path {
        #[arg(long)]
        n: usize,
    },
    Cycle {
        #[arg(long)]
        n: usize,
    },
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
    },
    Torus {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
    },
    Tree {
        #[arg(long)]
        deg: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        margin: usize,
    },
    Regular {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
    /// Schreier graph of Zᵈ modulo a lattice, e.g. `--basis "8,0;0,8"`.
    Quotient {
        #[arg(long, value_parser = parse_lattice)]
        basis: LatticeBasis,
    },
    /// Chain of random regular expanders with attached paths.
    Chain {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<u64>,
    },
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub cert: PathBuf,
    /// Graph files referenced by the certificate, in order.
    #[arg(long = "graph")]
    pub graphs: Vec<PathBuf>,
}

/// Content address of a graph's canonical text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRef {
    pub sha256: String,
    pub n: usize,
    pub edges: usize,
}

impl GraphRef {
    pub fn of(g: &Graph) -> Self {
        GraphRef {
            sha256: sha256_hex(g.to_text().as_bytes()),
            n: g.n(),
            edges: g.edge_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FolnerTarget {
    Set { set: VertexSet },
    Ball { x: usize, radius: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FamilySource {
    Blocks { side: usize, block: usize },
    Enumerate { r: usize, cap: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoverSource {
    Shifted { side: usize, block: usize },
    Given { cover: FractionalCover },
    /// Every packing tile with weight one.
    Packing,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DistSource {
    Shifted { side: usize, block: usize },
    Given { distribution: TilingDistribution },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SpectrumSource {
    Graph { graph: GraphRef },
    Values { values: Vec<f64> },
    Torus { m: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GenFamily {
    Path { n: usize },
    Cycle { n: usize },
    Grid { rows: usize, cols: usize },
    Torus { d: usize, n: usize },
    Tree { deg: usize, depth: usize, margin: usize },
    Regular { n: usize, d: usize },
    Quotient { basis: Vec<Vec<i64>> },
    Chain { sizes: Vec<usize>, degree: usize, a: Vec<u64> },
}

/// Everything a result depends on, apart from the graph files themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Job {
    Folner {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        target: FolnerTarget,
        budget: u64,
    },
    Extract {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        relaxed: bool,
        function: FolnerFunction,
    },
    Peel {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        k: usize,
        budget: u64,
    },
    Seplp {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        k: usize,
    },
    Witness {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        measure: SeparatorMeasure,
    },
    Tile {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        family: FamilySource,
        cover: CoverSource,
        k: usize,
        delete: Vec<usize>,
        budget: u64,
    },
    Distill {
        graph: GraphRef,
        #[serde(with = "ratio::serde_ratio")]
        eps: Ratio,
        source: DistSource,
    },
    Specdist {
        a: SpectrumSource,
        b: SpectrumSource,
    },
    Neighdist {
        g: GraphRef,
        h: GraphRef,
        r_cap: usize,
    },
    Gen {
        #[serde(flatten)]
        family: GenFamily,
        seed: u64,
    },
}

impl Job {
    pub fn kind(&self) -> &'static str {
        match self {
            Job::Folner { .. } => "folner",
            Job::Extract { .. } => "extract",
            Job::Peel { .. } => "peel",
            Job::Seplp { .. } => "seplp",
            Job::Witness { .. } => "witness",
            Job::Tile { .. } => "tile",
            Job::Distill { .. } => "distill",
            Job::Specdist { .. } => "specdist",
            Job::Neighdist { .. } => "neighdist",
            Job::Gen { .. } => "gen",
        }
    }

    /// Graph files the job reads, in the order `verify --graph` expects them.
    pub fn graphs(&self) -> Vec<&GraphRef> {
        match self {
            Job::Folner { graph, .. }
            | Job::Extract { graph, .. }
            | Job::Peel { graph, .. }
            | Job::Seplp { graph, .. }
            | Job::Witness { graph, .. }
            | Job::Tile { graph, .. }
            | Job::Distill { graph, .. } => vec![graph],
            Job::Specdist { a, b } => [a, b]
                .into_iter()
                .filter_map(|s| match s {
                    SpectrumSource::Graph { graph } => Some(graph),
                    _ => None,
                })
                .collect(),
            Job::Neighdist { g, h, .. } => vec![g, h],
            Job::Gen { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: String,
    pub job: Value,
    pub result: Value,
    pub digest: String,
}

impl Certificate {
    pub fn seal(job: &Job, result: Value) -> Result<Self, CliError> {
        let job = serde_json::to_value(job)?;
        let digest = envelope_digest(CERT_SCHEMA, &job, &result);
        Ok(Certificate {
            schema: CERT_SCHEMA.into(),
            job,
            result,
            digest,
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the canonical serialization (object keys sorted).
pub fn envelope_digest(schema: &str, job: &Value, result: &Value) -> String {
    let body = json!({ "schema": schema, "job": job, "result": result });
    sha256_hex(body.to_string().as_bytes())
}

pub struct Computed {
    pub result: Value,
    pub code: i32,
    /// Graph produced by `gen`.
    pub graph: Option<Graph>,
    /// Witness vectors, written on request but kept out of the certificate.
    pub witness: Option<Value>,
}

impl Computed {
    fn new(result: Value, code: i32) -> Self {
        Computed {
            result,
            code,
            graph: None,
            witness: None,
        }
    }
}

fn torus_side(g: &Graph) -> Result<usize, CliError> {
    let side = (g.n() as f64).sqrt().round() as usize;
    if side < 3 || make_torus(2, side)? != *g {
        return Err(CliError::Usage("graph is not a 2-dimensional torus in generator numbering".into()));
    }
    Ok(side)
}

fn spectrum_of(src: &SpectrumSource, graphs: &mut impl Iterator<Item = Graph>) -> Result<Vec<f64>, CliError> {
    Ok(match src {
        SpectrumSource::Graph { .. } => {
            let g = graphs
                .next()
                .ok_or_else(|| CliError::Usage("missing graph".into()))?;
            laplacian_spectrum(&g)?.values
        }
        SpectrumSource::Values { values } => values.clone(),
        SpectrumSource::Torus { m } => torus_spectrum_grid(*m),
    })
}

/// Runs a job. `graphs` must match `job.graphs()`.
pub fn compute(job: &Job, graphs: &[Graph]) -> Result<Computed, CliError> {
    let first = || {
        graphs
            .first()
            .ok_or_else(|| CliError::Usage("missing graph".into()))
    };
    match job {
        Job::Folner {
            eps, target, budget, ..
        } => {
            let g = first()?;
            match target {
                FolnerTarget::Set { set } => {
                    let q = folner_quality(g, set)?;
                    let b = vertex_boundary(g, set)?;
                    let ok = &q < eps;
                    let code = if ok { EXIT_OK } else { EXIT_NEGATIVE };
                    Ok(Computed::new(
                        json!({
                            "set": set,
                            "boundary": b,
                            "quality": ratio::fmt_ratio(&q),
                            "folner": ok,
                        }),
                        code,
                    ))
                }
                FolnerTarget::Ball { x, radius } => {
                    let w = Window::whole(g.clone());
                    let found = min_folner_in_ball(&w, *x, *radius, eps, *budget)?;
                    let quality = found.as_ref().map(|s| folner_quality(g, s)).transpose()?;
                    let code = if found.is_some() { EXIT_OK } else { EXIT_NEGATIVE };
                    Ok(Computed::new(
                        json!({
                            "set": found,
                            "quality": quality.as_ref().map(ratio::fmt_ratio),
                        }),
                        code,
                    ))
                }
            }
        }
        Job::Extract {
            eps,
            relaxed,
            function,
            ..
        } => {
            let g = first()?;
            let (h, mass, trace) =
                extract_folner_from_function(g, function, eps, &ExtractOptions { relaxed: *relaxed })?;
            Ok(Computed::new(
                json!({
                    "h": h,
                    "mass": ratio::fmt_ratio(&mass),
                    "trace": trace,
                }),
                EXIT_OK,
            ))
        }
        Job::Peel { eps, k, budget, .. } => {
            let g = first()?;
            match peel_local_hyperfinite(g, eps, *k, *budget) {
                Ok(p) => Ok(Computed::new(json!({ "status": "ok", "peel": p }), EXIT_OK)),
                Err(HierError::PeelStuck { k, remaining }) => Ok(Computed::new(
                    json!({ "status": "stuck", "k": k, "remaining": remaining }),
                    EXIT_NEGATIVE,
                )),
                Err(e) => Err(e.into()),
            }
        }
        Job::Seplp { eps, k, .. } => {
            let g = first()?;
            let out = separator_measure_lp(g, eps, *k)?;
            let code = match out.result {
                Dichotomy::Measure(_) => EXIT_OK,
                Dichotomy::Dual(_) => EXIT_NEGATIVE,
            };
            Ok(Computed::new(serde_json::to_value(&out)?, code))
        }
        Job::Witness { eps, measure, .. } => {
            let g = first()?;
            let w = Window::whole(g.clone());
            let mw = witness_from_measure(&w, measure, Some(eps))?;
            let report = validate_witness(g, &mw.witness, eps, mw.witness.radius);
            let code = if report.passes { EXIT_OK } else { EXIT_NEGATIVE };
            let mut summary = serde_json::to_value(&mw)?;
            let witness = summary
                .as_object_mut()
                .and_then(|o| o.remove("witness"));
            summary["radius"] = json!(mw.witness.radius);
            Ok(Computed {
                result: json!({ "construction": summary, "report": report }),
                code,
                graph: None,
                witness,
            })
        }
        Job::Tile {
            eps,
            family,
            cover,
            k,
            delete,
            budget,
            ..
        } => {
            let g = first()?;
            let (sets, r) = match family {
                FamilySource::Blocks { side, block } => {
                    if torus_side(g)? != *side {
                        return Err(CliError::Usage("torus side mismatch".into()));
                    }
                    (torus_blocks(*side, *block), 2 * (block - 1))
                }
                FamilySource::Enumerate { r, cap } => {
                    let fam = enumerate_folner_family(&Window::whole(g.clone()), eps, *r, *cap, *budget)?;
                    (fam.sets, *r)
                }
            };
            let report = ow_packing(g, &sets, &[VertexSet::all(g.n())], *budget)?;
            let mut kept = Vec::new();
            let mut removed = Vec::new();
            for (i, s) in report.packing.iter().enumerate() {
                if delete.contains(&i) {
                    removed.push(s.clone());
                } else {
                    kept.push(s.clone());
                }
            }
            if let Some(&i) = delete.iter().find(|&&i| i >= report.packing.len()) {
                return Err(CliError::Usage(format!(
                    "cannot delete tile {i}: the packing has {} tiles",
                    report.packing.len()
                )));
            }
            let packing = Packing {
                sets: kept,
                eps: eps.clone(),
                r,
            };
            let cover = match cover {
                CoverSource::Shifted { side, block } => {
                    fractional_from_distribution(&shifted_block_distribution(*side, *block)?)
                }
                CoverSource::Given { cover } => cover.clone(),
                CoverSource::Packing => {
                    let dist = TilingDistribution::new(g.n(), [(report.packing.clone(), ratio::one())]);
                    fractional_from_distribution(&dist)
                }
            };
            let outcome = complete_tiling_hall(g, &packing, &cover, eps, *k)?;
            let code = match &outcome {
                HallOutcome::Tiling(c) if c.bounds_hold => EXIT_OK,
                _ => EXIT_NEGATIVE,
            };
            Ok(Computed::new(
                json!({
                    "packing": report,
                    "removed": removed,
                    "outcome": outcome,
                }),
                code,
            ))
        }
        Job::Distill { eps, source, .. } => {
            let g = first()?;
            let dist = match source {
                DistSource::Shifted { side, block } => {
                    if torus_side(g)? != *side {
                        return Err(CliError::Usage("torus side mismatch".into()));
                    }
                    shifted_block_distribution(*side, *block)?
                }
                DistSource::Given { distribution } => {
                    distribution.validate().map_err(CliError::Usage)?;
                    distribution.clone()
                }
            };
            let stats = distribution_stats(g, &dist)?;
            let cover = fractional_from_distribution(&dist);
            let fw = propa_from_fractional(g, &cover)?;
            let r = fw.witness.radius;
            let cover_report = cover.check(g, eps, r).map_err(CliError::Usage)?;
            let four_eps = eps * ratio::int(4);
            let report = validate_witness(g, &fw.witness, &four_eps, r);
            let defect_bound = eps * ratio::int(2 * g.max_degree() as i64);
            let defects_ok = fw.max_defect <= defect_bound;
            let passes = report.passes && defects_ok;
            let witness = serde_json::to_value(&fw.witness)?;
            Ok(Computed {
                result: json!({
                    "stats": stats,
                    "cover": cover_report,
                    "witness_radius": r,
                    "max_bound": ratio::fmt_ratio(&fw.max_bound),
                    "report": report,
                    "max_defect": ratio::fmt_ratio(&fw.max_defect),
                    "defect_bound": ratio::fmt_ratio(&defect_bound),
                    "passes": passes,
                }),
                code: if passes { EXIT_OK } else { EXIT_NEGATIVE },
                graph: None,
                witness: Some(witness),
            })
        }
        Job::Specdist { a, b } => {
            let mut it = graphs.iter().cloned();
            let sa = spectrum_of(a, &mut it)?;
            let sb = spectrum_of(b, &mut it)?;
            let d = hausdorff_distance(&sa, &sb)?;
            Ok(Computed::new(
                json!({ "hausdorff": d, "len_a": sa.len(), "len_b": sb.len() }),
                EXIT_OK,
            ))
        }
        Job::Neighdist { r_cap, .. } => {
            if graphs.len() != 2 {
                return Err(CliError::Usage("neighdist needs two graphs".into()));
            }
            let d = neighborhood_distance(&graphs[0], &graphs[1], *r_cap)?;
            Ok(Computed::new(serde_json::to_value(&d)?, EXIT_OK))
        }
        Job::Gen { family, seed } => {
            let (g, log) = generate(family, *seed)?;
            Ok(Computed {
                result: json!({ "graph": GraphRef::of(&g), "log": log }),
                code: EXIT_OK,
                graph: Some(g),
                witness: None,
            })
        }
    }
}

fn generate(family: &GenFamily, seed: u64) -> Result<(Graph, Value), CliError> {
    Ok(match family {
        GenFamily::Path { n } => (make_path(*n), Value::Null),
        GenFamily::Cycle { n } => (make_cycle(*n), Value::Null),
        GenFamily::Grid { rows, cols } => (make_grid(*rows, *cols), Value::Null),
        GenFamily::Torus { d, n } => (make_torus(*d, *n)?, Value::Null),
        GenFamily::Tree { deg, depth, margin } => {
            let w = make_tree_window(*deg, *depth, *margin)?;
            let truncated: Vec<usize> = (0..w.host.n()).filter(|&v| w.truncated[v]).collect();
            let log = json!({ "truncated": truncated, "interior": w.interior, "margin": w.margin });
            (w.host, log)
        }
        GenFamily::Regular { n, d } => (random_regular(*n, *d, seed)?, Value::Null),
        GenFamily::Quotient { basis } => {
            let dim = basis.first().map_or(0, |b| b.len());
            let g = schreier_quotient(&CayleyWindowSpec::standard(dim, 1, 0), basis)?;
            (g, Value::Null)
        }
        GenFamily::Chain { sizes, degree, a } => {
            let expanders = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| random_regular(n, *degree, seed.wrapping_add(i as u64 + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            let (g, log) = amealm_chain(&expanders, a, seed)?;
            let ok = log.packing_inequality_holds();
            let mut log = serde_json::to_value(&log)?;
            log["packing_inequality_holds"] = json!(ok);
            (g, log)
        }
    })
}

/// Checks that do not rerun the construction.
fn audit(job: &Job, graphs: &[Graph], result: &Value) -> Result<Vec<&'static str>, String> {
    let mut done = Vec::new();
    let field = |k: &str| result.get(k).cloned().ok_or(format!("result lacks {k}"));
    match job {
        Job::Folner { eps, .. } => {
            let g = &graphs[0];
            if let Some(set) = serde_json::from_value::<Option<VertexSet>>(field("set")?).map_err(|e| e.to_string())? {
                let q = folner_quality(g, &set).map_err(|e| e.to_string())?;
                if ratio::fmt_ratio(&q) != field("quality")?.as_str().unwrap_or_default() {
                    return Err("quality mismatch".into());
                }
                if result.get("folner").is_none() && &q >= eps {
                    return Err("set is not ε-Følner".into());
                }
                done.push("quality");
            }
        }
        Job::Extract { function, .. } => {
            let trace = serde_json::from_value(field("trace")?).map_err(|e| e.to_string())?;
            verify_extraction(&graphs[0], function, &trace)?;
            done.push("extraction");
        }
        Job::Seplp { eps, .. } => {
            let g = &graphs[0];
            match serde_json::from_value::<Dichotomy>(field("result")?).map_err(|e| e.to_string())? {
                Dichotomy::Measure(m) => {
                    m.validate(g)?;
                    if &m.max_marginal(g.n()) > eps {
                        return Err("a vertex marginal exceeds ε".into());
                    }
                    done.push("measure");
                }
                Dichotomy::Dual(d) => {
                    if &d.eps != eps {
                        return Err("dual certificate ε mismatch".into());
                    }
                    if g.n() <= EXHAUSTIVE_MAX {
                        d.validate(g)?;
                        done.push("dual");
                    }
                }
            }
        }
        Job::Peel { eps, k, .. } => {
            if result.get("status").and_then(Value::as_str) == Some("ok") {
                let g = &graphs[0];
                let p: crate::hierarchy::PeelResult =
                    serde_json::from_value(result["peel"].clone()).map_err(|e| e.to_string())?;
                if ratio::int(p.s.len() as i64) > eps * ratio::int(g.n() as i64) {
                    return Err("|S| exceeds ε|V|".into());
                }
                if !crate::hierarchy::is_k_separator(g, &p.s, *k) {
                    return Err("S leaves a component larger than k".into());
                }
                done.push("peel");
            }
        }
        Job::Tile { .. } => {
            let outcome: HallOutcome =
                serde_json::from_value(field("outcome")?).map_err(|e| e.to_string())?;
            match outcome {
                HallOutcome::Tiling(c) => {
                    c.tiling.validate(&graphs[0])?;
                    done.push("tiling");
                }
                HallOutcome::Deficiency(d) => {
                    if d.neighbors.len() >= d.m.len() {
                        return Err("deficiency set satisfies Hall's condition".into());
                    }
                    done.push("deficiency");
                }
            }
        }
        Job::Distill { .. } => {
            let stats: crate::tiling::DistributionStats =
                serde_json::from_value(field("stats")?).map_err(|e| e.to_string())?;
            if stats.boundary.len() != graphs[0].n() || stats.boundary.iter().any(|b| b.is_negative()) {
                return Err("malformed boundary statistics".into());
            }
            done.push("stats");
        }
        _ => {}
    }
    Ok(done)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub schema: String,
    pub kind: Option<String>,
    pub accepted: bool,
    pub checks: Vec<String>,
    pub error: Option<String>,
}

/// Verifies a parsed certificate document against graph texts.
pub fn verify_value(doc: &Value, graphs: &[Graph]) -> Verification {
    let mut checks = Vec::new();
    let mut kind = None;
    let outcome = (|| -> Result<(), String> {
        let cert: Certificate = serde_json::from_value(doc.clone()).map_err(|e| format!("malformed certificate: {e}"))?;
        if serde_json::to_value(&cert).map_err(|e| e.to_string())? != *doc {
            return Err("unexpected fields".into());
        }
        if cert.schema != CERT_SCHEMA {
            return Err(format!("unknown schema {}", cert.schema));
        }
        if envelope_digest(&cert.schema, &cert.job, &cert.result) != cert.digest {
            return Err("digest mismatch".into());
        }
        checks.push("digest".to_string());
        let job: Job = serde_json::from_value(cert.job.clone()).map_err(|e| format!("malformed job: {e}"))?;
        kind = Some(job.kind().to_string());
        if serde_json::to_value(&job).map_err(|e| e.to_string())? != cert.job {
            return Err("job is not in canonical form".into());
        }
        let refs = job.graphs();
        if refs.len() != graphs.len() {
            return Err(format!("certificate references {} graph(s), {} given", refs.len(), graphs.len()));
        }
        for (r, g) in refs.iter().zip(graphs) {
            if GraphRef::of(g) != **r {
                return Err("graph does not match the certificate".into());
            }
        }
        checks.push("graphs".to_string());
        let recomputed = compute(&job, graphs).map_err(|e| format!("recomputation failed: {e}"))?;
        if recomputed.result != cert.result {
            return Err("result does not match recomputation".into());
        }
        checks.push("recomputation".to_string());
        checks.extend(audit(&job, graphs, &cert.result)?.into_iter().map(String::from));
        Ok(())
    })();
    Verification {
        schema: VERIFICATION_SCHEMA.into(),
        kind,
        accepted: outcome.is_ok(),
        checks,
        error: outcome.err(),
    }
}

/// Captured effect of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn read_graph(path: &Path) -> Result<Graph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    load_graph(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_function(path: &Path) -> Result<FolnerFunction, CliError> {
    let v: Value = read_json(path)?;
    let map: std::collections::BTreeMap<String, String> = match v.get("values") {
        Some(inner) => serde_json::from_value(inner.clone())?,
        None => serde_json::from_value(v)?,
    };
    let entries = map
        .into_iter()
        .map(|(k, r)| {
            let k = k
                .parse::<usize>()
                .map_err(|e| CliError::Usage(format!("vertex {k:?}: {e}")))?;
            Ok((k, parse_rational(&r).map_err(CliError::Usage)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(FolnerFunction::new(entries)?)
}

fn read_measure(path: &Path) -> Result<SeparatorMeasure, CliError> {
    let v: Value = read_json(path)?;
    let inner = if v.get("schema").and_then(Value::as_str) == Some(CERT_SCHEMA) {
        v["result"]["result"].clone()
    } else {
        v
    };
    let inner = match inner.get("kind").and_then(Value::as_str) {
        Some("measure") => {
            let mut o = inner;
            o.as_object_mut().map(|m| m.remove("kind"));
            o
        }
        Some(k) => return Err(CliError::Usage(format!("expected a measure, found {k}"))),
        None => inner,
    };
    Ok(serde_json::from_value(inner)?)
}

fn read_spectrum_source(path: &Path) -> Result<(SpectrumSource, Option<Graph>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        let values: Vec<f64> = serde_json::from_str(&text)?;
        Ok((SpectrumSource::Values { values }, None))
    } else {
        let g = load_graph(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok((SpectrumSource::Graph { graph: GraphRef::of(&g) }, Some(g)))
    }
}

/// Formats an eigenvalue with at most nine decimals, trailing zeros dropped.
pub fn format_eigenvalue(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn emit(out: &mut RunOutput, path: Option<&Path>, text: String) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.stdout.push_str(&text),
    }
    Ok(())
}

fn pretty(v: &impl Serialize) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn certify(out: &mut RunOutput, job: Job, graphs: &[Graph], path: Option<&Path>) -> Result<Computed, CliError> {
    let computed = compute(&job, graphs)?;
    let cert = Certificate::seal(&job, computed.result.clone())?;
    emit(out, path, pretty(&cert)?)?;
    out.code = computed.code;
    Ok(computed)
}

fn dispatch(cli: Cli, out: &mut RunOutput) -> Result<(), CliError> {
    match cli.command {
        Command::Folner(a) => {
            let g = read_graph(&a.graph)?;
            let target = match (a.set, a.x, a.radius) {
                (Some(set), _, _) => FolnerTarget::Set { set },
                (None, Some(x), Some(radius)) => FolnerTarget::Ball { x, radius },
                _ => return Err(CliError::Usage("give --set, or --x with --radius".into())),
            };
            let job = Job::Folner {
                graph: GraphRef::of(&g),
                eps: a.eps,
                target,
                budget: a.budget,
            };
            certify(out, job, &[g], a.out.out.as_deref())?;
        }
        Command::Extract(a) => {
            let g = read_graph(&a.graph)?;
            let job = Job::Extract {
                graph: GraphRef::of(&g),
                eps: a.eps,
                relaxed: a.relaxed,
                function: read_function(&a.function)?,
            };
            certify(out, job, &[g], a.out.out.as_deref())?;
        }
        Command::Peel(a) => {
            let g = read_graph(&a.graph)?;
            let job = Job::Peel {
                graph: GraphRef::of(&g),
                eps: a.eps,
                k: a.k,
                budget: a.budget,
            };
            certify(out, job, &[g], a.out.out.as_deref())?;
        }
        Command::Seplp(a) => {
            let g = read_graph(&a.graph)?;
            let job = Job::Seplp {
                graph: GraphRef::of(&g),
                eps: a.eps,
                k: a.k,
            };
            certify(out, job, &[g], a.out.out.as_deref())?;
        }
        Command::Witness(a) => {
            let g = read_graph(&a.graph)?;
            let job = Job::Witness {
                graph: GraphRef::of(&g),
                eps: a.eps,
                measure: read_measure(&a.measure)?,
            };
            let c = certify(out, job, &[g], a.out.out.as_deref())?;
            if let (Some(p), Some(w)) = (a.witness_out, c.witness) {
                fs::write(p, pretty(&w)?)?;
            }
        }
        Command::Tile(a) => {
            let g = read_graph(&a.graph)?;
            let (family, default_cover, default_k) = match (a.blocks, a.r) {
                (Some(block), _) => {
                    let side = torus_side(&g)?;
                    (
                        FamilySource::Blocks { side, block },
                        CoverSource::Shifted { side, block },
                        block,
                    )
                }
                (None, Some(r)) => (FamilySource::Enumerate { r, cap: a.cap }, CoverSource::Packing, r),
                (None, None) => return Err(CliError::Usage("give --blocks or --r".into())),
            };
            let cover = match a.cover {
                Some(p) => CoverSource::Given { cover: read_json(&p)? },
                None => default_cover,
            };
            let job = Job::Tile {
                graph: GraphRef::of(&g),
                eps: a.eps,
                family,
                cover,
                k: a.k.unwrap_or(default_k),
                delete: a.delete,
                budget: a.budget,
            };
            certify(out, job, &[g], a.out.out.as_deref())?;
        }
        Command::Distill(a) => {
            let g = read_graph(&a.graph)?;
            let source = match (a.blocks, a.distribution) {
                (Some(block), _) => DistSource::Shifted {
                    side: torus_side(&g)?,
                    block,
                },
                (None, Some(p)) => DistSource::Given {
                    distribution: read_json(&p)?,
                },
                (None, None) => return Err(CliError::Usage("give --blocks or --distribution".into())),
            };
            let job = Job::Distill {
                graph: GraphRef::of(&g),
                eps: a.eps,
                source,
            };
            let c = certify(out, job, &[g], a.out.out.as_deref())?;
            if let (Some(p), Some(w)) = (a.witness_out, c.witness) {
                fs::write(p, pretty(&w)?)?;
            }
        }
        Command::Spectrum(a) => {
            let g = read_graph(&a.graph)?;
            let s = laplacian_spectrum(&g)?;
            out.stdout = if a.json {
                serde_json::to_string(&s.values)? + "\n"
            } else {
                let parts: Vec<String> = s.values.iter().map(|&x| format_eigenvalue(x)).collect();
                parts.join(" ") + "\n"
            };
        }
        Command::Specdist(a) => {
            let (sa, ga) = read_spectrum_source(&a.a)?;
            let (sb, gb) = match (a.b, a.torus_proxy) {
                (Some(p), _) => read_spectrum_source(&p)?,
                (None, Some(m)) => (SpectrumSource::Torus { m }, None),
                (None, None) => return Err(CliError::Usage("give --b or --torus-proxy".into())),
            };
            let graphs: Vec<Graph> = ga.into_iter().chain(gb).collect();
            certify(out, Job::Specdist { a: sa, b: sb }, &graphs, a.out.out.as_deref())?;
        }
        Command::Neighdist(a) => {
            let g = read_graph(&a.g)?;
            let h = read_graph(&a.h)?;
            let job = Job::Neighdist {
                g: GraphRef::of(&g),
                h: GraphRef::of(&h),
                r_cap: a.r_cap,
            };
            certify(out, job, &[g, h], a.out.out.as_deref())?;
        }
        Command::Converge(a) => {
            let seq = a
                .graphs
                .iter()
                .map(|p| read_graph(p))
                .collect::<Result<Vec<_>, _>>()?;
            let proxy = match (a.proxy, a.torus_proxy) {
                (Some(p), _) => LimitProxy::from_graph(&read_graph(&p)?)?,
                (None, Some(m)) => LimitProxy {
                    window: Window::whole(make_torus(2, (2 * a.r_cap + 2).max(3))?),
                    spectrum: torus_spectrum_grid(m),
                },
                (None, None) => return Err(CliError::Usage("give --proxy or --torus-proxy".into())),
            };
            let rows = convergence_experiment(&seq, &proxy, a.r_cap, a.size_cap)?;
            emit(out, a.out.as_deref(), rows_to_csv(&rows))?;
        }
        Command::Gen(a) => {
            let family = match a.family {
                GenCommand::Path { n } => GenFamily::Path { n },
                GenCommand::Cycle { n } => GenFamily::Cycle { n },
                GenCommand::Grid { rows, cols } => GenFamily::Grid { rows, cols },
                GenCommand::Torus { d, n } => GenFamily::Torus { d, n },
                GenCommand::Tree { deg, depth, margin } => GenFamily::Tree { deg, depth, margin },
                GenCommand::Regular { n, d } => GenFamily::Regular { n, d },
                GenCommand::Quotient { basis } => GenFamily::Quotient { basis: basis.0 },
                GenCommand::Chain { sizes, degree, a } => GenFamily::Chain { sizes, degree, a },
            };
            let job = Job::Gen {
                family,
                seed: cli.seed,
            };
            let c = compute(&job, &[])?;
            let g = c.graph.expect("gen yields a graph");
            emit(out, a.out.as_deref(), g.to_text())?;
            if let Some(p) = a.log {
                fs::write(p, pretty(&Certificate::seal(&job, c.result)?)?)?;
            }
        }
        Command::Verify(a) => {
            let doc: Value = match fs::read_to_string(&a.cert) {
                Ok(t) => match serde_json::from_str(&t) {
                    Ok(v) => v,
                    Err(e) => Value::String(format!("unparseable: {e}")),
                },
                Err(e) => return Err(CliError::Usage(format!("{}: {e}", a.cert.display()))),
            };
            let graphs = a
                .graphs
                .iter()
                .map(|p| read_graph(p))
                .collect::<Result<Vec<_>, _>>()?;
            let v = verify_value(&doc, &graphs);
            out.code = if v.accepted { EXIT_OK } else { EXIT_NEGATIVE };
            out.stdout = pretty(&v)?;
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> RunOutput
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                RunOutput {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                RunOutput {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let mut out = RunOutput::default();
    if let Err(e) = dispatch(cli, &mut out) {
        out.code = e.code();
        if let CliError::Budget(_) = e {
            let partial = json!({ "schema": CERT_SCHEMA, "partial": true, "error": e.to_string() });
            out.stdout = serde_json::to_string_pretty(&partial).unwrap_or_default() + "\n";
        }
        out.stderr = format!("error: {e}\n");
    }
    out
}
