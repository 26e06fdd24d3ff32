//! Experiment driver: solver dispatch, parameter sweeps, and CSV/JSON
//! output with provenance on every row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpt::{PtParams, TruncationConfig};
use crate::error::{Error, Result};
use crate::graph::{GraphInstance, NodeId, SecurityGraph};
use crate::mdp::{origin_value_closed_form, InterdictionFile, MixedInterdiction};
use crate::montecarlo::{simulate_delivery, SimulationReport, DEFAULT_STEP_CAP};
use crate::pt_game::{rational_response, solve_mse_pt, solve_se_pt, PtGameSpec};
use crate::pure::solve_se;
use crate::search::{solve_mse, MseSolution, SearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Se,
    Mse,
    SePt,
    MsePt,
    Simulate,
    Sweep,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(Mode::Se),
            "mse" => Ok(Mode::Mse),
            "se-pt" => Ok(Mode::SePt),
            "mse-pt" => Ok(Mode::MsePt),
            "simulate" => Ok(Mode::Simulate),
            "sweep" => Ok(Mode::Sweep),
            _ => Err(Error::InvalidParameter(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "R_common")]
    RCommon,
    #[serde(rename = "gamma_U")]
    GammaU,
    #[serde(rename = "lambda_U")]
    LambdaU,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::RCommon => "R_common",
            SweepParam::GammaU => "gamma_U",
            SweepParam::LambdaU => "lambda_U",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::RCommon => vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            SweepParam::GammaU => vec![0.25, 0.3, 0.35, 0.5, 0.75, 0.9],
            SweepParam::LambdaU => vec![1.0, 2.5, 5.0],
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "R_common" => Ok(SweepParam::RCommon),
            "gamma" | "gamma_U" => Ok(SweepParam::GammaU),
            "lambda" | "lambda_U" => Ok(SweepParam::LambdaU),
            _ => Err(Error::InvalidParameter(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    #[serde(default)]
    pub values: Vec<f64>,
}

fn default_trials() -> u64 {
    1_000_000
}

fn default_step_cap() -> u64 {
    DEFAULT_STEP_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance_path: PathBuf,
    pub mode: Mode,
    #[serde(default)]
    pub pt_params_i: PtParams,
    #[serde(default)]
    pub pt_params_u: PtParams,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub trunc: TruncationConfig,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Interdiction strategy file for `simulate`.
    #[serde(default)]
    pub x_path: Option<PathBuf>,
    /// Path for `simulate`, as node ids (origin and destination optional).
    #[serde(default)]
    pub path: Vec<NodeId>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
}

impl ExperimentConfig {
    pub fn new(instance_path: impl Into<PathBuf>, mode: Mode) -> Self {
        Self {
            instance_path: instance_path.into(),
            mode,
            pt_params_i: PtParams::default(),
            pt_params_u: PtParams::default(),
            sweep: None,
            search: SearchConfig::default(),
            trunc: TruncationConfig::default(),
            output_path: None,
            x_path: None,
            path: Vec::new(),
            trials: default_trials(),
            step_cap: default_step_cap(),
        }
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Run metadata attached to every output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance_sha256: String,
    pub seed: u64,
    pub epsilon: f64,
    pub k_max: usize,
    pub initial_mesh: f64,
    pub contraction_factor: f64,
    pub min_mesh: f64,
    pub max_evals: usize,
    pub restarts: usize,
}

impl Provenance {
    pub fn new(instance_bytes: &[u8], search: &SearchConfig, trunc: &TruncationConfig) -> Self {
        let digest = Sha256::digest(instance_bytes);
        let instance_sha256 = digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        Self {
            instance_sha256,
            seed: search.rng_seed,
            epsilon: trunc.epsilon,
            k_max: trunc.k_max,
            initial_mesh: search.initial_mesh,
            contraction_factor: search.contraction_factor,
            min_mesh: search.min_mesh,
            max_evals: search.max_evals,
            restarts: search.restarts,
        }
    }

    const COLUMNS: [&'static str; 9] = [
        "instance_sha256",
        "seed",
        "epsilon",
        "k_max",
        "initial_mesh",
        "contraction_factor",
        "min_mesh",
        "max_evals",
        "restarts",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.instance_sha256.clone(),
            self.seed.to_string(),
            fmt9(self.epsilon),
            self.k_max.to_string(),
            fmt9(self.initial_mesh),
            fmt9(self.contraction_factor),
            fmt9(self.min_mesh),
            self.max_evals.to_string(),
            self.restarts.to_string(),
        ]
    }
}

/// Formats with 9 significant digits, trailing zeros removed.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..=9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let mut out = format!("{v:.decimals$}");
        if out.contains('.') {
            out = out.trim_end_matches('0').trim_end_matches('.').to_string();
        }
        out
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

/// Rounds to the precision emitted by [`fmt9`].
pub fn round9(v: f64) -> f64 {
    if v.is_finite() { fmt9(v).parse().unwrap() } else { v }
}

fn x_map(graph: &SecurityGraph, x: &MixedInterdiction) -> BTreeMap<NodeId, f64> {
    x.to_id_map(graph).into_iter().filter(|&(_, v)| v > 0.0).map(|(k, v)| (k, round9(v))).collect()
}

fn x_string(x: &BTreeMap<NodeId, f64>) -> String {
    x.iter().map(|(k, v)| format!("{k}:{}", fmt9(*v))).collect::<Vec<_>>().join(";")
}

fn pct(pt: f64, rational: f64) -> f64 {
    round9((pt - rational) / rational * 100.0)
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub mse_x: BTreeMap<NodeId, f64>,
    pub mse_path: String,
    pub mse_e: f64,
    pub msept_x: BTreeMap<NodeId, f64>,
    pub msept_path: String,
    pub msept_e: f64,
    pub msept_xi_i: f64,
    pub msept_xi_u: f64,
    /// Operator's valuation of the shortest path against the MSE-PT strategy.
    pub shortest_xi_u: f64,
    pub shortest_vs_mse_e: f64,
    pub shortest_vs_msept_e: f64,
    pub rational_response_path: String,
    pub rational_response_e: f64,
    pub pct_msept_vs_mse: f64,
    pub pct_rational_response_vs_msept: f64,
    pub pct_rational_response_vs_mse: f64,
    pub provenance: Provenance,
}

const SWEEP_COLUMNS: [&str; 18] = [
    "parameter",
    "value",
    "mse_x",
    "mse_path",
    "mse_e",
    "msept_x",
    "msept_path",
    "msept_e",
    "msept_xi_i",
    "msept_xi_u",
    "shortest_xi_u",
    "shortest_vs_mse_e",
    "shortest_vs_msept_e",
    "rational_response_path",
    "rational_response_e",
    "pct_msept_vs_mse",
    "pct_rational_response_vs_msept",
    "pct_rational_response_vs_mse",
];

impl SweepRow {
    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.parameter.clone(),
            fmt9(self.value),
            x_string(&self.mse_x),
            self.mse_path.clone(),
            fmt9(self.mse_e),
            x_string(&self.msept_x),
            self.msept_path.clone(),
            fmt9(self.msept_e),
            fmt9(self.msept_xi_i),
            fmt9(self.msept_xi_u),
            fmt9(self.shortest_xi_u),
            fmt9(self.shortest_vs_mse_e),
            fmt9(self.shortest_vs_msept_e),
            self.rational_response_path.clone(),
            fmt9(self.rational_response_e),
            fmt9(self.pct_msept_vs_mse),
            fmt9(self.pct_rational_response_vs_msept),
            fmt9(self.pct_rational_response_vs_mse),
        ];
        f.extend(self.provenance.fields());
        f
    }
}

/// Path label with its 1-based position in the enumeration, e.g. `12:(3,6,9)`.
fn labelled(graph: &SecurityGraph, index: usize, h: &crate::graph::Path) -> String {
    format!("{}:{}", index + 1, graph.path_label(h))
}

/// Profiles used at one sweep point.
pub fn sweep_params(param: SweepParam, value: f64, base_i: &PtParams, base_u: &PtParams) -> (PtParams, PtParams) {
    match param {
        SweepParam::RCommon => (PtParams { r: value, ..*base_i }, PtParams { r: value, ..*base_u }),
        SweepParam::GammaU => {
            (PtParams::rational(), PtParams { gamma_plus: value, gamma_minus: value, ..*base_u })
        }
        SweepParam::LambdaU => (PtParams::rational(), PtParams { lambda: value, ..*base_u }),
    }
}

/// Runs the sweep. The rational equilibrium does not depend on the swept
/// parameter and is solved once; sweep points run in parallel.
pub fn run_sweep(
    base: &PtGameSpec,
    param: SweepParam,
    values: &[f64],
    search: &SearchConfig,
    provenance: &Provenance,
) -> Result<Vec<SweepRow>> {
    let g = &base.graph;
    let mse: MseSolution = solve_mse(g, base.t_a, search)?;
    let hs = g.shortest_path();
    let mse_x = x_map(g, &mse.x);
    let shortest_vs_mse = origin_value_closed_form(g, base.t_a, &mse.x, &hs);

    values
        .par_iter()
        .map(|&value| {
            let (pi, pu) = sweep_params(param, value, &base.params_i, &base.params_u);
            let spec = base.with_params(pi, pu)?;
            let sol = solve_mse_pt(&spec, search)?;
            let rr = rational_response(&spec, &sol.x);
            let shortest_xi_u = spec.xi_u(&sol.x, &hs)?;
            let shortest_vs_msept = origin_value_closed_form(g, spec.t_a, &sol.x, &hs);
            Ok(SweepRow {
                parameter: param.name().to_string(),
                value,
                mse_x: mse_x.clone(),
                mse_path: labelled(g, mse.path_index, &mse.path),
                mse_e: round9(mse.expected_delivery_time),
                msept_x: x_map(g, &sol.x),
                msept_path: labelled(g, sol.path_index, &sol.path),
                msept_e: round9(sol.expected_delivery_time),
                msept_xi_i: round9(sol.xi_i),
                msept_xi_u: round9(sol.xi_u),
                shortest_xi_u: round9(shortest_xi_u),
                shortest_vs_mse_e: round9(shortest_vs_mse),
                shortest_vs_msept_e: round9(shortest_vs_msept),
                rational_response_path: labelled(g, rr.path_index, &rr.path),
                rational_response_e: round9(rr.value),
                pct_msept_vs_mse: pct(sol.expected_delivery_time, mse.expected_delivery_time),
                pct_rational_response_vs_msept: pct(rr.value, sol.expected_delivery_time),
                pct_rational_response_vs_mse: pct(rr.value, mse.expected_delivery_time),
                provenance: provenance.clone(),
            })
        })
        .collect()
}

pub fn run_sweep_r(base: &PtGameSpec, values: &[f64], search: &SearchConfig, prov: &Provenance) -> Result<Vec<SweepRow>> {
    run_sweep(base, SweepParam::RCommon, values, search, prov)
}

pub fn run_sweep_gamma(base: &PtGameSpec, values: &[f64], search: &SearchConfig, prov: &Provenance) -> Result<Vec<SweepRow>> {
    run_sweep(base, SweepParam::GammaU, values, search, prov)
}

pub fn run_sweep_lambda(base: &PtGameSpec, values: &[f64], search: &SearchConfig, prov: &Provenance) -> Result<Vec<SweepRow>> {
    run_sweep(base, SweepParam::LambdaU, values, search, prov)
}

/// Generic result table: a header and string rows, with a JSON mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub json: serde_json::Value,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| Error::Csv(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.json).expect("json values serialize")
    }

    /// Writes CSV when the extension is `.csv`, JSON otherwise. A CSV
    /// output also gets a `.json` mirror next to it.
    pub fn write(&self, path: &FsPath) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "csv") {
            std::fs::write(path, self.to_csv()?).map_err(io)?;
            std::fs::write(path.with_extension("json"), self.to_json() + "\n").map_err(io)?;
        } else {
            std::fs::write(path, self.to_json() + "\n").map_err(io)?;
        }
        Ok(())
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let columns = SWEEP_COLUMNS.iter().chain(Provenance::COLUMNS.iter()).map(|s| s.to_string()).collect();
    Table {
        columns,
        rows: rows.iter().map(SweepRow::fields).collect(),
        json: serde_json::to_value(rows).expect("rows serialize"),
    }
}

fn single_row(provenance: &Provenance, record: Vec<(&str, String)>, json: serde_json::Value) -> Table {
    let mut columns: Vec<String> = record.iter().map(|(k, _)| k.to_string()).collect();
    let mut row: Vec<String> = record.into_iter().map(|(_, v)| v).collect();
    columns.extend(Provenance::COLUMNS.iter().map(|s| s.to_string()));
    row.extend(provenance.fields());
    let mut json = json;
    json["provenance"] = serde_json::to_value(provenance).unwrap();
    Table { columns, rows: vec![row], json }
}

/// Loads and validates an instance, returning it with its raw bytes.
pub fn load_instance(path: &FsPath) -> Result<(SecurityGraph, crate::graph::RehandlingTime, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let inst = GraphInstance::from_json(text)?;
    let graph = SecurityGraph::from_instance(&inst)?;
    for id in graph.certain_interdiction_nodes() {
        log::warn!("node {id} has attack success probability 1");
    }
    Ok((graph, inst.rehandling()?, bytes))
}

/// Outcome of [`run`]: the table written (or to be written) and, for
/// `simulate`, the raw report.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    pub simulation: Option<SimulationReport>,
}

/// Dispatches on `config.mode` and writes the result when an output path
/// is set.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let (graph, t_a, bytes) = load_instance(&config.instance_path)?;
    let search = config.search.validated()?;
    let trunc = config.trunc.validated()?;
    let prov = Provenance::new(&bytes, &search, &trunc);
    let label = |h: &crate::graph::Path| graph.path_label(h);
    let ids = |h: &crate::graph::Path| h.nodes().iter().map(|&n| graph.id(n)).collect::<Vec<_>>();

    let mut simulation = None;
    let table = match config.mode {
        Mode::Se => {
            let s = solve_se(&graph, t_a);
            single_row(
                &prov,
                vec![
                    ("mode", "se".into()),
                    ("node", graph.id(s.node).to_string()),
                    ("path", label(&s.path)),
                    ("expected_delivery_time", fmt9(s.delivery_time)),
                ],
                serde_json::json!({
                    "mode": "se",
                    "node": graph.id(s.node),
                    "path": ids(&s.path),
                    "path_label": label(&s.path),
                    "branch": s.branch,
                    "expected_delivery_time": round9(s.delivery_time),
                }),
            )
        }
        Mode::Mse => {
            let s = solve_mse(&graph, t_a, &search)?;
            let xm = x_map(&graph, &s.x);
            single_row(
                &prov,
                vec![
                    ("mode", "mse".into()),
                    ("x", x_string(&xm)),
                    ("path", labelled(&graph, s.path_index, &s.path)),
                    ("expected_delivery_time", fmt9(s.expected_delivery_time)),
                    ("evals", s.search.evals_used.to_string()),
                    ("converged", s.search.converged.to_string()),
                ],
                serde_json::json!({
                    "mode": "mse",
                    "x": xm,
                    "path": ids(&s.path),
                    "path_label": labelled(&graph, s.path_index, &s.path),
                    "expected_delivery_time": round9(s.expected_delivery_time),
                    "evals": s.search.evals_used,
                    "converged": s.search.converged,
                }),
            )
        }
        Mode::SePt => {
            let spec = PtGameSpec::new(graph.clone(), t_a, config.pt_params_i, config.pt_params_u, trunc)?;
            let s = solve_se_pt(&spec)?;
            single_row(
                &prov,
                vec![
                    ("mode", "se-pt".into()),
                    ("node", graph.id(s.node).to_string()),
                    ("path", label(&s.path)),
                    ("v_i", fmt9(s.value_i)),
                    ("v_u", fmt9(s.value_u)),
                    ("expected_delivery_time", fmt9(s.expected_delivery_time)),
                ],
                serde_json::json!({
                    "mode": "se-pt",
                    "node": graph.id(s.node),
                    "path": ids(&s.path),
                    "path_label": label(&s.path),
                    "v_i": round9(s.value_i),
                    "v_u": round9(s.value_u),
                    "expected_delivery_time": round9(s.expected_delivery_time),
                    "params_i": config.pt_params_i,
                    "params_u": config.pt_params_u,
                }),
            )
        }
        Mode::MsePt => {
            let spec = PtGameSpec::new(graph.clone(), t_a, config.pt_params_i, config.pt_params_u, trunc)?;
            let s = solve_mse_pt(&spec, &search)?;
            let rr = rational_response(&spec, &s.x);
            let xm = x_map(&graph, &s.x);
            single_row(
                &prov,
                vec![
                    ("mode", "mse-pt".into()),
                    ("x", x_string(&xm)),
                    ("path", labelled(&graph, s.path_index, &s.path)),
                    ("xi_i", fmt9(s.xi_i)),
                    ("xi_u", fmt9(s.xi_u)),
                    ("expected_delivery_time", fmt9(s.expected_delivery_time)),
                    ("rational_response_path", labelled(&graph, rr.path_index, &rr.path)),
                    ("rational_response_e", fmt9(rr.value)),
                ],
                serde_json::json!({
                    "mode": "mse-pt",
                    "x": xm,
                    "path": ids(&s.path),
                    "path_label": labelled(&graph, s.path_index, &s.path),
                    "xi_i": round9(s.xi_i),
                    "xi_u": round9(s.xi_u),
                    "expected_delivery_time": round9(s.expected_delivery_time),
                    "rational_response_path": labelled(&graph, rr.path_index, &rr.path),
                    "rational_response_e": round9(rr.value),
                    "params_i": config.pt_params_i,
                    "params_u": config.pt_params_u,
                }),
            )
        }
        Mode::Simulate => {
            let x_path = config
                .x_path
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("simulate needs an interdiction strategy file".into()))?;
            let text = std::fs::read_to_string(x_path).map_err(|e| Error::Io(format!("{}: {e}", x_path.display())))?;
            let file: InterdictionFile = serde_json::from_str(&text)?;
            let x = MixedInterdiction::from_ids(&graph, &file.0)?;
            let h = graph.path_from_ids(&config.path)?;
            let report = simulate_delivery(&graph, t_a, &x, &h, config.trials, search.rng_seed, config.step_cap)?;
            let analytic = origin_value_closed_form(&graph, t_a, &x, &h);
            let t = single_row(
                &prov,
                vec![
                    ("mode", "simulate".into()),
                    ("path", label(&h)),
                    ("trials", report.trials.to_string()),
                    ("mean_delivery_time", fmt9(report.mean_delivery_time)),
                    ("std_error", fmt9(report.std_error)),
                    ("analytic_delivery_time", fmt9(analytic)),
                    ("truncated_runs", report.truncated_runs.to_string()),
                ],
                serde_json::json!({
                    "mode": "simulate",
                    "path": ids(&h),
                    "path_label": label(&h),
                    "analytic_delivery_time": round9(analytic),
                    "report": report,
                }),
            );
            simulation = Some(report);
            t
        }
        Mode::Sweep => {
            let sweep = config
                .sweep
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("sweep mode needs a sweep specification".into()))?;
            let values = if sweep.values.is_empty() { sweep.param.default_values() } else { sweep.values.clone() };
            let spec = PtGameSpec::new(graph.clone(), t_a, config.pt_params_i, config.pt_params_u, trunc)?;
            let rows = run_sweep(&spec, sweep.param, &values, &search, &prov)?;
            sweep_table(&rows)
        }
    };
    if let Some(out) = &config.output_path {
        table.write(out)?;
    }
    Ok(RunOutput { table, simulation })
}
