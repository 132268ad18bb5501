//! End-to-end drivers behind the command-line front end. Each writes its
//! artifacts under one run directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::spectral_concat;
use crate::clusters::{assign_clusters, ClusterMethod};
use crate::data::{synth_blobs, BlobSpec, MultiViewDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate, Scores};
use crate::solver::{fit, SolverConfig};
use crate::view_graph::LambdaMode;

pub const LABELS_FILE: &str = "labels.csv";
pub const CONSENSUS_FILE: &str = "consensus.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// How the view-graph regulariser is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaRepr", into = "LambdaRepr")]
pub enum LambdaSetting {
    /// One λ for every row: the mean of the per-row automatic values.
    Auto,
    /// Each row keeps its own automatic value.
    AutoPerRow,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Value(f64),
    Word(String),
}

impl TryFrom<LambdaRepr> for LambdaSetting {
    type Error = String;

    fn try_from(r: LambdaRepr) -> Result<Self, String> {
        match r {
            LambdaRepr::Value(v) => LambdaSetting::Fixed(v).checked(),
            LambdaRepr::Word(w) => w.parse(),
        }
    }
}

impl From<LambdaSetting> for LambdaRepr {
    fn from(l: LambdaSetting) -> Self {
        match l {
            LambdaSetting::Fixed(v) => LambdaRepr::Value(v),
            other => LambdaRepr::Word(other.to_string()),
        }
    }
}

impl LambdaSetting {
    fn checked(self) -> Result<Self, String> {
        match self {
            LambdaSetting::Fixed(v) if !(v > 0.0 && v.is_finite()) => {
                Err(format!("lambda must be a positive number, got {v}"))
            }
            ok => Ok(ok),
        }
    }

    pub fn mode(self) -> LambdaMode<f64> {
        match self {
            LambdaSetting::Auto => LambdaMode::Auto,
            LambdaSetting::AutoPerRow => LambdaMode::AutoPerRow,
            LambdaSetting::Fixed(v) => LambdaMode::Fixed(v),
        }
    }
}

impl FromStr for LambdaSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(LambdaSetting::Auto),
            "auto-per-row" => Ok(LambdaSetting::AutoPerRow),
            other => other
                .parse::<f64>()
                .map_err(|_| {
                    format!("expected auto, auto-per-row or a positive number, got {other:?}")
                })
                .and_then(|v| LambdaSetting::Fixed(v).checked()),
        }
    }
}

impl fmt::Display for LambdaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSetting::Auto => f.write_str("auto"),
            LambdaSetting::AutoPerRow => f.write_str("auto-per-row"),
            LambdaSetting::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Fully resolved run settings. This is also the snapshot written to
/// `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub k: usize,
    /// Taken from the number of distinct labels when absent.
    pub clusters: Option<usize>,
    pub lambda: LambdaSetting,
    pub r: f64,
    pub beta: f64,
    pub beta_adapt: bool,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            k: 10,
            clusters: None,
            lambda: LambdaSetting::Auto,
            r: 2.0,
            beta: 1.0,
            beta_adapt: true,
            max_iters: 50,
            tol: 1e-6,
            seed: 0,
            standardize: true,
        }
    }
}

/// Settings with every field optional, as read from a config file or the
/// command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSettings {
    pub k: Option<usize>,
    pub clusters: Option<usize>,
    pub lambda: Option<LambdaSetting>,
    pub r: Option<f64>,
    pub beta: Option<f64>,
    pub beta_adapt: Option<bool>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
}

impl PartialSettings {
    pub fn from_file(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

impl RunSettings {
    /// Overrides every field set in `layer`.
    pub fn merge(mut self, layer: &PartialSettings) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = layer.$f { self.$f = v; } )* };
        }
        take!(
            k,
            lambda,
            r,
            beta,
            beta_adapt,
            max_iters,
            tol,
            seed,
            standardize
        );
        if layer.clusters.is_some() {
            self.clusters = layer.clusters;
        }
        self
    }

    /// Defaults, then the optional config file, then command-line values.
    pub fn resolve(file: Option<&Path>, cli: &PartialSettings) -> Result<Self> {
        let mut s = RunSettings::default();
        if let Some(path) = file {
            s = s.merge(&PartialSettings::from_file(path)?);
        }
        Ok(s.merge(cli))
    }

    pub fn cluster_count<T>(&self, dataset: &MultiViewDataset<T>) -> Result<usize>
    where
        T: crate::Scalar,
    {
        self.clusters
            .or_else(|| dataset.n_classes())
            .ok_or_else(|| {
                Error::Config("cluster count not given and the dataset has no labels".into())
            })
    }

    pub fn solver_config(&self, c: usize) -> SolverConfig<f64> {
        let mut cfg = SolverConfig::new(self.k, c);
        cfg.lambda_mode = self.lambda.mode();
        cfg.r = self.r;
        cfg.beta_init = self.beta;
        cfg.beta_adaptive = self.beta_adapt;
        cfg.max_iters = self.max_iters;
        cfg.tol = self.tol;
        cfg.seed = self.seed;
        cfg.standardize = self.standardize;
        cfg
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub pur: f64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl MetricsReport {
    fn new(
        scores: Scores,
        method: impl Into<String>,
        iterations: Option<usize>,
        converged: Option<bool>,
    ) -> Self {
        Self {
            acc: scores.acc,
            nmi: scores.nmi,
            pur: scores.pur,
            method: method.into(),
            iterations,
            converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub labels: Vec<usize>,
    pub method: ClusterMethod,
    pub scores: Option<Scores>,
    pub iterations: usize,
    pub converged: bool,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct Snapshot<'a, S: Serialize> {
    command: &'a str,
    input: &'a Path,
    settings: &'a S,
}

/// Fits the model, reads off the clusters and writes labels, the sparse
/// consensus graph, view weights, the objective trace, metrics (when the
/// dataset has labels) and the settings snapshot.
pub fn cluster(manifest: &Path, settings: &RunSettings, out: &Path) -> Result<ClusterOutcome> {
    io::write_json(
        &out.join(CONFIG_FILE),
        &Snapshot {
            command: "cluster",
            input: manifest,
            settings,
        },
    )?;
    let dataset = io::load_dataset::<f64>(manifest)?;
    cluster_dataset(&dataset, settings, out)
}

pub fn cluster_dataset(
    dataset: &MultiViewDataset<f64>,
    settings: &RunSettings,
    out: &Path,
) -> Result<ClusterOutcome> {
    let c = settings.cluster_count(dataset)?;
    let config = settings.solver_config(c);
    let result = fit(dataset, &config)?;
    let assignment = assign_clusters(&result.graph, c, None, settings.seed);
    log::info!(
        "{}: {} iterations, converged = {}, {} components, labels from {}",
        dataset.name,
        result.trace.iterations_run,
        result.trace.converged,
        assignment.component_count,
        assignment.method
    );

    io::write_labels(&out.join(LABELS_FILE), &assignment.labels)?;
    io::write_sparse(&out.join(CONSENSUS_FILE), result.graph.s_star().view())?;
    io::write_weights(&out.join(WEIGHTS_FILE), result.weights.as_slice())?;
    io::write_trace(&out.join(TRACE_FILE), &result.trace)?;
    let scores = match &dataset.labels {
        Some(truth) => {
            let s = evaluate(truth, &assignment.labels)?;
            let report = MetricsReport::new(
                s,
                assignment.method.to_string(),
                Some(result.trace.iterations_run),
                Some(result.trace.converged),
            );
            io::write_json(&out.join(METRICS_FILE), &report)?;
            Some(s)
        }
        None => None,
    };
    Ok(ClusterOutcome {
        labels: assignment.labels,
        method: assignment.method,
        scores,
        iterations: result.trace.iterations_run,
        converged: result.trace.converged,
        out_dir: out.to_path_buf(),
    })
}

/// Neighbour counts swept by default.
pub fn default_k_list() -> Vec<usize> {
    (10..=130).step_by(10).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub outcome: std::result::Result<ClusterOutcome, String>,
}

/// Runs [`cluster`] once per neighbour count, each in `out/k<K>`, and
/// writes a `sweep.csv` table. A failing K is recorded and the sweep goes
/// on.
pub fn sweep_k(
    manifest: &Path,
    ks: &[usize],
    settings: &RunSettings,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    io::write_json(
        &out.join(CONFIG_FILE),
        &Snapshot {
            command: "sweep-k",
            input: manifest,
            settings: &(settings, ks),
        },
    )?;
    let dataset = io::load_dataset::<f64>(manifest)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let s = RunSettings {
            k,
            ..settings.clone()
        };
        let dir = out.join(format!("k{k}"));
        let outcome = io::write_json(
            &dir.join(CONFIG_FILE),
            &Snapshot {
                command: "cluster",
                input: manifest,
                settings: &s,
            },
        )
        .and_then(|_| cluster_dataset(&dataset, &s, &dir))
        .map_err(|e| {
            log::warn!("K = {k} failed: {e}");
            e.to_string()
        });
        rows.push(SweepRow { k, outcome });
    }
    write_sweep_table(&out.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

fn write_sweep_table(path: &Path, rows: &[SweepRow]) -> Result<()> {
    io::write_atomic(path, |w| {
        writeln!(w, "k,status,acc,nmi,pur,iterations,converged,method,error")?;
        for row in rows {
            match &row.outcome {
                Ok(o) => {
                    let (a, n, p) = match o.scores {
                        Some(s) => (
                            io::fmt_real(s.acc),
                            io::fmt_real(s.nmi),
                            io::fmt_real(s.pur),
                        ),
                        None => Default::default(),
                    };
                    writeln!(
                        w,
                        "{},ok,{a},{n},{p},{},{},{},",
                        row.k, o.iterations, o.converged, o.method
                    )?;
                }
                Err(e) => {
                    let msg = e.replace('"', "'");
                    writeln!(w, "{},failed,,,,,,,\"{msg}\"", row.k)?;
                }
            }
        }
        Ok(())
    })
}

/// Writes a synthetic blob dataset (`view<v>.csv`, `labels.csv`) and its
/// manifest; returns the manifest path.
pub fn synth(spec: &BlobSpec, out: &Path) -> Result<PathBuf> {
    let ds = synth_blobs::<f64>(spec)?;
    let mut views = Vec::with_capacity(ds.n_views());
    for (v, x) in ds.views.iter().enumerate() {
        let name = PathBuf::from(format!("view{v}.csv"));
        io::write_matrix(&out.join(&name), x.view())?;
        views.push(name);
    }
    io::write_labels(
        &out.join(LABELS_FILE),
        ds.labels.as_ref().expect("synthetic labels"),
    )?;
    let manifest = io::DatasetManifest {
        name: ds.name.clone(),
        views,
        labels: Some(PathBuf::from(LABELS_FILE)),
        delimiter: None,
    };
    let path = out.join(MANIFEST_FILE);
    io::write_json(&path, &manifest)?;
    Ok(path)
}

/// Scores a label file against a ground-truth file, optionally writing
/// `metrics.json` into `out`.
pub fn eval(truth: &Path, pred: &Path, out: Option<&Path>) -> Result<Scores> {
    let t = io::read_labels(truth)?;
    let p = io::read_labels(pred)?;
    let scores = evaluate(&t, &p)?;
    if let Some(dir) = out {
        io::write_json(
            &dir.join(METRICS_FILE),
            &MetricsReport::new(scores, "eval", None, None),
        )?;
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub labels: Vec<usize>,
    pub scores: Option<Scores>,
}

/// Spectral clustering on concatenated features, writing labels, metrics
/// and the settings snapshot.
pub fn baseline(manifest: &Path, settings: &RunSettings, out: &Path) -> Result<BaselineOutcome> {
    io::write_json(
        &out.join(CONFIG_FILE),
        &Snapshot {
            command: "baseline",
            input: manifest,
            settings,
        },
    )?;
    let dataset = io::load_dataset::<f64>(manifest)?;
    let c = settings.cluster_count(&dataset)?;
    let res = spectral_concat(&dataset, c, settings.k, settings.seed)?;
    io::write_labels(&out.join(LABELS_FILE), &res.labels)?;
    let scores = match &dataset.labels {
        Some(truth) => {
            let s = evaluate(truth, &res.labels)?;
            io::write_json(
                &out.join(METRICS_FILE),
                &MetricsReport::new(s, res.method_name, None, None),
            )?;
            Some(s)
        }
        None => None,
    };
    Ok(BaselineOutcome {
        labels: res.labels,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_parsing() {
        assert_eq!(
            "auto".parse::<LambdaSetting>().unwrap(),
            LambdaSetting::Auto
        );
        assert_eq!(
            "auto-per-row".parse::<LambdaSetting>().unwrap(),
            LambdaSetting::AutoPerRow
        );
        assert_eq!(
            "0.5".parse::<LambdaSetting>().unwrap(),
            LambdaSetting::Fixed(0.5)
        );
        assert!("-1".parse::<LambdaSetting>().is_err());
        assert!("often".parse::<LambdaSetting>().is_err());
        let json =
            serde_json::to_string(&[LambdaSetting::Auto, LambdaSetting::Fixed(2.5)]).unwrap();
        assert_eq!(json, r#"["auto",2.5]"#);
        let back: Vec<LambdaSetting> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![LambdaSetting::Auto, LambdaSetting::Fixed(2.5)]);
        assert!(serde_json::from_str::<LambdaSetting>("0").is_err());
    }

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"k": 7, "beta": 3.0, "lambda": "auto-per-row"}"#).unwrap();
        let cli = PartialSettings {
            k: Some(12),
            ..Default::default()
        };
        let s = RunSettings::resolve(Some(&path), &cli).unwrap();
        assert_eq!(s.k, 12);
        assert_eq!(s.beta, 3.0);
        assert_eq!(s.lambda, LambdaSetting::AutoPerRow);
        assert_eq!(s.max_iters, RunSettings::default().max_iters);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"neighbours": 7}"#).unwrap();
        let err = RunSettings::resolve(Some(&path), &PartialSettings::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn snapshot_round_trips() {
        let s = RunSettings {
            clusters: Some(4),
            lambda: LambdaSetting::Fixed(0.25),
            ..Default::default()
        };
        let back: RunSettings = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
