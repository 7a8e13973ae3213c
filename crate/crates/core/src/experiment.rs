//! Multi-round comparison of the kernel dictionary learning methods, with
//! CSV/JSON outputs for error curves and timing tables.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{self, DatasetSpec, SignalMatrix};
use crate::error::{Result, RkdlError};
use crate::kernel_dl::{kdl_train, morkdl_train, orkdl_train, rkdl_train, KdlConfig, TrainOutput, TrainTrace};
use crate::kernels::KernelSpec;
use crate::linear_dl::{aksvd_train, Dictionary, DlConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "kdl")]
    Kdl,
    #[serde(rename = "rkdl-d")]
    Rkdl,
    #[serde(rename = "orkdl-d")]
    Orkdl,
    #[serde(rename = "morkdl-d")]
    Morkdl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kdl, Method::Rkdl, Method::Orkdl, Method::Morkdl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kdl => "kdl",
            Method::Rkdl => "rkdl-d",
            Method::Orkdl => "orkdl-d",
            Method::Morkdl => "morkdl-d",
        }
    }

    /// Whether the method needs pre-trained kernel vectors.
    pub fn is_reduced(self) -> bool {
        self != Method::Kdl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = RkdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kdl" => Ok(Method::Kdl),
            "rkdl" | "rkdl-d" => Ok(Method::Rkdl),
            "orkdl" | "orkdl-d" => Ok(Method::Orkdl),
            "morkdl" | "morkdl-d" => Ok(Method::Morkdl),
            other => Err(RkdlError::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    pub kernel: KernelSpec,
    pub kdl: KdlConfig,
    /// Pre-training of the kernel vectors for the reduced methods.
    pub dl: DlConfig,
    pub rounds: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| RkdlError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| RkdlError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(RkdlError::InvalidParameter("no methods selected".into()));
        }
        if self.rounds == 0 {
            return Err(RkdlError::InvalidParameter("rounds must be at least 1".into()));
        }
        self.kernel.validate()?;
        self.kdl.validate()?;
        self.dataset.validate()
    }

    /// Trainer configuration for `method` in round `round`.
    pub fn kdl_for(&self, method: Method, round: usize) -> KdlConfig {
        let mut cfg = self.kdl;
        cfg.seed = self.base_seed + round as u64;
        if !matches!(method, Method::Orkdl | Method::Morkdl) {
            cfg.grad_steps = 0;
        }
        cfg
    }

    pub fn dl_for(&self, round: usize) -> DlConfig {
        let mut cfg = self.dl;
        cfg.seed = self.base_seed + round as u64;
        cfg
    }
}

/// One training run of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub seed: u64,
    pub trace: TrainTrace,
    /// Trainer wall-clock seconds.
    pub seconds: f64,
    /// Seconds spent pre-training the kernel vectors for this round (shared
    /// by the reduced methods, zero for KDL).
    pub pretrain_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub rounds: Vec<RoundRecord>,
    /// Set when a trainer error aborted the method.
    pub aborted: Option<String>,
}

impl MethodResult {
    /// Mean and sample standard deviation of the error at each iteration.
    pub fn error_curve(&self) -> (Vec<f64>, Vec<f64>) {
        let len = self.rounds.iter().map(|r| r.trace.errors.len()).min().unwrap_or(0);
        (0..len)
            .map(|it| mean_std(self.rounds.iter().map(|r| r.trace.errors[it])))
            .unzip()
    }

    pub fn final_error(&self) -> (f64, f64) {
        mean_std(self.rounds.iter().filter_map(|r| r.trace.errors.last().copied()))
    }

    pub fn mean_seconds(&self) -> f64 {
        mean_std(self.rounds.iter().map(|r| r.seconds)).0
    }

    pub fn mean_pretrain_seconds(&self) -> f64 {
        mean_std(self.rounds.iter().map(|r| r.pretrain_seconds)).0
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub methods: Vec<MethodResult>,
    pub signal_dim: usize,
    pub signal_count: usize,
    pub provenance: String,
}

impl RunResult {
    pub fn any_aborted(&self) -> bool {
        self.methods.iter().any(|m| m.aborted.is_some())
    }

    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Loads the dataset and runs [`run_on_signals`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let signals = datasets::load(&cfg.dataset)?;
    run_on_signals(cfg, &signals)
}

/// Runs every method for `cfg.rounds` rounds. Round `r` uses seed
/// `base_seed + r`; the reduced methods of a round share one pre-trained
/// set of kernel vectors. Rounds run serially so timings are comparable.
pub fn run_on_signals(cfg: &ExperimentConfig, signals: &SignalMatrix) -> Result<RunResult> {
    cfg.validate()?;
    let y = signals.view();
    let mut results: Vec<MethodResult> = cfg
        .methods
        .iter()
        .map(|&method| MethodResult {
            method,
            rounds: Vec::new(),
            aborted: None,
        })
        .collect();

    for round in 0..cfg.rounds {
        let needs_d = results.iter().any(|r| r.method.is_reduced() && r.aborted.is_none());
        let (d_init, pretrain_seconds): (Option<std::result::Result<Dictionary, String>>, f64) = if needs_d {
            let clock = Instant::now();
            let d = aksvd_train(y, &cfg.dl_for(round))
                .map(|o| o.dictionary)
                .map_err(|e| format!("kernel-vector pre-training failed: {e}"));
            (Some(d), clock.elapsed().as_secs_f64())
        } else {
            (None, 0.0)
        };

        for res in results.iter_mut().filter(|r| r.aborted.is_none()) {
            let kcfg = cfg.kdl_for(res.method, round);
            let clock = Instant::now();
            let outcome: std::result::Result<TrainOutput, String> = match (res.method, &d_init) {
                (Method::Kdl, _) => kdl_train(y, &cfg.kernel, &kcfg).map_err(|e| e.to_string()),
                (_, Some(Err(msg))) => Err(msg.clone()),
                (_, None) => unreachable!("reduced methods always get kernel vectors"),
                (Method::Rkdl, Some(Ok(d))) => rkdl_train(y, d, &cfg.kernel, &kcfg).map_err(|e| e.to_string()),
                (Method::Orkdl, Some(Ok(d))) => orkdl_train(y, d, &cfg.kernel, &kcfg).map_err(|e| e.to_string()),
                (Method::Morkdl, Some(Ok(d))) => morkdl_train(y, d, &cfg.kernel, &kcfg)
                    .map(|o| o.output)
                    .map_err(|e| e.to_string()),
            };
            let seconds = clock.elapsed().as_secs_f64();
            match outcome {
                Ok(out) => {
                    log::info!(
                        "{} round {round}: final error {:.6e} in {seconds:.3}s",
                        res.method,
                        out.trace.errors.last().copied().unwrap_or(f64::NAN)
                    );
                    res.rounds.push(RoundRecord {
                        round,
                        seed: kcfg.seed,
                        trace: out.trace,
                        seconds,
                        pretrain_seconds: if res.method.is_reduced() { pretrain_seconds } else { 0.0 },
                    });
                }
                Err(msg) => {
                    log::error!("{} aborted in round {round}: {msg}", res.method);
                    res.aborted = Some(format!("round {round}: {msg}"));
                }
            }
        }
    }

    Ok(RunResult {
        methods: results,
        signal_dim: signals.dim(),
        signal_count: signals.len(),
        provenance: signals.provenance.clone(),
    })
}

/// Per-method row of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rounds: usize,
    pub mean_final_error: f64,
    pub std_final_error: f64,
    pub mean_seconds: f64,
    pub mean_pretrain_seconds: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub signal_dim: usize,
    pub signal_count: usize,
    pub provenance: String,
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn from_result(result: &RunResult) -> Self {
        Summary {
            signal_dim: result.signal_dim,
            signal_count: result.signal_count,
            provenance: result.provenance.clone(),
            methods: result
                .methods
                .iter()
                .map(|m| {
                    let (mean, std) = m.final_error();
                    MethodSummary {
                        method: m.method,
                        rounds: m.rounds.len(),
                        mean_final_error: mean,
                        std_final_error: std,
                        mean_seconds: m.mean_seconds(),
                        mean_pretrain_seconds: m.mean_pretrain_seconds(),
                        aborted: m.aborted.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| RkdlError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| RkdlError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

pub const ERRORS_FILE: &str = "errors.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `errors.csv`, `curves.csv` and `summary.json` into `dir`.
pub fn emit_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    if result.methods.is_empty() {
        return Err(RkdlError::InvalidParameter("result has no methods".into()));
    }
    fs::create_dir_all(dir).map_err(|e| RkdlError::io(dir, e))?;

    let mut errors = String::from("method,round,iteration,error\n");
    for m in &result.methods {
        for r in &m.rounds {
            for (it, e) in r.trace.errors.iter().enumerate() {
                errors.push_str(&format!("{},{},{},{}\n", m.method, r.round, it, e));
            }
        }
    }
    write_text(&dir.join(ERRORS_FILE), &errors)?;

    let mut curves = String::from("method,iteration,mean_error,std_error\n");
    for m in &result.methods {
        let (mean, std) = m.error_curve();
        for (it, (mu, sd)) in mean.iter().zip(&std).enumerate() {
            curves.push_str(&format!("{},{},{},{}\n", m.method, it, mu, sd));
        }
    }
    write_text(&dir.join(CURVES_FILE), &curves)?;

    let summary = Summary::from_result(result);
    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| RkdlError::Json {
        path: path.clone(),
        source: e,
    })?;
    write_text(&path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| RkdlError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| RkdlError::io(path, e))
}
