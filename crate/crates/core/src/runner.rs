//! Run configuration, lane orchestration and result files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::ModelArchive;
use crate::data::{load_csv, DataError, Dataset, Family};
use crate::engine::{lane_rng, Chain, EngineError, KernelKind, SamplerConfig, StepRecord};
use crate::estimate::{
    estimate_frequency, estimate_renormalized, EstimateError, FrequencyCounter, PosteriorEstimate,
};
use crate::experiments::{
    compute_metrics, gen_kepler_data, gen_logic_data, gen_mass_data, ExperimentKind, GroundTruth,
    RunMetrics,
};
use crate::kernel::LocalKernelConfig;
use crate::lanes::{map_indexed, Execution};
use crate::numfmt::{parse_f64, sig12};
use crate::operators::OperatorConfig;
use crate::target::Target;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot write config: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("every lane failed")]
    AllLanesFailed,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorSelection {
    Renorm,
    Freq,
    Both,
}

impl EstimatorSelection {
    pub fn renorm(self) -> bool {
        matches!(self, EstimatorSelection::Renorm | EstimatorSelection::Both)
    }

    pub fn freq(self) -> bool {
        matches!(self, EstimatorSelection::Freq | EstimatorSelection::Both)
    }
}

impl fmt::Display for EstimatorSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorSelection::Renorm => "renorm",
            EstimatorSelection::Freq => "freq",
            EstimatorSelection::Both => "both",
        })
    }
}

impl FromStr for EstimatorSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "renorm" | "renormalized" => Ok(EstimatorSelection::Renorm),
            "freq" | "frequency" => Ok(EstimatorSelection::Freq),
            "both" => Ok(EstimatorSelection::Both),
            other => Err(format!("unknown estimator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub response: String,
    pub family: Family,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            response: "y".into(),
            family: Family::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub iterations: u64,
    /// Fraction of iterations discarded before frequency counting.
    pub burn_in: f64,
    pub threads: usize,
    pub seed: u64,
    pub estimator: EstimatorSelection,
    /// Prior penalty per node; `log n` when absent.
    pub gamma: Option<f64>,
    pub out: PathBuf,
    pub step_logs: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            iterations: 1000,
            burn_in: 0.2,
            threads: 1,
            seed: 1,
            estimator: EstimatorSelection::Renorm,
            gamma: None,
            out: PathBuf::from("out"),
            step_logs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub pop_size: usize,
    pub max_model_size: usize,
    pub kernel: KernelKind,
    pub generation_steps: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            pop_size: d.pop_size,
            max_model_size: d.max_model_size,
            kernel: d.kernel,
            generation_steps: d.generation_steps,
        }
    }
}

/// Everything a run needs. On disk this is a TOML file with the sections
/// `[data]`, `[run]`, `[sampler]`, `[operators]` and `[local]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub run: RunSection,
    pub sampler: SamplerSection,
    pub operators: OperatorConfig,
    pub local: LocalKernelConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, RunError> {
        Ok(toml::to_string(self)?)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            pop_size: self.sampler.pop_size,
            max_model_size: self.sampler.max_model_size,
            kernel: self.sampler.kernel,
            generation_steps: self.sampler.generation_steps,
            operators: self.operators.clone(),
            local: self.local.clone(),
        }
    }

    pub fn from_parts(sampler: &SamplerConfig) -> Self {
        RunConfig {
            sampler: SamplerSection {
                pop_size: sampler.pop_size,
                max_model_size: sampler.max_model_size,
                kernel: sampler.kernel,
                generation_steps: sampler.generation_steps,
            },
            operators: sampler.operators.clone(),
            local: sampler.local.clone(),
            ..RunConfig::default()
        }
    }

    pub fn burn_in_steps(&self) -> u64 {
        (self.run.burn_in * self.run.iterations as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.sampler_config().validate()?;
        let r = &self.run;
        if r.threads == 0 {
            return Err(RunError::Config("threads must be at least 1".into()));
        }
        if r.iterations == 0 {
            return Err(RunError::Config("iterations must be positive".into()));
        }
        if !(0.0..1.0).contains(&r.burn_in) {
            return Err(RunError::Config(
                "burn_in is a fraction of iterations and must lie in [0, 1)".into(),
            ));
        }
        if self.burn_in_steps() >= r.iterations {
            return Err(RunError::Config("iterations must exceed burn-in".into()));
        }
        if let Some(g) = r.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(RunError::Config("gamma must be finite and non-negative".into()));
            }
        }
        if r.estimator.freq() && !self.sampler.kernel.is_reversible() {
            return Err(RunError::Config(format!(
                "the frequency estimator is not valid for kernel {}",
                self.sampler.kernel
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LaneReport {
    pub lane: usize,
    pub steps: u64,
    pub accepted: u64,
    pub forward_evaluations: u64,
    pub backward_evaluations: u64,
    pub log: Vec<StepRecord>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub lanes: Vec<LaneReport>,
    /// `(lane, message)` for every lane that panicked or failed to start.
    pub failures: Vec<(usize, String)>,
    pub archive: Arc<ModelArchive>,
    pub counter: FrequencyCounter,
    pub renorm: Option<PosteriorEstimate>,
    pub freq: Option<PosteriorEstimate>,
    pub computations: u64,
    pub seconds: f64,
}

impl RunOutput {
    pub fn degraded(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Inclusion probabilities of the renormalized estimate, else frequency.
    pub fn inclusion(&self) -> BTreeMap<String, f64> {
        self.renorm
            .as_ref()
            .or(self.freq.as_ref())
            .map(|e| e.inclusion.clone())
            .unwrap_or_default()
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "lane panicked".into()
    }
}

/// Runs `cfg.run.threads` lanes on `data`. Lane `i` uses stream `i` of the
/// master seed, so a lane's path does not depend on how many lanes run.
pub fn run_dataset(data: Arc<Dataset>, cfg: &RunConfig, exec: Execution) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let sampler = cfg.sampler_config();
    let target = Arc::new(Target::new(data.clone(), cfg.run.gamma));
    let base = Arc::new(data.base_covariates());
    let iterations = cfg.run.iterations;
    let burn_in = cfg.burn_in_steps();
    let keep_logs = cfg.run.step_logs;

    let results = map_indexed(cfg.run.threads, exec, |lane| {
        catch_unwind(AssertUnwindSafe(|| {
            let rng = lane_rng(cfg.run.seed, lane as u64);
            let mut chain = Chain::new(target.clone(), base.clone(), sampler.clone(), None, rng)
                .map_err(|e| e.to_string())?;
            let mut log = Vec::new();
            chain.run(iterations, burn_in, |r| {
                if keep_logs {
                    log.push(r);
                }
            });
            Ok::<_, String>((
                LaneReport {
                    lane,
                    steps: chain.steps(),
                    accepted: chain.accepted(),
                    forward_evaluations: chain.forward_evaluations(),
                    backward_evaluations: chain.backward_evaluations(),
                    log,
                },
                chain.counter().clone(),
            ))
        }))
        .map_err(panic_message)
        .and_then(|r| r)
    });

    let mut lanes = Vec::new();
    let mut failures = Vec::new();
    let mut counter = FrequencyCounter::new();
    for (lane, r) in results.into_iter().enumerate() {
        match r {
            Ok((report, c)) => {
                counter.merge(&c);
                lanes.push(report);
            }
            Err(msg) => failures.push((lane, msg)),
        }
    }
    if lanes.is_empty() {
        return Err(RunError::AllLanesFailed);
    }
    let archive = target.archive().clone();
    let renorm = if cfg.run.estimator.renorm() {
        Some(estimate_renormalized(&archive.records())?)
    } else {
        None
    };
    let freq = if cfg.run.estimator.freq() {
        Some(estimate_frequency(&counter, sampler.kernel.is_reversible())?)
    } else {
        None
    };
    Ok(RunOutput {
        lanes,
        failures,
        archive,
        counter,
        renorm,
        freq,
        computations: target.computations(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Loads the configured dataset, runs, and writes every output file.
pub fn run(cfg: &RunConfig, exec: Execution) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| RunError::Config("no data path given".into()))?;
    let data = Arc::new(load_csv(path, &cfg.data.response, cfg.data.family)?);
    let out = run_dataset(data, cfg, exec)?;
    write_outputs(&cfg.run.out, cfg, &out)?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, RunError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// `models.csv`, `inclusions.csv`, `steps_lane<i>.jsonl`, `manifest.toml` and
/// `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_models(&dir.join("models.csv"), out)?;
    write_inclusions(&dir.join("inclusions.csv"), out)?;
    for lane in &out.lanes {
        if lane.log.is_empty() {
            continue;
        }
        let path = dir.join(format!("steps_lane{}.jsonl", lane.lane));
        let mut w = create(&path)?;
        for rec in &lane.log {
            writeln!(w, "{}", rec.to_json()).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let manifest = dir.join("manifest.toml");
    fs::write(&manifest, cfg.to_toml()?).map_err(io_err(&manifest))?;
    let summary = serde_json::json!({
        "degraded": out.degraded(),
        "failed_lanes": out.failures.iter().map(|(l, m)| serde_json::json!({"lane": l, "error": m})).collect::<Vec<_>>(),
        "lanes": out.lanes.iter().map(|l| serde_json::json!({
            "lane": l.lane,
            "steps": l.steps,
            "accepted": l.accepted,
            "forward_evaluations": l.forward_evaluations,
            "backward_evaluations": l.backward_evaluations,
        })).collect::<Vec<_>>(),
        "archive_models": out.archive.len(),
        "evidence_computations": out.computations,
        "seconds": sig12(out.seconds).parse::<f64>().unwrap_or(out.seconds),
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("json")).map_err(io_err(&path))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(sig12).unwrap_or_default()
}

/// Columns: `model,size,log_evidence,log_prior,renorm,freq`, sorted by
/// decreasing renormalized (else frequency) probability.
pub fn write_models(path: &Path, out: &RunOutput) -> Result<(), RunError> {
    let renorm = out.renorm.as_ref().map(|e| e.as_map());
    let freq = out.freq.as_ref().map(|e| e.as_map());
    let mut rows: Vec<_> = out
        .archive
        .records()
        .into_iter()
        .map(|r| {
            let pr = renorm.as_ref().map(|m| m.get(&r.id).copied().unwrap_or(0.0));
            let pf = freq.as_ref().map(|m| m.get(&r.id).copied().unwrap_or(0.0));
            (r, pr, pf)
        })
        .collect();
    rows.sort_by(|a, b| {
        let ka = a.1.or(a.2).unwrap_or(0.0);
        let kb = b.1.or(b.2).unwrap_or(0.0);
        kb.total_cmp(&ka).then_with(|| a.0.id.cmp(&b.0.id))
    });
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["model", "size", "log_evidence", "log_prior", "renorm", "freq"])?;
    for (r, pr, pf) in rows {
        w.write_record([
            r.id.to_string(),
            r.id.len().to_string(),
            sig12(r.log_evidence),
            sig12(r.log_prior),
            opt(pr),
            opt(pf),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Columns: `feature,renorm,freq`.
pub fn write_inclusions(path: &Path, out: &RunOutput) -> Result<(), RunError> {
    let mut keys: Vec<&String> = Vec::new();
    for e in [&out.renorm, &out.freq].into_iter().flatten() {
        keys.extend(e.inclusion.keys());
    }
    keys.sort();
    keys.dedup();
    let value = |e: &Option<PosteriorEstimate>, k: &str| {
        e.as_ref().map(|e| e.inclusion.get(k).copied().unwrap_or(0.0))
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["feature", "renorm", "freq"])?;
    for k in keys {
        w.write_record([k.clone(), opt(value(&out.renorm, k)), opt(value(&out.freq, k))])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads one column (`renorm` or `freq`) of an inclusion file.
pub fn read_inclusions(path: &Path, column: EstimatorSelection) -> Result<BTreeMap<String, f64>, RunError> {
    let name = match column {
        EstimatorSelection::Freq => "freq",
        _ => "renorm",
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    let fi = header
        .iter()
        .position(|h| h == "feature")
        .ok_or_else(|| RunError::Config(format!("{}: no `feature` column", path.display())))?;
    let ci = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| RunError::Config(format!("{}: no `{name}` column", path.display())))?;
    let mut out = BTreeMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(ci).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let v = parse_f64(cell).ok_or_else(|| {
            RunError::Config(format!("{}: row {}: bad probability `{cell}`", path.display(), row + 1))
        })?;
        out.insert(rec.get(fi).unwrap_or("").to_string(), v);
    }
    Ok(out)
}

/// Settings for a replicated synthetic study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub sigma: f64,
    pub replicates: usize,
    /// One metrics row per entry.
    pub threads: Vec<usize>,
    pub iterations: u64,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub threshold: f64,
    pub sampler: SamplerSection,
    pub operators: OperatorConfig,
    pub local: LocalKernelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_kind(ExperimentKind::Mass)
    }
}

impl ExperimentConfig {
    /// Desk-scale settings for each study.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let local = |local_steps, jump_prob| LocalKernelConfig {
            local_steps,
            jump_prob,
            ..LocalKernelConfig::default()
        };
        let base = ExperimentConfig {
            kind,
            n: 500,
            sigma: 0.05,
            replicates: 20,
            threads: vec![1, 4, 16],
            iterations: 40,
            seed: 2024,
            gamma: None,
            threshold: GroundTruth::DEFAULT_THRESHOLD,
            sampler: SamplerSection {
                pop_size: 8,
                max_model_size: 3,
                ..SamplerSection::default()
            },
            operators: OperatorConfig::default(),
            local: local(4, 0.35),
        };
        match kind {
            ExperimentKind::Mass => base,
            ExperimentKind::Kepler => ExperimentConfig {
                iterations: 400,
                local: local(8, 0.35),
                ..base
            },
            ExperimentKind::Logic => ExperimentConfig {
                n: 1000,
                sigma: 0.0,
                iterations: 200,
                sampler: SamplerSection {
                    pop_size: 15,
                    max_model_size: 8,
                    ..SamplerSection::default()
                },
                operators: OperatorConfig::logic(),
                local: local(4, 0.15),
                ..base
            },
        }
    }

    pub fn generate(&self, replicate: usize) -> (Dataset, GroundTruth) {
        let seed = self.seed.wrapping_add(replicate as u64);
        let (d, t) = match self.kind {
            ExperimentKind::Mass => gen_mass_data(self.n, self.sigma, seed),
            ExperimentKind::Kepler => gen_kepler_data(self.n, self.sigma, seed),
            ExperimentKind::Logic => gen_logic_data(self.n, seed),
        };
        (d, t.with_threshold(self.threshold))
    }

    /// Run configuration for one replicate at `threads` lanes.
    pub fn run_config(&self, threads: usize, replicate: usize) -> RunConfig {
        RunConfig {
            data: DataSection::default(),
            run: RunSection {
                iterations: self.iterations,
                burn_in: 0.0,
                threads,
                seed: self.seed.wrapping_mul(1_000_003).wrapping_add(replicate as u64),
                estimator: EstimatorSelection::Renorm,
                gamma: self.gamma,
                out: PathBuf::new(),
                step_logs: false,
            },
            sampler: self.sampler.clone(),
            operators: self.operators.clone(),
            local: self.local.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub metrics: Vec<RunMetrics>,
    /// `inclusion[t][r]`: inclusion probabilities at `threads[t]`, replicate `r`.
    pub inclusion: Vec<Vec<BTreeMap<String, f64>>>,
    pub truth: GroundTruth,
    pub degraded: bool,
}

/// Runs every replicate for every lane count. Replicate `r` uses the same
/// dataset and lane seeds at every lane count, so smaller runs are prefixes
/// of larger ones. `progress` sees the lane count, the replicate index and
/// the finished run.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    exec: Execution,
    mut progress: impl FnMut(usize, usize, &RunOutput),
) -> Result<ExperimentOutput, RunError> {
    if cfg.replicates == 0 || cfg.threads.is_empty() {
        return Err(RunError::Config("need at least one replicate and lane count".into()));
    }
    let datasets: Vec<(Arc<Dataset>, GroundTruth)> = (0..cfg.replicates)
        .map(|r| {
            let (d, t) = cfg.generate(r);
            (Arc::new(d), t)
        })
        .collect();
    let truth = datasets[0].1.clone();
    let mut degraded = false;
    let mut metrics = Vec::new();
    let mut inclusion = Vec::new();
    for &t in &cfg.threads {
        let mut per_rep = Vec::with_capacity(cfg.replicates);
        for (r, (data, _)) in datasets.iter().enumerate() {
            let out = run_dataset(data.clone(), &cfg.run_config(t, r), exec)?;
            degraded |= out.degraded();
            progress(t, r, &out);
            per_rep.push(out.inclusion());
        }
        metrics.push(compute_metrics(&per_rep, &truth, t));
        inclusion.push(per_rep);
    }
    Ok(ExperimentOutput {
        metrics,
        inclusion,
        truth,
        degraded,
    })
}

/// `metrics.csv`, `inclusions_T<t>_rep<r>.csv`, `data_rep<r>.csv` and
/// `experiment.toml` under `dir`.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("metrics.csv");
    RunMetrics::write_csv(&out.metrics, create(&path)?)?;
    for (ti, t) in cfg.threads.iter().enumerate() {
        for (r, inc) in out.inclusion[ti].iter().enumerate() {
            let path = dir.join(format!("inclusions_T{t}_rep{r}.csv"));
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["feature", "renorm", "freq"])?;
            for (k, v) in inc {
                w.write_record([k.as_str(), &sig12(*v), ""])?;
            }
            w.flush().map_err(io_err(&path))?;
        }
    }
    for r in 0..cfg.replicates {
        let (d, _) = cfg.generate(r);
        d.to_csv_file(dir.join(format!("data_rep{r}.csv")))?;
    }
    let path = dir.join("experiment.toml");
    fs::write(&path, toml::to_string(cfg)?).map_err(io_err(&path))?;
    let path = dir.join("truth.json");
    fs::write(&path, serde_json::to_string_pretty(&out.truth).expect("json")).map_err(io_err(&path))?;
    Ok(())
}
