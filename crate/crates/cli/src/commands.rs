use std::path::{Path, PathBuf};

use regime_lab::accuracy::{colouring_series, AccuracyReport};
use regime_lab::experiment::{
    cluster_returns, run_trials, sweep as run_sweep, validate_clustering, ClusterResult, ExperimentConfig, InputSource, ScoreSummary,
    SweepRow, TrialOutcome, ValidationReport,
};
use regime_lab::io::{fmt_float, read_json, read_price_csv, write_prices, write_table};
use regime_lab::measures::{log_returns, mean_variance_projection, measures_from_returns, PriceStream};
use regime_lab::synthetic::{PathMeta, RegimeSchedule};
use regime_lab::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every JSON output: the resolved configuration and the result.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config: ExperimentConfig,
    pub result: T,
}

/// Files produced by a command, written only once everything succeeded.
struct Outputs {
    dir: PathBuf,
    config: ExperimentConfig,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: PathBuf, config: &ExperimentConfig) -> Self {
        Self { dir, config: config.clone(), files: Vec::new() }
    }

    fn comment(&self) -> String {
        format!("config={}", serde_json::to_string(&self.config).expect("config serializes"))
    }

    fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Borrowed<'a, T> {
            config: &'a ExperimentConfig,
            result: &'a T,
        }
        let mut bytes = serde_json::to_vec_pretty(&Borrowed { config: &self.config, result })?;
        bytes.push(b'\n');
        self.files.push((self.dir.join(name), bytes));
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut bytes = Vec::new();
        write_table(&mut bytes, Some(&self.comment()), header, rows)?;
        self.files.push((self.dir.join(name), bytes));
        Ok(())
    }

    fn prices(&mut self, name: &str, prices: &PriceStream) -> Result<()> {
        let mut bytes = Vec::new();
        write_prices(&mut bytes, prices, Some(&self.comment()))?;
        self.files.push((self.dir.join(name), bytes));
        Ok(())
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::Io(format!("{}: {e}", self.dir.display())))?;
        self.files
            .into_iter()
            .map(|(path, bytes)| {
                std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Ok(path)
            })
            .collect()
    }
}

/// Loads and validates the configuration. The embedded copy drops the
/// output directory so that outputs do not depend on where they land.
fn resolve(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg: ExperimentConfig = read_json(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    cfg.output_dir = None;
    Ok((cfg, dir))
}

/// Prices of the configured input; synthetic inputs use run 0.
fn load_prices(cfg: &ExperimentConfig) -> Result<PriceStream> {
    match &cfg.input {
        InputSource::Csv { path } => read_price_csv(path),
        InputSource::Synthetic(spec) => Ok(spec.simulate(cfg.run_seed(0))?.prices),
    }
}

pub fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let (cfg, dir) = resolve(config, out, seed)?;
    let spec = cfg.synthetic().ok_or_else(|| Error::InvalidConfig("simulate needs a synthetic input".into()))?;
    let mut outputs = Outputs::new(dir, &cfg);
    for run in 0..cfg.runs {
        let record = spec.simulate(cfg.run_seed(run))?;
        let suffix = if cfg.runs == 1 { String::new() } else { format!("-{run}") };
        outputs.prices(&format!("prices{suffix}.csv"), &record.prices)?;
        outputs.json(&format!("schedule{suffix}.json"), &record.meta)?;
    }
    outputs.commit()
}

fn load_or_cluster(cfg: &ExperimentConfig, prices: &PriceStream) -> Result<ClusterResult> {
    let returns = log_returns(prices);
    let result = match &cfg.clustering {
        Some(path) => read_json::<Envelope<ClusterResult>>(path)?.result,
        None => cluster_returns(&returns, cfg, cfg.run_seed(0))?,
    };
    if result.n_returns != returns.len() {
        return Err(Error::LengthMismatch(result.n_returns, returns.len()));
    }
    Ok(result)
}

pub fn cluster(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let (cfg, dir) = resolve(config, out, seed)?;
    let prices = load_prices(&cfg)?;
    let returns = log_returns(&prices);
    let result = cluster_returns(&returns, &cfg, cfg.run_seed(0))?;
    let (_, measures) = measures_from_returns(&returns, cfg.window)?;

    let scatter = result
        .windows
        .iter()
        .zip(&measures)
        .zip(&result.labels)
        .enumerate()
        .map(|(i, ((w, m), label))| {
            let (sd, mean) = mean_variance_projection(m);
            vec![
                i.to_string(),
                w.start.to_string(),
                w.end.to_string(),
                fmt_float(sd),
                fmt_float(mean),
                fmt_float(m.variance()),
                label.to_string(),
            ]
        })
        .collect();

    let mut colouring_header = vec!["index".to_string(), "timestamp".to_string()];
    colouring_header.extend((0..result.k).map(|l| format!("cluster_{l}")));
    let colouring = colouring_series(&result.memberships()?)
        .into_iter()
        .enumerate()
        .map(|(i, fractions)| {
            let mut row = vec![i.to_string(), prices.timestamps()[i + 1].to_string()];
            match fractions {
                Some(f) => row.extend(f.into_iter().map(fmt_float)),
                None => row.extend((0..result.k).map(|_| String::new())),
            }
            row
        })
        .collect();

    let mut outputs = Outputs::new(dir, &cfg);
    outputs.json("clustering.json", &result)?;
    outputs.table("scatter.csv", &["window", "start", "end", "sd", "mean", "variance", "cluster"], scatter)?;
    let header: Vec<&str> = colouring_header.iter().map(String::as_str).collect();
    outputs.table("colouring.csv", &header, colouring)?;
    outputs.commit()
}

pub fn validate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let (cfg, dir) = resolve(config, out, seed)?;
    let prices = load_prices(&cfg)?;
    let result = load_or_cluster(&cfg, &prices)?;
    let report: ValidationReport = validate_clustering(&log_returns(&prices), &result, &cfg, cfg.run_seed(0))?;

    let mut rows = Vec::new();
    for (l, score) in report.within.iter().enumerate() {
        for (draw, v) in score.iter().flat_map(|s| s.values.iter().enumerate()) {
            rows.push(vec!["within".into(), l.to_string(), l.to_string(), draw.to_string(), fmt_float(*v)]);
        }
    }
    for ((a, b), score) in &report.between {
        for (draw, v) in score.values.iter().enumerate() {
            rows.push(vec!["between".into(), a.to_string(), b.to_string(), draw.to_string(), fmt_float(*v)]);
        }
    }
    let mut outputs = Outputs::new(dir, &cfg);
    outputs.json("validation.json", &report)?;
    outputs.table("mmd.csv", &["kind", "cluster_a", "cluster_b", "draw", "mmd2"], rows)?;
    outputs.commit()
}

/// Schedule files are either a simulation sidecar or a bare schedule.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleFile {
    Simulated(Box<Envelope<PathMeta>>),
    Bare(RegimeSchedule),
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum ScoreResult {
    Single { report: AccuracyReport, point_report: Option<AccuracyReport> },
    Runs { summary: ScoreSummary, point_summary: Option<ScoreSummary>, trials: Vec<TrialOutcome> },
}

pub fn score(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let (cfg, dir) = resolve(config, out, seed)?;
    let result = if cfg.clustering.is_some() || matches!(cfg.input, InputSource::Csv { .. }) {
        let schedule = match (&cfg.schedule, &cfg.input) {
            (Some(path), _) => match read_json::<ScheduleFile>(path)? {
                ScheduleFile::Simulated(env) => env.result.schedule,
                ScheduleFile::Bare(s) => s,
            },
            (None, InputSource::Synthetic(spec)) => spec.simulate(cfg.run_seed(0))?.meta.schedule,
            (None, InputSource::Csv { .. }) => return Err(Error::InvalidConfig("scoring a CSV input needs a schedule file".into())),
        };
        let prices = load_prices(&cfg)?;
        let clustering = load_or_cluster(&cfg, &prices)?;
        let (report, point_report) = clustering.score(&schedule)?;
        ScoreResult::Single { report, point_report }
    } else {
        let trials = run_trials(&cfg)?;
        let point: Vec<&AccuracyReport> = trials.iter().filter_map(|t| t.point_report.as_ref()).collect();
        ScoreResult::Runs {
            summary: ScoreSummary::of(trials.iter().map(|t| &t.report)),
            point_summary: (!point.is_empty()).then(|| ScoreSummary::of(point.iter().copied())),
            trials,
        }
    };
    let mut outputs = Outputs::new(dir, &cfg);
    outputs.json("accuracy.json", &result)?;
    outputs.commit()
}

pub fn sweep(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let (cfg, dir) = resolve(config, out, seed)?;
    let rows: Vec<SweepRow> = run_sweep(&cfg)?;
    let cell = |s: Option<regime_lab::experiment::Summary>| match s {
        Some(s) => [fmt_float(s.mean), fmt_float(s.ci95)],
        None => [String::new(), String::new()],
    };
    let table = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.h1.to_string(), r.h2.to_string(), r.trials.len().to_string()];
            for s in [r.scores.ta, r.scores.rons, r.scores.rofs] {
                row.extend(cell(s));
            }
            row
        })
        .collect();
    let mut outputs = Outputs::new(dir, &cfg);
    outputs.table("sweep.csv", &["h1", "h2", "runs", "ta_mean", "ta_ci95", "rons_mean", "rons_ci95", "rofs_mean", "rofs_ci95"], table)?;
    outputs.json("sweep.json", &rows)?;
    outputs.commit()
}
