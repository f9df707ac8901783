//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 on usage errors, 2 on
//! data errors.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::augment::{augment_scenario, subsample_ids, AugmentConfig, AugmentKind};
use crate::baselines::{predict, PredictorKind, SocialParams, SPEED_MULTIPLIERS};
use crate::error::{Error, Result};
use crate::labels::{load_labels, resolve_causal, AgreementHistogram, CausalLabelFile};
use crate::metrics::MetricConfig;
use crate::perturb::{apply, Covariates, PerturbationKind};
use crate::report::{
    joint_evaluate, read_records_csv, slice, summarize, write_agreement_csv, write_records_csv,
    write_slices_csv, write_stats_csv, write_summary_csv, CausalStatsAccumulator, Evaluation,
    SliceDimension, SliceSpec,
};
use crate::scenario::{open_scenarios, write_prediction, write_scenario, PredictionSet, Scenario};
use crate::synthgen::{generate_corpus, ParamsDistribution};

pub const WORKERS_ENV: &str = "CAUSAL_PERTURB_WORKERS";
/// Scenarios processed per parallel batch; bounds memory while streaming.
const CHUNK: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "causal-perturb", version, about = "Causal-agent perturbation and robustness evaluation for motion forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Delete agents from every scenario according to a perturbation kind.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        kind: PerturbationKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        covariates_out: Option<PathBuf>,
    },
    /// Compare original and perturbed predictions against the AV ground truth.
    Evaluate {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        predictions_original: PathBuf,
        #[arg(long)]
        predictions_perturbed: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        out_records: PathBuf,
        #[arg(long)]
        out_summary: PathBuf,
    },
    /// Causal-agent frequency, distance and type statistics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice per-example records along one covariate.
    Slice {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        dimension: SliceDimension,
        /// Comma-separated, strictly increasing bin edges.
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomly drop agents for training-time augmentation.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        kind: AugmentKind,
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        #[arg(long, default_value_t = 0.1)]
        static_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in baseline predictor.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: PredictorKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "original")]
        variant: String,
    },
    /// Generate a synthetic corpus with ground-truth causal labels.
    GenSynthetic {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_prefix: PathBuf,
        /// Also draw scenes with a stationary (static and causal) lead vehicle.
        #[arg(long)]
        include_stationary_lead: bool,
    },
    /// Histogram of how many labelers selected each causal agent.
    Agreement {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniformly subsample a corpus.
    Subsample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

macro_rules! parse_via_fromstr {
    ($($t:ty),*) => {$(
        impl clap::ValueEnum for $t {
            fn value_variants<'a>() -> &'a [Self] {
                &<$t>::ALL
            }

            fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
                Some(clap::builder::PossibleValue::new(self.as_str()))
            }
        }
    )*};
}

parse_via_fromstr!(PerturbationKind, AugmentKind, PredictorKind);

impl clap::ValueEnum for SliceDimension {
    fn value_variants<'a>() -> &'a [Self] {
        &SliceDimension::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        let name = self.as_str();
        let alias: &'static str = match self {
            SliceDimension::AvSpeed => "av-speed",
            SliceDimension::RemovedFraction => "removed-fraction",
            SliceDimension::MinRemovedDistance => "min-removed-distance",
        };
        Some(clap::builder::PossibleValue::new(name).alias(alias))
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let pool = match worker_pool() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn worker_pool() -> std::result::Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Maps `f` over the stream in parallel batches, feeding results to `sink` in
/// input order.
fn for_each_ordered<T, U, F, S>(input: impl Iterator<Item = Result<T>>, f: F, mut sink: S) -> Result<()>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U> + Sync,
    S: FnMut(U) -> Result<()>,
{
    let mut input = input.peekable();
    while input.peek().is_some() {
        let batch = input.by_ref().take(CHUNK).collect::<Result<Vec<T>>>()?;
        let outs: Vec<Result<U>> = batch.into_par_iter().map(&f).collect();
        for out in outs {
            sink(out?)?;
        }
    }
    Ok(())
}

fn load_keyed_predictions(path: &Path) -> Result<HashMap<String, PredictionSet>> {
    let mut map = HashMap::new();
    for set in crate::scenario::load_predictions(path, None)? {
        let id = set.scenario_id.clone();
        if map.insert(id.clone(), set).is_some() {
            return Err(Error::invalid(
                &id,
                format!("{} holds more than one variant for this scenario", path.display()),
            ));
        }
    }
    Ok(map)
}

fn load_covariates(path: &Path) -> Result<HashMap<String, Covariates>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cov: Covariates = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        map.insert(cov.scenario_id.clone(), cov);
    }
    Ok(map)
}

fn execute(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Perturb {
            input,
            labels,
            kind,
            seed,
            out,
            covariates_out,
        } => {
            if kind.needs_labels() && labels.is_none() {
                return Err(Failure::Usage(format!("--kind {kind} requires --labels")));
            }
            let labels = labels.map(load_labels).transpose()?;
            let mut scen_out = create(&out)?;
            let mut cov_out = covariates_out.as_deref().map(create).transpose()?;
            let mut skipped = 0usize;
            for_each_ordered(
                open_scenarios(&input)?,
                |s: Scenario| {
                    let causal = labels.as_ref().and_then(|l| resolve_causal(l, &s).ok());
                    match apply(kind, &s, causal.as_ref(), seed) {
                        Ok(outcome) => Ok(Some(outcome)),
                        Err(Error::UnlabeledScenario(_)) => Ok(None),
                        Err(e) => Err(e),
                    }
                },
                |outcome| {
                    let Some(outcome) = outcome else {
                        skipped += 1;
                        return Ok(());
                    };
                    write_scenario(&mut scen_out, &outcome.perturbed).map_err(|e| Error::io(&out, e))?;
                    if let (Some(w), Some(p)) = (cov_out.as_mut(), covariates_out.as_deref()) {
                        serde_json::to_writer(&mut *w, &outcome.covariates).map_err(|e| Error::io(p, e.into()))?;
                        w.write_all(b"\n").map_err(|e| Error::io(p, e))?;
                    }
                    Ok(())
                },
            )?;
            if skipped > 0 {
                eprintln!("skipped {skipped} unlabeled scenario(s)");
            }
            flush(scen_out, &out)?;
            if let (Some(w), Some(p)) = (cov_out, covariates_out.as_deref()) {
                flush(w, p)?;
            }
        }
        Command::Evaluate {
            scenarios,
            predictions_original,
            predictions_perturbed,
            covariates,
            out_records,
            out_summary,
        } => {
            let original = load_keyed_predictions(&predictions_original)?;
            let perturbed = load_keyed_predictions(&predictions_perturbed)?;
            let covariates = load_covariates(&covariates)?;
            let cfg = MetricConfig::default();
            let mut all = Evaluation::default();
            let mut reader = open_scenarios(&scenarios)?.peekable();
            while reader.peek().is_some() {
                let batch = reader.by_ref().take(CHUNK).collect::<Result<Vec<_>>>()?;
                let ev = joint_evaluate(&batch, &original, &perturbed, &covariates, &cfg);
                all.records.extend(ev.records);
                all.skipped.extend(ev.skipped);
            }
            if !all.skipped.is_empty() {
                eprintln!("skipped {} scenario(s):", all.skipped.len());
                for s in &all.skipped {
                    eprintln!("  {}: {}", s.scenario_id, s.reason);
                }
            }
            write_records_csv(&out_records, &all.records)?;
            write_summary_csv(&out_summary, &summarize(&all.records)?)?;
        }
        Command::Stats { input, labels, out } => {
            let labels = load_labels(labels)?;
            let mut acc = CausalStatsAccumulator::default();
            for s in open_scenarios(&input)? {
                let s = s?;
                if let Ok(set) = resolve_causal(&labels, &s) {
                    acc.add(&s, &set);
                }
            }
            write_stats_csv(&out, &acc.finish()?)?;
        }
        Command::Slice {
            records,
            dimension,
            edges,
            out,
        } => {
            let spec = match edges {
                Some(e) => SliceSpec::new(dimension, e).map_err(|e| Failure::Usage(e.to_string()))?,
                None => SliceSpec::with_default_edges(dimension),
            };
            let records = read_records_csv(&records)?;
            write_slices_csv(&out, &slice(&records, &spec)?)?;
        }
        Command::Augment {
            input,
            labels,
            kind,
            p,
            static_threshold,
            seed,
            out,
        } => {
            let cfg = AugmentConfig {
                kind,
                drop_probability: p,
                static_threshold,
                seed,
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let labels: Option<CausalLabelFile> = labels.map(load_labels).transpose()?;
            let mut w = create(&out)?;
            for_each_ordered(
                open_scenarios(&input)?,
                |s: Scenario| {
                    let causal = labels.as_ref().and_then(|l| resolve_causal(l, &s).ok());
                    augment_scenario(&s, causal.as_ref(), &cfg)
                },
                |s| write_scenario(&mut w, &s).map_err(|e| Error::io(&out, e)),
            )?;
            flush(w, &out)?;
        }
        Command::Predict {
            input,
            kind,
            out,
            variant,
        } => {
            let mut w = create(&out)?;
            for_each_ordered(
                open_scenarios(&input)?,
                |s: Scenario| {
                    let mut set = predict(kind, &s, SPEED_MULTIPLIERS.len(), &SocialParams::default())?;
                    set.variant = variant.clone();
                    Ok(set)
                },
                |set| write_prediction(&mut w, &set).map_err(|e| Error::io(&out, e)),
            )?;
            flush(w, &out)?;
        }
        Command::GenSynthetic {
            n,
            seed,
            out_prefix,
            include_stationary_lead,
        } => {
            if n == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            let dist = ParamsDistribution::Mixture {
                include_stationary_lead,
            };
            let paths = generate_corpus(n, &dist, seed)?.write(&out_prefix)?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Agreement {
            labels,
            scenarios,
            out,
        } => {
            let labels = load_labels(labels)?;
            let mut hist = AgreementHistogram::default();
            for s in open_scenarios(&scenarios)? {
                if let Ok(set) = resolve_causal(&labels, &s?) {
                    hist.add(&set);
                }
            }
            if let Some(f) = hist.fraction_single() {
                eprintln!("selected by exactly one labeler: {:.1}%", 100.0 * f);
            }
            write_agreement_csv(&out, &hist)?;
        }
        Command::Subsample {
            input,
            fraction,
            seed,
            replicate,
            out,
        } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Failure::Usage(format!("--fraction {fraction} outside (0, 1]")));
            }
            let ids = open_scenarios(&input)?
                .map(|s| s.map(|s| s.scenario_id))
                .collect::<Result<Vec<_>>>()?;
            let keep = subsample_ids(ids.iter().map(String::as_str), fraction, seed, replicate)?;
            let mut w = create(&out)?;
            for s in open_scenarios(&input)? {
                let s = s?;
                if keep.contains(&s.scenario_id) {
                    write_scenario(&mut w, &s).map_err(|e| Error::io(&out, e))?;
                }
            }
            flush(w, &out)?;
        }
    }
    Ok(())
}
