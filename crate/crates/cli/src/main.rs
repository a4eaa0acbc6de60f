use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kernel_analysis::dataset::{
    align, load_feature_matrix, load_labels, save_feature_matrix, save_labels, DatasetManifest, FeatureFormat,
    ManifestEntry, Variation,
};
use kernel_analysis::extrapolation::{fit_saturation, subsample_sites_auc, FitWeighting, SamplingCurve, SaturationFit};
use kernel_analysis::kernel::{curve_csv, evaluate, normalize_quantiles, CurveSummary, KaOptions, LabelEncoding};
use kernel_analysis::neural::{build_neural_features, load_repetition_table, PreprocConfig, ZeroVariancePolicy};
use kernel_analysis::protocol::{compare, envelope_csv, run_protocol_levels, ComparisonReport, ProtocolReport};
use kernel_analysis::search::{
    random_search_to_file, select_top, transfer_correlation, ClusterFamily, ParamSpace, SearchRecord,
};
use kernel_analysis::synth::{generate, SynthKind, SynthSpec};
use kernel_analysis::VERSION;

mod plot;

/// Kernel analysis of feature spaces: accuracy as a function of kernel-PCA
/// subspace complexity, and the tooling around it.
#[derive(Parser)]
#[command(name = "ka", version, about)]
struct Cli {
    /// Seed for every random draw; all sub-streams derive from it.
    #[arg(long, global = true, env = "KA_SEED", default_value_t = 0)]
    seed: u64,

    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KaArgs {
    /// Bandwidth candidates as quantiles of the pairwise distances.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 0.9])]
    quantiles: Vec<f64>,

    /// Label encoding: standardized, signed or binary.
    #[arg(long, default_value = "standardized")]
    encoding: LabelEncoding,

    /// Decompose the double-centred kernel.
    #[arg(long)]
    centered: bool,
}

impl KaArgs {
    fn options(&self) -> Result<KaOptions, Failure> {
        Ok(KaOptions {
            quantiles: normalize_quantiles(&self.quantiles)?,
            encoding: self.encoding,
            centered: self.centered,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the accuracy-complexity curve and KA-AUC of one feature set.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Feature file format; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<FeatureFormat>,
        /// Output directory for curve.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ka: KaArgs,
    },
    /// Run the subset protocol on every level of a dataset manifest.
    Protocol {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        subsets: usize,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        /// Report JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-level envelope CSVs usable by `plot`.
        #[arg(long)]
        envelopes: Option<PathBuf>,
        #[command(flatten)]
        ka: KaArgs,
    },
    /// Paired permutation test between two protocol reports at one level.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        level: Variation,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalize repetition-level spike counts into a feature matrix.
    Neural {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long, default_value = "unspecified")]
        variation: Variation,
        /// Repetition sets per block at low variation.
        #[arg(long, default_value_t = 3)]
        low_split: usize,
        /// Zero-variance policy: error, epsilon or drop_site.
        #[arg(long, default_value = "error")]
        zero_variance: ZeroVariancePolicy,
        /// Output directory for features.csv and neural.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// KA-AUC against the number of feature columns, with a saturation fit.
    Extrapolate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        format: Option<FeatureFormat>,
        /// Column counts to sample, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Weight fit residuals by 1/std of each point.
        #[arg(long)]
        weighted: bool,
        /// Output directory for sampling.csv and extrapolation.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ka: KaArgs,
    },
    /// Generate a synthetic representation with a known answer.
    Synth {
        /// onehot, clusters or noise.
        #[arg(long)]
        kind: SynthKind,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n_per_class: usize,
        /// Feature dimension (defaults to k for onehot, 32 otherwise).
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value = "unspecified")]
        variation: Variation,
        #[arg(long, default_value = "csv")]
        format: FeatureFormat,
        /// Output directory for features, labels.csv, manifest.json and synth.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Random search over the built-in synthetic model family.
    Search {
        /// Parameter space JSON.
        #[arg(long)]
        space: PathBuf,
        /// Number of draws.
        #[arg(long)]
        n: usize,
        /// JSON-lines record file.
        #[arg(long)]
        out: PathBuf,
        /// Keep completed draws already in the record file.
        #[arg(long)]
        resume: bool,
        /// Optional JSON overriding the model family settings.
        #[arg(long)]
        family: Option<PathBuf>,
        /// Write the transfer summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        ka: KaArgs,
    },
    /// Render curve or envelope CSVs as an SVG accuracy-complexity plot.
    Plot {
        /// Files written by `eval` (curve.csv) or `protocol --envelopes`.
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Input problems exit with 2, internal failures with 1.
enum Failure {
    Input(String),
    Internal(String),
}

impl From<kernel_analysis::Error> for Failure {
    fn from(e: kernel_analysis::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text
}

fn format_for(path: &Path, explicit: Option<FeatureFormat>) -> FeatureFormat {
    explicit.unwrap_or_else(|| FeatureFormat::from_path(path))
}

#[derive(Serialize)]
struct ComparisonOutput<'a> {
    version: &'a str,
    a: &'a Path,
    b: &'a Path,
    #[serde(flatten)]
    report: ComparisonReport,
}

#[derive(Serialize)]
struct NeuralOutput<'a> {
    version: &'a str,
    seed: u64,
    config: &'a PreprocConfig,
    window_ms: (f64, f64),
    n_images: usize,
    sites: &'a [String],
    dropped_sites: &'a [String],
}

#[derive(Serialize)]
struct ExtrapolationOutput<'a> {
    version: &'a str,
    seed: u64,
    quantiles: &'a [f64],
    encoding: LabelEncoding,
    centered: bool,
    grid: &'a [usize],
    repeats: usize,
    sampling: &'a SamplingCurve,
    fit: &'a SaturationFit,
}

#[derive(Serialize)]
struct SynthOutput<'a> {
    version: &'a str,
    spec: &'a SynthSpec,
    features: &'a Path,
    labels: &'a Path,
}

#[derive(Serialize)]
struct SearchSummary<'a> {
    version: &'a str,
    seed: u64,
    n_draws: usize,
    ok: usize,
    failed: usize,
    quantiles: &'a [f64],
    encoding: LabelEncoding,
    family: &'a ClusterFamily,
    space: &'a ParamSpace,
    transfer: Vec<(Variation, Option<f64>)>,
    top: Option<&'a SearchRecord>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Eval {
            features,
            labels,
            format,
            out,
            ka,
        } => {
            let options = ka.options()?;
            let fs = load_feature_matrix(&features, format_for(&features, format))?;
            let lf = load_labels(&labels)?;
            let dataset = align(&fs, &lf)?;
            let result = evaluate(&dataset, &options)?;
            create_dir(&out)?;
            write_file(&out.join("curve.csv"), curve_csv(&result.curve))?;
            let summary = CurveSummary::new(&result.curve, dataset.n_classes(), &options, Some(seed));
            write_file(&out.join("summary.json"), to_json(&summary))?;
            println!("KA-AUC {:.6} (n = {}, k = {})", result.auc, dataset.n_images(), dataset.n_classes());
        }
        Command::Protocol {
            manifest,
            subsets,
            fraction,
            out,
            envelopes,
            ka,
        } => {
            let options = ka.options()?;
            let manifest = DatasetManifest::load(&manifest)?;
            let levels = manifest.load_levels()?;
            let report = run_protocol_levels(&levels, subsets, fraction, seed, &options)?;
            write_file(&out, report.to_json())?;
            if let Some(dir) = envelopes {
                create_dir(&dir)?;
                for level in &report.levels {
                    write_file(&dir.join(format!("envelope_{}.csv", level.level)), envelope_csv(&level.envelope))?;
                }
            }
            for level in &report.levels {
                println!("{:<12} KA-AUC {:.4} +/- {:.4}", level.level.to_string(), level.auc_mean, level.auc_std);
            }
        }
        Command::Compare { a, b, level, out } => {
            let read = |p: &Path| -> Result<ProtocolReport, Failure> {
                let text = fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
                ProtocolReport::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))
            };
            let (ra, rb) = (read(&a)?, read(&b)?);
            let report = compare(&ra, &rb, level, seed)?;
            let text = to_json(&ComparisonOutput {
                version: VERSION,
                a: &a,
                b: &b,
                report,
            });
            match out {
                Some(path) => write_file(&path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Neural {
            spikes,
            variation,
            low_split,
            zero_variance,
            out,
        } => {
            let table = load_repetition_table(&spikes)?;
            let config = PreprocConfig {
                variation,
                low_split,
                zero_variance,
            };
            let built = build_neural_features(&table, &config)?;
            create_dir(&out)?;
            save_feature_matrix(&built.features, &out.join("features.csv"), FeatureFormat::Csv)?;
            let window = table.window();
            let meta = NeuralOutput {
                version: VERSION,
                seed,
                config: &config,
                window_ms: (window.onset_ms, window.offset_ms),
                n_images: built.features.n_images(),
                sites: &built.sites,
                dropped_sites: &built.dropped_sites,
            };
            write_file(&out.join("neural.json"), to_json(&meta))?;
            println!(
                "{} images x {} sites ({} dropped)",
                built.features.n_images(),
                built.sites.len(),
                built.dropped_sites.len()
            );
        }
        Command::Extrapolate {
            features,
            labels,
            format,
            grid,
            repeats,
            weighted,
            out,
            ka,
        } => {
            let options = ka.options()?;
            let fs = load_feature_matrix(&features, format_for(&features, format))?;
            let dataset = align(&fs, &load_labels(&labels)?)?;
            let sampling = subsample_sites_auc(&dataset, &grid, repeats, seed, &options)?;
            let weighting = if weighted {
                FitWeighting::InverseStd
            } else {
                FitWeighting::Unweighted
            };
            let fit = fit_saturation(&sampling, weighting)?;
            create_dir(&out)?;
            write_file(&out.join("sampling.csv"), sampling.to_csv())?;
            let meta = ExtrapolationOutput {
                version: VERSION,
                seed,
                quantiles: &options.quantiles,
                encoding: options.encoding,
                centered: options.centered,
                grid: &grid,
                repeats,
                sampling: &sampling,
                fit: &fit,
            };
            write_file(&out.join("extrapolation.json"), to_json(&meta))?;
            println!(
                "asymptote a = {:.4} (b = {:.4}, c = {:.4}, d = {:.4}, converged: {})",
                fit.a, fit.b, fit.c, fit.d_exp, fit.converged
            );
        }
        Command::Synth {
            kind,
            k,
            n_per_class,
            p,
            noise,
            separation,
            variation,
            format,
            out,
        } => {
            let mut spec = match kind {
                SynthKind::Onehot => SynthSpec::onehot(k, n_per_class, seed),
                SynthKind::Clusters => SynthSpec::clusters(k, n_per_class, 32, noise, separation, seed),
                SynthKind::Noise => SynthSpec::noise(k, n_per_class, 32, seed),
            };
            if kind == SynthKind::Onehot {
                spec.separation = separation;
            }
            if let Some(p) = p {
                spec.p = p;
            }
            spec.variation = variation;
            let (fs, lf) = generate(&spec)?;
            create_dir(&out)?;
            let features = PathBuf::from(match format {
                FeatureFormat::Csv => "features.csv",
                FeatureFormat::Binary => "features.f64",
            });
            let labels = PathBuf::from("labels.csv");
            save_feature_matrix(&fs, &out.join(&features), format)?;
            save_labels(&lf, &out.join(&labels))?;
            let manifest = DatasetManifest {
                name: format!("synthetic-{kind}"),
                labels: labels.clone(),
                seed: Some(seed),
                entries: vec![ManifestEntry {
                    variation,
                    path: features.clone(),
                    format,
                }],
            };
            manifest.save(&out.join("manifest.json"))?;
            let meta = SynthOutput {
                version: VERSION,
                spec: &spec,
                features: &features,
                labels: &labels,
            };
            write_file(&out.join("synth.json"), to_json(&meta))?;
            println!("{} images x {} features, {} classes", fs.n_images(), fs.n_features(), k);
        }
        Command::Search {
            space,
            n,
            out,
            resume,
            family,
            summary,
            ka,
        } => {
            let options = ka.options()?;
            let space = ParamSpace::load(&space)?;
            let family: ClusterFamily = match family {
                Some(path) => {
                    let text =
                        fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
                }
                None => ClusterFamily::default(),
            };
            let records = random_search_to_file(&space, &family, n, seed, &options, &out, resume)?;
            let ok = records.iter().filter(|r| r.is_ok()).count();
            let transfer = family
                .levels
                .iter()
                .map(|&(level, _)| (level, transfer_correlation(&records, level).ok()))
                .collect();
            let report = SearchSummary {
                version: VERSION,
                seed,
                n_draws: n,
                ok,
                failed: records.len() - ok,
                quantiles: &options.quantiles,
                encoding: options.encoding,
                family: &family,
                space: &space,
                transfer,
                top: select_top(&records).ok(),
            };
            let text = to_json(&report);
            match summary {
                Some(path) => write_file(&path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Plot { curves, out, title } => {
            if curves.is_empty() {
                return Err(Failure::Input("plot needs at least one curve file".into()));
            }
            let series = curves
                .iter()
                .map(|p| plot::read_series(p))
                .collect::<Result<Vec<_>, String>>()
                .map_err(Failure::Input)?;
            write_file(&out, plot::render_svg(&series, title.as_deref()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
