//! `cim`: exact spectra, Monte Carlo runs and flip traces of a coherent
//! Ising machine from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cim_core::config::{parse_document, parse_run_config, preset, InstanceRef, RunConfig, PRESET_NAMES};
use cim_core::harness::{run_experiment, ExperimentReport, ModelSpec};
use cim_core::ising::{
    brute_force_spectrum, make_named_instance, parse_instance, IsingInstance, SpectrumSummary, NAMED_INSTANCES,
};
use cim_core::multimode::{flip_events, FlipEvent, MultimodeModel};
use cim_core::trial::Recording;
use cim_core::CimError;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "cim", version, about = "Coherent Ising machine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustive spectrum of an instance (name or JSON file).
    Solve {
        #[arg(value_name = "INSTANCE", required_unless_present = "instance")]
        target: Option<String>,
        #[arg(long)]
        instance: Option<String>,
        /// Also write `<name>.spectrum.json` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo experiment: report JSON, curve CSV and histogram CSV per instance.
    Run(RunArgs),
    /// One recorded multimode trial: mode-coefficient CSV and flip events.
    Fliptrace(RunArgs),
    /// Named instances and presets.
    List,
    /// Re-parse a file written by this tool (or a config or instance document).
    Validate { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Replace the configured instances (repeatable).
    #[arg(long)]
    instance: Vec<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum Failure {
    Config(String),
    Numeric(String),
    Other(String),
}

impl From<CimError> for Failure {
    fn from(e: CimError) -> Self {
        match e {
            CimError::Io(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            target,
            instance,
            out_dir,
        } => solve(target.or(instance).as_deref().unwrap_or_default(), out_dir.as_deref()),
        Command::Run(args) => run(&args),
        Command::Fliptrace(args) => fliptrace(&args),
        Command::List => {
            print!("{}", listing());
            Ok(())
        }
        Command::Validate { file } => validate(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn listing() -> String {
    let mut out = String::from("instances:\n");
    for name in NAMED_INSTANCES {
        out.push_str(&format!("  {name}\n"));
    }
    out.push_str("presets:\n");
    for name in PRESET_NAMES {
        out.push_str(&format!("  {name}\n"));
    }
    out
}

/// A named instance, or else a path to an instance document.
fn load_instance(arg: &str) -> Result<IsingInstance, Failure> {
    if NAMED_INSTANCES.contains(&arg) {
        return Ok(make_named_instance(arg)?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(make_named_instance(arg).unwrap_err().into());
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    Ok(parse_instance(&text)?)
}

fn solve(arg: &str, out_dir: Option<&Path>) -> Result<(), Failure> {
    let instance = load_instance(arg)?;
    let spectrum = brute_force_spectrum(&instance)?;
    let census = spectrum.local_minima_census();
    println!("instance: {} (n = {}, {} edges)", instance.name(), instance.n(), instance.edges().len());
    println!("ground energy: {}", spectrum.ground_energy);
    println!("degeneracy: {}", spectrum.degeneracy());
    if let Some(e) = spectrum.first_excited_energy() {
        println!("first excited energy: {e}");
    }
    for (convention, count) in census.conventions() {
        println!("local minima ({convention}): {count}");
    }
    if let Some(dir) = out_dir {
        let json = serde_json::to_string_pretty(&spectrum).map_err(CimError::from)?;
        write_all(dir, vec![(format!("{}.spectrum.json", instance.name()), json)])?;
    }
    Ok(())
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            parse_run_config(&text)?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Failure::Config("either --config or --preset is required".into())),
    };
    if !args.instance.is_empty() {
        config.instances = args
            .instance
            .iter()
            .map(|arg| {
                if NAMED_INSTANCES.contains(&arg.as_str()) {
                    Ok(InstanceRef::Named(arg.clone()))
                } else {
                    load_instance(arg).map(InstanceRef::Inline)
                }
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
        if let Some(f) = &mut config.fliptrace {
            f.seed = s;
        }
    }
    if args.parallel.is_some() {
        config.parallelism = args.parallel;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let mut files = Vec::new();
    let mut numeric = Vec::new();
    for spec in config.experiments()? {
        let report = run_experiment(&spec, config.parallelism)?;
        let name = spec.instance.name().to_string();
        println!(
            "{name}: success {}/{} = {:.3} (95% CI {:.4}..{:.4}), failed-numeric {}",
            report.successes, report.trials, report.success_rate, report.ci95.0, report.ci95.1, report.failed_numeric
        );
        if report.failed_numeric_fraction() > config.max_failed_fraction {
            numeric.push(format!(
                "{name}: failed-numeric fraction {:.4} exceeds {}",
                report.failed_numeric_fraction(),
                config.max_failed_fraction
            ));
        }
        let mut stamped = report.clone();
        stamped.provenance.created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        files.push((
            format!("{name}.report.json"),
            serde_json::to_string_pretty(&stamped).map_err(CimError::from)?,
        ));
        files.push((format!("{name}.curve.csv"), report.curve_csv()));
        files.push((format!("{name}.histogram.csv"), report.histogram_csv()));
    }
    write_all(&args.out_dir, files)?;
    if numeric.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(numeric.join("; ")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlipReport {
    instance: String,
    seed: u64,
    intensity_floor: f64,
    events: Vec<FlipEvent>,
    /// Events whose window-minimum total intensity stays above the floor
    /// while the higher modes rise above their earlier mean.
    supported_events: usize,
}

fn fliptrace(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let Some(trace) = config.fliptrace.clone() else {
        return Err(Failure::Config("config has no `fliptrace` section".into()));
    };
    let mut files = Vec::new();
    for spec in config.experiments()? {
        let ModelSpec::Multimode(params) = &spec.model else {
            return Err(Failure::Config("flip traces need the multimode model".into()));
        };
        let model = MultimodeModel::new(params.clone(), spec.instance.clone())?;
        let result = model.run(&spec.schedule, trace.seed, Recording::states(trace.stride))?;
        if result.failed_numeric() {
            return Err(Failure::Numeric(format!("{}: trial diverged", spec.instance.name())));
        }
        let samples = result.mode_trajectory.unwrap_or_default();

        let mut csv = String::from("t,pulse,k,re,im,intensity\n");
        for s in &samples {
            for pulse in 0..spec.instance.n() {
                for (k, c) in s.pulse(pulse).iter().enumerate() {
                    csv.push_str(&format!("{},{pulse},{k},{},{},{}\n", s.t, c.re, c.im, c.norm_sqr()));
                }
            }
        }
        let mut events = Vec::new();
        for pulse in 0..spec.instance.n() {
            events.extend(flip_events(&samples, pulse, &trace.detection)?);
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let supported_events = events
            .iter()
            .filter(|e| e.window_min_intensity > trace.intensity_floor && e.peak_higher_mode_intensity > e.pre_window_mean_higher)
            .count();
        let name = spec.instance.name().to_string();
        println!("{name}: seed {} gives {} flip events, {supported_events} above the intensity floor", trace.seed, events.len());
        let report = FlipReport {
            instance: name.clone(),
            seed: trace.seed,
            intensity_floor: trace.intensity_floor,
            events,
            supported_events,
        };
        files.push((format!("{name}.trajectory.csv"), csv));
        files.push((
            format!("{name}.flips.json"),
            serde_json::to_string_pretty(&report).map_err(CimError::from)?,
        ));
    }
    write_all(&args.out_dir, files)
}

/// Checks a CSV against its expected header; every field after it must be numeric.
fn check_csv(text: &str, header: &str) -> Result<usize, Failure> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Failure::Config(format!("expected header `{header}`")));
    }
    let width = header.split(',').count();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width || fields.iter().any(|f| f.parse::<f64>().is_err()) {
            return Err(Failure::Config(format!("line {}: malformed row `{line}`", i + 2)));
        }
        rows += 1;
    }
    Ok(rows)
}

fn validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let kind = if name.ends_with(".report.json") {
        let report: ExperimentReport = parse_document(&text)?;
        if report.compute_hash() != report.report_hash {
            return Err(Failure::Config("report_hash does not match the report contents".into()));
        }
        "report"
    } else if name.ends_with(".spectrum.json") {
        parse_document::<SpectrumSummary>(&text)?;
        "spectrum"
    } else if name.ends_with(".flips.json") {
        parse_document::<FlipReport>(&text)?;
        "flip events"
    } else if name.ends_with(".curve.csv") {
        // multimode curves are indexed by time rather than round
        check_csv(&text, "round,success_fraction").or_else(|_| check_csv(&text, "t,success_fraction"))?;
        "curve"
    } else if name.ends_with(".histogram.csv") {
        check_csv(&text, "energy,count")?;
        "histogram"
    } else if name.ends_with(".trajectory.csv") {
        check_csv(&text, "t,pulse,k,re,im,intensity")?;
        "trajectory"
    } else {
        let value: serde_json::Value = parse_document(&text)?;
        if value.get("model").is_some() {
            parse_run_config(&text)?;
            "run config"
        } else {
            parse_instance(&text)?;
            "instance"
        }
    };
    println!("{}: valid {kind}", path.display());
    Ok(())
}

/// Writes every file or none: each goes to a temporary name first and is
/// renamed only once all of them are on disk.
fn write_all(dir: &Path, files: Vec<(String, String)>) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Other(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut staged = Vec::new();
    for (name, body) in &files {
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, body) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io(e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        fs::rename(&tmp, &path).map_err(io)?;
    }
    Ok(())
}
