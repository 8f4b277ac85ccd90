//! Command-line front end: argument parsing, file loading and output
//! assembly around `biascope-core`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the
//! process exit code. All outputs of a command are computed before the
//! first file is written, and each file is written atomically.

pub mod args;
pub mod error;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use biascope_core::analysis::{build_report, EllipseMode, ModelInput, PieSummary, ReportConfig, ReportInput};
use biascope_core::ingest::{
    format_number, format_predictions, read_population, read_predictions, read_tensor, regression_csv,
    report_to_json, scatter_csv, tensor_to_activation, write_atomic,
};
use biascope_core::svcca::{svcca_distance, SvccaOptions};
use biascope_core::synth::{generate_log, generate_population, oracle_rates, BiasScenario, ScenarioOracle};
use biascope_core::{find_pies, ActivationMatrix, BiasReport, ModelPopulation, PredictionLog};
use clap::Parser;
use serde::Serialize;

pub use args::{Cli, Command};
pub use error::CliError;
pub use manifest::Manifest;

/// Runs the CLI on `args` (including the program name); returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("biascope: {e}");
            e.exit_code()
        }
    }
}

/// Executes one subcommand and returns what it prints on success.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Metrics(a) => cmd_metrics(a),
        Command::Pies(a) => cmd_pies(a),
        Command::Svcca(a) => cmd_svcca(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// File name component for an id: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// Output files of a command, written only after all of them are ready.
#[derive(Default)]
struct Outputs {
    files: BTreeMap<PathBuf, String>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, contents: String, what: &str) -> Result<(), CliError> {
        if self.files.contains_key(&path) {
            return Err(CliError::Validation(format!(
                "{what} would overwrite {}; ids must differ after file-name sanitizing",
                path.display()
            )));
        }
        self.files.insert(path, contents);
        Ok(())
    }

    fn write(self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        for (path, contents) in self.files {
            write_atomic(&path, contents.as_bytes())?;
        }
        Ok(())
    }
}

fn report_outputs(report: &BiasReport, out_dir: &Path) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    out.add(out_dir.join("report.json"), report_to_json(report), "report")?;
    for m in &report.models {
        let path = out_dir.join(format!("scatter_{}.csv", file_stem_for(&m.model_id)));
        out.add(path, scatter_csv(m), &format!("scatter file of `{}`", m.model_id))?;
    }
    for layer in &report.regressions {
        let path = out_dir.join(format!("regression_{}.csv", file_stem_for(&layer.layer_id)));
        out.add(path, regression_csv(layer), &format!("regression file of layer `{}`", layer.layer_id))?;
    }
    Ok(out)
}

fn summary_line(report: &BiasReport) -> String {
    let mut s = String::new();
    for m in &report.models {
        let _ = writeln!(
            s,
            "{}\tcev={}\tsde={}\taccuracy={}",
            m.model_id,
            format_number(m.scores.cev),
            format_number(m.scores.sde),
            format_number(m.accuracy)
        );
    }
    s
}

fn cmd_metrics(a: &args::MetricsArgs) -> Result<String, CliError> {
    let config = ReportConfig {
        epsilon: a.epsilon,
        svcca: SvccaOptions::default(),
        ellipse: if a.two_sigma { EllipseMode::TwoSigma } else { EllipseMode::Coverage { coverage: a.coverage } },
    };
    config.validate()?;
    let baseline = read_predictions(&a.baseline)?;
    let models = a.models.iter().map(|p| read_predictions(p)).collect::<Result<Vec<_>, _>>()?;
    let mut input = ReportInput::new(&baseline);
    input.models = models.iter().map(ModelInput::new).collect();
    let report = build_report(&input, &config)?;
    report_outputs(&report, &a.out_dir)?.write(&a.out_dir)?;
    Ok(summary_line(&report))
}

fn cmd_pies(a: &args::PiesArgs) -> Result<String, CliError> {
    let reference = read_population(&a.reference_dir)?;
    let compressed = read_population(&a.compressed_dir)?;
    let pies = find_pies(&reference, &compressed)?;
    let summary = PieSummary {
        reference_id: pies.reference_id.clone(),
        compressed_id: pies.compressed_id.clone(),
        pie_count: pies.pie_count,
        flagged: pies.flagged().into_iter().map(String::from).collect(),
    };
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    let mut s = format!("pie_count={}\n", summary.pie_count);
    for id in &summary.flagged {
        s.push_str(id);
        s.push('\n');
    }
    Ok(s)
}

fn layer_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn load_activation(path: &Path, layer_id: &str) -> Result<ActivationMatrix, CliError> {
    let tensor = read_tensor(path)?;
    Ok(tensor_to_activation::<f64>(&tensor, layer_id, &path.display().to_string())?)
}

fn cmd_svcca(a: &args::SvccaArgs) -> Result<String, CliError> {
    let opts = SvccaOptions { variance_threshold: a.threshold, top_k: a.top_k };
    let la = load_activation(&a.layer_a, &layer_id_of(&a.layer_a))?;
    let lb = load_activation(&a.layer_b, &layer_id_of(&a.layer_b))?;
    let r = svcca_distance(&la, &lb, &opts)?;
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&r).expect("result serializes");
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "layer_a={}", r.layer_a);
    let _ = writeln!(s, "layer_b={}", r.layer_b);
    let _ = writeln!(s, "datapoints={}", la.n_datapoints());
    let _ = writeln!(s, "kept_dims_a={}", r.kept_dims_a);
    let _ = writeln!(s, "kept_dims_b={}", r.kept_dims_b);
    let _ = writeln!(s, "mean_rho={}", format_number(r.mean_rho));
    let _ = writeln!(s, "distance={}", format_number(r.distance));
    if r.low_sample_warning {
        let _ = writeln!(s, "warning=fewer than 10 datapoints per retained dimension");
    }
    Ok(s)
}

/// Everything a manifest refers to, loaded.
struct Loaded {
    baseline: PredictionLog,
    baseline_acts: BTreeMap<String, ActivationMatrix>,
    models: Vec<LoadedModel>,
}

struct LoadedModel {
    log: PredictionLog,
    tag: Option<String>,
    populations: Option<(ModelPopulation, ModelPopulation)>,
    acts: BTreeMap<String, ActivationMatrix>,
}

fn load_layers(
    base: &Path,
    owner: &str,
    paths: &BTreeMap<String, std::path::PathBuf>,
) -> Result<BTreeMap<String, ActivationMatrix>, CliError> {
    paths
        .iter()
        .map(|(layer, p)| {
            load_activation(&manifest::resolve(base, p), layer)
                .map(|m| (layer.clone(), m))
                .map_err(|e| e.context(format!("{owner}, layer `{layer}`")))
        })
        .collect()
}

fn load_manifest_inputs(m: &Manifest, base: &Path) -> Result<Loaded, CliError> {
    let baseline = read_predictions(&manifest::resolve(base, &m.baseline.log))?;
    let baseline_acts = load_layers(base, "baseline", &m.baseline.activations)?;
    let mut models = Vec::with_capacity(m.models.len());
    for entry in &m.models {
        let log = read_predictions(&manifest::resolve(base, &entry.log))?;
        let owner = format!("model `{}`", log.model_id);
        let populations = match (&entry.reference_population, &entry.compressed_population) {
            (Some(r), Some(c)) => {
                let load = |p: &Path| read_population(&manifest::resolve(base, p));
                Some((load(r)?, load(c)?))
            }
            _ => None,
        };
        let acts = load_layers(base, &owner, &entry.activations)?;
        models.push(LoadedModel { log, tag: entry.tag.clone(), populations, acts });
    }
    Ok(Loaded { baseline, baseline_acts, models })
}

/// Builds the report for a parsed manifest whose relative paths resolve against `base`.
pub fn report_from_manifest(m: &Manifest, base: &Path, config: &ReportConfig<f64>) -> Result<BiasReport, CliError> {
    m.validate()?;
    let loaded = load_manifest_inputs(m, base)?;
    let mut input = ReportInput::new(&loaded.baseline);
    input.layers = m.layers.clone();
    input.baseline_activations = loaded.baseline_acts.iter().map(|(k, v)| (k.clone(), v)).collect();
    for lm in &loaded.models {
        let mut mi = ModelInput::new(&lm.log);
        mi.tag = lm.tag.clone();
        mi.populations = lm.populations.as_ref().map(|(r, c)| (r, c));
        mi.activations = lm.acts.iter().map(|(k, v)| (k.clone(), v)).collect();
        input.models.push(mi);
    }
    Ok(build_report(&input, config)?)
}

fn cmd_report(a: &args::ReportArgs) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&a.manifest)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.manifest.display())))?;
    let m = Manifest::parse(&text, &a.manifest)?;
    let config = m.report_config(a)?;
    m.validate()?;
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let report = report_from_manifest(&m, &base, &config)?;
    report_outputs(&report, &a.out_dir)?.write(&a.out_dir)?;
    Ok(summary_line(&report))
}

/// Contents of `scenario.json`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ScenarioRecord {
    pub name: String,
    pub scenario: BiasScenario,
    pub oracle: ScenarioOracle,
    pub members: Option<usize>,
    pub files: Vec<String>,
}

fn cmd_synth(a: &args::SynthArgs) -> Result<String, CliError> {
    let mut scenario = BiasScenario::balanced(a.classes, a.per_class, a.accuracy, a.seed).with_bias(
        a.victims.iter().copied(),
        a.aggressors.iter().copied(),
        a.beta,
    );
    if let Some(sizes) = &a.class_sizes {
        scenario.examples_per_class = sizes.clone();
    }
    scenario.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let name = a.name.clone().unwrap_or_else(|| format!("synth-s{}", a.seed));
    if name.is_empty() || name.contains([',', '\n', '\r']) {
        return Err(CliError::Validation(format!("name `{name}` cannot be used as a model id")));
    }
    let stem = file_stem_for(&name);
    let invalid = |e: biascope_core::synth::SynthError| CliError::Validation(e.to_string());

    let mut out = Outputs::default();
    let mut files = Vec::new();
    match a.members {
        None => {
            let mut log = generate_log(&scenario).map_err(invalid)?;
            log.model_id = name.clone();
            let file = format!("{stem}.csv");
            out.add(a.out_dir.join(&file), format_predictions(&log)?, "log")?;
            files.push(file);
        }
        Some(n) => {
            let pop = generate_population(&scenario, n, None).map_err(invalid)?;
            for (i, mut log) in pop.logs.into_iter().enumerate() {
                log.model_id = format!("{name}-m{i:03}");
                let file = format!("{stem}-m{i:03}.csv");
                out.add(a.out_dir.join(&file), format_predictions(&log)?, "member log")?;
                files.push(file);
            }
        }
    }
    let record = ScenarioRecord {
        name,
        oracle: oracle_rates(&scenario).map_err(invalid)?,
        scenario,
        members: a.members,
        files: files.clone(),
    };
    let mut json = serde_json::to_string_pretty(&record).expect("scenario serializes");
    json.push('\n');
    out.add(a.out_dir.join("scenario.json"), json, "scenario record")?;
    out.write(&a.out_dir)?;

    let names: BTreeSet<String> = files.into_iter().collect();
    Ok(names.into_iter().map(|f| f + "\n").collect())
}
