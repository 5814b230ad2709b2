//! Command-line front end: config merging and the four workflows.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::design::{self, CylinderModel, DesignInputs, DesignReport};
use crate::ensemble::load_geometry;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::presets::{self, Preset};
use crate::protocol::{self, ProtocolParams, Simulator, WindowBudget};
use crate::radiation::{self, ConeWeighting};
use crate::vector::Direction;
use crate::verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "DICKE_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dicke-forge", version, about = "Heralded W-state preparation: design, radiation patterns, Monte Carlo and self-checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the protocol parameters and write design_report.{json,txt}.
    Design(CommonArgs),
    /// Write the angular emission pattern to pattern.csv.
    Pattern {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of θ samples on [0, π].
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Run repeated preparations at the design point.
    Simulate(CommonArgs),
    /// Run the state-vector and quadrature self-checks.
    Verify {
        /// Comma-separated qubit counts.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4, 6])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Geometry file (implies the custom preset).
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-source error budget (default 0.2/N).
    #[arg(long)]
    pub budget: Option<f64>,
    /// Initialization budget (default: --budget).
    #[arg(long)]
    pub init_budget: Option<f64>,
    /// solid | intensity
    #[arg(long)]
    pub weighting: Option<ConeWeighting>,
    #[arg(long)]
    pub interference_factor: Option<f64>,
    /// single | per_window
    #[arg(long)]
    pub window_budget: Option<WindowBudget>,
    /// average | sampled
    #[arg(long)]
    pub cylinder_model: Option<CylinderModel>,
    /// Inhomogeneous FWHM in Hz.
    #[arg(long)]
    pub fwhm: Option<f64>,
    /// Pinned η_det for the detection probability.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_trials: Option<u64>,
    #[arg(long)]
    pub polar_nodes: Option<usize>,
    #[arg(long)]
    pub azimuth_nodes: Option<usize>,
}

/// Config file contents; every key optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub preset: Option<Preset>,
    pub n: Option<usize>,
    pub geometry: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cylinder_model: Option<CylinderModel>,
    pub fwhm: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub budget: Option<f64>,
    pub init_budget: Option<f64>,
    pub weighting: Option<ConeWeighting>,
    pub interference_factor: Option<f64>,
    pub eta: Option<f64>,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub runs: Option<u64>,
    pub max_trials: Option<u64>,
    pub window_budget: Option<WindowBudget>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub polar_nodes: Option<usize>,
    pub azimuth_nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(0),
        reason: e.message().to_string(),
    })
}

/// Fully resolved settings, echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub n: usize,
    pub geometry: Option<PathBuf>,
    pub seed: u64,
    pub runs: u64,
    pub max_trials: u64,
    pub out: PathBuf,
    pub budget: Option<f64>,
    pub init_budget: Option<f64>,
    pub target: f64,
    pub weighting: ConeWeighting,
    pub interference_factor: f64,
    pub window_budget: WindowBudget,
    pub cylinder_model: CylinderModel,
    pub fwhm: Option<f64>,
    pub eta: Option<f64>,
    pub polar_nodes: Option<usize>,
    pub azimuth_nodes: Option<usize>,
}

impl RunConfig {
    /// Flags win over the config file, which wins over defaults.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => load_config(p)?,
            None => ConfigFile::default(),
        };
        let geometry = args.geometry.clone().or(file.ensemble.geometry.clone());
        let preset = args
            .preset
            .or(file.ensemble.preset)
            .unwrap_or(if geometry.is_some() { Preset::Custom } else { Preset::Cs });
        if geometry.is_some() && preset != Preset::Custom {
            return Err(Error::validation("geometry", "a geometry file requires --preset custom"));
        }
        let n = args.n.or(file.ensemble.n);
        let n = match preset {
            Preset::Custom => n.unwrap_or(0),
            _ => n.unwrap_or(10),
        };
        let interference_factor = args
            .interference_factor
            .or(file.design.interference_factor)
            .unwrap_or(1.0);
        if interference_factor != 0.5 && interference_factor != 1.0 {
            return Err(Error::validation("interference_factor", "must be 0.5 or 1.0"));
        }
        Ok(RunConfig {
            preset,
            n,
            geometry,
            seed: args.seed.or(file.ensemble.seed).unwrap_or(0),
            runs: args.runs.or(file.simulate.runs).unwrap_or(2000),
            max_trials: args.max_trials.or(file.simulate.max_trials).unwrap_or(10_000_000),
            out: args.out.clone().or(file.output.out).unwrap_or_else(|| PathBuf::from("out")),
            budget: args.budget.or(file.design.budget),
            init_budget: args.init_budget.or(file.design.init_budget),
            target: file.design.target.unwrap_or(0.5),
            weighting: args.weighting.or(file.design.weighting).unwrap_or_default(),
            interference_factor,
            window_budget: args.window_budget.or(file.simulate.window_budget).unwrap_or_default(),
            cylinder_model: args.cylinder_model.or(file.ensemble.cylinder_model).unwrap_or_default(),
            fwhm: args.fwhm.or(file.ensemble.fwhm),
            eta: args.eta.or(file.design.eta),
            polar_nodes: args.polar_nodes.or(file.quadrature.polar_nodes),
            azimuth_nodes: args.azimuth_nodes.or(file.quadrature.azimuth_nodes),
        })
    }

    pub fn design_inputs(&self) -> Result<DesignInputs> {
        let geometry = self.geometry.as_ref().map(load_geometry).transpose()?;
        if let Some(g) = &geometry {
            if self.n != 0 && self.n != g.len() {
                return Err(Error::validation(
                    "n",
                    format!("--n {} disagrees with the {} emitters in the geometry file", self.n, g.len()),
                ));
            }
        }
        let mut inputs = presets::design_inputs(self.preset, self.n, self.seed, self.cylinder_model, geometry)?;
        inputs.budget = self.budget;
        inputs.init_budget = self.init_budget;
        inputs.target = self.target;
        inputs.weighting = self.weighting;
        inputs.interference_factor = self.interference_factor;
        inputs.eta_override = self.eta;
        if let Some(f) = self.fwhm {
            inputs.broadening_fwhm = f;
        }
        if self.polar_nodes.is_some() || self.azimuth_nodes.is_some() {
            let model = inputs.source.model()?;
            let mut q = radiation::default_quadrature(model.as_ref(), inputs.k_l);
            if let Some(p) = self.polar_nodes {
                q.polar_nodes = p;
            }
            if let Some(a) = self.azimuth_nodes {
                q.azimuth_nodes = a;
            }
            inputs.quadrature = Some(q);
        }
        Ok(inputs)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn header_lines(cfg: &RunConfig) -> String {
    format!(
        "# dicke-forge {VERSION}\n# config: {}\n",
        serde_json::to_string(cfg).expect("serializable config")
    )
}

#[derive(Serialize)]
struct DesignBody<'a> {
    report: &'a DesignReport,
}

pub fn cmd_design(cfg: &RunConfig) -> Result<DesignReport> {
    let report = design::design_report(&cfg.design_inputs()?)?;
    ensure_dir(&cfg.out)?;
    write_file(
        &cfg.out.join("design_report.json"),
        &to_json(&Envelope {
            version: VERSION,
            config: cfg,
            body: DesignBody { report: &report },
        }),
    )?;
    let table = design::format_table(std::slice::from_ref(&report));
    write_file(&cfg.out.join("design_report.txt"), &format!("{}{table}", header_lines(cfg)))?;
    print!("{table}");
    Ok(report)
}

/// One pattern row: θ, I(θ), single-emitter I(θ), ζ(θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternRow {
    pub theta: f64,
    pub collective: f64,
    pub single: f64,
    pub zeta: f64,
}

pub const PATTERN_COLUMNS: &str = "theta_rad,I_collective,I_single_atom,zeta";

/// Samples θ ∈ [0, π] in the x–z plane (azimuth 0 about k_L).
pub fn pattern_rows(inputs: &DesignInputs, rows: usize) -> Result<Vec<PatternRow>> {
    if rows < 2 {
        return Err(Error::validation("rows", "must be at least 2"));
    }
    let model = inputs.source.model()?;
    let model = model.as_ref();
    let pattern = model.transition().pattern;
    let k_l = inputs.k_l;
    Ok(exec::Execution::default().map_indexed(rows, |i| {
        let theta = std::f64::consts::PI * i as f64 / (rows - 1) as f64;
        let k = Direction::from_polar(k_l, theta, 0.0);
        PatternRow {
            theta,
            collective: radiation::intensity(model, k_l, k),
            single: radiation::single_emitter_intensity(pattern, k_l, k),
            zeta: model.coherence(k_l, k),
        }
    }))
}

pub fn cmd_pattern(cfg: &RunConfig, rows: usize) -> Result<Vec<PatternRow>> {
    let data = pattern_rows(&cfg.design_inputs()?, rows)?;
    ensure_dir(&cfg.out)?;
    let mut csv = header_lines(cfg);
    csv.push_str(PATTERN_COLUMNS);
    csv.push('\n');
    for r in &data {
        csv.push_str(&format!("{:.9e},{:.9e},{:.9e},{:.9e}\n", r.theta, r.collective, r.single, r.zeta));
    }
    write_file(&cfg.out.join("pattern.csv"), &csv)?;
    Ok(data)
}

#[derive(Serialize)]
struct SimulateBody<'a> {
    design: &'a DesignReport,
    summary: &'a protocol::BatchSummary,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<protocol::BatchSummary> {
    let inputs = cfg.design_inputs()?;
    let report = design::design_report(&inputs)?;
    let geometry = inputs.source.geometry()?;
    let params = ProtocolParams {
        k_l: inputs.k_l,
        alpha_det: report.alpha_det,
        t_det: report.t_det,
        t_init: report.t_init.max(f64::MIN_POSITIVE),
        phi_l: 0.0,
        broadening_fwhm: inputs.broadening_fwhm,
        max_trials: cfg.max_trials,
        seed: cfg.seed,
        interference_factor: cfg.interference_factor,
        window_budget: cfg.window_budget,
        geometry,
    };
    let quad = inputs
        .quadrature
        .unwrap_or_else(|| radiation::default_quadrature(&params.geometry, params.k_l));
    let sim = Simulator::new(params, &quad)?;
    let results = sim.run_batch(cfg.runs, Execution::default())?;
    let summary = protocol::summarize(&sim, &results);

    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("runs.jsonl");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in &results {
        serde_json::to_writer(&mut w, r).expect("serializable run");
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_file(
        &cfg.out.join("summary.json"),
        &to_json(&Envelope {
            version: VERSION,
            config: cfg,
            body: SimulateBody {
                design: &report,
                summary: &summary,
            },
        }),
    )?;
    println!(
        "runs={} success_fraction={:.4} median_trials={} mean_fidelity={} witness_negative_fraction={}",
        summary.runs,
        summary.success_fraction,
        fmt_opt(summary.median_trials),
        fmt_opt(summary.mean_fidelity),
        fmt_opt(summary.witness_negative_fraction),
    );
    Ok(summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

/// Returns true when every check passes.
pub fn cmd_verify(sizes: &[usize], seed: u64) -> Result<bool> {
    let results = verify::run_suite(sizes, seed)?;
    print!("{}", verify::format_matrix(&results));
    Ok(results.iter().all(|r| r.passed))
}

fn threads_from_env() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::validation("DICKE_FORGE_THREADS", format!("not a count: `{v}`")))?;
        if n == 0 {
            return Err(Error::validation("DICKE_FORGE_THREADS", "must be at least 1"));
        }
        exec::configure_threads(n);
    }
    Ok(())
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = threads_from_env().and_then(|()| match cli.command {
        Command::Design(args) => cmd_design(&RunConfig::resolve(&args)?).map(|_| 0),
        Command::Pattern { common, rows } => {
            cmd_pattern(&RunConfig::resolve(&common)?, rows.unwrap_or(2000)).map(|_| 0)
        }
        Command::Simulate(args) => cmd_simulate(&RunConfig::resolve(&args)?).map(|_| 0),
        Command::Verify { sizes, seed } => cmd_verify(&sizes, seed).map(|ok| {
            if ok {
                0
            } else {
                eprintln!("verification failed");
                1
            }
        }),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[ensemble]\npreset = \"nv\"\nn = 30\n\n[design]\nbudget = 0.01\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            n: Some(12),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.preset, Preset::Nv);
        assert_eq!(cfg.n, 12);
        assert_eq!(cfg.budget, Some(0.01));
    }

    #[test]
    fn unknown_config_key_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "[ensemble]\nn = 3\nbogus = 1\n").unwrap();
        match load_config(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interference_factor_restricted() {
        let args = CommonArgs {
            interference_factor: Some(0.7),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
    }
}
