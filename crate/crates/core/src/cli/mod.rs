//! `agglom` command-line pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
//! failure. Errors are reported on stderr as `error[Name]: message`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::econometrics::EconError;
use crate::indices::IndexError;
use crate::intensity::{IntensityError, WeightMethod};
use crate::panel::PanelError;
use crate::spatial::SpatialError;
use crate::synth::SynthError;

pub use config::{LoadedConfig, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Estimation,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Estimation => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: ErrorClass,
    pub name: String,
    pub message: String,
}

impl CliError {
    pub fn config(name: &str, message: String) -> CliError {
        CliError { class: ErrorClass::Config, name: name.into(), message }
    }

    pub fn data(name: &str, message: String) -> CliError {
        CliError { class: ErrorClass::Data, name: name.into(), message }
    }

    pub fn estimation(name: &str, message: String) -> CliError {
        CliError { class: ErrorClass::Estimation, name: name.into(), message }
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }

    /// Prefixes the message with a location such as a file path.
    pub fn at(mut self, location: &Path) -> CliError {
        self.message = format!("{}: {}", location.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.name, self.message)
    }
}

impl std::error::Error for CliError {}

/// Enum variant name from the `Debug` rendering.
fn variant_name<E: fmt::Debug>(e: &E) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        let class = match e {
            PanelError::UnknownSector(_) | PanelError::UnknownVariable(_) => ErrorClass::Config,
            _ => ErrorClass::Data,
        };
        CliError { class, name: variant_name(&e), message: e.to_string() }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        let class = match e {
            IndexError::UnknownSector(_) => ErrorClass::Config,
            _ => ErrorClass::Data,
        };
        CliError { class, name: variant_name(&e), message: e.to_string() }
    }
}

impl From<IntensityError> for CliError {
    fn from(e: IntensityError) -> Self {
        let class = match e {
            IntensityError::UnknownVariable(_) | IntensityError::DuplicateIndicator(_) => ErrorClass::Config,
            _ => ErrorClass::Data,
        };
        CliError { class, name: variant_name(&e), message: e.to_string() }
    }
}

impl From<SpatialError> for CliError {
    fn from(e: SpatialError) -> Self {
        CliError { class: ErrorClass::Data, name: variant_name(&e), message: e.to_string() }
    }
}

impl From<EconError> for CliError {
    fn from(e: EconError) -> Self {
        let class = match e {
            EconError::UnknownVariable(_) | EconError::InvalidSpec(_) => ErrorClass::Config,
            EconError::InsufficientObservations { .. } | EconError::UnbalancedPanel(_) | EconError::WeightsMismatch(_) => {
                ErrorClass::Data
            }
            _ => ErrorClass::Estimation,
        };
        CliError { class, name: variant_name(&e), message: e.to_string() }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let class = match e {
            SynthError::InvalidParameter(_) | SynthError::InadmissibleParameter { .. } => ErrorClass::Config,
            _ => ErrorClass::Data,
        };
        CliError { class, name: variant_name(&e), message: e.to_string() }
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data("Io", format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Ols,
    Slm,
    Sem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Density,
    Slm,
    Sem,
    Demo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Vh,
    Entropy,
}

impl From<MethodArg> for WeightMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Vh => WeightMethod::Vh,
            MethodArg::Entropy => WeightMethod::Entropy,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "agglom", version, about = "Agglomeration indices, land-use intensity and spatial panel models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Location quotients, diversification and co-agglomeration per city-year.
    Indices {
        #[arg(long)]
        config: PathBuf,
    },
    /// Indicator weights, intensity scores and dynamic classification.
    Intensity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Global and local Moran's I for one variable in one year.
    Moran {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variable: Option<String>,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Fixed-effects regression tables.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        model: ModelChoice,
        #[arg(long)]
        spec: Option<String>,
    },
    /// Synthetic panels.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        generator: Generator,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

/// Files produced by a command, written into its run directory.
pub type Outputs = Vec<(String, Vec<u8>)>;

/// Output directory `<output>/<command>-<stamp>`, where the stamp is a
/// SHA-256 prefix of the resolved configuration and the command arguments.
pub fn run_directory(lc: &LoadedConfig, command: &str, args: &[(&str, String)]) -> (PathBuf, String) {
    let resolved = serde_json::to_string_pretty(&lc.config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(resolved.as_bytes());
    hasher.update([0u8]);
    hasher.update(command.as_bytes());
    for (k, v) in args {
        hasher.update([0u8]);
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
    }
    let stamp = hex::encode(hasher.finalize());
    (lc.output_root().join(format!("{command}-{}", &stamp[..12])), resolved)
}

fn write_outputs(dir: &Path, resolved: &str, outputs: &Outputs) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, format!("{resolved}\n")).map_err(|e| io_error(&cfg, e))?;
    for (name, bytes) in outputs {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

/// Runs one parsed command and returns its run directory.
pub fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let (config_path, name, args) = match &cli.command {
        Command::Indices { config } => (config, "indices", vec![]),
        Command::Intensity { config, method } => (
            config,
            "intensity",
            method.map(|m| vec![("method", format!("{m:?}").to_lowercase())]).unwrap_or_default(),
        ),
        Command::Moran { config, variable, year } => {
            let mut a = vec![];
            if let Some(v) = variable {
                a.push(("variable", v.clone()));
            }
            if let Some(y) = year {
                a.push(("year", y.to_string()));
            }
            (config, "moran", a)
        }
        Command::Fit { config, model, spec } => {
            let mut a = vec![("model", format!("{model:?}").to_lowercase())];
            if let Some(s) = spec {
                a.push(("spec", s.clone()));
            }
            (config, "fit", a)
        }
        Command::Synth { config, generator, params } => {
            let mut a = vec![("generator", format!("{generator:?}").to_lowercase())];
            if let Some(p) = params {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config("MissingInput", format!("{}: {e}", p.display())))?;
                a.push(("params", text));
            }
            (config, "synth", a)
        }
    };
    let lc = LoadedConfig::load(config_path)?;
    let outputs = match &cli.command {
        Command::Indices { .. } => commands::indices(&lc)?,
        Command::Intensity { method, .. } => commands::intensity(&lc, method.map(Into::into))?,
        Command::Moran { variable, year, .. } => commands::moran(&lc, variable.as_deref(), *year)?,
        Command::Fit { model, spec, .. } => commands::fit(&lc, *model, spec.as_deref())?,
        Command::Synth { generator, .. } => {
            let params = args.iter().find(|(k, _)| *k == "params").map(|(_, v)| v.as_str());
            commands::synth(&lc, *generator, params)?
        }
    };
    let (dir, resolved) = run_directory(&lc, name, &args);
    write_outputs(&dir, &resolved, &outputs)?;
    Ok(dir)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
