//! Error-to-exit-code mapping and helpers shared by the subcommands.

use std::fmt;
use std::path::Path;

use genrec_core::experiment::SolverId;
use genrec_core::solvers::{AdmmConfig, GdConfig, Objective, SolverKind};
use genrec_core::{Activation, CoreError, GeneratorNet};

use crate::settings::Settings;

/// Exit codes: 1 usage, 2 I/O, 3 theory violations.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Violations(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Violations(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Violations(m) => write!(f, "{m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::Parse(_) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub fn parse_activation(name: &str, leak: f64) -> Result<Activation, CliError> {
    match name {
        "identity" => Ok(Activation::Identity),
        "relu" => Ok(Activation::Relu),
        "leaky" => Ok(Activation::leaky(leak)?),
        other => Err(CliError::usage(format!(
            "unknown activation: {other} (expected identity, relu, or leaky)"
        ))),
    }
}

/// Build the generator: load a weight file when given, otherwise seed one
/// from the dims/activation settings.
pub fn resolve_net(s: &Settings, default_dims: &[usize]) -> Result<GeneratorNet, CliError> {
    if let Some(path) = &s.weights {
        return Ok(GeneratorNet::load(path)?);
    }
    let dims = s.dims.clone().unwrap_or_else(|| default_dims.to_vec());
    let act = parse_activation(&s.activation, s.leak)?;
    Ok(GeneratorNet::init_gaussian(&dims, act, s.seed)?)
}

pub fn parse_solvers(s: &Settings) -> Result<Vec<SolverId>, CliError> {
    s.solvers
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| SolverId::parse(t).map_err(CliError::from))
        .collect()
}

/// Concrete solver configuration for a single replayed solve, mirroring what
/// the experiment harness builds per cell.
pub fn solver_kind(id: SolverId, s: &Settings) -> SolverKind {
    match id {
        SolverId::AdmmL1 => SolverKind::Admm(AdmmConfig {
            rho: s.rho,
            max_iter: s.max_iter,
            ..Default::default()
        }),
        SolverId::GdL1Sq | SolverId::GdL2Sq | SolverId::GdL2SqReg => {
            let objective = match id {
                SolverId::GdL1Sq => Objective::L1Squared,
                SolverId::GdL2Sq => Objective::L2Squared,
                _ => Objective::L2SquaredReg,
            };
            let mut cfg = GdConfig::new(objective);
            if objective == Objective::L2SquaredReg {
                cfg.reg_weight = s.reg_weight;
            }
            cfg.max_steps = s.max_iter;
            SolverKind::Gd(cfg)
        }
    }
}

/// Cap the rayon worker pool. Only the first call can take effect; later
/// calls in the same process are ignored.
pub fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Fail before any compute when the output directory cannot be written.
pub fn ensure_writable_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"")
        .map_err(|e| CliError::io(format!("cannot write in {}: {e}", dir.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}
