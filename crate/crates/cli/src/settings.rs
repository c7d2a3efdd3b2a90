//! Option resolution: built-in defaults, then the `--config` key=value file,
//! then explicit command-line flags, in increasing precedence.

use std::path::{Path, PathBuf};

use clap::Args;

use crate::CliError;

/// Flags shared by every subcommand. Each flag has a same-named key in the
/// config file; flags given on the command line win.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonOpts {
    /// Flat key=value config file; '#' starts a comment
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Generator layer sizes, input first, e.g. 5,20,40
    #[arg(long, value_name = "LIST")]
    pub dims: Option<String>,
    /// Activation function
    #[arg(long, value_name = "NAME")]
    pub activation: Option<String>,
    /// Leak h for the leaky activation, in (0,1)
    #[arg(long, value_name = "H")]
    pub leak: Option<f64>,
    /// Load the generator from a GENREC weight file instead of seeding one
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    /// Measurement counts to sweep, e.g. 10,20,30
    #[arg(long, value_name = "LIST")]
    pub m: Option<String>,
    /// Outlier counts to sweep, e.g. 3,6,12
    #[arg(long, value_name = "LIST")]
    pub outliers: Option<String>,
    /// RMS of the dense noise term (0 disables it)
    #[arg(long, value_name = "RMS")]
    pub noise: Option<f64>,
    /// Solvers to run: admm_l1, gd_l1sq, gd_l2sq, gd_l2sq_reg
    #[arg(long, value_name = "LIST")]
    pub solvers: Option<String>,
    /// ADMM penalty parameter
    #[arg(long, value_name = "RHO")]
    pub rho: Option<f64>,
    /// Regularization weight for gd_l2sq_reg
    #[arg(long = "reg-weight", value_name = "W")]
    pub reg_weight: Option<f64>,
    /// Random initializations per solve; the best by eps_m wins
    #[arg(long, value_name = "N")]
    pub restarts: Option<usize>,
    /// Iteration cap per solve
    #[arg(long = "max-iter", value_name = "N")]
    pub max_iter: Option<usize>,
    /// Trials per (m, l, solver) cell
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Base seed; all randomness derives from it
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Worker thread cap (default: all cores)
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory (a file path for gen-weights)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Success when eps_r / n is at or below this
    #[arg(long = "success-threshold", value_name = "T")]
    pub success_threshold: Option<f64>,
}

/// Fully resolved options.
#[derive(Debug, Clone)]
pub struct Settings {
    pub dims: Option<Vec<usize>>,
    pub activation: String,
    pub leak: f64,
    pub weights: Option<PathBuf>,
    pub m: Option<Vec<usize>>,
    pub outliers: Option<Vec<usize>>,
    pub noise: f64,
    pub solvers: String,
    pub rho: f64,
    pub reg_weight: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub trials: usize,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub success_threshold: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            dims: None,
            activation: "identity".into(),
            leak: 0.2,
            weights: None,
            m: None,
            outliers: None,
            noise: 0.0,
            solvers: "admm_l1".into(),
            rho: 1.0,
            reg_weight: 0.1,
            restarts: 3,
            max_iter: 20000,
            trials: 10,
            seed: 0,
            jobs: None,
            out: None,
            success_threshold: 1e-4,
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| CliError::usage(format!("invalid {what} entry: {t}")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(s: &str, key: &str) -> Result<T, CliError> {
    s.trim()
        .parse::<T>()
        .map_err(|_| CliError::usage(format!("invalid value for {key}: {s}")))
}

impl Settings {
    fn apply_key(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "dims" => self.dims = Some(parse_list(value, "dims")?),
            "activation" => self.activation = value.trim().to_string(),
            "leak" => self.leak = parse_scalar(value, key)?,
            "weights" => self.weights = Some(PathBuf::from(value.trim())),
            "m" => self.m = Some(parse_list(value, "m")?),
            "outliers" => self.outliers = Some(parse_list(value, "outliers")?),
            "noise" => self.noise = parse_scalar(value, key)?,
            "solvers" => self.solvers = value.trim().to_string(),
            "rho" => self.rho = parse_scalar(value, key)?,
            "reg-weight" => self.reg_weight = parse_scalar(value, key)?,
            "restarts" => self.restarts = parse_scalar(value, key)?,
            "max-iter" => self.max_iter = parse_scalar(value, key)?,
            "trials" => self.trials = parse_scalar(value, key)?,
            "seed" => self.seed = parse_scalar(value, key)?,
            "jobs" => self.jobs = Some(parse_scalar(value, key)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "success-threshold" => self.success_threshold = parse_scalar(value, key)?,
            other => return Err(CliError::usage(format!("unknown config key: {other}"))),
        }
        Ok(())
    }

    fn apply_config_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "{}:{}: expected key=value, got: {line}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_key(key.trim(), value)?;
        }
        Ok(())
    }

    fn apply_flags(&mut self, opts: &CommonOpts) -> Result<(), CliError> {
        if let Some(v) = &opts.dims {
            self.dims = Some(parse_list(v, "dims")?);
        }
        if let Some(v) = &opts.activation {
            self.activation = v.clone();
        }
        if let Some(v) = opts.leak {
            self.leak = v;
        }
        if let Some(v) = &opts.weights {
            self.weights = Some(v.clone());
        }
        if let Some(v) = &opts.m {
            self.m = Some(parse_list(v, "m")?);
        }
        if let Some(v) = &opts.outliers {
            self.outliers = Some(parse_list(v, "outliers")?);
        }
        if let Some(v) = opts.noise {
            self.noise = v;
        }
        if let Some(v) = &opts.solvers {
            self.solvers = v.clone();
        }
        if let Some(v) = opts.rho {
            self.rho = v;
        }
        if let Some(v) = opts.reg_weight {
            self.reg_weight = v;
        }
        if let Some(v) = opts.restarts {
            self.restarts = v;
        }
        if let Some(v) = opts.max_iter {
            self.max_iter = v;
        }
        if let Some(v) = opts.trials {
            self.trials = v;
        }
        if let Some(v) = opts.seed {
            self.seed = v;
        }
        if let Some(v) = opts.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = &opts.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = opts.success_threshold {
            self.success_threshold = v;
        }
        Ok(())
    }

    pub fn resolve(opts: &CommonOpts) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        if let Some(path) = &opts.config {
            s.apply_config_file(path)?;
        }
        s.apply_flags(opts)?;
        Ok(s)
    }
}
