//! `genrec run`: seeded Monte-Carlo sweep over (m, l, solver) cells.

use std::collections::BTreeSet;
use std::path::PathBuf;

use genrec_core::experiment::{results_csv, run_experiment, summary_csv, ExperimentConfig};
use genrec_core::numerics::{gaussian_matrix, gaussian_vector, split_seed};
use genrec_core::sensing::{observe, save_observation, OutlierSpec, SensingModel};

use crate::common::{configure_jobs, ensure_writable_dir, parse_solvers, resolve_net, write_file, CliError};
use crate::settings::{CommonOpts, Settings};

pub fn run(opts: &CommonOpts) -> Result<(), CliError> {
    let s = Settings::resolve(opts)?;
    configure_jobs(s.jobs);

    let net = resolve_net(&s, &[5, 20, 40])?;
    let mut cfg = ExperimentConfig::new(net);
    cfg.m_list = s.m.clone().unwrap_or_else(|| vec![30]);
    cfg.l_list = s.outliers.clone().unwrap_or_else(|| vec![3]);
    cfg.noise_rms = s.noise;
    cfg.solvers = parse_solvers(&s)?;
    cfg.rho = s.rho;
    cfg.reg_weight = s.reg_weight;
    cfg.restarts = s.restarts;
    cfg.max_iter = s.max_iter;
    cfg.trials = s.trials;
    cfg.base_seed = s.seed;
    cfg.success_threshold = s.success_threshold;

    for w in cfg.budget_warnings() {
        eprintln!("warning: {w}");
    }

    let out_dir = s.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let obs_dir = out_dir.join("observations");
    ensure_writable_dir(&out_dir)?;
    ensure_writable_dir(&obs_dir)?;

    let output = run_experiment(&cfg)?;
    write_file(&out_dir.join("results.csv"), &results_csv(&output.rows))?;
    write_file(&out_dir.join("summary.csv"), &summary_csv(&output.cells))?;

    // Serialize each instance once (rows repeat the same seed per solver) so
    // any results row can be replayed from its seed column.
    let n = cfg.net.output_dim();
    let k = cfg.net.input_dim();
    let mut seen = BTreeSet::new();
    for row in &output.rows {
        if !seen.insert((row.m, row.l, row.trial)) {
            continue;
        }
        let matrix = gaussian_matrix(row.m, n, split_seed(row.seed, 0));
        let z0 = gaussian_vector(k, split_seed(row.seed, 1));
        let spec = OutlierSpec {
            count: row.l,
            magnitude_range: cfg.outlier_range,
            sign_mode: cfg.outlier_signs,
        };
        let model = SensingModel::new(matrix, cfg.noise_rms, spec)?;
        let obs = observe(&cfg.net, &model, &z0, split_seed(row.seed, 2))?;
        let name = format!("m{}_l{}_t{}.obs", row.m, row.l, row.trial);
        save_observation(&obs_dir.join(name), &model.matrix, cfg.noise_rms, &obs)?;
    }

    for c in &output.cells {
        println!(
            "{:<12} m={:<4} l={:<4} trials={:<4} mean_eps_r={:<12.4e} success_rate={}",
            c.solver.name(),
            c.m,
            c.l,
            c.trials,
            c.eps_r_mean,
            c.success_rate
        );
    }
    println!("wrote {}", out_dir.join("results.csv").display());
    println!("wrote {}", out_dir.join("summary.csv").display());
    Ok(())
}
