//! `genrec replay`: re-solve a serialized observation and export the
//! iteration trace.
//!
//! `--seed` is interpreted as the instance seed from the results.csv seed
//! column; the restart stream derives from it exactly as in `run`, so a
//! replayed row reproduces its eps_m bit for bit.

use std::path::{Path, PathBuf};

use genrec_core::experiment::restart_seed;
use genrec_core::sensing::load_observation;
use genrec_core::solvers::solve_with_restarts;

use crate::common::{configure_jobs, ensure_writable_dir, parse_solvers, resolve_net, solver_kind, write_file, CliError};
use crate::settings::{CommonOpts, Settings};

pub fn run(observation: &Path, opts: &CommonOpts) -> Result<(), CliError> {
    let s = Settings::resolve(opts)?;
    configure_jobs(s.jobs);

    let (matrix, _noise_rms, obs) = load_observation(observation)?;
    if s.weights.is_none() && s.dims.is_none() {
        return Err(CliError::usage(
            "replay needs the generator: pass --weights or --dims (with --seed for the net seed used by run)",
        ));
    }
    let net = resolve_net(&s, &[])?;
    if net.output_dim() != matrix.ncols() {
        return Err(CliError::usage(format!(
            "generator output dim {} does not match sensing matrix columns {}",
            net.output_dim(),
            matrix.ncols()
        )));
    }

    let out_dir = s.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    ensure_writable_dir(&out_dir)?;

    let solvers = parse_solvers(&s)?;
    let id = solvers[0];
    let kind = solver_kind(id, &s);
    let res = solve_with_restarts(&net, &matrix, &obs.y, &kind, s.restarts, restart_seed(s.seed))?
        .with_ground_truth(&obs.x0);

    let trace_path = out_dir.join("trace.csv");
    write_file(&trace_path, &res.trace_csv())?;

    println!(
        "solver={} eps_m={} eps_r={} iters={} status={}",
        id.name(),
        res.eps_m,
        res.eps_r.unwrap(),
        res.iterations_run,
        res.status
    );
    println!("wrote {}", trace_path.display());
    Ok(())
}
