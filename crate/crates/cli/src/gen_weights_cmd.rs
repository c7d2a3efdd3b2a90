//! `genrec gen-weights`: write a seeded GENREC v1 weight file.

use std::path::PathBuf;

use genrec_core::GeneratorNet;

use crate::common::{parse_activation, CliError};
use crate::settings::{CommonOpts, Settings};

pub fn run(opts: &CommonOpts) -> Result<(), CliError> {
    let s = Settings::resolve(opts)?;
    let dims = s
        .dims
        .clone()
        .ok_or_else(|| CliError::usage("gen-weights requires --dims"))?;
    let act = parse_activation(&s.activation, s.leak)?;
    let net = GeneratorNet::init_gaussian(&dims, act, s.seed)?;
    let path = s.out.clone().unwrap_or_else(|| PathBuf::from("weights.genrec"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
    }
    net.save(&path)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}
