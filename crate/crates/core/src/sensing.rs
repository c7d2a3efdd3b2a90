//! Corrupted measurement synthesis `y = M x + e + eta`: Gaussian sensing
//! matrices, l-sparse outlier vectors with controlled support and magnitude,
//! dense Gaussian noise, and ground-truth retention for evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::generator::GeneratorNet;
use crate::numerics::seeded_rng;
use crate::{CoreError, Result};

/// Sign convention for outlier magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// All outliers positive (the experimental recipe).
    Positive,
    /// Independent random signs (the recovery theory is sign-agnostic).
    RandomSign,
}

/// Count, magnitude range, and sign convention for the outlier vector.
#[derive(Debug, Clone)]
pub struct OutlierSpec {
    pub count: usize,
    pub magnitude_range: (f64, f64),
    pub sign_mode: SignMode,
}

impl OutlierSpec {
    /// Outliers uniform in [5000, 10000], positive sign.
    pub fn with_count(count: usize) -> Self {
        OutlierSpec {
            count,
            magnitude_range: (5000.0, 10000.0),
            sign_mode: SignMode::Positive,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.magnitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(CoreError::invalid(format!(
                "bad magnitude range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Measurement matrix plus corruption parameters.
#[derive(Debug, Clone)]
pub struct SensingModel {
    pub matrix: DMatrix<f64>,
    /// Target vector RMS: entries of eta are N(0, noise_rms^2 / m) so that
    /// sqrt(E[||eta||^2]) = noise_rms.
    pub noise_rms: f64,
    pub outliers: OutlierSpec,
}

impl SensingModel {
    pub fn new(matrix: DMatrix<f64>, noise_rms: f64, outliers: OutlierSpec) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(CoreError::invalid("sensing matrix needs at least one row"));
        }
        if !(noise_rms.is_finite() && noise_rms >= 0.0) {
            return Err(CoreError::invalid(format!("bad noise_rms {noise_rms}")));
        }
        outliers.validate()?;
        Ok(SensingModel { matrix, noise_rms, outliers })
    }
}

/// A synthesized measurement with its full ground truth.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: DVector<f64>,
    pub x0: DVector<f64>,
    pub z0: DVector<f64>,
    pub e: DVector<f64>,
    pub eta: DVector<f64>,
    /// Support of e, sorted ascending (0-based).
    pub support: Vec<usize>,
}

/// Draw an l-sparse outlier vector from the given stream: support uniform
/// without replacement, supported magnitudes uniform in the spec's range.
pub fn make_outliers_with(
    m: usize,
    spec: &OutlierSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, Vec<usize>)> {
    spec.validate()?;
    if spec.count > m {
        return Err(CoreError::invalid(format!(
            "outlier count {} exceeds measurement count {m}",
            spec.count
        )));
    }
    let mut support: Vec<usize> = rand::seq::index::sample(rng, m, spec.count).into_vec();
    support.sort_unstable();
    let (lo, hi) = spec.magnitude_range;
    let mut e = DVector::zeros(m);
    for &i in &support {
        let mag = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let sign = match spec.sign_mode {
            SignMode::Positive => 1.0,
            SignMode::RandomSign => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        e[i] = sign * mag;
    }
    Ok((e, support))
}

/// Seeded wrapper around [`make_outliers_with`].
pub fn make_outliers(m: usize, spec: &OutlierSpec, seed: u64) -> Result<(DVector<f64>, Vec<usize>)> {
    let mut rng = seeded_rng(seed);
    make_outliers_with(m, spec, &mut rng)
}

/// Synthesize `y = M G(z0) + e + eta` with all ground truth retained.
pub fn observe(
    net: &GeneratorNet,
    model: &SensingModel,
    z0: &DVector<f64>,
    seed: u64,
) -> Result<Observation> {
    let x0 = net.forward(z0)?;
    let m = model.matrix.nrows();
    if model.matrix.ncols() != x0.len() {
        return Err(CoreError::shape(format!(
            "sensing matrix has {} columns but generator output dim is {}",
            model.matrix.ncols(),
            x0.len()
        )));
    }
    let mut rng = seeded_rng(seed);
    let (e, support) = make_outliers_with(m, &model.outliers, &mut rng)?;
    let sigma = model.noise_rms / (m as f64).sqrt();
    let eta = DVector::from_iterator(
        m,
        (0..m).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)),
    );
    let y = &model.matrix * &x0 + &e + &eta;
    Ok(Observation {
        y,
        x0,
        z0: z0.clone(),
        e,
        eta,
        support,
    })
}

/// Largest certified outlier count for an effective row count and latent
/// dimension: floor((m_effective - 1 - k) / 2).
pub fn outlier_budget(m_effective: usize, k: usize) -> Result<usize> {
    if m_effective <= k {
        return Err(CoreError::NoBudget { m_effective, k });
    }
    Ok((m_effective - 1 - k) / 2)
}

fn write_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    writeln!(out, "{name}").unwrap();
    writeln!(out, "{}", vals.join(" ")).unwrap();
}

/// Serialize an observation together with its sensing matrix as a
/// self-describing text block for experiment replay. Numbers use the same
/// shortest round-trip decimal format as weight files.
pub fn observation_to_string(matrix: &DMatrix<f64>, noise_rms: f64, obs: &Observation) -> String {
    let (m, n, k, l) = (matrix.nrows(), matrix.ncols(), obs.z0.len(), obs.support.len());
    let mut out = String::new();
    writeln!(out, "OBS v1 m={m} n={n} k={k} l={l} noise_rms={noise_rms}").unwrap();
    writeln!(out, "M").unwrap();
    for r in 0..m {
        let row: Vec<String> = (0..n).map(|c| matrix[(r, c)].to_string()).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    write_vector(&mut out, "y", &obs.y);
    write_vector(&mut out, "x0", &obs.x0);
    write_vector(&mut out, "z0", &obs.z0);
    write_vector(&mut out, "e", &obs.e);
    write_vector(&mut out, "eta", &obs.eta);
    let supp: Vec<String> = obs.support.iter().map(|i| i.to_string()).collect();
    writeln!(out, "support").unwrap();
    writeln!(out, "{}", supp.join(" ")).unwrap();
    out
}

fn expect_tag<'a>(lines: &mut impl Iterator<Item = &'a str>, tag: &str) -> Result<()> {
    match lines.next() {
        Some(line) if line.trim() == tag => Ok(()),
        other => Err(CoreError::Parse(format!(
            "expected section '{tag}', found {other:?}"
        ))),
    }
}

fn read_vector<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    tag: &str,
    len: usize,
) -> Result<DVector<f64>> {
    expect_tag(lines, tag)?;
    let line = lines
        .next()
        .ok_or_else(|| CoreError::Parse(format!("missing data for '{tag}'")))?;
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| CoreError::Parse(format!("bad value in '{tag}': {t}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != len {
        return Err(CoreError::Parse(format!(
            "'{tag}': expected {len} values, found {}",
            vals.len()
        )));
    }
    Ok(DVector::from_vec(vals))
}

/// Parse the OBS v1 format written by [`observation_to_string`].
pub fn observation_from_string(text: &str) -> Result<(DMatrix<f64>, f64, Observation)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty observation file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != "OBS" || fields[1] != "v1" {
        return Err(CoreError::Parse(format!("bad header: {header}")));
    }
    let get = |idx: usize, key: &str| -> Result<f64> {
        let (k, v) = fields[idx]
            .split_once('=')
            .ok_or_else(|| CoreError::Parse(format!("expected {key}=<value>")))?;
        if k != key {
            return Err(CoreError::Parse(format!("expected key {key}, got {k}")));
        }
        v.parse()
            .map_err(|_| CoreError::Parse(format!("bad value for {key}: {v}")))
    };
    let m = get(2, "m")? as usize;
    let n = get(3, "n")? as usize;
    let k = get(4, "k")? as usize;
    let l = get(5, "l")? as usize;
    let noise_rms = get(6, "noise_rms")?;

    expect_tag(&mut lines, "M")?;
    let mut entries = Vec::with_capacity(m * n);
    for r in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| CoreError::Parse(format!("missing matrix row {r}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| CoreError::Parse(format!("bad matrix entry: {t}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(CoreError::Parse(format!(
                "matrix row {r}: expected {n} entries, found {}",
                vals.len()
            )));
        }
        entries.extend(vals);
    }
    let matrix = DMatrix::from_row_slice(m, n, &entries);

    let y = read_vector(&mut lines, "y", m)?;
    let x0 = read_vector(&mut lines, "x0", n)?;
    let z0 = read_vector(&mut lines, "z0", k)?;
    let e = read_vector(&mut lines, "e", m)?;
    let eta = read_vector(&mut lines, "eta", m)?;
    expect_tag(&mut lines, "support")?;
    let supp_line = lines.next().unwrap_or("");
    let support: Vec<usize> = supp_line
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| CoreError::Parse(format!("bad support index: {t}")))
        })
        .collect::<Result<_>>()?;
    if support.len() != l {
        return Err(CoreError::Parse(format!(
            "expected {l} support indices, found {}",
            support.len()
        )));
    }
    Ok((matrix, noise_rms, Observation { y, x0, z0, e, eta, support }))
}

pub fn save_observation(
    path: &Path,
    matrix: &DMatrix<f64>,
    noise_rms: f64,
    obs: &Observation,
) -> Result<()> {
    fs::write(path, observation_to_string(matrix, noise_rms, obs))?;
    Ok(())
}

pub fn load_observation(path: &Path) -> Result<(DMatrix<f64>, f64, Observation)> {
    let text = fs::read_to_string(path)?;
    observation_from_string(&text)
}
