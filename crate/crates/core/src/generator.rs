//! d-layer generator networks `G: R^k -> R^n` with identity, ReLU, or
//! leaky-ReLU activations: forward evaluation, exact chain-rule Jacobians,
//! Gaussian initialization, and a plain-text weight file round-trip.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{gaussian_matrix_with, gaussian_vector_with, seeded_rng};
use crate::{CoreError, Result};

/// Default leak for leaky-ReLU nets when none is given.
pub const DEFAULT_LEAK: f64 = 0.2;

/// Element-wise activation applied after each affine stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// Leaky ReLU `x -> x (x >= 0), h*x (x < 0)` with leak `h` in (0,1).
    LeakyRelu { h: f64 },
}

impl Activation {
    pub fn leaky(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Activation::LeakyRelu { h })
        } else {
            Err(CoreError::invalid(format!("leak h must lie in (0,1), got {h}")))
        }
    }

    /// Scalar activation value.
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Identity => x,
            Activation::Relu => {
                if x >= 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { h } => {
                if x >= 0.0 {
                    x
                } else {
                    h * x
                }
            }
        }
    }

    /// Scalar derivative. At exactly 0 the right derivative (1) is used.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { h } => {
                if x >= 0.0 {
                    1.0
                } else {
                    h
                }
            }
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
        }
    }
}

/// One affine-plus-activation stage of a generator.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(CoreError::shape(format!(
                "bias length {} != weight rows {}",
                bias.len(),
                weight.nrows()
            )));
        }
        Ok(Layer { weight, bias, activation })
    }
}

/// Immutable layered generator `G: R^k -> R^n`.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    layers: Vec<Layer>,
}

impl GeneratorNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::invalid("generator needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(CoreError::shape(format!(
                    "layer {} has {} columns but layer {} has {} rows",
                    i + 1,
                    pair[1].weight.ncols(),
                    i,
                    pair[0].weight.nrows()
                )));
            }
        }
        Ok(GeneratorNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Latent dimension k.
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    /// Output dimension n.
    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// The shared activation when all layers agree, else None.
    pub fn uniform_activation(&self) -> Option<Activation> {
        let first = self.layers[0].activation;
        self.layers
            .iter()
            .all(|l| l.activation == first)
            .then_some(first)
    }

    /// Gaussian-weight net on the dimension chain `dims = [k, n1, .., n]`
    /// with zero biases. Differences G(z) - G(z0) then telescope exactly,
    /// which keeps ground-truth algebra exact in experiments.
    pub fn init_gaussian(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::init_gaussian_impl(dims, activation, seed, false)
    }

    /// Same as [`init_gaussian`](Self::init_gaussian) but with standard
    /// Gaussian biases, for robustness tests.
    pub fn init_gaussian_biased(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::init_gaussian_impl(dims, activation, seed, true)
    }

    fn init_gaussian_impl(
        dims: &[usize],
        activation: Activation,
        seed: u64,
        gaussian_biases: bool,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(CoreError::invalid(
                "dims needs at least an input and an output entry",
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::invalid("all layer dimensions must be >= 1"));
        }
        let mut rng: ChaCha8Rng = seeded_rng(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let weight = gaussian_matrix_with(rows, cols, &mut rng);
            let bias = if gaussian_biases {
                gaussian_vector_with(rows, &mut rng)
            } else {
                DVector::zeros(rows)
            };
            layers.push(Layer { weight, bias, activation });
        }
        GeneratorNet::new(layers)
    }

    /// Evaluate `G(z)`: affine then activation, layer by layer, with the
    /// activation applied after the final affine stage as well.
    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(z)?;
        let mut v = z.clone();
        for layer in &self.layers {
            let pre = &layer.weight * v + &layer.bias;
            v = pre.map(|x| layer.activation.apply(x));
        }
        Ok(v)
    }

    /// Exact Jacobian of `G` at `z`: the chain-rule product
    /// `D_d W^(d) ... D_1 W^(1)` with `D_i` the diagonal of activation
    /// derivatives at layer i's pre-activation.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_input(z)?;
        let mut v = z.clone();
        let mut jac = DMatrix::<f64>::identity(self.input_dim(), self.input_dim());
        for layer in &self.layers {
            let pre = &layer.weight * v + &layer.bias;
            jac = &layer.weight * jac;
            for (i, x) in pre.iter().enumerate() {
                let d = layer.activation.derivative(*x);
                jac.row_mut(i).scale_mut(d);
            }
            v = pre.map(|x| layer.activation.apply(x));
        }
        Ok(jac)
    }

    /// Product `W = W^(d) ... W^(1)` of all layer weights, ignoring biases.
    /// Only meaningful for identity-activation nets, where `G(z) - G(0) = Wz`.
    pub fn composite_weight(&self) -> Result<DMatrix<f64>> {
        if self
            .layers
            .iter()
            .any(|l| l.activation != Activation::Identity)
        {
            return Err(CoreError::Unsupported(
                "composite_weight requires identity activation on every layer".into(),
            ));
        }
        let mut w = self.layers[0].weight.clone();
        for layer in &self.layers[1..] {
            w = &layer.weight * w;
        }
        Ok(w)
    }

    fn check_input(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(CoreError::shape(format!(
                "input length {} != latent dim {}",
                z.len(),
                self.input_dim()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("input contains non-finite entries"));
        }
        Ok(())
    }

    /// Serialize to the GENREC v1 plain-text weight format. Numbers are
    /// written in shortest round-trip decimal, so load-then-save is
    /// byte-identical.
    pub fn to_genrec_string(&self) -> Result<String> {
        let act = self.uniform_activation().ok_or_else(|| {
            CoreError::Unsupported("weight files require a uniform activation".into())
        })?;
        let h = match act {
            Activation::LeakyRelu { h } => h,
            _ => 0.0,
        };
        let mut out = String::new();
        writeln!(out, "GENREC v1 d={} act={} h={}", self.depth(), act.tag(), h).unwrap();
        for (i, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = (layer.weight.nrows(), layer.weight.ncols());
            writeln!(out, "layer {i} {rows} {cols}").unwrap();
            for r in 0..rows {
                let row: Vec<String> = (0..cols).map(|c| layer.weight[(r, c)].to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
            let bias: Vec<String> = layer.bias.iter().map(|b| b.to_string()).collect();
            writeln!(out, "{}", bias.join(" ")).unwrap();
        }
        Ok(out)
    }

    /// Parse the GENREC v1 weight format, validating the dimension chain.
    pub fn from_genrec_string(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Parse("empty weight file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "GENREC" || fields[1] != "v1" {
            return Err(CoreError::Parse(format!("bad header: {header}")));
        }
        let depth: usize = parse_field(fields[2], "d")?;
        let act_tag: String = parse_field(fields[3], "act")?;
        let h: f64 = parse_field(fields[4], "h")?;
        let activation = match act_tag.as_str() {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::leaky(h)?,
            other => return Err(CoreError::Parse(format!("unknown activation: {other}"))),
        };

        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let head = lines
                .next()
                .ok_or_else(|| CoreError::Parse(format!("missing header for layer {i}")))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "layer" {
                return Err(CoreError::Parse(format!("bad layer header: {head}")));
            }
            let idx: usize = parse_num(parts[1], "layer index")?;
            if idx != i {
                return Err(CoreError::Parse(format!("expected layer {i}, found {idx}")));
            }
            let rows: usize = parse_num(parts[2], "rows")?;
            let cols: usize = parse_num(parts[3], "cols")?;
            let mut entries = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let line = lines.next().ok_or_else(|| {
                    CoreError::Parse(format!("layer {i}: missing weight row {r}"))
                })?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| parse_num(t, "weight entry"))
                    .collect::<Result<_>>()?;
                if vals.len() != cols {
                    return Err(CoreError::Parse(format!(
                        "layer {i} row {r}: expected {cols} entries, found {}",
                        vals.len()
                    )));
                }
                entries.extend(vals);
            }
            let weight = DMatrix::from_row_slice(rows, cols, &entries);
            let bias_line = lines
                .next()
                .ok_or_else(|| CoreError::Parse(format!("layer {i}: missing bias line")))?;
            let bias: Vec<f64> = bias_line
                .split_whitespace()
                .map(|t| parse_num(t, "bias entry"))
                .collect::<Result<_>>()?;
            if bias.len() != rows {
                return Err(CoreError::Parse(format!(
                    "layer {i}: expected {rows} bias values, found {}",
                    bias.len()
                )));
            }
            if let Some(prev) = layers.last() {
                let prev: &Layer = prev;
                if cols != prev.weight.nrows() {
                    return Err(CoreError::Parse(format!(
                        "layer {i}: {cols} columns do not chain with previous layer's {} rows",
                        prev.weight.nrows()
                    )));
                }
            }
            layers.push(Layer {
                weight,
                bias: DVector::from_vec(bias),
                activation,
            });
        }
        GeneratorNet::new(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_genrec_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_genrec_string(&text)
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, key: &str) -> Result<T> {
    let (k, v) = field
        .split_once('=')
        .ok_or_else(|| CoreError::Parse(format!("expected {key}=<value>, got {field}")))?;
    if k != key {
        return Err(CoreError::Parse(format!("expected key {key}, got {k}")));
    }
    v.parse()
        .map_err(|_| CoreError::Parse(format!("bad value for {key}: {v}")))
}

fn parse_num<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| CoreError::Parse(format!("bad {what}: {token}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_vector, numerical_rank};
    use approx::assert_relative_eq;

    fn single_layer(w: DMatrix<f64>, act: Activation) -> GeneratorNet {
        let rows = w.nrows();
        GeneratorNet::new(vec![Layer::new(w, DVector::zeros(rows), act).unwrap()]).unwrap()
    }

    #[test]
    fn forward_identity_single_layer() {
        let net = single_layer(DMatrix::identity(2, 2), Activation::Identity);
        let out = net.forward(&DVector::from_row_slice(&[3.0, -2.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -2.0]);
    }

    #[test]
    fn forward_leaky_relu_per_coordinate() {
        let w = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let net = single_layer(w, Activation::leaky(0.5).unwrap());
        let out = net.forward(&DVector::from_row_slice(&[2.0])).unwrap();
        assert_eq!(out.as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn forward_two_layer_identity_matches_composite() {
        let l1 = Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), Activation::Identity).unwrap();
        let l2 = Layer::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::zeros(1),
            Activation::Identity,
        )
        .unwrap();
        let net = GeneratorNet::new(vec![l1, l2]).unwrap();
        let out = net.forward(&DVector::from_row_slice(&[1.0, 2.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0]);
    }

    #[test]
    fn jacobian_of_identity_net_is_composite_weight() {
        let net = GeneratorNet::init_gaussian(&[3, 6, 4], Activation::Identity, 5).unwrap();
        let w = net.composite_weight().unwrap();
        for seed in 0..3 {
            let z = gaussian_vector(3, seed);
            let j = net.jacobian(&z).unwrap();
            assert_relative_eq!(j, w, epsilon = 1e-14);
        }
    }

    #[test]
    fn relu_jacobian_zero_rows_on_negative_preactivation() {
        let w = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let net = single_layer(w, Activation::Relu);
        // z = 2: second pre-activation is -2 < 0, so its Jacobian row is zero.
        let j = net.jacobian(&DVector::from_row_slice(&[2.0])).unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 0)], 0.0);
    }

    /// Independent oracle: central finite differences on the forward map.
    fn finite_difference_jacobian(net: &GeneratorNet, z: &DVector<f64>, step: f64) -> DMatrix<f64> {
        let n = net.output_dim();
        let k = net.input_dim();
        let mut j = DMatrix::zeros(n, k);
        for col in 0..k {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[col] += step;
            zm[col] -= step;
            let diff = (net.forward(&zp).unwrap() - net.forward(&zm).unwrap()) / (2.0 * step);
            j.set_column(col, &diff);
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = GeneratorNet::init_gaussian(&[4, 8, 6], Activation::leaky(0.3).unwrap(), 9).unwrap();
        for seed in 100..105 {
            let z = gaussian_vector(4, seed);
            let j = net.jacobian(&z).unwrap();
            let fd = finite_difference_jacobian(&net, &z, 1e-6);
            let scale = j.amax().max(1.0);
            assert!((j - fd).amax() / scale <= 1e-5);
        }
    }

    #[test]
    fn init_gaussian_is_deterministic() {
        let a = GeneratorNet::init_gaussian(&[2, 5, 10], Activation::Identity, 3).unwrap();
        let b = GeneratorNet::init_gaussian(&[2, 5, 10], Activation::Identity, 3).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weight.as_slice(), lb.weight.as_slice());
            assert_eq!(la.bias.as_slice(), lb.bias.as_slice());
        }
    }

    #[test]
    fn init_gaussian_composite_has_full_rank() {
        let net = GeneratorNet::init_gaussian(&[5, 20, 40], Activation::Identity, 17).unwrap();
        let w = net.composite_weight().unwrap();
        assert_eq!(numerical_rank(&w, None).unwrap().rank, 5);
    }

    #[test]
    fn init_gaussian_rejects_short_dims() {
        assert!(GeneratorNet::init_gaussian(&[3], Activation::Identity, 0).is_err());
        assert!(GeneratorNet::init_gaussian(&[], Activation::Identity, 0).is_err());
    }

    #[test]
    fn composite_weight_examples() {
        let net = single_layer(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), Activation::Identity);
        assert_eq!(net.composite_weight().unwrap(), net.layers()[0].weight);

        let l1 = Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), Activation::Identity).unwrap();
        let l2 = Layer::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            DVector::zeros(2),
            Activation::Identity,
        )
        .unwrap();
        let net = GeneratorNet::new(vec![l1, l2]).unwrap();
        let w = net.composite_weight().unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn composite_weight_matches_forward_difference() {
        let net = GeneratorNet::init_gaussian(&[3, 7, 7, 5], Activation::Identity, 21).unwrap();
        let w = net.composite_weight().unwrap();
        let zero = DVector::zeros(3);
        for seed in 0..5 {
            let z = gaussian_vector(3, seed);
            let lhs = net.forward(&z).unwrap() - net.forward(&zero).unwrap();
            assert_relative_eq!(lhs, &w * &z, epsilon = 1e-10);
        }
    }

    #[test]
    fn composite_weight_rejects_nonlinear_nets() {
        let net = GeneratorNet::init_gaussian(&[2, 4], Activation::Relu, 0).unwrap();
        assert!(matches!(net.composite_weight(), Err(CoreError::Unsupported(_))));
    }

    #[test]
    fn genrec_round_trip_is_byte_identical() {
        let net =
            GeneratorNet::init_gaussian_biased(&[2, 5, 3], Activation::leaky(0.2).unwrap(), 8).unwrap();
        let text = net.to_genrec_string().unwrap();
        let reloaded = GeneratorNet::from_genrec_string(&text).unwrap();
        assert_eq!(reloaded.to_genrec_string().unwrap(), text);
        // And the reloaded net reproduces outputs bit-identically.
        let z = gaussian_vector(2, 1);
        assert_eq!(
            net.forward(&z).unwrap().as_slice(),
            reloaded.forward(&z).unwrap().as_slice()
        );
    }

    #[test]
    fn genrec_rejects_broken_dimension_chain() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 3], Activation::Identity, 8).unwrap();
        let text = net.to_genrec_string().unwrap();
        // Corrupt the second layer header's column count.
        let bad = text.replace("layer 1 3 4", "layer 1 3 5");
        let err = GeneratorNet::from_genrec_string(&bad).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }
}
