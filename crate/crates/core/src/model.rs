//! Fully connected network `(x, y) -> (u1, u2, p)` with jet propagation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{jet_activation, jet_dense, Activation, Jet2, Plain, Recorder};
use crate::error::{contract, Error, Result};
use crate::geometry::Point2;
use crate::physics::FieldJet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for MlpConfig {
    /// Desk-scale network, two hidden layers of 16 GELU units.
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_layers: 2,
            hidden_width: 16,
            output_dim: 3,
            activation: Activation::Gelu,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn new(hidden_layers: usize, hidden_width: usize, seed: u64) -> Self {
        Self {
            hidden_layers,
            hidden_width,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: format!("model.{field}"),
                reason: reason.into(),
            })
        };
        if self.input_dim != 2 {
            return bad("input_dim", "must be 2");
        }
        if self.output_dim != 3 {
            return bad("output_dim", "must be 3 (u1, u2, p)");
        }
        if self.hidden_layers == 0 {
            return bad("hidden_layers", "must be >= 1");
        }
        if self.hidden_width == 0 {
            return bad("hidden_width", "must be >= 1");
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter array. Per layer: weights `(fan_out x fan_in)` row-major,
/// then the `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Short content hash of the exact bit patterns.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.0)
    }
}

pub fn fingerprint(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(config: &MlpConfig) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.num_params());
    for (fan_in, fan_out) in config.layer_shapes() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        out.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
        out.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector(out)
}

fn check_len(config: &MlpConfig, n: usize) -> Result<()> {
    let want = config.num_params();
    if n != want {
        return Err(contract(format!(
            "parameter vector has {n} entries, model needs {want}"
        )));
    }
    Ok(())
}

/// Jet forward pass: seeds x and y, returns the three output jets.
///
/// `params` may be plain values or tape variables; in the latter case every
/// output component is differentiable with respect to them.
pub fn forward_jet<R: Recorder>(
    rec: &mut R,
    params: &[R::Scalar],
    point: Point2,
    config: &MlpConfig,
) -> Result<FieldJet<R::Scalar>> {
    check_len(config, params.len())?;
    let seeds = [Jet2::seed_x(point.x).lift(rec), Jet2::seed_y(point.y).lift(rec)];
    let mut h: [Vec<R::Scalar>; 6] = std::array::from_fn(|c| seeds.iter().map(|j| j.components()[c]).collect());
    let shapes = config.layer_shapes();
    let last = shapes.len() - 1;
    let mut offset = 0;
    let mut out = Vec::new();
    for (layer, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let z = jet_dense(rec, &h, weights, biases);
        if layer == last {
            out = z;
        } else {
            let a: Vec<_> = z.into_iter().map(|j| jet_activation(rec, j, config.activation)).collect();
            h = std::array::from_fn(|c| a.iter().map(|j| j.components()[c]).collect());
        }
    }
    Ok(FieldJet {
        u1: out[0],
        u2: out[1],
        p: out[2],
    })
}

/// Value-only forward pass `[u1, u2, p]`.
pub fn forward_value<R: Recorder>(
    rec: &mut R,
    params: &[R::Scalar],
    point: Point2,
    config: &MlpConfig,
) -> Result<[R::Scalar; 3]> {
    check_len(config, params.len())?;
    let mut h = vec![rec.constant(point.x), rec.constant(point.y)];
    let shapes = config.layer_shapes();
    let last = shapes.len() - 1;
    let mut offset = 0;
    for (layer, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = offset + o * fan_in;
            let bias = params[offset + fan_in * fan_out + o];
            let z = rec.affine(&params[row..row + fan_in], &h, Some(bias));
            next.push(if layer == last || config.activation == Activation::Identity {
                z
            } else {
                let [g, g1, _, _] = config.activation.derivatives(rec.value(z));
                rec.node(g, [(z, g1)])
            });
        }
        offset += fan_in * fan_out + fan_out;
        h = next;
    }
    Ok([h[0], h[1], h[2]])
}

/// Plain `[u1, u2, p]` at a point.
pub fn predict(params: &ParamVector, point: Point2, config: &MlpConfig) -> Result<[f64; 3]> {
    forward_value(&mut Plain, params.as_slice(), point, config)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Training phase a checkpoint was written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Adam,
    Lbfgs,
    Final,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
            Phase::Final => "final",
        }
    }
}

/// Versioned parameter snapshot. Parameters are stored as shortest
/// round-trip decimal strings so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: MlpConfig,
    pub tag: String,
    pub phase: Phase,
    pub step: usize,
    pub fingerprint: String,
    pub params: Vec<String>,
}

impl Checkpoint {
    pub fn new(model: MlpConfig, params: &ParamVector, tag: &str, phase: Phase, step: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model,
            tag: tag.to_string(),
            phase,
            step,
            fingerprint: params.fingerprint(),
            params: params.0.iter().map(|v| format!("{v:?}")).collect(),
        }
    }

    /// Parses and verifies the parameter array against model shape and fingerprint.
    pub fn params(&self) -> Result<ParamVector> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let values = self
            .params
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Schema(format!("parameter `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        check_len(&self.model, values.len())?;
        let p = ParamVector(values);
        if p.fingerprint() != self.fingerprint {
            return Err(Error::StaleHessian {
                expected: self.fingerprint.clone(),
                found: p.fingerprint(),
            });
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn parameter_count() {
        assert_eq!(MlpConfig::new(1, 8, 0).num_params(), 51);
        assert_eq!(MlpConfig::new(2, 16, 0).num_params(), 371);
        assert_eq!(MlpConfig::new(4, 64, 0).num_params(), 12_867);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = MlpConfig::new(2, 16, 42);
        let a = init_params(&cfg);
        assert_eq!(a, init_params(&cfg));
        assert_ne!(a, init_params(&MlpConfig::new(2, 16, 43)));
        let mut offset = 0;
        for (i, o) in cfg.layer_shapes() {
            let bound = (6.0 / (i + o) as f64).sqrt();
            assert!(a.0[offset..offset + i * o].iter().all(|w| w.abs() <= bound));
            assert!(a.0[offset + i * o..offset + i * o + o].iter().all(|b| *b == 0.0));
            offset += i * o + o;
        }
    }

    #[test]
    fn zero_params_give_zero_jets() {
        let cfg = MlpConfig::new(2, 8, 0);
        let p = ParamVector::zeros(cfg.num_params());
        let f = forward_jet(&mut Plain, p.as_slice(), Point2::new(0.3, 0.1), &cfg).unwrap();
        for j in [f.u1, f.u2, f.p] {
            assert_eq!(j, Jet2::constant(0.0));
        }
    }

    #[test]
    fn identity_network_reproduces_seed() {
        // 2 -> 2 -> 3 with identity activation; u1 = x, u2 = y, p = x + y
        let cfg = MlpConfig {
            hidden_layers: 1,
            hidden_width: 2,
            activation: Activation::Identity,
            ..MlpConfig::default()
        };
        let mut p = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        p.extend([1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let pt = Point2::new(0.7, 0.2);
        let f = forward_jet(&mut Plain, &p, pt, &cfg).unwrap();
        assert_eq!(f.u1, Jet2::seed_x(0.7));
        assert_eq!(f.u2, Jet2::seed_y(0.2));
        assert_eq!(f.p.components(), [0.7 + 0.2, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let cfg = MlpConfig::new(1, 8, 0);
        assert!(forward_jet(&mut Plain, &[0.0; 50], Point2::new(0.1, 0.1), &cfg).is_err());
        assert!(forward_value(&mut Plain, &[0.0; 52], Point2::new(0.1, 0.1), &cfg).is_err());
    }

    #[test]
    fn jet_value_matches_plain_forward() {
        let cfg = MlpConfig::new(2, 16, 7);
        let p = init_params(&cfg);
        for pt in [Point2::new(0.1, 0.3), Point2::new(1.7, 0.05)] {
            let f = forward_jet(&mut Plain, p.as_slice(), pt, &cfg).unwrap();
            let v = predict(&p, pt, &cfg).unwrap();
            assert_eq!([f.u1.v, f.u2.v, f.p.v], v);
        }
    }

    #[test]
    fn taped_forward_matches_plain() {
        let cfg = MlpConfig::new(1, 8, 3);
        let p = init_params(&cfg);
        let pt = Point2::new(0.4, 0.2);
        let mut tape = Tape::new();
        let vars = tape.leaves(p.as_slice());
        let f = forward_jet(&mut tape, &vars, pt, &cfg).unwrap();
        let plain = forward_jet(&mut Plain, p.as_slice(), pt, &cfg).unwrap();
        assert_eq!(f.u1.map(|s| tape.value(s)), plain.u1);
        assert_eq!(f.p.map(|s| tape.value(s)), plain.p);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = MlpConfig::new(2, 16, 11);
        let mut p = init_params(&cfg);
        p.0[0] = -0.0;
        p.0[1] = 1e-310;
        p.0[2] = 0.1 + 0.2;
        let ck = Checkpoint::new(cfg, &p, "good", Phase::Final, 9);
        let back: Checkpoint = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        let q = back.params().unwrap();
        assert!(p.0.iter().zip(&q.0).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn tampered_checkpoint_fails_fingerprint() {
        let cfg = MlpConfig::new(1, 8, 0);
        let p = init_params(&cfg);
        let mut ck = Checkpoint::new(cfg, &p, "x", Phase::Init, 0);
        ck.params[3] = "0.5".into();
        assert!(matches!(ck.params(), Err(Error::StaleHessian { .. })));
    }
}
