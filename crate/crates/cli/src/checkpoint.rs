//! JSON checkpoints. Parameters are written as decimal text with 17
//! significant digits, which reproduces every `f64` bit-exactly on load.

use std::fmt::Write as _;
use std::path::Path;

use orthowgan::autodiff::{Activation, Layer, MlpParams};
use orthowgan::linalg::Matrix;
use orthowgan::wgan::{DatasetSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub data: DatasetSpec,
    pub critic: MlpParams,
    pub generator: MlpParams,
    /// Completed generator iterations.
    pub iter: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    format_version: u32,
    scheme: String,
    seed: u64,
    iter: usize,
    config: TrainConfig,
    data: DatasetSpec,
    critic: NetworkJson,
    generator: NetworkJson,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    dims: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    rows: usize,
    cols: usize,
    weight: Box<RawValue>,
    bias: Box<RawValue>,
}

/// `[v0,v1,...]` with 17 significant digits per value.
fn decimal_array(values: &[f64]) -> Result<Box<RawValue>, String> {
    let mut s = String::with_capacity(values.len() * 25 + 2);
    s.push('[');
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(format!("non-finite parameter {v} cannot be stored"));
        }
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v:.16e}").expect("writing to a String");
    }
    s.push(']');
    RawValue::from_string(s).map_err(|e| e.to_string())
}

fn network_to_json(net: &MlpParams) -> Result<NetworkJson, String> {
    let layers = net
        .layers
        .iter()
        .map(|l| {
            Ok(LayerJson {
                rows: l.weight.rows(),
                cols: l.weight.cols(),
                weight: decimal_array(l.weight.data())?,
                bias: decimal_array(&l.bias)?,
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(NetworkJson {
        dims: net.dims(),
        hidden_activation: net.hidden_activation,
        output_activation: net.output_activation,
        layers,
    })
}

fn network_from_json(n: NetworkJson) -> Result<MlpParams, String> {
    let mut layers = Vec::with_capacity(n.layers.len());
    for (i, l) in n.layers.into_iter().enumerate() {
        let weight: Vec<f64> = serde_json::from_str(l.weight.get()).map_err(|e| format!("layer {i} weight: {e}"))?;
        let bias: Vec<f64> = serde_json::from_str(l.bias.get()).map_err(|e| format!("layer {i} bias: {e}"))?;
        let weight = Matrix::new(l.rows, l.cols, weight).map_err(|e| format!("layer {i}: {e}"))?;
        layers.push(Layer { weight, bias });
    }
    let net = MlpParams::with_activations(layers, n.hidden_activation, n.output_activation).map_err(|e| e.to_string())?;
    if net.dims() != n.dims {
        return Err(format!("declared dims {:?} do not match layers {:?}", n.dims, net.dims()));
    }
    Ok(net)
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, String> {
        let doc = CheckpointJson {
            format_version: FORMAT_VERSION,
            scheme: self.config.scheme.name().to_string(),
            seed: self.config.seed,
            iter: self.iter,
            config: self.config.clone(),
            data: self.data,
            critic: network_to_json(&self.critic)?,
            generator: network_to_json(&self.generator)?,
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let doc: CheckpointJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {} (expected {FORMAT_VERSION})", doc.format_version));
        }
        if doc.scheme != doc.config.scheme.name() {
            return Err(format!("scheme '{}' disagrees with config scheme '{}'", doc.scheme, doc.config.scheme));
        }
        if doc.seed != doc.config.seed {
            return Err(format!("seed {} disagrees with config seed {}", doc.seed, doc.config.seed));
        }
        let critic = network_from_json(doc.critic).map_err(|e| format!("critic: {e}"))?;
        let generator = network_from_json(doc.generator).map_err(|e| format!("generator: {e}"))?;
        if critic.out_dim() != 1 {
            return Err(format!("critic must have one output, has {}", critic.out_dim()));
        }
        if critic.in_dim() != generator.out_dim() {
            return Err(format!(
                "critic input dim {} does not match generator output dim {}",
                critic.in_dim(),
                generator.out_dim()
            ));
        }
        Ok(Self {
            config: doc.config,
            data: doc.data,
            critic,
            generator,
            iter: doc.iter,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = self.to_json().map_err(|e| CliError::format(path, e))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::format(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthowgan::wgan::Scheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut config = TrainConfig::for_scheme(Scheme::Proposed);
        config.hidden_width = 8;
        config.seed = 3;
        Checkpoint {
            critic: MlpParams::init_normal(&config.critic_dims(2), &mut rng),
            generator: MlpParams::init_uniform(&config.generator_dims(2), &mut rng),
            config,
            data: DatasetSpec::spiral(),
            iter: 42,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = sample();
        c.critic.layers[0].weight[(0, 0)] = f64::MIN_POSITIVE;
        c.critic.layers[0].weight[(1, 0)] = -0.1 - 0.2;
        c.critic.layers[0].bias[0] = 5e-324;
        c.generator.layers[0].bias[0] = f64::MAX;
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.critic.layers.iter().zip(&c.critic.layers) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        let text = sample().to_json().unwrap();
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("\"scheme\": \"proposed\""));
        let raw = decimal_array(&[0.1, -2.0]).unwrap();
        assert_eq!(raw.get(), "[1.0000000000000001e-1,-2.0000000000000000e0]");
    }

    #[test]
    fn non_finite_parameters_are_refused() {
        let mut c = sample();
        c.generator.layers[1].weight[(0, 0)] = f64::NAN;
        assert!(c.to_json().unwrap_err().contains("non-finite"));
    }

    #[test]
    fn inconsistent_documents_are_rejected() {
        let text = sample().to_json().unwrap();
        let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(Checkpoint::from_json(&bumped).unwrap_err().contains("format_version"));
        let renamed = text.replacen("\"scheme\": \"proposed\"", "\"scheme\": \"gp\"", 1);
        assert!(Checkpoint::from_json(&renamed).is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
