//! Surrogate architectures and the model handle shared by training,
//! inference and checkpoints.

pub mod fno;
pub mod forwardnet;
pub mod input;
pub mod pfno;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchStats, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use fno::{fno_forward, fourier_layer, init_fno, Activation, FnoConfig, SpectralRoute};
pub use forwardnet::{forwardnet_forward, init_forwardnet, ForwardNetConfig};
pub use input::{assemble_input, InputLayout, NormStats};
pub use pfno::{init_pfno, pfno_forward, width_for_frequency, PfnoConfig, WidthRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "kebab-case")]
pub enum ModelConfig {
    Fno(FnoConfig),
    Pfno(PfnoConfig),
    #[serde(rename = "forwardnet")]
    ForwardNet(ForwardNetConfig),
}

impl ModelConfig {
    pub fn arch(&self) -> &'static str {
        match self {
            ModelConfig::Fno(_) => "fno",
            ModelConfig::Pfno(_) => "pfno",
            ModelConfig::ForwardNet(_) => "forwardnet",
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            ModelConfig::Fno(c) => c.in_channels,
            ModelConfig::Pfno(c) => c.in_channels(),
            ModelConfig::ForwardNet(c) => c.in_channels,
        }
    }

    pub fn layout(&self) -> Result<InputLayout> {
        InputLayout::from_channels(self.in_channels())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Fno(c) => c.validate(),
            ModelConfig::Pfno(c) => c.validate(),
            ModelConfig::ForwardNet(c) => c.validate(),
        }
    }

    /// Fresh parameters and non-trainable buffers.
    pub fn init<T: Real>(&self, seed: u64) -> Result<(ParamStore<T>, ParamStore<T>)> {
        self.validate()?;
        Ok(match self {
            ModelConfig::Fno(c) => (init_fno(c, seed, ""), ParamStore::new()),
            ModelConfig::Pfno(c) => (init_pfno(c, seed)?, ParamStore::new()),
            ModelConfig::ForwardNet(c) => init_forwardnet(c, seed),
        })
    }
}

/// Network output and, for batch-normalized nets in training mode, the
/// batch statistics to fold into the running buffers.
pub struct GraphOutput<T> {
    pub out: Var,
    pub stats: Vec<(String, BatchStats<T>)>,
}

/// Builds the forward graph. `buffers = None` selects training mode.
pub fn forward_graph<T: Real>(
    tape: &mut Tape<'_, T>,
    config: &ModelConfig,
    store: &ParamStore<T>,
    vars: &[Var],
    buffers: Option<&ParamStore<T>>,
    x: Var,
    freqs: &[f64],
) -> Result<GraphOutput<T>> {
    match config {
        ModelConfig::Fno(c) => Ok(GraphOutput { out: fno_forward(tape, c, store, vars, x, "")?, stats: Vec::new() }),
        ModelConfig::Pfno(c) => Ok(GraphOutput { out: pfno_forward(tape, c, store, vars, x, freqs)?, stats: Vec::new() }),
        ModelConfig::ForwardNet(c) => {
            let o = forwardnet_forward(tape, c, store, vars, buffers, x)?;
            Ok(GraphOutput { out: o.out, stats: o.stats })
        }
    }
}

/// Inference-mode forward pass on a fresh tape.
pub fn infer(config: &ModelConfig, params: &ParamStore<f32>, buffers: &ParamStore<f32>, x: &[f32], shape: [usize; 4], freqs: &[f64]) -> Result<Vec<f32>> {
    if shape[1] != config.in_channels() {
        return Err(Error::Shape(format!("input has {} channels, model expects {}", shape[1], config.in_channels())));
    }
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let xv = tape.constant_ref(x, &shape)?;
    let buffers = matches!(config, ModelConfig::ForwardNet(_)).then_some(buffers);
    let out = forward_graph(&mut tape, config, params, &vars, buffers, xv, freqs)?;
    Ok(tape.value(out.out).to_vec())
}

/// A constructed (possibly trained) surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHandle {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub buffers: ParamStore<f32>,
    pub norm: NormStats,
    pub seed: u64,
    /// Hex digest of the loss history that produced these weights.
    pub history_digest: String,
}

impl ModelHandle {
    pub fn new(config: ModelConfig, norm: NormStats, seed: u64) -> Result<Self> {
        let (params, buffers) = config.init(seed)?;
        if norm.mean.len() != config.in_channels() {
            return Err(Error::Shape(format!("normalization has {} channels, model expects {}", norm.mean.len(), config.in_channels())));
        }
        Ok(Self { config, params, buffers, norm, seed, history_digest: String::new() })
    }

    pub fn arch(&self) -> &'static str {
        self.config.arch()
    }

    pub fn layout(&self) -> Result<InputLayout> {
        self.config.layout()
    }

    /// Checks that the parameter set matches the configuration.
    pub fn check_params(&self) -> Result<()> {
        let (p, b) = self.config.init::<f32>(0)?;
        p.check_layout(&self.params)?;
        b.check_layout(&self.buffers)?;
        if self.params.len() != p.len() {
            return Err(Error::Shape(format!("{} parameters, config declares {}", self.params.len(), p.len())));
        }
        Ok(())
    }

    /// Network output in training units for a normalized input `[B, C, H, W]`.
    pub fn predict_normalized(&self, x: &[f32], shape: [usize; 4], freqs: &[f64]) -> Result<Vec<f32>> {
        infer(&self.config, &self.params, &self.buffers, x, shape, freqs)
    }

    /// Wavefield prediction `[B, 2, H, W]` (real, imaginary) in physical units.
    pub fn predict(&self, x: &[f32], shape: [usize; 4], freqs: &[f64]) -> Result<Vec<f32>> {
        let s = self.norm.label_scale as f32;
        let mut y = self.predict_normalized(x, shape, freqs)?;
        y.iter_mut().for_each(|v| *v *= s);
        Ok(y)
    }

    pub fn param_tensor(&self, name: &str) -> Option<Tensor<f32>> {
        self.params.index(name).map(|i| self.params.tensor(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_identical_outputs() {
        let cfg = FnoConfig { layers: 2, modes: 3, width: 4, in_channels: 3, out_channels: 2, head_width: 8, activation: Activation::Gelu };
        let m = ModelHandle::new(ModelConfig::Fno(cfg), NormStats::identity(3), 1).unwrap();
        let one: Vec<f32> = (0..3 * 64).map(|i| (i as f32 * 0.1).cos()).collect();
        let mut two = one.clone();
        two.extend_from_slice(&one);
        let y = m.predict(&two, [2, 3, 8, 8], &[]).unwrap();
        assert_eq!(y[..128], y[128..]);
        m.check_params().unwrap();
    }

    #[test]
    fn config_serializes_with_arch_tag() {
        let c = ModelConfig::Pfno(PfnoConfig::new(vec![10.0, 30.0]));
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"arch\":\"pfno\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        let f = serde_json::to_string(&ModelConfig::ForwardNet(ForwardNetConfig::default())).unwrap();
        assert!(f.contains("\"arch\":\"forwardnet\""));
    }
}
