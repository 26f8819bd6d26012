use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KernelError;
use crate::frontend::Caps;

/// Which input channels feed the code encoder: code tokens, function-name
/// words, API calls and the dependency graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modalities {
    pub tokens: bool,
    pub name: bool,
    pub api: bool,
    pub graph: bool,
}

impl Modalities {
    pub const ALL: Modalities = Modalities { tokens: true, name: true, api: true, graph: true };
    pub const TOKENS_ONLY: Modalities = Modalities { tokens: true, name: false, api: false, graph: false };

    pub fn any(&self) -> bool {
        self.tokens || self.name || self.api || self.graph
    }
}

impl Default for Modalities {
    fn default() -> Self {
        Modalities::ALL
    }
}

impl FromStr for Modalities {
    type Err = KernelError;

    /// Parses a comma-separated subset of `T,F,A,G`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut m = Modalities { tokens: false, name: false, api: false, graph: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "T" => m.tokens = true,
                "F" => m.name = true,
                "A" => m.api = true,
                "G" => m.graph = true,
                other => return Err(KernelError::Config(format!("unknown modality `{other}` (expected T, F, A or G)"))),
            }
        }
        if !m.any() {
            return Err(KernelError::Config("at least one modality must be enabled".into()));
        }
        Ok(m)
    }
}

impl fmt::Display for Modalities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.tokens, "T"), (self.name, "F"), (self.api, "A"), (self.graph, "G")]
            .into_iter()
            .filter_map(|(on, s)| on.then_some(s))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Model dimensions and hyperparameters shared by all encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token and node embedding width.
    pub dim: usize,
    /// Per-head attention width; `heads · head_dim` must equal `dim`.
    pub head_dim: usize,
    pub heads: usize,
    pub graph_heads: usize,
    pub out_dim: usize,
    pub margin: f64,
    pub caps: Caps,
    /// Node slots in the graph readout.
    pub max_nodes: usize,
    /// Graph attention propagation rounds.
    pub hops: usize,
    pub modalities: Modalities,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            head_dim: 8,
            heads: 8,
            graph_heads: 8,
            out_dim: 768,
            margin: 0.05,
            caps: Caps::default(),
            max_nodes: 32,
            hops: 1,
            modalities: Modalities::ALL,
        }
    }
}

impl ModelConfig {
    /// Builds a config with `head_dim = dim / heads`.
    pub fn with_dims(dim: usize, out_dim: usize, heads: usize, graph_heads: usize) -> Result<Self, KernelError> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(KernelError::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        let cfg = ModelConfig { dim, head_dim: dim / heads, heads, graph_heads, out_dim, ..ModelConfig::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = [
            ("dim", self.dim),
            ("head_dim", self.head_dim),
            ("heads", self.heads),
            ("graph_heads", self.graph_heads),
            ("out_dim", self.out_dim),
            ("max_nodes", self.max_nodes),
            ("hops", self.hops),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(KernelError::Config(format!("{name} must be positive")));
        }
        if self.heads * self.head_dim != self.dim {
            return Err(KernelError::Config(format!(
                "heads × head_dim = {} must equal dim = {}",
                self.heads * self.head_dim,
                self.dim
            )));
        }
        if !self.dim.is_multiple_of(2) {
            return Err(KernelError::Config(format!("dim must be even for positional encoding, got {}", self.dim)));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(KernelError::Config("margin must be non-negative".into()));
        }
        if !self.modalities.any() {
            return Err(KernelError::Config("at least one modality must be enabled".into()));
        }
        Ok(())
    }
}
