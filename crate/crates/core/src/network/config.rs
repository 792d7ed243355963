//! Network architecture description.
//!
//! A [`NetworkConfig`] fixes everything about the model shape: the conv
//! stack, the activation between convs, how the last conv output is
//! regrouped into primary capsules, and the class capsule layer. Configs
//! serialize to a canonical one-line string that round-trips exactly; that
//! string is embedded in checkpoints so a file can be validated against the
//! architecture it is loaded into.

use std::fmt;

use crate::network::NetworkError;
use crate::tensor::ConvSpec;

/// Elementwise activation applied after every convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// No nonlinearity between convs.
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NetworkError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(NetworkError::BadConfig(format!("unknown activation `{other}`"))),
        }
    }
}

/// One convolution layer: output maps, square kernel, stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_maps: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl fmt::Display for ConvLayer {
    /// `64x4s2` = 64 maps, 4x4 kernel, stride 2.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}s{}", self.out_maps, self.kernel, self.stride)
    }
}

impl ConvLayer {
    pub fn parse(s: &str) -> Result<Self, NetworkError> {
        let bad = || NetworkError::BadConfig(format!("bad conv layer `{s}`, want MAPSxKERNELsSTRIDE"));
        let (maps, rest) = s.split_once('x').ok_or_else(bad)?;
        let (kernel, stride) = rest.split_once('s').ok_or_else(bad)?;
        Ok(ConvLayer {
            out_maps: maps.parse().map_err(|_| bad())?,
            kernel: kernel.parse().map_err(|_| bad())?,
            stride: stride.parse().map_err(|_| bad())?,
        })
    }
}

/// Complete architecture description.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_side: usize,
    pub conv_layers: Vec<ConvLayer>,
    pub activation: Activation,
    /// Vector length of each primary capsule; the last conv layer's maps are
    /// regrouped into `out_maps / primary_capsule_dim` capsules per pixel.
    pub primary_capsule_dim: usize,
    pub class_capsules: usize,
    pub class_capsule_dim: usize,
    pub routing_iterations: usize,
}

impl Default for NetworkConfig {
    /// The full-size model: five strided valid convs over a 3x512x512
    /// input, 8-d primary capsules, four 16-d class capsules, 3 routing
    /// iterations.
    fn default() -> Self {
        NetworkConfig {
            input_channels: 3,
            input_side: 512,
            conv_layers: vec![
                ConvLayer { out_maps: 64, kernel: 4, stride: 2 },
                ConvLayer { out_maps: 128, kernel: 4, stride: 2 },
                ConvLayer { out_maps: 256, kernel: 6, stride: 2 },
                ConvLayer { out_maps: 256, kernel: 6, stride: 2 },
                ConvLayer { out_maps: 256, kernel: 8, stride: 2 },
            ],
            activation: Activation::Relu,
            primary_capsule_dim: 8,
            class_capsules: 4,
            class_capsule_dim: 16,
            routing_iterations: 3,
        }
    }
}

/// Per-layer geometry derived from a config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShapes {
    /// `[channels, side]` of the input and of every conv output, in order.
    pub feature_maps: Vec<(usize, usize)>,
    pub primary_capsules: usize,
    pub primary_capsule_dim: usize,
}

impl NetworkConfig {
    /// Validate the config and compute every intermediate shape.
    pub fn layer_shapes(&self) -> Result<LayerShapes, NetworkError> {
        if self.input_channels == 0 || self.input_side == 0 {
            return Err(NetworkError::BadConfig("input extents must be positive".into()));
        }
        if self.conv_layers.is_empty() {
            return Err(NetworkError::BadConfig("need at least one conv layer".into()));
        }
        if self.primary_capsule_dim == 0
            || self.class_capsules == 0
            || self.class_capsule_dim == 0
        {
            return Err(NetworkError::BadConfig("capsule extents must be positive".into()));
        }
        if self.routing_iterations == 0 {
            return Err(NetworkError::BadRoutingIterations(0));
        }
        let mut maps = self.input_channels;
        let mut side = self.input_side;
        let mut feature_maps = vec![(maps, side)];
        for (idx, layer) in self.conv_layers.iter().enumerate() {
            let spec = ConvSpec::new(maps, layer.out_maps, layer.kernel, layer.stride)?;
            side = spec.output_extent(side).map_err(|_| {
                NetworkError::BadConfig(format!(
                    "conv layer {idx} kernel {} exceeds its {side}-pixel input",
                    layer.kernel
                ))
            })?;
            maps = layer.out_maps;
            feature_maps.push((maps, side));
        }
        let last = self.conv_layers.last().expect("non-empty");
        if last.out_maps % self.primary_capsule_dim != 0 {
            return Err(NetworkError::BadConfig(format!(
                "last conv maps {} not divisible by primary capsule dim {}",
                last.out_maps, self.primary_capsule_dim
            )));
        }
        let primary_capsules = maps * side * side / self.primary_capsule_dim;
        Ok(LayerShapes {
            feature_maps,
            primary_capsules,
            primary_capsule_dim: self.primary_capsule_dim,
        })
    }

    /// Total trainable parameters: conv weights and biases plus the routing
    /// transform matrices (which carry no bias).
    pub fn parameter_count(&self) -> Result<usize, NetworkError> {
        let shapes = self.layer_shapes()?;
        let mut total = 0usize;
        let mut in_maps = self.input_channels;
        for layer in &self.conv_layers {
            total += layer.out_maps * in_maps * layer.kernel * layer.kernel + layer.out_maps;
            in_maps = layer.out_maps;
        }
        total += shapes.primary_capsules
            * self.class_capsules
            * self.class_capsule_dim
            * self.primary_capsule_dim;
        Ok(total)
    }

    /// Canonical one-line form; [`NetworkConfig::parse`] inverts it exactly.
    pub fn canonical_string(&self) -> String {
        let layers: Vec<String> = self.conv_layers.iter().map(|l| l.to_string()).collect();
        format!(
            "input_channels={};input_side={};conv_layers={};activation={};\
             primary_capsule_dim={};class_capsules={};class_capsule_dim={};\
             routing_iterations={}",
            self.input_channels,
            self.input_side,
            layers.join(","),
            self.activation.as_str(),
            self.primary_capsule_dim,
            self.class_capsules,
            self.class_capsule_dim,
            self.routing_iterations,
        )
    }

    pub fn parse(s: &str) -> Result<Self, NetworkError> {
        let mut cfg = NetworkConfig::default();
        let mut seen = [false; 8];
        for field in s.split(';') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| NetworkError::BadConfig(format!("missing `=` in `{field}`")))?;
            let uint = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| NetworkError::BadConfig(format!("bad number `{v}` for `{key}`")))
            };
            match key {
                "input_channels" => {
                    cfg.input_channels = uint(value)?;
                    seen[0] = true;
                }
                "input_side" => {
                    cfg.input_side = uint(value)?;
                    seen[1] = true;
                }
                "conv_layers" => {
                    cfg.conv_layers =
                        value.split(',').map(ConvLayer::parse).collect::<Result<_, _>>()?;
                    seen[2] = true;
                }
                "activation" => {
                    cfg.activation = Activation::parse(value)?;
                    seen[3] = true;
                }
                "primary_capsule_dim" => {
                    cfg.primary_capsule_dim = uint(value)?;
                    seen[4] = true;
                }
                "class_capsules" => {
                    cfg.class_capsules = uint(value)?;
                    seen[5] = true;
                }
                "class_capsule_dim" => {
                    cfg.class_capsule_dim = uint(value)?;
                    seen[6] = true;
                }
                "routing_iterations" => {
                    cfg.routing_iterations = uint(value)?;
                    seen[7] = true;
                }
                other => {
                    return Err(NetworkError::BadConfig(format!("unknown config key `{other}`")))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(NetworkError::BadConfig("incomplete config string".into()));
        }
        cfg.layer_shapes()?;
        Ok(cfg)
    }
}
