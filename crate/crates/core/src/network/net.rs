//! The capsule network: a strided conv stack whose last feature map is
//! regrouped into primary capsules, a per-pair linear prediction layer, and
//! routing-by-agreement into class capsules.
//!
//! Primary capsule `(g, y, x)` takes channels `[g*dim, (g+1)*dim)` of the
//! last feature map at pixel `(y, x)`; capsules are ordered group-major,
//! then row, then column. Prediction vectors carry no bias term.

use crate::network::config::{Activation, LayerShapes, NetworkConfig};
use crate::network::loss::{margin_loss, margin_loss_backward, MarginLossConfig};
use crate::network::routing::{routing, routing_backward, RoutingState};
use crate::network::squash::{squash, squash_backward, vector_norm};
use crate::network::NetworkError;
use crate::tensor::{
    alloc, conv2d, conv2d_backward, relu, relu_backward, ConvSpec, Init, Scalar, SeedRng, Tensor,
};

/// Standard deviations for fresh parameters. Conv weights draw from
/// `N(0, sqrt(gain / fan_in))`, routing transforms from `N(0, routing_sd)`,
/// and biases start at zero.
#[derive(Clone, Copy, Debug)]
pub struct InitScheme {
    pub conv_gain: f64,
    pub routing_sd: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        Self { conv_gain: 2.0, routing_sd: 0.01 }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (idx, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = idx;
        }
    }
    best
}

/// All trainable state plus the architecture it belongs to.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    config: NetworkConfig,
    shapes: LayerShapes,
    conv_specs: Vec<ConvSpec>,
    conv_weights: Vec<Tensor<T>>,
    conv_biases: Vec<Tensor<T>>,
    /// `[primary, class, class_dim, primary_dim]`.
    routing_weights: Tensor<T>,
    /// Bumped on every mutable parameter access; forward caches record the
    /// revision they were computed against.
    revision: u64,
}

/// Everything cached by one forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardPass<T: Scalar> {
    revision: u64,
    input: Tensor<T>,
    pre_activations: Vec<Tensor<T>>,
    activations: Vec<Tensor<T>>,
    pub primary_pre_squash: Vec<Vec<T>>,
    pub primary_capsules: Vec<Vec<T>>,
    /// `[primary, class, class_dim]`.
    predictions: Tensor<T>,
    pub routing: RoutingState<T>,
    pub class_capsules: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn class_norms(&self) -> Vec<T> {
        self.class_capsules.iter().map(|v| vector_norm(v)).collect()
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.class_norms())
    }

    /// Post-activation feature map of conv layer `idx` (0-based).
    pub fn conv_activation(&self, idx: usize) -> Option<&Tensor<T>> {
        self.activations.get(idx)
    }

    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }
}

/// Parameter gradients in the same layout as the network, plus the gradient
/// reaching the input image.
#[derive(Clone, Debug)]
pub struct NetworkGradients<T: Scalar> {
    pub conv_weights: Vec<Tensor<T>>,
    pub conv_biases: Vec<Tensor<T>>,
    pub routing_weights: Tensor<T>,
    pub input: Tensor<T>,
}

impl<T: Scalar> NetworkGradients<T> {
    /// Parameter tensors in checkpoint order: weight then bias per conv
    /// layer, routing transforms last. The input gradient is not a slot.
    pub fn slots(&self) -> Vec<&Tensor<T>> {
        let mut slots = Vec::with_capacity(self.conv_weights.len() * 2 + 1);
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            slots.push(w);
            slots.push(b);
        }
        slots.push(&self.routing_weights);
        slots
    }

    /// Elementwise accumulate, for averaging per-sample gradients.
    pub fn accumulate(&mut self, other: &NetworkGradients<T>) {
        let add = |a: &mut Tensor<T>, b: &Tensor<T>| {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        };
        for (a, b) in self.conv_weights.iter_mut().zip(&other.conv_weights) {
            add(a, b);
        }
        for (a, b) in self.conv_biases.iter_mut().zip(&other.conv_biases) {
            add(a, b);
        }
        add(&mut self.routing_weights, &other.routing_weights);
        add(&mut self.input, &other.input);
    }

    pub fn scale(&mut self, factor: T) {
        let mul = |t: &mut Tensor<T>| {
            for x in t.data_mut() {
                *x *= factor;
            }
        };
        self.conv_weights.iter_mut().for_each(&mul);
        self.conv_biases.iter_mut().for_each(&mul);
        mul(&mut self.routing_weights);
        mul(&mut self.input);
    }
}

/// One [`ConvSpec`] per conv layer, threading input maps through the stack.
fn conv_specs(config: &NetworkConfig) -> Result<Vec<ConvSpec>, NetworkError> {
    let mut specs = Vec::with_capacity(config.conv_layers.len());
    let mut in_maps = config.input_channels;
    for layer in &config.conv_layers {
        specs.push(ConvSpec::new(in_maps, layer.out_maps, layer.kernel, layer.stride)?);
        in_maps = layer.out_maps;
    }
    Ok(specs)
}

impl<T: Scalar> Network<T> {
    /// Build a freshly initialized network. Every parameter tensor draws
    /// from its own sub-stream of `rng`, so adding layers never perturbs the
    /// draws of existing ones.
    pub fn build(
        config: NetworkConfig,
        rng: &SeedRng,
        scheme: InitScheme,
    ) -> Result<Self, NetworkError> {
        let mut net = Self::zeros(config)?;
        for (idx, spec) in net.conv_specs.iter().enumerate() {
            let fan_in = spec.in_maps * spec.kernel * spec.kernel;
            let sd = (scheme.conv_gain / fan_in as f64).sqrt();
            let mut wrng = rng.derive(&format!("conv{idx}.weight"));
            net.conv_weights[idx] = alloc(
                net.conv_weights[idx].shape(),
                Init::Normal { mean: 0.0, sd, rng: &mut wrng },
            )?;
        }
        let mut rrng = rng.derive("routing.weight");
        net.routing_weights = alloc(
            net.routing_weights.shape(),
            Init::Normal { mean: 0.0, sd: scheme.routing_sd, rng: &mut rrng },
        )?;
        Ok(net)
    }

    /// Allocate a network of the right shape with every parameter at zero,
    /// as a target for loading stored parameters into.
    pub fn zeros(config: NetworkConfig) -> Result<Self, NetworkError> {
        let shapes = config.layer_shapes()?;
        let specs = conv_specs(&config)?;
        let mut conv_weights = Vec::with_capacity(specs.len());
        let mut conv_biases = Vec::with_capacity(specs.len());
        for spec in &specs {
            conv_weights.push(Tensor::zeros(&[
                spec.out_maps,
                spec.in_maps,
                spec.kernel,
                spec.kernel,
            ])?);
            conv_biases.push(Tensor::zeros(&[spec.out_maps])?);
        }
        let routing_weights = Tensor::zeros(&[
            shapes.primary_capsules,
            config.class_capsules,
            config.class_capsule_dim,
            config.primary_capsule_dim,
        ])?;
        Ok(Network {
            config,
            shapes,
            conv_specs: specs,
            conv_weights,
            conv_biases,
            routing_weights,
            revision: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn shapes(&self) -> &LayerShapes {
        &self.shapes
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Actual parameter count, summed over the allocated tensors.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in checkpoint order (see
    /// [`NetworkGradients::slots`]).
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        let mut slots = Vec::with_capacity(self.conv_weights.len() * 2 + 1);
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            slots.push(w);
            slots.push(b);
        }
        slots.push(&self.routing_weights);
        slots
    }

    /// Mutable parameter slots; invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.revision += 1;
        let mut slots: Vec<&mut Tensor<T>> = Vec::with_capacity(self.conv_weights.len() * 2 + 1);
        for (w, b) in self.conv_weights.iter_mut().zip(self.conv_biases.iter_mut()) {
            slots.push(w);
            slots.push(b);
        }
        slots.push(&mut self.routing_weights);
        slots
    }

    /// Replace all parameters from tensors in checkpoint order.
    pub(crate) fn load_parameters(&mut self, tensors: Vec<Tensor<T>>) -> Result<(), NetworkError> {
        let expected: Vec<Vec<usize>> =
            self.parameters().iter().map(|t| t.shape().to_vec()).collect();
        if tensors.len() != expected.len() {
            return Err(NetworkError::ParameterMismatch {
                slot: tensors.len().min(expected.len()),
                detail: format!("{} tensors, network has {}", tensors.len(), expected.len()),
            });
        }
        for (slot, (tensor, shape)) in tensors.iter().zip(&expected).enumerate() {
            if tensor.shape() != shape.as_slice() {
                return Err(NetworkError::ParameterMismatch {
                    slot,
                    detail: format!("shape {:?}, network wants {:?}", tensor.shape(), shape),
                });
            }
        }
        let mut it = tensors.into_iter();
        for slot in self.parameters_mut() {
            *slot = it.next().expect("length checked");
        }
        Ok(())
    }

    fn activate(&self, pre: &Tensor<T>) -> Tensor<T> {
        match self.config.activation {
            Activation::Relu => relu(pre),
            Activation::Identity => pre.clone(),
        }
    }

    /// Evaluate the network on one `[channels, side, side]` input.
    pub fn forward(&self, input: &Tensor<T>) -> Result<ForwardPass<T>, NetworkError> {
        let (c, h, w) = input.dims3()?;
        if c != self.config.input_channels || h != self.config.input_side || w != h {
            return Err(NetworkError::BadInputShape {
                got: input.shape().to_vec(),
                want: vec![self.config.input_channels, self.config.input_side, self.config.input_side],
            });
        }
        input.ensure_finite("network input")?;

        let mut pre_activations = Vec::with_capacity(self.conv_weights.len());
        let mut activations = Vec::with_capacity(self.conv_weights.len());
        let mut current = input;
        for (spec, (w, b)) in
            self.conv_specs.iter().zip(self.conv_weights.iter().zip(&self.conv_biases))
        {
            let pre = conv2d(current, spec, w, b)?;
            let act = self.activate(&pre);
            pre_activations.push(pre);
            activations.push(act);
            current = activations.last().expect("just pushed");
        }

        // Regroup the last feature map into primary capsules and squash.
        let last = activations.last().expect("at least one conv layer");
        let (maps, side, _) = last.dims3()?;
        let dim = self.config.primary_capsule_dim;
        let groups = maps / dim;
        let area = side * side;
        let data = last.data();
        let n_primary = self.shapes.primary_capsules;
        let mut primary_pre_squash = Vec::with_capacity(n_primary);
        for g in 0..groups {
            for pix in 0..area {
                let mut v = Vec::with_capacity(dim);
                for d in 0..dim {
                    v.push(data[(g * dim + d) * area + pix]);
                }
                primary_pre_squash.push(v);
            }
        }
        let primary_capsules: Vec<Vec<T>> =
            primary_pre_squash.iter().map(|v| squash(v)).collect();

        // Per-pair linear predictions u_hat[i][j] = W[i][j] * u[i].
        let n_class = self.config.class_capsules;
        let d_class = self.config.class_capsule_dim;
        let wdata = self.routing_weights.data();
        let mut pred = vec![T::zero(); n_primary * n_class * d_class];
        for i in 0..n_primary {
            let u_i = &primary_capsules[i];
            for j in 0..n_class {
                for o in 0..d_class {
                    let base = ((i * n_class + j) * d_class + o) * dim;
                    let mut acc = T::zero();
                    for d in 0..dim {
                        acc += wdata[base + d] * u_i[d];
                    }
                    pred[(i * n_class + j) * d_class + o] = acc;
                }
            }
        }
        let predictions = Tensor::new(vec![n_primary, n_class, d_class], pred)?;

        let (class_capsules, routing_state) =
            routing(&predictions, self.config.routing_iterations)?;

        Ok(ForwardPass {
            revision: self.revision,
            input: input.clone(),
            pre_activations,
            activations,
            primary_pre_squash,
            primary_capsules,
            predictions,
            routing: routing_state,
            class_capsules,
        })
    }

    /// Backpropagate from a gradient on the class capsule vectors.
    pub fn backward(
        &self,
        pass: &ForwardPass<T>,
        d_class_capsules: &[Vec<T>],
    ) -> Result<NetworkGradients<T>, NetworkError> {
        if pass.revision != self.revision {
            return Err(NetworkError::StaleCache);
        }

        let d_predictions = routing_backward(&pass.predictions, &pass.routing, d_class_capsules)?;

        // Through u_hat[i][j] = W[i][j] * u[i].
        let n_primary = self.shapes.primary_capsules;
        let n_class = self.config.class_capsules;
        let d_class = self.config.class_capsule_dim;
        let dim = self.config.primary_capsule_dim;
        let wdata = self.routing_weights.data();
        let dpred = d_predictions.data();
        let mut d_routing = vec![T::zero(); wdata.len()];
        let mut d_primary = vec![vec![T::zero(); dim]; n_primary];
        for i in 0..n_primary {
            let u_i = &pass.primary_capsules[i];
            let du_i = &mut d_primary[i];
            for j in 0..n_class {
                for o in 0..d_class {
                    let g = dpred[(i * n_class + j) * d_class + o];
                    if g == T::zero() {
                        continue;
                    }
                    let base = ((i * n_class + j) * d_class + o) * dim;
                    for d in 0..dim {
                        d_routing[base + d] += g * u_i[d];
                        du_i[d] += wdata[base + d] * g;
                    }
                }
            }
        }

        // Through the primary squash, scattered back onto the feature map.
        let last = pass.activations.last().expect("at least one conv layer");
        let (maps, side, _) = last.dims3()?;
        let area = side * side;
        let groups = maps / dim;
        let mut d_act = Tensor::zeros(&[maps, side, side])?;
        {
            let d = d_act.data_mut();
            for g in 0..groups {
                for pix in 0..area {
                    let cap = g * area + pix;
                    let ds = squash_backward(&pass.primary_pre_squash[cap], &d_primary[cap]);
                    for (dd, val) in ds.iter().enumerate() {
                        d[(g * dim + dd) * area + pix] = *val;
                    }
                }
            }
        }

        // Down the conv stack.
        let layers = self.conv_weights.len();
        let mut d_conv_w = vec![Tensor::zeros(&[1])?; layers];
        let mut d_conv_b = vec![Tensor::zeros(&[1])?; layers];
        let mut upstream = d_act;
        for l in (0..layers).rev() {
            let d_pre = match self.config.activation {
                Activation::Relu => relu_backward(&pass.pre_activations[l], &upstream)?,
                Activation::Identity => upstream.clone(),
            };
            let layer_input =
                if l == 0 { &pass.input } else { &pass.activations[l - 1] };
            let grads = conv2d_backward(
                layer_input,
                &self.conv_specs[l],
                &self.conv_weights[l],
                &self.conv_biases[l],
                &d_pre,
            )?;
            d_conv_w[l] = grads.weights;
            d_conv_b[l] = grads.bias;
            upstream = grads.input;
        }

        Ok(NetworkGradients {
            conv_weights: d_conv_w,
            conv_biases: d_conv_b,
            routing_weights: Tensor::new(self.routing_weights.shape().to_vec(), d_routing)?,
            input: upstream,
        })
    }

    /// Margin loss and its parameter gradients for one labeled input.
    pub fn loss_gradients(
        &self,
        input: &Tensor<T>,
        target: usize,
        loss_cfg: &MarginLossConfig,
    ) -> Result<(T, NetworkGradients<T>, ForwardPass<T>), NetworkError> {
        let pass = self.forward(input)?;
        let loss = margin_loss(&pass.class_capsules, target, loss_cfg)?;
        let d_caps = margin_loss_backward(&pass.class_capsules, target, loss_cfg)?;
        let grads = self.backward(&pass, &d_caps)?;
        Ok((loss, grads, pass))
    }

    /// Convert every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            shapes: self.shapes.clone(),
            conv_specs: self.conv_specs.clone(),
            conv_weights: self.conv_weights.iter().map(|t| t.cast()).collect(),
            conv_biases: self.conv_biases.iter().map(|t| t.cast()).collect(),
            routing_weights: self.routing_weights.cast(),
            revision: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::config::ConvLayer;

    fn toy_config() -> NetworkConfig {
        NetworkConfig {
            input_channels: 3,
            input_side: 8,
            conv_layers: vec![ConvLayer { out_maps: 4, kernel: 3, stride: 2 }],
            activation: Activation::Relu,
            primary_capsule_dim: 2,
            class_capsules: 2,
            class_capsule_dim: 3,
            routing_iterations: 2,
        }
    }

    fn toy_network(seed: u64) -> Network<f64> {
        Network::build(toy_config(), &SeedRng::new(seed), InitScheme::default()).unwrap()
    }

    fn toy_input(seed: u64) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        alloc(&[3, 8, 8], Init::Uniform { lo: 0.0, hi: 1.0, rng: &mut rng }).unwrap()
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.3f64, 0.7, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1f64]), 0);
    }

    #[test]
    fn build_matches_declared_parameter_count() {
        let net = toy_network(5);
        assert_eq!(net.parameter_count(), net.config().parameter_count().unwrap());
        // conv: 4*3*3*3 + 4 = 112; routing: 18 caps * 2 * 3 * 2 = 216.
        assert_eq!(net.parameter_count(), 328);
        assert_eq!(net.shapes().primary_capsules, 18);
    }

    #[test]
    fn build_is_deterministic_and_biases_start_at_zero() {
        let a = toy_network(5);
        let b = toy_network(5);
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            assert_eq!(pa.data(), pb.data());
        }
        let c = toy_network(6);
        assert_ne!(a.parameters()[0].data(), c.parameters()[0].data());
        assert!(a.conv_biases[0].data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn forward_produces_expected_shapes() {
        let net = toy_network(1);
        let pass = net.forward(&toy_input(2)).unwrap();
        assert_eq!(pass.primary_capsules.len(), 18);
        assert!(pass.primary_capsules.iter().all(|v| v.len() == 2));
        assert_eq!(pass.class_capsules.len(), 2);
        assert!(pass.class_capsules.iter().all(|v| v.len() == 3));
        assert_eq!(pass.conv_activation(0).unwrap().shape(), &[4, 3, 3]);
        let norms = pass.class_norms();
        assert!(norms.iter().all(|&n| (0.0..1.0).contains(&n)));
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = toy_network(1);
        let bad = Tensor::<f64>::zeros(&[3, 9, 9]).unwrap();
        assert!(matches!(net.forward(&bad), Err(NetworkError::BadInputShape { .. })));
    }

    #[test]
    fn backward_rejects_stale_forward_cache() {
        let mut net = toy_network(1);
        let pass = net.forward(&toy_input(2)).unwrap();
        net.parameters_mut()[0].data_mut()[0] += 0.5;
        let zero = vec![vec![0.0; 3]; 2];
        assert!(matches!(net.backward(&pass, &zero), Err(NetworkError::StaleCache)));
    }

    #[test]
    fn regrouping_is_group_major_then_row_then_column() {
        // With identity activation and a handcrafted last feature map we can
        // read the capsule layout straight off the forward pass.
        let mut cfg = toy_config();
        cfg.activation = Activation::Identity;
        let mut net =
            Network::<f64>::build(cfg, &SeedRng::new(3), InitScheme::default()).unwrap();
        // Zero all conv weights; bias k gives channel k the constant value k.
        {
            let mut slots = net.parameters_mut();
            for x in slots[0].data_mut() {
                *x = 0.0;
            }
            for (k, b) in slots[1].data_mut().iter_mut().enumerate() {
                *b = k as f64;
            }
        }
        let pass = net.forward(&toy_input(4)).unwrap();
        // Channels are constant, so capsule (g, pix) pre-squash = [2g, 2g+1].
        for g in 0..2 {
            for pix in 0..9 {
                let v = &pass.primary_pre_squash[g * 9 + pix];
                assert_eq!(v, &vec![2.0 * g as f64, 2.0 * g as f64 + 1.0]);
            }
        }
    }

    #[test]
    fn full_parameter_gradcheck_against_finite_differences() {
        let net = toy_network(21);
        let input = toy_input(22);
        let target = 1;
        let cfg = MarginLossConfig::default();
        let (_, grads, _) = net.loss_gradients(&input, target, &cfg).unwrap();
        let grad_slots: Vec<Vec<f64>> =
            grads.slots().iter().map(|t| t.data().to_vec()).collect();

        // Denominator floor guards near-zero gradients, where the central
        // difference itself is dominated by cancellation noise.
        let h = 1e-5;
        for slot in 0..grad_slots.len() {
            for idx in 0..grad_slots[slot].len() {
                let eval = |delta: f64| -> f64 {
                    let mut probe = net.clone();
                    probe.parameters_mut()[slot].data_mut()[idx] += delta;
                    let (loss, _, _) = probe.loss_gradients(&input, target, &cfg).unwrap();
                    loss
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let analytic = grad_slots[slot][idx];
                let rel = (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
                assert!(
                    rel < 1e-5,
                    "slot {slot} idx {idx}: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = toy_network(31);
        let input = toy_input(32);
        let cfg = MarginLossConfig::default();
        let (_, grads, _) = net.loss_gradients(&input, 0, &cfg).unwrap();
        let h = 1e-5;
        for idx in (0..input.len()).step_by(17) {
            let eval = |delta: f64| -> f64 {
                let mut probe = input.clone();
                probe.data_mut()[idx] += delta;
                net.loss_gradients(&probe, 0, &cfg).unwrap().0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grads.input.data()[idx];
            let rel = (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
            assert!(rel < 1e-4, "input idx {idx}");
        }
    }

    #[test]
    fn cast_preserves_values_within_precision() {
        let net = toy_network(41);
        let as_f32: Network<f32> = net.cast();
        let back: Network<f64> = as_f32.cast();
        for (a, b) in net.parameters().iter().zip(back.parameters()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
