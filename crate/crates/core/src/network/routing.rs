//! Routing-by-agreement between a layer of input capsules and a layer of
//! output capsules.
//!
//! Every input capsule `i` holds one prediction vector per output capsule
//! `j`. Logits `b[i][j]` start at zero; each iteration softmax-normalizes
//! them into couplings, forms each output as the coupling-weighted sum of
//! predictions, squashes it, and (on all but the final iteration) reinforces
//! the logits by the dot product between prediction and output. The backward
//! pass differentiates through the fully unrolled iteration sequence.

use crate::network::squash::{squash, squash_backward};
use crate::network::NetworkError;
use crate::tensor::{softmax, softmax_backward, Scalar, Tensor};

/// Per-iteration caches of one routing execution, retained for inspection
/// and for the backward pass.
#[derive(Clone, Debug)]
pub struct RoutingIteration<T: Scalar> {
    /// Couplings `c[i][j]`, row-stochastic over output capsules.
    pub couplings: Vec<T>,
    /// Pre-squash totals `s_j`.
    pub pre_squash: Vec<Vec<T>>,
    /// Squashed outputs `v_j`.
    pub outputs: Vec<Vec<T>>,
}

/// Full state of one routing execution.
#[derive(Clone, Debug)]
pub struct RoutingState<T: Scalar> {
    pub n_in: usize,
    pub n_out: usize,
    pub dim: usize,
    /// Final logits `b` (flat `[n_in * n_out]`).
    pub logits: Vec<T>,
    pub iterations: Vec<RoutingIteration<T>>,
}

impl<T: Scalar> RoutingState<T> {
    pub fn coupling(&self, iteration: usize, i: usize, j: usize) -> T {
        self.iterations[iteration].couplings[i * self.n_out + j]
    }
}

fn prediction_dims<T: Scalar>(predictions: &Tensor<T>) -> Result<(usize, usize, usize), NetworkError> {
    let (n_in, n_out, dim) = predictions.dims3()?;
    Ok((n_in, n_out, dim))
}

/// Run routing-by-agreement over predictions of shape `[n_in, n_out, dim]`.
/// Returns the output capsule vectors and the full per-iteration state.
pub fn routing<T: Scalar>(
    predictions: &Tensor<T>,
    iterations: usize,
) -> Result<(Vec<Vec<T>>, RoutingState<T>), NetworkError> {
    if iterations < 1 {
        return Err(NetworkError::BadRoutingIterations(iterations));
    }
    let (n_in, n_out, dim) = prediction_dims(predictions)?;
    let u = predictions.data();

    let mut logits = vec![T::zero(); n_in * n_out];
    let mut trace: Vec<RoutingIteration<T>> = Vec::with_capacity(iterations);

    for round in 0..iterations {
        let mut couplings = vec![T::zero(); n_in * n_out];
        for i in 0..n_in {
            let row = softmax(&logits[i * n_out..(i + 1) * n_out]);
            couplings[i * n_out..(i + 1) * n_out].copy_from_slice(&row);
        }

        let mut pre_squash = vec![vec![T::zero(); dim]; n_out];
        for i in 0..n_in {
            for j in 0..n_out {
                let c = couplings[i * n_out + j];
                let base = (i * n_out + j) * dim;
                let s_j = &mut pre_squash[j];
                for d in 0..dim {
                    s_j[d] += c * u[base + d];
                }
            }
        }
        let outputs: Vec<Vec<T>> = pre_squash.iter().map(|s| squash(s)).collect();

        let last = round + 1 == iterations;
        if !last {
            for i in 0..n_in {
                for j in 0..n_out {
                    let base = (i * n_out + j) * dim;
                    let v_j = &outputs[j];
                    let mut agreement = T::zero();
                    for d in 0..dim {
                        agreement += u[base + d] * v_j[d];
                    }
                    logits[i * n_out + j] += agreement;
                }
            }
        }
        trace.push(RoutingIteration { couplings, pre_squash, outputs });
    }

    let outputs = trace.last().expect("iterations >= 1").outputs.clone();
    let state = RoutingState { n_in, n_out, dim, logits, iterations: trace };
    Ok((outputs, state))
}

/// Gradient of the routed outputs w.r.t. the prediction vectors, given the
/// upstream gradient on the final output capsules. Walks the unrolled
/// recurrence in reverse, threading logit gradients through every softmax
/// and every agreement update.
pub fn routing_backward<T: Scalar>(
    predictions: &Tensor<T>,
    state: &RoutingState<T>,
    upstream: &[Vec<T>],
) -> Result<Tensor<T>, NetworkError> {
    let (n_in, n_out, dim) = prediction_dims(predictions)?;
    if n_in != state.n_in || n_out != state.n_out || dim != state.dim {
        return Err(NetworkError::StaleCache);
    }
    if upstream.len() != n_out || upstream.iter().any(|g| g.len() != dim) {
        return Err(NetworkError::StaleCache);
    }
    let u = predictions.data();
    let rounds = state.iterations.len();

    let mut d_u = vec![T::zero(); u.len()];
    // Gradient w.r.t. the logits entering the next-earlier softmax.
    let mut d_logits = vec![T::zero(); n_in * n_out];

    for round in (0..rounds).rev() {
        let iter = &state.iterations[round];
        let last = round + 1 == rounds;

        // dL/dv_j for this round: the upstream gradient on the last round,
        // plus (on earlier rounds) the flow through the agreement update
        // b[i][j] += u_ij . v_j, whose logit gradients are in d_logits.
        let mut d_v: Vec<Vec<T>> = if last {
            upstream.to_vec()
        } else {
            vec![vec![T::zero(); dim]; n_out]
        };
        if !last {
            for i in 0..n_in {
                for j in 0..n_out {
                    let g_b = d_logits[i * n_out + j];
                    if g_b == T::zero() {
                        continue;
                    }
                    let base = (i * n_out + j) * dim;
                    let d_vj = &mut d_v[j];
                    for d in 0..dim {
                        d_u[base + d] += g_b * iter.outputs[j][d];
                        d_vj[d] += g_b * u[base + d];
                    }
                }
            }
            // The identity part of b^r = b^{r-1} + agreement stays in
            // d_logits and carries over to the earlier round.
        }

        // Through squash: dL/ds_j.
        let d_s: Vec<Vec<T>> = (0..n_out)
            .map(|j| squash_backward(&iter.pre_squash[j], &d_v[j]))
            .collect();

        // s_j = sum_i c[i][j] u_ij: gradients to couplings and predictions.
        let mut d_c = vec![T::zero(); n_in * n_out];
        for i in 0..n_in {
            for j in 0..n_out {
                let base = (i * n_out + j) * dim;
                let c = iter.couplings[i * n_out + j];
                let d_sj = &d_s[j];
                let mut dot = T::zero();
                for d in 0..dim {
                    d_u[base + d] += c * d_sj[d];
                    dot += u[base + d] * d_sj[d];
                }
                d_c[i * n_out + j] = dot;
            }
        }

        // Through each row softmax back to the logits of the previous round.
        for i in 0..n_in {
            let row = softmax_backward(
                &iter.couplings[i * n_out..(i + 1) * n_out],
                &d_c[i * n_out..(i + 1) * n_out],
            );
            for j in 0..n_out {
                d_logits[i * n_out + j] += row[j];
            }
        }
        if last {
            // d_logits was zero on entry for the final round; nothing to fix up.
            continue;
        }
    }
    // Gradient w.r.t. the initial logits is discarded: b^0 is the constant 0.

    Ok(Tensor::new(vec![n_in, n_out, dim], d_u)?)
}
