//! Mini-batch training loop and whole-image prediction.
//!
//! Batches draw from a shuffled epoch order (reshuffled per epoch from
//! derived sub-seeds, so the schedule depends only on the seed, not on
//! thread timing); per-sample gradients evaluate in parallel and reduce
//! in index order, keeping every run bitwise reproducible.

use rayon::prelude::*;

use crate::network::{margin_loss, MarginLossConfig, Network, NetworkGradients};
use crate::preprocess::ClassLabel;
use crate::tensor::{SeedRng, Tensor};
use crate::training::{AdamConfig, AdamState, PatchDataset, TrainingError};

/// Knobs for one training run.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Stop once the trailing-window mean loss drops below this.
    pub stop_loss: f64,
    /// Hard cap on optimizer steps.
    pub max_steps: usize,
    pub batch_size: usize,
    /// Trailing-window length for the stopping rule.
    pub window: usize,
    pub adam: AdamConfig,
    pub loss: MarginLossConfig,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            stop_loss: 0.1,
            max_steps: 5000,
            batch_size: 16,
            window: 50,
            adam: AdamConfig::default(),
            loss: MarginLossConfig::default(),
            seed: 0,
        }
    }
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Trailing-window mean loss fell below `stop_loss`.
    Threshold,
    /// `max_steps` batches were consumed first.
    MaxSteps,
}

/// Loss history of a completed run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Mean batch loss per step, in step order.
    pub losses: Vec<f64>,
    /// Trailing-window mean after each step (over at most `window` entries).
    pub window_losses: Vec<f64>,
    /// Number of steps actually taken.
    pub stop_step: usize,
    pub reason: StopReason,
}

impl TrainReport {
    /// Trailing-window mean at the final step.
    pub fn final_window_loss(&self) -> f64 {
        *self.window_losses.last().unwrap_or(&f64::INFINITY)
    }

    /// Two-column `step,loss` history (steps are 1-based).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, loss) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }
}

/// Deterministic epoch-shuffling batch source over `indices`.
struct BatchSchedule {
    root: SeedRng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl BatchSchedule {
    fn new(indices: &[usize], seed: u64) -> Self {
        let root = SeedRng::new(seed);
        let mut order = indices.to_vec();
        root.derive("train/epoch0").shuffle(&mut order);
        BatchSchedule { root, order, cursor: 0, epoch: 0 }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.root
                    .derive(&format!("train/epoch{}", self.epoch))
                    .shuffle(&mut self.order);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

/// Optimize `network` on the given patch indices until the trailing-window
/// mean loss drops below `opts.stop_loss` or `opts.max_steps` is reached.
pub fn train(
    network: &mut Network<f32>,
    dataset: &PatchDataset,
    indices: &[usize],
    opts: &TrainOptions,
) -> Result<TrainReport, TrainingError> {
    if indices.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    if opts.batch_size == 0 || opts.window == 0 || opts.max_steps == 0 {
        return Err(TrainingError::BadTrainOptions(format!(
            "batch_size {}, window {}, max_steps {} must all be positive",
            opts.batch_size, opts.window, opts.max_steps
        )));
    }
    let classes = network.config().class_capsules;
    for &i in indices {
        let label = dataset.label(i).index();
        if label >= classes {
            return Err(TrainingError::LabelOutOfRange { label, classes });
        }
    }

    let mut schedule = BatchSchedule::new(indices, opts.seed);
    let mut adam = AdamState::new(&network.parameters());
    let mut losses = Vec::new();
    let mut window_losses = Vec::new();
    let mut reason = StopReason::MaxSteps;
    let mut stop_step = opts.max_steps;

    for step in 1..=opts.max_steps {
        let batch = schedule.next_batch(opts.batch_size);
        let tensors = dataset.load_batch(&batch)?;

        // Index-ordered collect keeps the reduction order fixed.
        let net_ref: &Network<f32> = network;
        let per_sample: Vec<(f32, NetworkGradients<f32>)> = tensors
            .par_iter()
            .zip(batch.par_iter())
            .map(|(input, &idx)| {
                let target = dataset.label(idx).index();
                net_ref
                    .loss_gradients(input, target, &opts.loss)
                    .map(|(loss, grads, _)| (loss, grads))
            })
            .collect::<Result<_, _>>()?;

        let mut loss_sum = 0.0f64;
        let mut total: Option<NetworkGradients<f32>> = None;
        for (loss, grads) in per_sample {
            loss_sum += loss as f64;
            match &mut total {
                None => total = Some(grads),
                Some(t) => t.accumulate(&grads),
            }
        }
        let mut total = total.expect("batch is non-empty");
        let scale = 1.0 / opts.batch_size as f64;
        total.scale(scale as f32);

        adam.apply(&opts.adam, network.parameters_mut(), &total.slots())?;

        losses.push(loss_sum * scale);
        let window_start = losses.len().saturating_sub(opts.window);
        let window = &losses[window_start..];
        let window_mean = window.iter().sum::<f64>() / window.len() as f64;
        window_losses.push(window_mean);

        if losses.len() >= opts.window && window_mean < opts.stop_loss {
            reason = StopReason::Threshold;
            stop_step = step;
            break;
        }
    }

    Ok(TrainReport { losses, window_losses, stop_step, reason })
}

/// Classify a whole image from its patches by plurality vote.
///
/// Ties break by the larger class-norm sum across all patches, then by
/// the lower class index. Returns the winning label and per-class votes.
pub fn predict_image(
    network: &Network<f32>,
    patches: &[Tensor<f32>],
) -> Result<(ClassLabel, Vec<usize>), TrainingError> {
    if patches.is_empty() {
        return Err(TrainingError::EmptyPatchSet);
    }
    let classes = network.config().class_capsules;
    let per_patch: Vec<(usize, Vec<f32>)> = patches
        .par_iter()
        .map(|p| {
            let pass = network.forward(p)?;
            let norms = pass.class_norms();
            Ok((crate::network::argmax(&norms), norms))
        })
        .collect::<Result<_, TrainingError>>()?;

    let mut votes = vec![0usize; classes];
    let mut norm_sums = vec![0.0f64; classes];
    for (winner, norms) in per_patch {
        votes[winner] += 1;
        for (c, &n) in norms.iter().enumerate() {
            norm_sums[c] += n as f64;
        }
    }

    let mut best = 0usize;
    for c in 1..classes {
        if votes[c] > votes[best]
            || (votes[c] == votes[best] && norm_sums[c] > norm_sums[best])
        {
            best = c;
        }
    }
    let label = ClassLabel::from_index(best).ok_or(TrainingError::LabelOutOfRange {
        label: best,
        classes: ClassLabel::ALL.len(),
    })?;
    Ok((label, votes))
}

/// Evaluate trained-network loss on a set of patches (no updates).
pub fn mean_loss(
    network: &Network<f32>,
    dataset: &PatchDataset,
    indices: &[usize],
    loss: &MarginLossConfig,
) -> Result<f64, TrainingError> {
    if indices.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let tensors = dataset.load_batch(indices)?;
    let total: f64 = tensors
        .par_iter()
        .zip(indices.par_iter())
        .map(|(input, &idx)| {
            let pass = network.forward(input)?;
            let loss =
                margin_loss(&pass.class_capsules, dataset.label(idx).index(), loss)?;
            Ok(loss as f64)
        })
        .collect::<Result<Vec<f64>, TrainingError>>()?
        .into_iter()
        .sum();
    Ok(total / indices.len() as f64)
}
