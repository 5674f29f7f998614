//! Co-training of voxel values and the weight encoder.
//!
//! Each step takes a batch of rays, predicts every pixel as the weighted sum
//! of its hit voxels, and minimizes the mean-squared pixel error. Voxel values
//! receive the normalized per-ray gradient; encoder parameters receive the
//! exact gradient. Transfer training reuses a frozen encoder and updates the
//! voxels only.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::RayDataset;
use crate::encoder::{BnMode, EncoderConfig, EncoderGrads, EncoderParams, Extent};
use crate::error::{param_err, shape_err, Error, Result};
use crate::features::PaddedInput;
use crate::grid::{GridGeometry, VoxelGrid};
use crate::math;
use crate::metrics::cosine_similarity;
use crate::optim::{lr_schedule_with, Adam, AdamConfig};
use crate::pixel::{dot, voxel_grad};

/// Frozen-encoder weights are cached up front below this many hits.
const FROZEN_CACHE_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub lr_voxel: f64,
    pub lr_encoder: f64,
    /// Multiplier applied to both rates every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_samples: usize,
    pub rays_per_sample: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub grad_norm_enabled: bool,
    /// Clamp voxels to be non-negative after every step.
    pub clamp_voxels: bool,
    /// Voxels start uniform in `[0, voxel_init_max]`.
    pub voxel_init_max: f64,
    /// Log every step of the first epoch, not only epoch summaries.
    pub log_first_epoch_steps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_voxel: 0.01,
            lr_encoder: 0.0005,
            lr_decay: 0.5,
            decay_every: 5,
            epochs: 80,
            batch_samples: 32,
            rays_per_sample: 100,
            adam: AdamConfig::default(),
            seed: 0,
            encoder: EncoderConfig::default(),
            grad_norm_enabled: true,
            clamp_voxels: true,
            voxel_init_max: 0.1,
            log_first_epoch_steps: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_voxel > 0.0 && self.lr_encoder > 0.0) {
            return Err(param_err!("learning rates must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return Err(param_err!("decay must lie in (0, 1] with a positive period"));
        }
        if self.batch_samples == 0 || self.rays_per_sample == 0 {
            return Err(param_err!("batch and sample sizes must be positive"));
        }
        if !(self.voxel_init_max >= 0.0 && self.voxel_init_max.is_finite()) {
            return Err(param_err!("voxel init range must be finite and non-negative"));
        }
        self.adam.validate()?;
        self.encoder.validate()
    }

    /// Rays per optimizer step.
    pub fn rays_per_batch(&self) -> usize {
        self.batch_samples * self.rays_per_sample
    }

    pub fn lr_at(&self, epoch: usize) -> (f64, f64) {
        (
            lr_schedule_with(epoch, self.lr_voxel, self.lr_decay, self.decay_every),
            lr_schedule_with(epoch, self.lr_encoder, self.lr_decay, self.decay_every),
        )
    }
}

/// Whether a record covers one step or a whole epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RecordKind {
    /// `step` is the 0-based index of the update; `loss` is its batch loss.
    Step,
    /// `step` counts updates so far; `loss` is the epoch's mean batch loss.
    Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRecord {
    pub kind: RecordKind,
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    /// Cosine similarity to the ground truth, when one is supplied and defined.
    pub similarity: Option<f64>,
    pub lr_voxel: f64,
    pub lr_encoder: f64,
    pub wall_ms: f64,
}

/// Hooks the host environment may provide.
pub trait TrainObserver {
    /// Milliseconds since training started.
    fn elapsed_ms(&mut self) -> f64 {
        0.0
    }

    fn on_record(&mut self, _record: &TrainRecord) {}

    /// Return `true` to stop after the current epoch.
    fn should_stop(&mut self, _state: &TrainState) -> bool {
        false
    }
}

/// Observer that does nothing.
pub struct Silent;

impl TrainObserver for Silent {}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub geometry: GridGeometry,
    pub voxels: Vec<f64>,
    pub encoder: EncoderParams,
    pub frozen: bool,
    pub adam_voxel: Adam,
    pub adam_encoder: Option<Adam>,
    pub epoch: usize,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<TrainRecord>,
}

impl TrainState {
    pub fn voxel_grid(&self) -> Result<VoxelGrid> {
        VoxelGrid::from_f64(self.geometry, &self.voxels)
    }

    /// Epoch summaries only.
    pub fn epoch_records(&self) -> impl Iterator<Item = &TrainRecord> {
        self.history.iter().filter(|r| r.kind == RecordKind::Epoch)
    }

    pub fn final_similarity(&self) -> Option<f64> {
        self.epoch_records().last().and_then(|r| r.similarity)
    }
}

/// Fresh state: encoder initialized first, then voxels, from `config.seed`.
pub fn init_state(geometry: GridGeometry, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = EncoderParams::init(&config.encoder, &mut rng)?;
    let voxels = random_voxels(&geometry, config.voxel_init_max, &mut rng);
    let adam_encoder = Some(Adam::new(config.adam, &encoder.trainable_len()));
    Ok(TrainState {
        geometry,
        adam_voxel: Adam::new(config.adam, &[voxels.len()]),
        voxels,
        encoder,
        frozen: false,
        adam_encoder,
        epoch: 0,
        step: 0,
        rng,
        history: Vec::new(),
    })
}

/// State for transfer training: a copy of `encoder`, frozen, and voxels
/// drawn as in [`init_state`].
pub fn init_transfer_state(
    geometry: GridGeometry,
    encoder: &EncoderParams,
    config: &TrainConfig,
) -> Result<TrainState> {
    config.validate()?;
    geometry.validate()?;
    encoder.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let voxels = random_voxels(&geometry, config.voxel_init_max, &mut rng);
    Ok(TrainState {
        geometry,
        adam_voxel: Adam::new(config.adam, &[voxels.len()]),
        voxels,
        encoder: encoder.clone(),
        frozen: true,
        adam_encoder: None,
        epoch: 0,
        step: 0,
        rng,
        history: Vec::new(),
    })
}

fn random_voxels(geometry: &GridGeometry, max: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..geometry.len()).map(|_| max * rng.random::<f64>()).collect()
}

/// Loss and gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub voxel: Vec<f64>,
    pub encoder: Option<EncoderGrads>,
    /// Batch statistics to fold into running estimates.
    bn_stats: Option<(Vec<f64>, Vec<f64>, usize)>,
}

impl BatchGradients {
    pub fn voxel_norm(&self) -> f64 {
        math::sqrt(dot(&self.voxel, &self.voxel))
    }

    pub fn encoder_norm(&self) -> f64 {
        self.encoder.as_ref().map_or(0.0, EncoderGrads::norm)
    }
}

/// Per-ray weights of a frozen encoder, concatenated.
#[derive(Debug, Clone)]
struct FrozenWeights {
    offsets: Vec<usize>,
    weights: Vec<f64>,
    norms: Vec<f64>,
}

fn frozen_weights(encoder: &EncoderParams, rays: &[PaddedInput]) -> Result<FrozenWeights> {
    let mut offsets = Vec::with_capacity(rays.len() + 1);
    let mut weights = Vec::with_capacity(rays.iter().map(PaddedInput::len).sum());
    let mut norms = Vec::with_capacity(rays.len());
    offsets.push(0);
    for chunk in rays.chunks(1024) {
        let refs: Vec<&PaddedInput> = chunk.iter().collect();
        let cache = encoder.forward_batch(&refs, Extent::Active, BnMode::Eval)?;
        for r in 0..chunk.len() {
            weights.extend_from_slice(cache.weights(r));
            offsets.push(weights.len());
            norms.push(cache.weight_norm(r));
        }
    }
    Ok(FrozenWeights {
        offsets,
        weights,
        norms,
    })
}

/// Source of per-ray weights during a step.
enum Weights<'a> {
    Trainable,
    Frozen(Option<&'a FrozenWeights>),
}

/// Batch loss `mean_r (p_r - t_r)^2` and its gradients at `state`.
pub fn batch_gradients(state: &TrainState, rays: &[&PaddedInput], grad_norm: bool) -> Result<BatchGradients> {
    let mode = if state.frozen { Weights::Frozen(None) } else { Weights::Trainable };
    compute_batch(state, rays, &[], grad_norm, mode)
}

fn compute_batch(
    state: &TrainState,
    rays: &[&PaddedInput],
    ids: &[usize],
    grad_norm: bool,
    weights: Weights<'_>,
) -> Result<BatchGradients> {
    if rays.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let b = rays.len() as f64;
    let mut voxel = vec![0.0; state.voxels.len()];
    let mut values = Vec::new();
    let mut loss = 0.0;

    // `w` holds the real-hit weights; `norm` covers the full padded vector.
    let mut backprop = |w: &[f64], norm: f64, ray: &PaddedInput, g_w: Option<&mut Vec<f64>>| -> Result<()> {
        values.clear();
        values.resize(ray.len(), 0.0);
        crate::pixel::gather(&state.voxels, ray.hit_indices(), &mut values)?;
        let residual = dot(w, &values) - ray.target;
        loss += residual * residual / b;
        let g = 2.0 * residual / b;
        for (&i, &wi) in ray.hit_indices().iter().zip(w) {
            voxel[i as usize] += voxel_grad(g, wi, norm, grad_norm);
        }
        if let Some(g_w) = g_w {
            g_w.extend(values.iter().map(|v| g * v));
        }
        Ok(())
    };

    match weights {
        Weights::Trainable => {
            let cache = state.encoder.forward_batch(rays, Extent::Active, BnMode::Train)?;
            let mut g_w = Vec::with_capacity(rays.iter().map(|r| r.len()).sum());
            for (r, ray) in rays.iter().enumerate() {
                backprop(cache.weights(r), cache.weight_norm(r), ray, Some(&mut g_w))?;
            }
            let grads = state.encoder.backward_flat(&cache, &g_w)?;
            let bn_stats = state
                .encoder
                .bn
                .is_some()
                .then(|| (cache.mean.clone(), cache.var.clone(), cache.bn_count));
            Ok(BatchGradients {
                loss,
                voxel,
                encoder: Some(grads),
                bn_stats,
            })
        }
        Weights::Frozen(Some(pre)) => {
            for (ray, &id) in rays.iter().zip(ids) {
                backprop(&pre.weights[pre.offsets[id]..pre.offsets[id + 1]], pre.norms[id], ray, None)?;
            }
            Ok(BatchGradients {
                loss,
                voxel,
                encoder: None,
                bn_stats: None,
            })
        }
        Weights::Frozen(None) => {
            let cache = state.encoder.forward_batch(rays, Extent::Active, BnMode::Eval)?;
            for (r, ray) in rays.iter().enumerate() {
                backprop(cache.weights(r), cache.weight_norm(r), ray, None)?;
            }
            Ok(BatchGradients {
                loss,
                voxel,
                encoder: None,
                bn_stats: None,
            })
        }
    }
}

fn check_dataset(state: &TrainState, dataset: &RayDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = state.voxels.len();
    for ray in dataset.rays() {
        if let Some(&i) = ray.hit_indices().iter().find(|&&i| i as usize >= len) {
            return Err(Error::Index { index: i as usize, len });
        }
    }
    Ok(())
}

fn check_truth(state: &TrainState, truth: Option<&VoxelGrid>) -> Result<()> {
    match truth {
        Some(t) if t.values().len() != state.voxels.len() => Err(shape_err!(
            "ground truth has {} voxels, model has {}",
            t.values().len(),
            state.voxels.len()
        )),
        _ => Ok(()),
    }
}

/// Runs `config.epochs` further epochs on `state`.
pub fn run_epochs(
    state: &mut TrainState,
    dataset: &RayDataset,
    config: &TrainConfig,
    truth: Option<&VoxelGrid>,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    config.validate()?;
    check_dataset(state, dataset)?;
    check_truth(state, truth)?;
    let frozen = if state.frozen {
        let total: usize = dataset.rays().iter().map(PaddedInput::len).sum();
        (total <= FROZEN_CACHE_LIMIT)
            .then(|| frozen_weights(&state.encoder, dataset.rays()))
            .transpose()?
    } else {
        None
    };
    let similarity = |v: &[f64]| truth.and_then(|t| cosine_similarity(v, t.values()).ok());
    let per_batch = config.rays_per_batch();
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _ in 0..config.epochs {
        let epoch = state.epoch;
        let (lr_v, lr_e) = config.lr_at(epoch);
        order.shuffle(&mut state.rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for ids in order.chunks(per_batch) {
            let rays: Vec<&PaddedInput> = ids.iter().map(|&i| &dataset.rays()[i]).collect();
            let source = if state.frozen {
                Weights::Frozen(frozen.as_ref())
            } else {
                Weights::Trainable
            };
            let grads = compute_batch(state, &rays, ids, config.grad_norm_enabled, source)?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: state.step as usize,
                    loss: grads.loss,
                    lr_voxel: lr_v,
                    lr_encoder: lr_e,
                    grad_norm_voxel: grads.voxel_norm(),
                    grad_norm_encoder: grads.encoder_norm(),
                });
            }
            apply(state, &grads, lr_v, lr_e, config.clamp_voxels)?;
            loss_sum += grads.loss;
            batches += 1;
            if epoch == 0 && config.log_first_epoch_steps {
                let record = TrainRecord {
                    kind: RecordKind::Step,
                    epoch,
                    step: state.step - 1,
                    loss: grads.loss,
                    similarity: similarity(&state.voxels),
                    lr_voxel: lr_v,
                    lr_encoder: lr_e,
                    wall_ms: observer.elapsed_ms(),
                };
                observer.on_record(&record);
                state.history.push(record);
            }
        }
        state.epoch += 1;
        let record = TrainRecord {
            kind: RecordKind::Epoch,
            epoch,
            step: state.step,
            loss: loss_sum / batches as f64,
            similarity: similarity(&state.voxels),
            lr_voxel: lr_v,
            lr_encoder: lr_e,
            wall_ms: observer.elapsed_ms(),
        };
        observer.on_record(&record);
        state.history.push(record);
        if observer.should_stop(state) {
            break;
        }
    }
    Ok(())
}

fn apply(state: &mut TrainState, grads: &BatchGradients, lr_v: f64, lr_e: f64, clamp: bool) -> Result<()> {
    state
        .adam_voxel
        .step(&mut [state.voxels.as_mut_slice()], &[grads.voxel.as_slice()], lr_v)?;
    if clamp {
        state.voxels.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    if let (Some(adam), Some(g)) = (state.adam_encoder.as_mut(), grads.encoder.as_ref()) {
        adam.step(&mut state.encoder.trainable_mut(), &g.tensors(), lr_e)?;
    }
    if let (Some(bn), Some((mean, var, count))) = (state.encoder.bn.as_mut(), grads.bn_stats.as_ref()) {
        bn.update_running(mean, var, *count);
    }
    state.step += 1;
    Ok(())
}

/// Trains voxels and encoder from scratch.
pub fn train(
    geometry: GridGeometry,
    dataset: &RayDataset,
    config: &TrainConfig,
    truth: Option<&VoxelGrid>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    let mut state = init_state(geometry, config)?;
    run_epochs(&mut state, dataset, config, truth, observer)?;
    Ok(state)
}

/// Trains fresh voxels against a frozen encoder. Batch normalization, if
/// present, uses the encoder's running statistics.
pub fn transfer_train(
    geometry: GridGeometry,
    encoder: &EncoderParams,
    dataset: &RayDataset,
    config: &TrainConfig,
    truth: Option<&VoxelGrid>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    let mut state = init_transfer_state(geometry, encoder, config)?;
    run_epochs(&mut state, dataset, config, truth, observer)?;
    Ok(state)
}

/// Model predictions for `rays`, using running statistics for batch norm.
pub fn predict(state: &TrainState, rays: &[PaddedInput]) -> Result<Vec<f64>> {
    let pre = frozen_weights(&state.encoder, rays)?;
    let mut values = Vec::new();
    rays.iter()
        .enumerate()
        .map(|(r, ray)| {
            values.clear();
            values.resize(ray.len(), 0.0);
            crate::pixel::gather(&state.voxels, ray.hit_indices(), &mut values)?;
            Ok(dot(&pre.weights[pre.offsets[r]..pre.offsets[r + 1]], &values))
        })
        .collect()
}
