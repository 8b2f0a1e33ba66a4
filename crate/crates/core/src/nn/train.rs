use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, HEAD_SIZE};
use crate::error::{Error, Result};
use crate::pose::{normalize_degrees, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub w_pos: f64,
    pub w_head: f64,
    /// Meters per unit of the position outputs.
    pub position_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            w_pos: 1.0,
            w_head: 1.0,
            position_scale: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.w_pos >= 0.0 && self.w_head >= 0.0) {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.position_scale > 0.0) {
            return Err(Error::Config("position scale must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::Config("adam betas must be in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Regression target for one pose: centred, scaled position and the heading embedding.
pub fn pose_target(pose: &Pose, center: [f64; 2], scale: f64) -> [f64; HEAD_SIZE] {
    let g = pose.gamma.to_radians();
    [(pose.x_e - center[0]) / scale, (pose.x_n - center[1]) / scale, g.sin(), g.cos()]
}

/// `w_pos * MSE(position) + w_head * MSE(sin, cos)` and its gradient w.r.t. the head.
pub fn pose_loss(output: &[f64; HEAD_SIZE], target: &[f64; HEAD_SIZE], w_pos: f64, w_head: f64) -> (f64, [f64; HEAD_SIZE]) {
    let d: [f64; HEAD_SIZE] = std::array::from_fn(|i| output[i] - target[i]);
    let loss = w_pos * (d[0] * d[0] + d[1] * d[1]) / 2.0 + w_head * (d[2] * d[2] + d[3] * d[3]) / 2.0;
    (loss, [w_pos * d[0], w_pos * d[1], w_head * d[2], w_head * d[3]])
}

/// Decodes a head output into a pose.
pub fn decode_pose(output: &[f64; HEAD_SIZE], center: [f64; 2], scale: f64) -> Pose {
    let gamma = output[2].atan2(output[3]).to_degrees();
    Pose {
        x_e: output[0] * scale + center[0],
        x_n: output[1] * scale + center[1],
        gamma: normalize_degrees(gamma),
    }
}

/// Model inputs (flattened `[channels, height, width]`) and their poses.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub poses: Vec<Pose>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub adam: AdamState,
    pub history: Vec<EpochStats>,
    /// Position offset removed before scaling, meters.
    pub position_center: [f64; 2],
    pub config: TrainConfig,
}

impl Model {
    /// Seeded He-uniform initialization with fresh optimizer state.
    pub fn init(spec: NetworkSpec, config: &TrainConfig, position_center: [f64; 2]) -> Result<Self> {
        config.validate()?;
        let mut network = Network::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        network.init_he_uniform(&mut rng);
        let n = network.num_params();
        Ok(Self {
            network,
            adam: AdamState::new(n),
            history: Vec::new(),
            position_center,
            config: *config,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.network.spec
    }

    pub fn predict(&self, input: &[f64]) -> Result<Pose> {
        let out = self.network.forward(input)?;
        Ok(decode_pose(&out, self.position_center, self.config.position_scale))
    }

    fn target(&self, pose: &Pose) -> [f64; HEAD_SIZE] {
        pose_target(pose, self.position_center, self.config.position_scale)
    }

    /// Mean loss over a set; `grads` receives the mean gradient when given.
    pub fn loss_and_gradient(&self, inputs: &[&[f64]], poses: &[Pose], mut grads: Option<&mut [f64]>) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Empty("no samples".into()));
        }
        let n = inputs.len() as f64;
        if let Some(g) = grads.as_deref_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        // Bounded batches keep im2col buffers small on large evaluation sets.
        for (xs, ps) in inputs.chunks(EVAL_CHUNK).zip(poses.chunks(EVAL_CHUNK)) {
            let trace = self.network.forward_batch(xs)?;
            let out = trace.last().expect("head");
            let mut dl = Array2::zeros((xs.len(), HEAD_SIZE));
            for (i, pose) in ps.iter().enumerate() {
                let o = [out[(i, 0)], out[(i, 1)], out[(i, 2)], out[(i, 3)]];
                let (loss, d) = pose_loss(&o, &self.target(pose), self.config.w_pos, self.config.w_head);
                total += loss;
                for j in 0..HEAD_SIZE {
                    dl[(i, j)] = d[j] / n;
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                self.network.backward_batch(&trace, dl, g, false);
            }
        }
        Ok(total / n)
    }

    pub fn mean_loss(&self, set: &TrainingSet) -> Result<f64> {
        let inputs: Vec<&[f64]> = set.inputs.iter().map(Vec::as_slice).collect();
        self.loss_and_gradient(&inputs, &set.poses, None)
    }

    pub fn predict_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Pose>> {
        let mut out = Vec::with_capacity(inputs.len());
        for xs in inputs.chunks(EVAL_CHUNK) {
            let trace = self.network.forward_batch(xs)?;
            let y = trace.last().expect("head");
            for row in y.outer_iter() {
                let o = [row[0], row[1], row[2], row[3]];
                out.push(decode_pose(&o, self.position_center, self.config.position_scale));
            }
        }
        Ok(out)
    }
}

const EVAL_CHUNK: usize = 128;

fn mean_position(poses: &[Pose]) -> [f64; 2] {
    let n = poses.len().max(1) as f64;
    [
        poses.iter().map(|p| p.x_e).sum::<f64>() / n,
        poses.iter().map(|p| p.x_n).sum::<f64>() / n,
    ]
}

/// Mini-batch Adam on mean-reduced pose loss. Single-threaded and fully
/// determined by `(spec, data, config)`.
pub fn train(spec: NetworkSpec, data: &TrainingSet, validation: Option<&TrainingSet>, config: &TrainConfig) -> Result<Model> {
    if data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let mut model = Model::init(spec, config, mean_position(&data.poses))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7261_6e64));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = vec![0.0; model.network.num_params()];
    let mut last_finite = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| data.inputs[i].as_slice()).collect();
            let poses: Vec<Pose> = batch.iter().map(|&i| data.poses[i]).collect();
            let loss = model.loss_and_gradient(&inputs, &poses, Some(&mut grads))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = Some(loss);
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut model.network.params, &grads, &mut model.adam, config);
        }
        let train_loss = epoch_loss / data.len() as f64;
        let val_loss = match validation {
            Some(v) if !v.is_empty() => Some(model.mean_loss(v)?),
            _ => None,
        };
        log::info!("{} epoch {epoch}: train {train_loss:.5} val {val_loss:?}", model.spec().name);
        model.history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(model)
}
