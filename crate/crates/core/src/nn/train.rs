use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, AdamConfig, AdamState, ParamSlot};
use crate::nn::{classify, Mode, Model, ModelConfig, Real, Tensor};
use crate::rng::Rng;

/// Training recipe: Adam on mean squared error over shuffled mini-batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::usage("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One prebuilt network input and its target label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T = f32> {
    pub input: Tensor<T>,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Sample-weighted mean loss of each epoch, measured before its updates.
    pub epoch_losses: Vec<f64>,
}

pub fn train<T: Real>(examples: &[Example<T>], config: ModelConfig, hyper: &TrainHyper) -> Result<Model<T>> {
    train_with_report(examples, config, hyper).map(|(m, _)| m)
}

/// Splits a shuffled order into batches; a trailing singleton joins the
/// previous batch because batch statistics need two samples.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + batch_size).min(order.len());
        if order.len() - end == 1 {
            end = order.len();
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

pub fn train_with_report<T: Real>(
    examples: &[Example<T>],
    config: ModelConfig,
    hyper: &TrainHyper,
) -> Result<(Model<T>, TrainReport)> {
    hyper.validate()?;
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::usage("cannot train on an empty dataset"));
    }
    if examples.len() < 2 {
        return Err(Error::usage(
            "training needs at least 2 samples for batch statistics",
        ));
    }
    if let Some(bad) = examples.iter().position(|e| e.label > 1) {
        return Err(Error::usage(format!("example {bad} has a non-binary label")));
    }

    let mut model = Model::init(config, &mut Rng::stream(hyper.seed, 0))?;
    let mut shuffler = Rng::stream(hyper.seed, 1);
    let mut state = AdamState::new(&model.param_shapes());
    let adam = hyper.adam();
    let names: Vec<String> = {
        let grads = model.zero_grads();
        grads.slices().into_iter().map(|(n, _)| n).collect()
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 1..=hyper.epochs {
        shuffler.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in batches(&order, hyper.batch_size) {
            let inputs: Vec<&Tensor<T>> = batch.iter().map(|&i| &examples[i].input).collect();
            let (outputs, trace) = model.forward_batch_train(&inputs)?;
            let n = T::from_f64(batch.len() as f64);
            let mut loss = 0.0;
            let grad_outputs: Vec<T> = outputs
                .iter()
                .zip(batch)
                .map(|(&o, &i)| {
                    let diff = o - T::from_f64(f64::from(examples[i].label));
                    loss += (diff * diff).to_f64();
                    T::from_f64(2.0) * diff / n
                })
                .collect();
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "training diverged in epoch {epoch}: non-finite loss"
                )));
            }
            epoch_loss += loss;
            let grads = model.backward_batch(&trace, &grad_outputs)?;
            let grad_slices = grads.slices();
            let mut slots: Vec<ParamSlot<'_, T>> = model
                .param_slices_mut()
                .into_iter()
                .zip(&grad_slices)
                .zip(&names)
                .map(|((values, (_, g)), name)| ParamSlot {
                    name: name.clone(),
                    values,
                    grads: g,
                })
                .collect();
            adam_step(&mut slots, &mut state, &adam).map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
        }
        let mean = epoch_loss / examples.len() as f64;
        log::debug!("epoch {epoch}/{}: loss {mean:.6}", hyper.epochs);
        report.epoch_losses.push(mean);
    }
    model.set_mode(Mode::Inference);
    Ok((model, report))
}

/// Fraction of examples whose predicted label matches.
pub fn training_accuracy<T: Real>(model: &Model<T>, examples: &[Example<T>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::usage("accuracy of an empty set is undefined"));
    }
    let mut correct = 0usize;
    for e in examples {
        if classify(model.forward(&e.input)?) == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}
