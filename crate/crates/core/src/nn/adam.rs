use crate::error::{Error, Result};
use crate::nn::Real;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments shaped like `shapes` (lengths of each parameter tensor).
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            first_moment: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }
}

/// One named parameter tensor and its gradient.
pub struct ParamSlot<'a, T> {
    pub name: String,
    pub values: &'a mut [T],
    pub grads: &'a [T],
}

/// Applies one bias-corrected Adam update to every slot.
///
/// Gradients are checked for finiteness before anything is modified, so a
/// failing step leaves parameters and state untouched.
pub fn adam_step<T: Real>(
    slots: &mut [ParamSlot<'_, T>],
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if slots.len() != state.first_moment.len() {
        return Err(Error::structural(format!(
            "optimizer state tracks {} tensors, got {}",
            state.first_moment.len(),
            slots.len()
        )));
    }
    for (i, slot) in slots.iter().enumerate() {
        if slot.values.len() != slot.grads.len() || slot.values.len() != state.first_moment[i].len()
        {
            return Err(Error::structural(format!(
                "parameter '{}' shape differs from its gradient or optimizer state",
                slot.name
            )));
        }
        if let Some(pos) = slot.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient in parameter '{}' at index {pos}",
                slot.name
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(config.beta1);
    let b2 = T::from_f64(config.beta2);
    let one = T::one();
    let correction1 = T::from_f64(1.0 - config.beta1.powi(t));
    let correction2 = T::from_f64(1.0 - config.beta2.powi(t));
    let lr = T::from_f64(config.learning_rate);
    let eps = T::from_f64(config.epsilon);

    for (i, slot) in slots.iter_mut().enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((p, &g), mi), vi) in slot
            .values
            .iter_mut()
            .zip(slot.grads)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (one - b1) * g;
            *vi = b2 * *vi + (one - b2) * g * g;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
