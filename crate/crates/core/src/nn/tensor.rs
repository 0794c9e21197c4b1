use crate::error::{Error, Result};
use crate::nn::Real;

/// Channels-first feature map: `values[c * length + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    channels: usize,
    length: usize,
    values: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            values: vec![T::zero(); channels * length],
        }
    }

    /// Builds a tensor from flat channel-major values.
    ///
    /// Fails with a structural error on a zero dimension or a length mismatch,
    /// and with a numeric error on any non-finite entry.
    pub fn from_vec(channels: usize, length: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::structural(format!(
                "tensor dimensions must be positive, got {channels}x{length}"
            )));
        }
        if values.len() != channels * length {
            return Err(Error::structural(format!(
                "tensor {channels}x{length} needs {} values, got {}",
                channels * length,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite tensor entry at channel {}, position {}",
                pos / length,
                pos % length
            )));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::structural("tensor rows differ in length"));
        }
        Self::from_vec(rows.len(), length, rows.concat())
    }

    /// Constructor for values already known to be well-formed.
    pub(crate) fn from_raw(channels: usize, length: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), channels * length);
        Self {
            channels,
            length,
            values,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn row(&self, c: usize) -> &[T] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, t: usize) -> T {
        self.values[c * self.length + t]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(
            self.channels,
            self.length,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Converts element type, e.g. between `f64` and `f32`.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_raw(
            self.channels,
            self.length,
            self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        )
    }

    pub(crate) fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(pos) => Err(Error::numeric(format!(
                "non-finite {what} at channel {}, position {}",
                pos / self.length,
                pos % self.length
            ))),
        }
    }
}
