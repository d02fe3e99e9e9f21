use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `H×W` depth in millimeters with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Tensor<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Checks shape agreement and positivity on the mask.
    pub fn new(values: Tensor<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::Data(format!("depth map must be 2-D, got {:?}", values.shape())));
        }
        if valid.len() != values.numel() {
            return Err(Error::Data(format!(
                "mask has {} entries for a {:?} map",
                valid.len(),
                values.shape()
            )));
        }
        if let Some(i) = (0..valid.len()).find(|&i| valid[i] && !(values.data()[i] > 0.0 && values.data()[i].is_finite())) {
            return Err(Error::Data(format!(
                "depth {} at pixel {i} is marked valid",
                values.data()[i]
            )));
        }
        Ok(Self { values, valid })
    }

    /// Every pixel valid.
    pub fn dense(values: Tensor<f64>) -> Result<Self> {
        let n = values.numel();
        Self::new(values, vec![true; n])
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<f64> {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn get(&self, y: usize, x: usize) -> Option<f64> {
        let i = y * self.width() + x;
        self.valid[i].then(|| self.values.data()[i])
    }
}
