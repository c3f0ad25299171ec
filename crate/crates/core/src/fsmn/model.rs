use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FsmnShape {
    pub input_dim: usize,
    pub n_blocks: usize,
    pub hidden: usize,
    pub proj: usize,
    /// Look-back order; each block keeps `lookback + 1` memory taps.
    pub lookback: usize,
    pub mask_dim: usize,
}

impl Default for FsmnShape {
    fn default() -> Self {
        Self {
            input_dim: 240,
            n_blocks: 9,
            hidden: 256,
            proj: 256,
            lookback: 20,
            mask_dim: 161,
        }
    }
}

impl FsmnShape {
    pub fn block_params(&self) -> usize {
        self.hidden * self.proj + self.hidden + self.proj * self.hidden + (self.lookback + 1) * self.proj
    }

    /// Trainable parameters (normalization statistics excluded).
    pub fn param_count(&self) -> usize {
        let input = self.proj * self.input_dim + self.proj;
        let output = self.mask_dim * self.proj + self.mask_dim;
        input + self.n_blocks * self.block_params() + output
    }

    /// Floats stored in a model file: parameters plus mean and std vectors.
    pub fn float_count(&self) -> usize {
        self.param_count() + 2 * self.input_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [self.input_dim, self.hidden, self.proj, self.mask_dim];
        if dims.contains(&0) {
            return Err(ModelError::Shape(format!("zero dimension in {self:?}")));
        }
        if dims.iter().any(|&d| d > 1 << 16) || self.n_blocks > 1024 || self.lookback > 1 << 16 {
            return Err(ModelError::Shape(format!("implausibly large dimension in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsmnBlock {
    /// `hidden x proj`
    pub expand: Vec<f32>,
    /// `hidden`
    pub expand_bias: Vec<f32>,
    /// `proj x hidden`, no bias
    pub project: Vec<f32>,
    /// `(lookback + 1) x proj`; row `i` weights the projection from `i` frames ago
    pub memory: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsmnModel {
    pub shape: FsmnShape,
    pub norm_mean: Vec<f32>,
    pub norm_std: Vec<f32>,
    /// `proj x input_dim`
    pub input_weight: Vec<f32>,
    pub input_bias: Vec<f32>,
    pub blocks: Vec<FsmnBlock>,
    /// `mask_dim x proj`
    pub output_weight: Vec<f32>,
    pub output_bias: Vec<f32>,
}

impl FsmnModel {
    pub fn zeros(shape: FsmnShape) -> Self {
        let block = FsmnBlock {
            expand: vec![0.0; shape.hidden * shape.proj],
            expand_bias: vec![0.0; shape.hidden],
            project: vec![0.0; shape.proj * shape.hidden],
            memory: vec![0.0; (shape.lookback + 1) * shape.proj],
        };
        Self {
            shape,
            norm_mean: vec![0.0; shape.input_dim],
            norm_std: vec![1.0; shape.input_dim],
            input_weight: vec![0.0; shape.proj * shape.input_dim],
            input_bias: vec![0.0; shape.proj],
            blocks: vec![block; shape.n_blocks],
            output_weight: vec![0.0; shape.mask_dim * shape.proj],
            output_bias: vec![0.0; shape.mask_dim],
        }
    }

    /// Seeded random weights with variance-preserving scales, unit
    /// normalization. Used for structural tests and benchmarks.
    pub fn random(shape: FsmnShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f32], scale: f32| {
            for x in v {
                *x = rng.gen_range(-scale..scale);
            }
        };
        let mut m = Self::zeros(shape);
        let uniform = |fan_in: usize| (3.0 / fan_in as f32).sqrt();
        fill(&mut m.input_weight, uniform(shape.input_dim) * 1.4);
        fill(&mut m.input_bias, 0.1);
        let n_taps = shape.lookback + 1;
        for b in &mut m.blocks {
            fill(&mut b.expand, uniform(shape.proj) * 1.4);
            fill(&mut b.expand_bias, 0.1);
            fill(&mut b.project, uniform(shape.hidden) * 0.3);
            fill(&mut b.memory, 1.0 / n_taps as f32);
        }
        fill(&mut m.output_weight, uniform(shape.proj));
        fill(&mut m.output_bias, 0.1);
        m
    }

    pub fn param_count(&self) -> usize {
        self.shape.param_count()
    }

    /// Checks every tensor against the declared shape and that the
    /// standard deviations are positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        let s = &self.shape;
        s.validate()?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::Shape(format!("{name} has {got} values, expected {want}")))
            }
        };
        check("norm_mean", self.norm_mean.len(), s.input_dim)?;
        check("norm_std", self.norm_std.len(), s.input_dim)?;
        check("input_weight", self.input_weight.len(), s.proj * s.input_dim)?;
        check("input_bias", self.input_bias.len(), s.proj)?;
        check("blocks", self.blocks.len(), s.n_blocks)?;
        for (j, b) in self.blocks.iter().enumerate() {
            check(&format!("block {j} expand"), b.expand.len(), s.hidden * s.proj)?;
            check(&format!("block {j} expand_bias"), b.expand_bias.len(), s.hidden)?;
            check(&format!("block {j} project"), b.project.len(), s.proj * s.hidden)?;
            check(&format!("block {j} memory"), b.memory.len(), (s.lookback + 1) * s.proj)?;
        }
        check("output_weight", self.output_weight.len(), s.mask_dim * s.proj)?;
        check("output_bias", self.output_bias.len(), s.mask_dim)?;
        if let Some(i) = self.norm_std.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(ModelError::Shape(format!("norm_std[{i}] = {} is not positive", self.norm_std[i])));
        }
        Ok(())
    }

    /// In-place `(f - mean) / std`.
    pub fn normalize(&self, features: &mut [f32]) {
        for ((f, m), s) in features.iter_mut().zip(&self.norm_mean).zip(&self.norm_std) {
            *f = (*f - m) / s;
        }
    }
}
