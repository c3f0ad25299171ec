use super::kernels::{affine, relu, sigmoid};
use super::mask::PsmMask;
use super::model::{FsmnModel, FsmnShape};

/// Per-stream inference state: one ring of the last `lookback + 1`
/// projection outputs per block.
#[derive(Debug, Clone)]
pub struct FsmnRuntime {
    shape: FsmnShape,
    rings: Vec<Vec<f32>>,
    frames: u64,
    faults: u64,
    p: Vec<f32>,
    hidden: Vec<f32>,
    pbar: Vec<f32>,
}

impl FsmnRuntime {
    pub fn new(model: &FsmnModel) -> Self {
        let s = model.shape;
        Self {
            shape: s,
            rings: vec![vec![0.0; (s.lookback + 1) * s.proj]; s.n_blocks],
            frames: 0,
            faults: 0,
            p: vec![0.0; s.proj],
            hidden: vec![0.0; s.hidden],
            pbar: vec![0.0; s.proj],
        }
    }

    pub fn reset(&mut self) {
        for r in &mut self.rings {
            r.fill(0.0);
        }
        self.frames = 0;
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    /// Frames whose activations went non-finite and were answered with an
    /// all-pass mask.
    pub fn faults(&self) -> u64 {
        self.faults
    }

    fn fail_open(&mut self) -> PsmMask {
        log::warn!("fsmn: non-finite activation at frame {}; passing through", self.frames);
        self.faults += 1;
        self.frames += 1;
        for r in &mut self.rings {
            r.fill(0.0);
        }
        PsmMask::ones(self.shape.mask_dim)
    }

    /// One frame of inference on already normalized, spliced features.
    pub fn forward(&mut self, model: &FsmnModel, features: &[f32]) -> PsmMask {
        let s = self.shape;
        assert_eq!(features.len(), s.input_dim, "feature length");
        assert_eq!(model.shape, s, "runtime built for a different model");
        if features.iter().any(|v| !v.is_finite()) {
            return self.fail_open();
        }
        let taps = s.lookback + 1;
        let slot = (self.frames % taps as u64) as usize;

        affine(&model.input_weight, Some(&model.input_bias), features, &mut self.p);
        relu(&mut self.p);
        for (block, ring) in model.blocks.iter().zip(&mut self.rings) {
            affine(&block.expand, Some(&block.expand_bias), &self.p, &mut self.hidden);
            relu(&mut self.hidden);
            affine(&block.project, None, &self.hidden, &mut self.pbar);
            ring[slot * s.proj..(slot + 1) * s.proj].copy_from_slice(&self.pbar);
            for d in 0..s.proj {
                let mut mem = 0.0f32;
                for i in 0..taps {
                    let past = (slot + taps - i) % taps;
                    mem += block.memory[i * s.proj + d] * ring[past * s.proj + d];
                }
                self.p[d] = self.p[d] + self.pbar[d] + mem;
            }
        }
        let mut out = vec![0.0; s.mask_dim];
        affine(&model.output_weight, Some(&model.output_bias), &self.p, &mut out);
        if out.iter().chain(&self.p).any(|v| !v.is_finite()) {
            return self.fail_open();
        }
        self.frames += 1;
        for v in &mut out {
            *v = sigmoid(*v);
        }
        PsmMask { values: out }
    }
}
