use super::kernels::{affine, relu, sigmoid};
use super::mask::PsmMask;
use super::model::FsmnModel;

/// Whole-utterance inference, layer by layer, with the memory term as an
/// explicit causal convolution over time. Reference for the streaming path.
pub fn forward_batch(model: &FsmnModel, features: &[Vec<f32>]) -> Vec<PsmMask> {
    let s = model.shape;
    let t_len = features.len();
    let mut p: Vec<Vec<f32>> = features
        .iter()
        .map(|f| {
            let mut v = vec![0.0; s.proj];
            affine(&model.input_weight, Some(&model.input_bias), f, &mut v);
            relu(&mut v);
            v
        })
        .collect();
    let mut hidden = vec![0.0; s.hidden];
    for block in &model.blocks {
        let pbar: Vec<Vec<f32>> = p
            .iter()
            .map(|pt| {
                affine(&block.expand, Some(&block.expand_bias), pt, &mut hidden);
                relu(&mut hidden);
                let mut v = vec![0.0; s.proj];
                affine(&block.project, None, &hidden, &mut v);
                v
            })
            .collect();
        for t in 0..t_len {
            for d in 0..s.proj {
                let mut mem = 0.0f32;
                for i in 0..=s.lookback {
                    let past = if i <= t { pbar[t - i][d] } else { 0.0 };
                    mem += block.memory[i * s.proj + d] * past;
                }
                p[t][d] = p[t][d] + pbar[t][d] + mem;
            }
        }
    }
    p.iter()
        .map(|pt| {
            let mut out = vec![0.0; s.mask_dim];
            affine(&model.output_weight, Some(&model.output_bias), pt, &mut out);
            PsmMask {
                values: out.into_iter().map(sigmoid).collect(),
            }
        })
        .collect()
}
