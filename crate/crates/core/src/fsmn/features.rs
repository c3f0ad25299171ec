use crate::dsp::{MelFilterbank, Spectrum};

/// Per-frame feature width: log-mel of the linear output then of the
/// aligned far end.
pub const FRAME_FEATURES: usize = 80;
/// Frames spliced per input vector: previous, current, next.
pub const SPLICE: usize = 3;

/// `[fbank(S^), fbank(X)]` for one frame.
pub fn frame_features(fbank: &MelFilterbank, estimate: &Spectrum, far: &Spectrum) -> Vec<f32> {
    fbank
        .apply(estimate)
        .into_iter()
        .chain(fbank.apply(far))
        .map(|v| v as f32)
        .collect()
}

/// Splices frames `[t-1, t, t+1]`. The vector for frame `t` is released
/// when frame `t+1` arrives, so the stage adds one frame of latency.
#[derive(Debug, Clone)]
pub struct FeatureSplicer {
    width: usize,
    prev: Vec<f32>,
    cur: Option<Vec<f32>>,
}

impl FeatureSplicer {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            prev: vec![0.0; width],
            cur: None,
        }
    }

    pub fn reset(&mut self) {
        self.prev.fill(0.0);
        self.cur = None;
    }

    /// Pushes frame `t` and returns the spliced vector for frame `t-1`.
    pub fn push(&mut self, frame: Vec<f32>) -> Option<Vec<f32>> {
        assert_eq!(frame.len(), self.width);
        let out = self.cur.take().map(|cur| {
            let mut v = Vec::with_capacity(SPLICE * self.width);
            v.extend_from_slice(&self.prev);
            v.extend_from_slice(&cur);
            v.extend_from_slice(&frame);
            self.prev = cur;
            v
        });
        self.cur = Some(frame);
        out
    }

    /// Releases the last frame with a zero future slot.
    pub fn flush(&mut self) -> Option<Vec<f32>> {
        let zeros = vec![0.0; self.width];
        let out = self.push(zeros);
        self.cur = None;
        out
    }
}
