use num_complex::Complex64;

use crate::dsp::Spectrum;

const TINY: f64 = 1e-12;

/// Real-valued time-frequency mask, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmMask {
    pub values: Vec<f32>,
}

impl PsmMask {
    pub fn ones(n: usize) -> Self {
        Self { values: vec![1.0; n] }
    }
}

pub fn apply_mask(spectrum: &Spectrum, mask: &PsmMask) -> Spectrum {
    assert_eq!(spectrum.len(), mask.values.len(), "mask/spectrum size");
    Spectrum {
        bins: spectrum
            .bins
            .iter()
            .zip(&mask.values)
            .map(|(c, &m)| c * m as f64)
            .collect(),
        frame_index: spectrum.frame_index,
    }
}

/// Training target `(|S| / |S^|) * Re(S / S^)`, clipped to `[0, 1]`.
pub fn psm_target(clean: &Spectrum, estimate: &Spectrum) -> PsmMask {
    assert_eq!(clean.len(), estimate.len(), "spectrum sizes");
    let values = clean
        .bins
        .iter()
        .zip(&estimate.bins)
        .map(|(s, e): (&Complex64, &Complex64)| {
            let (ns, ne) = (s.norm(), e.norm());
            if ne < TINY {
                return if ns < TINY { 0.0 } else { 1.0 };
            }
            ((ns / ne) * (s / e).re).clamp(0.0, 1.0) as f32
        })
        .collect();
    PsmMask { values }
}
