const LANES: usize = 8;

/// Dot product with a fixed summation order (eight partial sums).
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let (x, y) = (&a[c * LANES..(c + 1) * LANES], &b[c * LANES..(c + 1) * LANES]);
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y = W x (+ b)` with `W` row-major `y.len() x x.len()`.
pub(crate) fn affine(w: &[f32], bias: Option<&[f32]>, x: &[f32], y: &mut [f32]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), cols * y.len());
    for (r, out) in y.iter_mut().enumerate() {
        let v = dot(&w[r * cols..(r + 1) * cols], x);
        *out = match bias {
            Some(b) => v + b[r],
            None => v,
        };
    }
}

pub(crate) fn relu(v: &mut [f32]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Logistic function kept strictly inside `(0, 1)` where f32 would round
/// to an endpoint.
pub(crate) fn sigmoid(x: f32) -> f32 {
    (1.0 / (1.0 + (-x).exp())).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
}
