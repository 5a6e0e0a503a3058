use crate::real::Real;

/// 2×2 max pooling with stride 2. Returns the output and, for every output
/// element, the flat input index it was taken from (first maximum in
/// row-major window order).
pub(crate) fn max_pool2_forward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize, usize),
) -> (Vec<T>, Vec<usize>) {
    let (n, c, h, w) = dims;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best = base + 2 * oi * w + 2 * oj;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oi + di) * w + 2 * oj + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool2_backward<T: Real>(in_len: usize, argmax: &[usize], dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&i, &g) in argmax.iter().zip(dy) {
        dx[i] = dx[i] + g;
    }
    dx
}
