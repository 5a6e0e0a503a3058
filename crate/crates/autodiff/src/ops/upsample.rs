use crate::real::Real;

/// Source taps for one output coordinate under the half-pixel
/// (align-corners = false) convention.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap<T> {
    pub lo: usize,
    pub hi: usize,
    pub frac: T,
}

pub(crate) fn taps<T: Real>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: T::of(src - lo as f64),
            }
        })
        .collect()
}

pub(crate) fn forward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let (n, c, h, w) = dims;
    let rows = taps::<T>(h, out_h);
    let cols = taps::<T>(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for r in &rows {
            let (top, bot) = (&src[r.lo * w..(r.lo + 1) * w], &src[r.hi * w..(r.hi + 1) * w]);
            for cl in &cols {
                let t = top[cl.lo] + (top[cl.hi] - top[cl.lo]) * cl.frac;
                let b = bot[cl.lo] + (bot[cl.hi] - bot[cl.lo]) * cl.frac;
                out.push(t + (b - t) * r.frac);
            }
        }
    }
    out
}

pub(crate) fn backward<T: Real>(
    dims: (usize, usize, usize, usize),
    out_h: usize,
    out_w: usize,
    dy: &[T],
) -> Vec<T> {
    let (n, c, h, w) = dims;
    let rows = taps::<T>(h, out_h);
    let cols = taps::<T>(w, out_w);
    let mut dx = vec![T::zero(); n * c * h * w];
    let one = T::one();
    for plane in 0..n * c {
        let g = &dy[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        let d = &mut dx[plane * h * w..(plane + 1) * h * w];
        for (oi, r) in rows.iter().enumerate() {
            for (oj, cl) in cols.iter().enumerate() {
                let v = g[oi * out_w + oj];
                let (wr0, wr1) = (one - r.frac, r.frac);
                let (wc0, wc1) = (one - cl.frac, cl.frac);
                d[r.lo * w + cl.lo] = d[r.lo * w + cl.lo] + v * wr0 * wc0;
                d[r.lo * w + cl.hi] = d[r.lo * w + cl.hi] + v * wr0 * wc1;
                d[r.hi * w + cl.lo] = d[r.hi * w + cl.lo] + v * wr1 * wc0;
                d[r.hi * w + cl.hi] = d[r.hi * w + cl.hi] + v * wr1 * wc1;
            }
        }
    }
    dx
}
