use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (n, cin, h, w) = match *x {
            [n, c, h, w] => (n, c, h, w),
            _ => return shape_err("conv2d", format!("input must be 4-d, got {x:?}")),
        };
        let (cout, wcin, kh, kw) = match *weight {
            [o, i, kh, kw] => (o, i, kh, kw),
            _ => return shape_err("conv2d", format!("weight must be 4-d, got {weight:?}")),
        };
        if wcin != cin {
            return shape_err(
                "conv2d",
                format!("input has {cin} channels but weight expects {wcin}"),
            );
        }
        if stride == 0 {
            return shape_err("conv2d", "stride must be positive");
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"),
            );
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// A 1×1, stride-1, unpadded kernel reads the input plane directly.
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.cout, self.ho, self.wo]
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &mut col[((c * g.kh + ki) * g.kw + kj) * p..][..p];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, d) in dst.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *d = if jj < 0 || jj >= g.w as isize {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &col[((c * g.kh + ki) * g.kw + kj) * p..][..p];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, &v) in row[oi * g.wo..(oi + 1) * g.wo].iter().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] = dst[jj as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: &ConvGeom,
) -> Tensor<T> {
    let (k, p) = (g.k(), g.p());
    let in_len = g.cin * g.h * g.w;
    let mut out = Tensor::zeros(g.out_shape());
    out.data_mut()
        .par_chunks_mut(g.cout * p)
        .enumerate()
        .for_each(|(s, o)| {
            let xs = &x.data()[s * in_len..(s + 1) * in_len];
            let buf;
            let col = if g.pointwise() {
                xs
            } else {
                let mut c = vec![T::zero(); k * p];
                im2col(xs, g, &mut c);
                buf = c;
                &buf[..]
            };
            T::gemm(
                g.cout,
                k,
                p,
                weight.data(),
                k as isize,
                1,
                col,
                p as isize,
                1,
                T::zero(),
                o,
                p as isize,
                1,
            );
            if let Some(b) = bias {
                for (row, &bv) in o.chunks_mut(p).zip(b.data()) {
                    row.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        });
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    g: &ConvGeom,
    dy: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_dx, need_dw, need_db) = need;
    let (k, p) = (g.k(), g.p());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * p;

    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..g.n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data()[s * in_len..(s + 1) * in_len];
            let dys = &dy[s * out_len..(s + 1) * out_len];
            let mut dx_s = Vec::new();
            let mut dw_s = Vec::new();
            if need_dx {
                let mut dcol = vec![T::zero(); k * p];
                T::gemm(
                    k,
                    g.cout,
                    p,
                    weight.data(),
                    1,
                    k as isize,
                    dys,
                    p as isize,
                    1,
                    T::zero(),
                    &mut dcol,
                    p as isize,
                    1,
                );
                if g.pointwise() {
                    dx_s = dcol;
                } else {
                    dx_s = vec![T::zero(); in_len];
                    col2im(&dcol, g, &mut dx_s);
                }
            }
            if need_dw {
                let buf;
                let col = if g.pointwise() {
                    xs
                } else {
                    let mut c = vec![T::zero(); k * p];
                    im2col(xs, g, &mut c);
                    buf = c;
                    &buf[..]
                };
                dw_s = vec![T::zero(); g.cout * k];
                T::gemm(
                    g.cout,
                    p,
                    k,
                    dys,
                    p as isize,
                    1,
                    col,
                    1,
                    p as isize,
                    T::zero(),
                    &mut dw_s,
                    k as isize,
                    1,
                );
            }
            (dx_s, dw_s)
        })
        .collect();

    // Sample-ordered reductions keep results independent of thread count.
    let dx = need_dx.then(|| {
        let mut dx = Vec::with_capacity(g.n * in_len);
        for (d, _) in &per_sample {
            dx.extend_from_slice(d);
        }
        dx
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![T::zero(); g.cout * k];
        for (_, d) in &per_sample {
            dw.iter_mut().zip(d).for_each(|(a, &b)| *a = *a + b);
        }
        dw
    });
    let db = need_db.then(|| {
        let mut db = vec![T::zero(); g.cout];
        for s in 0..g.n {
            for (o, acc) in db.iter_mut().enumerate() {
                let row = &dy[s * out_len + o * p..s * out_len + (o + 1) * p];
                *acc = row.iter().fold(*acc, |a, &v| a + v);
            }
        }
        db
    });
    ConvGrads { dx, dw, db }
}
