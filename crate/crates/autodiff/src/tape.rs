//! Wengert tape: operations are recorded in creation order during the forward
//! pass and replayed in reverse by [`Tape::backward`].

use std::collections::HashMap;

use crate::error::{shape_err, AutodiffError, Result};
use crate::ops::{conv, norm, pool, upsample};
use crate::param::Parameter;
use crate::real::Real;
use crate::tensor::Tensor;

pub use crate::ops::norm::{NormMode, RunningStats};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// User-defined differentiable operation. The forward value is computed by
/// the caller and handed to [`Tape::custom`]; the op only supplies the
/// vector-Jacobian product.
pub trait CustomOp<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Gradients with respect to each input, in input order.
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_output: &[T])
        -> Vec<Vec<T>>;
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: conv::ConvGeom,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        saved: norm::BnSaved<T>,
    },
    Relu(Var),
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample(Var),
    Scale(Var, T),
    Add(Var, Var),
    Sum(Var),
    WeightedSum(Var, Vec<T>),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bindings: Vec<(String, Var)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Records a snapshot of `p` as a leaf; its gradient is reported under
    /// `p.name` in [`Gradients::param`].
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        let v = self.leaf(p.value.clone(), p.trainable);
        self.bindings.push((p.name.clone(), v));
        v
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = conv::ConvGeom::new(
            self.value(input).shape(),
            self.value(weight).shape(),
            stride,
            padding,
        )?;
        if let Some(b) = bias {
            if self.value(b).numel() != geom.cout {
                return shape_err(
                    "conv2d",
                    format!("bias has {} values, expected {}", self.value(b).numel(), geom.cout),
                );
            }
        }
        let out = conv::forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            &geom,
        )
        .ensure_finite("conv2d")?;
        let rg = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: NormMode,
    ) -> Result<Var> {
        let dims = self.value(input).dims4()?;
        let c = dims.1;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c || stats.channels() != c
        {
            return shape_err(
                "batch_norm",
                format!(
                    "{c} channels but gamma/beta/stats have {}/{}/{}",
                    self.value(gamma).numel(),
                    self.value(beta).numel(),
                    stats.channels()
                ),
            );
        }
        let (out, saved) = norm::forward(
            self.value(input).data(),
            dims,
            self.value(gamma).data(),
            self.value(beta).data(),
            stats,
            mode,
        );
        let out = Tensor::new(vec![dims.0, dims.1, dims.2, dims.3], out)?
            .ensure_finite("batch_norm")?;
        let rg = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mode,
                saved,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Relu(input)))
    }

    /// 2×2 max pooling, stride 2.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let dims = self.value(input).dims4()?;
        if dims.2 < 2 || dims.3 < 2 {
            return shape_err("max_pool2", format!("input {dims:?} smaller than window"));
        }
        let (out, argmax) = pool::max_pool2_forward(self.value(input).data(), dims);
        let out = Tensor::new(vec![dims.0, dims.1, dims.2 / 2, dims.3 / 2], out)?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::MaxPool2 { input, argmax }))
    }

    /// Bilinear resize to `(out_h, out_w)`, half-pixel centres
    /// (align-corners = false). Only enlargement is supported.
    pub fn upsample_bilinear(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let dims = self.value(input).dims4()?;
        if out_h < dims.2 || out_w < dims.3 {
            return shape_err(
                "upsample_bilinear",
                format!(
                    "target {out_h}x{out_w} smaller than source {}x{}",
                    dims.2, dims.3
                ),
            );
        }
        let out = upsample::forward(self.value(input).data(), dims, out_h, out_w);
        let out = Tensor::new(vec![dims.0, dims.1, out_h, out_w], out)?
            .ensure_finite("upsample_bilinear")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Upsample(input)))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v * factor).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?.ensure_finite("scale")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Scale(input, factor)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return shape_err("add", format!("{:?} vs {:?}", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?.ensure_finite("add")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).data().iter().copied().sum();
        let out = Tensor::scalar(s).ensure_finite("sum")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Sum(input)))
    }

    /// `Σ_i x_i · weights_i` with constant weights; reduces any tensor to a
    /// scalar.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<T>) -> Result<Var> {
        let x = self.value(input);
        if weights.len() != x.numel() {
            return shape_err(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), x.numel()),
            );
        }
        let s = x.data().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let out = Tensor::scalar(s).ensure_finite("weighted_sum")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::WeightedSum(input, weights)))
    }

    pub fn custom(
        &mut self,
        op: Box<dyn CustomOp<T>>,
        inputs: &[Var],
        output: Tensor<T>,
    ) -> Result<Var> {
        let output = output.ensure_finite(op.name())?;
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            output,
            rg,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        ))
    }

    /// Reverse sweep from the scalar `loss`. Calling this repeatedly on the
    /// same tape yields identical gradients each time.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(AutodiffError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.node_backward(node, &g)?;
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
            for (var, dg) in contributions {
                if !self.needs(var) {
                    continue;
                }
                if dg.iter().any(|v| !v.is_finite()) {
                    return Err(AutodiffError::NonFinite(format!(
                        "gradient of {}",
                        self.op_name(node)
                    )));
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&dg).for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(dg),
                }
            }
        }

        let by_name = self
            .bindings
            .iter()
            .map(|(name, v)| (name.clone(), *v))
            .collect();
        Ok(Gradients { grads, by_name })
    }

    fn op_name(&self, node: &Node<T>) -> String {
        match &node.op {
            Op::Leaf => "leaf".into(),
            Op::Conv2d { .. } => "conv2d".into(),
            Op::BatchNorm { .. } => "batch_norm".into(),
            Op::Relu(_) => "relu".into(),
            Op::MaxPool2 { .. } => "max_pool2".into(),
            Op::Upsample(_) => "upsample_bilinear".into(),
            Op::Scale(..) => "scale".into(),
            Op::Add(..) => "add".into(),
            Op::Sum(_) => "sum".into(),
            Op::WeightedSum(..) => "weighted_sum".into(),
            Op::Custom { op, .. } => op.name().to_string(),
        }
    }

    fn node_backward(&self, node: &Node<T>, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = (
                    self.needs(*input),
                    self.needs(*weight),
                    bias.is_some_and(|b| self.needs(b)),
                );
                let cg = conv::backward(self.value(*input), self.value(*weight), geom, g, need);
                if let Some(dx) = cg.dx {
                    out.push((*input, dx));
                }
                if let Some(dw) = cg.dw {
                    out.push((*weight, dw));
                }
                if let (Some(b), Some(db)) = (bias, cg.db) {
                    out.push((*b, db));
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mode,
                saved,
            } => {
                let dims = self.value(*input).dims4()?;
                let bg = norm::backward(dims, self.value(*gamma).data(), saved, *mode, g);
                out.push((*input, bg.dx));
                out.push((*gamma, bg.dgamma));
                out.push((*beta, bg.dbeta));
            }
            Op::Relu(x) => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                out.push((*x, dx));
            }
            Op::MaxPool2 { input, argmax } => {
                let n = self.value(*input).numel();
                out.push((*input, pool::max_pool2_backward(n, argmax, g)));
            }
            Op::Upsample(x) => {
                let dims = self.value(*x).dims4()?;
                let (_, _, oh, ow) = node.value.dims4()?;
                out.push((*x, upsample::backward(dims, oh, ow, g)));
            }
            Op::Scale(x, f) => out.push((*x, g.iter().map(|&d| d * *f).collect())),
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sum(x) => out.push((*x, vec![g[0]; self.value(*x).numel()])),
            Op::WeightedSum(x, w) => out.push((*x, w.iter().map(|&wi| wi * g[0]).collect())),
            Op::Custom { inputs, op } => {
                let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let dgs = op.backward(&vals, &node.value, g);
                if dgs.len() != inputs.len() {
                    return shape_err(
                        "custom",
                        format!("{} returned {} gradients for {} inputs", op.name(), dgs.len(), inputs.len()),
                    );
                }
                for (&v, dg) in inputs.iter().zip(dgs) {
                    if dg.len() != self.value(v).numel() {
                        return shape_err("custom", format!("{} gradient size mismatch", op.name()));
                    }
                    out.push((v, dg));
                }
            }
        }
        Ok(out)
    }
}

/// Result of a reverse sweep: gradients of every leaf that requires one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    by_name: HashMap<String, Var>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.by_name.get(name).and_then(|&v| self.wrt(v))
    }
}
