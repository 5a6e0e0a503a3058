//! The multi-type FCDD network: a small convolutional backbone, a
//! convolutional head, a 1×1 layer with one output channel per anomaly type
//! and an elementwise pseudo-Huber heatmap layer.

mod config;
mod heatmap;

use fcdd_autodiff::{Gradients, NormMode, Parameter, Real, RunningStats, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{InputSize, ModelConfig};
pub use heatmap::{heatmap, pseudo_huber};

use crate::error::{Context, Error, Result};

/// 3×3 convolution (no bias) followed by batch normalisation and ReLU.
#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv: Parameter<T>,
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub stats: RunningStats<T>,
}

impl<T: Real> ConvBlock<T> {
    fn new(prefix: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Parameter::new(
                format!("{prefix}.conv.weight"),
                kaiming(vec![cout, cin, 3, 3], rng),
            ),
            gamma: Parameter::new(format!("{prefix}.bn.gamma"), Tensor::full(vec![cout], T::one())),
            beta: Parameter::new(format!("{prefix}.bn.beta"), Tensor::zeros(vec![cout])),
            stats: RunningStats::new(cout),
        }
    }

    fn apply(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        stats: &mut RunningStats<T>,
        mode: NormMode,
    ) -> fcdd_autodiff::Result<Var> {
        let w = tape.param(&self.conv);
        let g = tape.param(&self.gamma);
        let b = tape.param(&self.beta);
        let y = tape.conv2d(x, w, None, 1, 1)?;
        let y = tape.batch_norm(y, g, b, stats, mode)?;
        tape.relu(y)
    }

    fn params(&self) -> [&Parameter<T>; 3] {
        [&self.conv, &self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> [&mut Parameter<T>; 3] {
        [&mut self.conv, &mut self.gamma, &mut self.beta]
    }
}

/// He-normal initialisation for a conv kernel of shape (out, in, kh, kw).
fn kaiming<T: Real>(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    Tensor::from_fn(shape, |_| T::of(normal.sample(rng)))
}

/// Tape handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// Raw output, `batch × M × u × v`.
    pub phi: Var,
    /// Pseudo-Huber heatmaps, same shape as `phi`.
    pub heatmaps: Var,
}

/// Materialised network output.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput<T> {
    pub phi: Tensor<T>,
    pub heatmaps: Tensor<T>,
    /// Heatmaps resized to the input resolution, once requested.
    pub upsampled: Option<Tensor<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub trainable: usize,
    pub frozen: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.trainable + self.frozen
    }
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    pub backbone: Vec<ConvBlock<T>>,
    pub head: Vec<ConvBlock<T>>,
    pub output: Parameter<T>,
    pub output_bias: Option<Parameter<T>>,
}

impl<T: Real> Model<T> {
    /// Builds and initialises the network. Equal seeds give bit-identical
    /// weights.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut cin = config.input_size.channels;
        let mut backbone = Vec::with_capacity(config.backbone_stages);
        for s in 0..config.backbone_stages {
            let cout = config.backbone_width << s;
            let mut block = ConvBlock::new(&format!("backbone.{s}"), cin, cout, &mut rng);
            if config.freeze_backbone {
                for p in block.params_mut() {
                    p.trainable = false;
                }
            }
            backbone.push(block);
            cin = cout;
        }
        let mut head = Vec::with_capacity(config.head_blocks);
        for b in 0..config.head_blocks {
            head.push(ConvBlock::new(
                &format!("head.{b}"),
                cin,
                config.head_filters,
                &mut rng,
            ));
            cin = config.head_filters;
        }
        let output = Parameter::new(
            "output.weight",
            kaiming(vec![config.num_types, cin, 1, 1], &mut rng),
        );
        let output_bias = config
            .head_bias
            .then(|| Parameter::new("output.bias", Tensor::zeros(vec![config.num_types])));
        Ok(Self {
            config,
            backbone,
            head,
            output,
            output_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_types(&self) -> usize {
        self.config.num_types
    }

    /// All parameters in a fixed order (backbone, head, output).
    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut out: Vec<&Parameter<T>> = Vec::new();
        for b in self.backbone.iter().chain(&self.head) {
            out.extend(b.params());
        }
        out.push(&self.output);
        out.extend(self.output_bias.as_ref());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> = Vec::new();
        for b in self.backbone.iter_mut().chain(self.head.iter_mut()) {
            out.extend(b.params_mut());
        }
        out.push(&mut self.output);
        out.extend(self.output_bias.as_mut());
        out
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    /// Batch-norm running statistics, one entry per block, keyed by block name.
    pub fn norm_stats(&self) -> Vec<(String, &RunningStats<T>)> {
        let names = self.block_names();
        names
            .into_iter()
            .zip(self.backbone.iter().chain(&self.head).map(|b| &b.stats))
            .collect()
    }

    pub fn norm_stats_mut(&mut self) -> Vec<(String, &mut RunningStats<T>)> {
        let names = self.block_names();
        names
            .into_iter()
            .zip(
                self.backbone
                    .iter_mut()
                    .chain(self.head.iter_mut())
                    .map(|b| &mut b.stats),
            )
            .collect()
    }

    fn block_names(&self) -> Vec<String> {
        (0..self.backbone.len())
            .map(|i| format!("backbone.{i}"))
            .chain((0..self.head.len()).map(|i| format!("head.{i}")))
            .collect()
    }

    pub fn parameter_count(&self) -> ParamCount {
        let (mut trainable, mut frozen) = (0, 0);
        for p in self.params() {
            if p.trainable {
                trainable += p.numel();
            } else {
                frozen += p.numel();
            }
        }
        ParamCount { trainable, frozen }
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for p in self.params_mut() {
            p.accumulate(grads);
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.input_size;
        match shape {
            [_, c, h, w] if *c == s.channels && *h == s.height && *w == s.width => Ok(()),
            _ => Err(Error::Config(format!(
                "input batch {shape:?} does not match model input {}x{}x{} (h x w x c)",
                s.height, s.width, s.channels
            ))),
        }
    }

    fn run(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        mode: NormMode,
        stats: &mut [RunningStats<T>],
    ) -> Result<ForwardVars> {
        self.check_input(tape.value(input).shape())?;
        let mut x = input;
        let mut stats = stats.iter_mut();
        for (i, block) in self.backbone.iter().enumerate() {
            let st = stats.next().expect("one stats entry per block");
            x = block
                .apply(tape, x, st, mode)
                .context(format_args!("backbone.{i}"))?;
            x = tape.max_pool2(x).context(format_args!("backbone.{i}.pool"))?;
        }
        for (i, block) in self.head.iter().enumerate() {
            let st = stats.next().expect("one stats entry per block");
            x = block
                .apply(tape, x, st, mode)
                .context(format_args!("head.{i}"))?;
        }
        let w = tape.param(&self.output);
        let b = self.output_bias.as_ref().map(|b| tape.param(b));
        let phi = tape.conv2d(x, w, b, 1, 0).context("output")?;
        let heatmaps = heatmap(tape, phi).context("heatmap")?;
        Ok(ForwardVars { phi, heatmaps })
    }

    /// Records a forward pass on `tape`. In [`NormMode::Train`] the batch-norm
    /// running statistics are updated.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var, mode: NormMode) -> Result<ForwardVars> {
        let mut stats: Vec<RunningStats<T>> = self
            .backbone
            .iter_mut()
            .chain(self.head.iter_mut())
            .map(|b| std::mem::replace(&mut b.stats, RunningStats::new(0)))
            .collect();
        let result = self.run(tape, input, mode, &mut stats);
        for (b, s) in self
            .backbone
            .iter_mut()
            .chain(self.head.iter_mut())
            .zip(stats)
        {
            b.stats = s;
        }
        result
    }

    /// Evaluation-mode forward pass without gradient tracking.
    pub fn infer(&self, batch: &Tensor<T>) -> Result<NetworkOutput<T>> {
        let mut stats: Vec<RunningStats<T>> = self
            .backbone
            .iter()
            .chain(&self.head)
            .map(|b| b.stats.clone())
            .collect();
        let mut frozen = self.clone();
        for p in frozen.params_mut() {
            p.trainable = false;
        }
        let mut tape = Tape::new();
        let x = tape.input(batch.clone());
        let vars = frozen.run(&mut tape, x, NormMode::Eval, &mut stats)?;
        Ok(NetworkOutput {
            phi: tape.value(vars.phi).clone(),
            heatmaps: tape.value(vars.heatmaps).clone(),
            upsampled: None,
        })
    }

    /// Fills `output.upsampled` with heatmaps bilinearly resized to the
    /// input resolution. Scores are always taken from the low-resolution
    /// maps; this is for pixel-wise explanation and evaluation only.
    pub fn upsample_output(
        &self,
        mut output: NetworkOutput<T>,
        height: usize,
        width: usize,
    ) -> Result<NetworkOutput<T>> {
        let s = self.config.input_size;
        if (height, width) != (s.height, s.width) {
            return Err(Error::Config(format!(
                "upsampling target {height}x{width} differs from model input {}x{}",
                s.height, s.width
            )));
        }
        output.upsampled = Some(upsample(&output.heatmaps, height, width)?);
        Ok(output)
    }
}

/// Bilinear resize of a `(n, c, h, w)` tensor.
pub fn upsample<T: Real>(maps: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let x = tape.input(maps.clone());
    let y = tape.upsample_bilinear(x, height, width)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(num_types: usize) -> ModelConfig {
        ModelConfig {
            num_types,
            input_size: InputSize {
                height: 16,
                width: 16,
                channels: 1,
            },
            backbone_stages: 2,
            backbone_width: 4,
            head_blocks: 1,
            head_filters: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn output_depth_equals_num_types() {
        for m in [1, 3, 8] {
            let model = Model::<f32>::build(tiny(m)).unwrap();
            let out = model.infer(&Tensor::zeros(vec![2, 1, 16, 16])).unwrap();
            assert_eq!(out.phi.shape(), &[2, m, 4, 4]);
            assert_eq!(out.heatmaps.shape(), &[2, m, 4, 4]);
        }
    }

    #[test]
    fn rejects_indivisible_input() {
        let mut cfg = tiny(2);
        cfg.input_size.height = 18;
        assert!(matches!(Model::<f32>::build(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_wrong_batch_shape() {
        let model = Model::<f32>::build(tiny(2)).unwrap();
        assert!(model.infer(&Tensor::zeros(vec![1, 3, 16, 16])).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Model::<f32>::build(tiny(3)).unwrap();
        let b = Model::<f32>::build(tiny(3)).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert_eq!(p.value, q.value);
        }
        let mut cfg = tiny(3);
        cfg.seed = 1;
        let c = Model::<f32>::build(cfg).unwrap();
        assert_ne!(a.output.value, c.output.value);
    }

    #[test]
    fn frozen_backbone_counted_separately() {
        let mut cfg = tiny(2);
        cfg.freeze_backbone = true;
        let model = Model::<f32>::build(cfg).unwrap();
        let count = model.parameter_count();
        // backbone: 4·1·9 + 2·4 and 8·4·9 + 2·8
        assert_eq!(count.frozen, 36 + 8 + 288 + 16);
        assert!(count.trainable > 0);
    }

    #[test]
    fn upsample_target_must_match_input() {
        let model = Model::<f32>::build(tiny(2)).unwrap();
        let out = model.infer(&Tensor::zeros(vec![1, 1, 16, 16])).unwrap();
        assert!(model.upsample_output(out.clone(), 32, 32).is_err());
        let up = model.upsample_output(out, 16, 16).unwrap();
        assert_eq!(up.upsampled.unwrap().shape(), &[1, 2, 16, 16]);
    }
}
