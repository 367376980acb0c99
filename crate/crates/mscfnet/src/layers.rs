//! Building blocks of the network: the efficient asymmetric residual (EAR)
//! module, spatial attention, channel attention (ECA and an SE variant),
//! the downsampling block, the initial block, and input injection.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Flow, Val};
use crate::error::{Error, Result};
use crate::params::{he_uniform, ParamId, ParamStore};
use crate::tensor::{Conv2dSpec, Shape, Tensor};

pub const DEFAULT_SHUFFLE_GROUPS: usize = 2;
pub const SPATIAL_KERNEL: usize = 7;
pub const SE_REDUCTION: usize = 16;
pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// Batch-norm parameter bundle: affine pair plus running statistics.
#[derive(Clone, Debug)]
pub struct BnParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BnParams {
    pub fn register(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        let shape = Shape::new(1, channels, 1, 1);
        BnParams {
            gamma: store.register(format!("{prefix}.gamma"), Tensor::filled(shape, 1.0), true, true),
            beta: store.register(format!("{prefix}.beta"), Tensor::zeros(shape), true, true),
            running_mean: store.register(
                format!("{prefix}.running_mean"),
                Tensor::zeros(shape),
                false,
                true,
            ),
            running_var: store.register(
                format!("{prefix}.running_var"),
                Tensor::filled(shape, 1.0),
                false,
                true,
            ),
        }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        flow.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var)
    }
}

/// Per-channel learnable activation slope.
#[derive(Clone, Debug)]
pub struct PreluParams {
    pub slope: ParamId,
}

impl PreluParams {
    pub fn register(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        PreluParams {
            slope: store.register(
                format!("{prefix}.slope"),
                Tensor::filled(Shape::new(1, channels, 1, 1), PRELU_INIT_SLOPE),
                true,
                true,
            ),
        }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let slope = flow.param(self.slope);
        flow.prelu(x, &slope)
    }
}

/// Bias-free convolution followed by batch normalization.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub weight: ParamId,
    pub spec: Conv2dSpec,
    pub bn: BnParams,
}

impl ConvBn {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        spec: Conv2dSpec,
    ) -> Self {
        let shape = Shape::new(out_channels, in_channels / spec.groups, kernel.0, kernel.1);
        ConvBn {
            weight: store.register(
                format!("{prefix}.weight"),
                he_uniform(rng, shape),
                true,
                false,
            ),
            spec,
            bn: BnParams::register(store, &format!("{prefix}.bn"), out_channels),
        }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let w = flow.param(self.weight);
        let y = flow.conv2d(x, &w, None, self.spec)?;
        self.bn.apply(flow, &y)
    }
}

/// Which channel-attention flavour a config selects.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AttentionKind {
    None,
    Eca,
    Se,
}

/// ECA kernel size: nearest odd integer to `log2(C)/gamma + b/gamma` with
/// gamma=2, b=1; exact ties round down; clamped to >= 3.
pub fn eca_kernel_size(channels: usize) -> usize {
    let t = ((channels as f64).log2() + 1.0) / 2.0;
    let m = ((t - 1.0) / 2.0 - 0.5).ceil().max(0.0) as usize;
    (2 * m + 1).max(3)
}

/// Channel attention: a per-channel gate in (0,1) multiplied onto the input.
#[derive(Clone, Debug)]
pub enum ChannelAttention {
    Identity,
    Eca {
        kernel: ParamId,
    },
    Se {
        reduce: ParamId,
        expand: ParamId,
        /// Fixed (non-trainable) activation slope between the two dense maps.
        slope: ParamId,
    },
}

impl ChannelAttention {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        kind: AttentionKind,
        channels: usize,
    ) -> Self {
        match kind {
            AttentionKind::None => ChannelAttention::Identity,
            AttentionKind::Eca => {
                let k = eca_kernel_size(channels);
                ChannelAttention::Eca {
                    kernel: store.register(
                        format!("{prefix}.kernel"),
                        he_uniform(rng, Shape::new(1, 1, 1, k)),
                        true,
                        false,
                    ),
                }
            }
            AttentionKind::Se => {
                let hidden = (channels / SE_REDUCTION).max(1);
                ChannelAttention::Se {
                    reduce: store.register(
                        format!("{prefix}.reduce.weight"),
                        he_uniform(rng, Shape::new(hidden, channels, 1, 1)),
                        true,
                        false,
                    ),
                    expand: store.register(
                        format!("{prefix}.expand.weight"),
                        he_uniform(rng, Shape::new(channels, hidden, 1, 1)),
                        true,
                        false,
                    ),
                    slope: store.register(
                        format!("{prefix}.act.slope"),
                        Tensor::filled(Shape::new(1, hidden, 1, 1), PRELU_INIT_SLOPE),
                        false,
                        true,
                    ),
                }
            }
        }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        match self {
            ChannelAttention::Identity => Ok(x.clone()),
            ChannelAttention::Eca { kernel } => {
                let pooled = flow.global_avg_pool(x);
                let k = flow.param(*kernel);
                let mixed = flow.conv1d_channels(&pooled, &k)?;
                let gate = flow.sigmoid(&mixed);
                flow.mul(x, &gate)
            }
            ChannelAttention::Se {
                reduce,
                expand,
                slope,
            } => {
                let pooled = flow.global_avg_pool(x);
                let w1 = flow.param(*reduce);
                let h = flow.conv2d(&pooled, &w1, None, Conv2dSpec::default())?;
                let s = flow.param(*slope);
                let h = flow.prelu(&h, &s)?;
                let w2 = flow.param(*expand);
                let z = flow.conv2d(&h, &w2, None, Conv2dSpec::default())?;
                let gate = flow.sigmoid(&z);
                flow.mul(x, &gate)
            }
        }
    }
}

/// Spatial attention: per-pixel channel mean and max, concatenated into a
/// 2-channel descriptor, convolved 7x7 down to one channel, sigmoid-gated
/// and multiplied back onto the input.
#[derive(Clone, Debug)]
pub struct SpatialAttention {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl SpatialAttention {
    pub fn register(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str) -> Self {
        SpatialAttention {
            weight: store.register(
                format!("{prefix}.conv.weight"),
                he_uniform(rng, Shape::new(1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL)),
                true,
                false,
            ),
            bias: store.register(
                format!("{prefix}.conv.bias"),
                Tensor::zeros(Shape::new(1, 1, 1, 1)),
                true,
                false,
            ),
        }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let mean = flow.channel_mean(x);
        let max = flow.channel_max(x);
        let descriptor = flow.concat(&[&mean, &max])?;
        let w = flow.param(self.weight);
        let b = flow.param(self.bias);
        let pad = (SPATIAL_KERNEL - 1) / 2;
        let raw = flow.conv2d(&descriptor, &w, Some(&b), Conv2dSpec::with_padding(pad, pad))?;
        let gate = flow.sigmoid(&raw);
        flow.mul(x, &gate)
    }
}

/// Configuration of one EAR module.
#[derive(Clone, Copy, Debug)]
pub struct EarConfig {
    /// Input = output channel count; must be even.
    pub channels: usize,
    pub dilation: usize,
    pub shuffle_groups: usize,
}

/// Efficient asymmetric residual module: a 3x3 bottleneck to C/2, two
/// factorized depthwise branches (one dilated) with cross-branch
/// interaction, channel attention, 1x1 recovery, residual add and channel
/// shuffle. Shape-preserving.
#[derive(Clone, Debug)]
pub struct EarModule {
    pub cfg: EarConfig,
    act_in: PreluParams,
    bottleneck: ConvBn,
    conv_u: ConvBn,
    conv_v: ConvBn,
    branch1: ConvBn,
    branch2: ConvBn,
    ca1: ChannelAttention,
    ca2: ChannelAttention,
    act_mid: PreluParams,
    ca3: ChannelAttention,
    pointwise: ConvBn,
}

impl EarModule {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cfg: EarConfig,
        attention: AttentionKind,
    ) -> Result<Self> {
        let c = cfg.channels;
        if c % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "EAR channels must be even, got {c}"
            )));
        }
        if cfg.shuffle_groups == 0 || c % cfg.shuffle_groups != 0 {
            return Err(Error::InvalidConfig(format!(
                "EAR channels {c} not divisible by shuffle groups {}",
                cfg.shuffle_groups
            )));
        }
        if cfg.dilation == 0 {
            return Err(Error::InvalidConfig("EAR dilation must be >= 1".into()));
        }
        let half = c / 2;
        let d = cfg.dilation;
        let depthwise = |padding: (usize, usize), dilation: (usize, usize)| Conv2dSpec {
            stride: (1, 1),
            padding,
            dilation,
            groups: half,
        };
        Ok(EarModule {
            cfg,
            act_in: PreluParams::register(store, &format!("{prefix}.act_in"), c),
            bottleneck: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.bottleneck"),
                c,
                half,
                (3, 3),
                Conv2dSpec::with_padding(1, 1),
            ),
            conv_u: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.u"),
                half,
                half,
                (3, 1),
                depthwise((1, 0), (1, 1)),
            ),
            conv_v: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.v"),
                half,
                half,
                (3, 1),
                depthwise((d, 0), (d, 1)),
            ),
            branch1: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.branch1"),
                half,
                half,
                (1, 3),
                depthwise((0, 1), (1, 1)),
            ),
            branch2: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.branch2"),
                half,
                half,
                (1, 3),
                depthwise((0, d), (1, d)),
            ),
            ca1: ChannelAttention::register(store, rng, &format!("{prefix}.ca1"), attention, half),
            ca2: ChannelAttention::register(store, rng, &format!("{prefix}.ca2"), attention, half),
            act_mid: PreluParams::register(store, &format!("{prefix}.act_mid"), half),
            ca3: ChannelAttention::register(store, rng, &format!("{prefix}.ca3"), attention, half),
            pointwise: ConvBn::register(
                store,
                rng,
                &format!("{prefix}.pointwise"),
                half,
                c,
                (1, 1),
                Conv2dSpec::default(),
            ),
        })
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let pre = self.act_in.apply(flow, x)?;
        let xb = self.bottleneck.apply(flow, &pre)?;
        // Both branches share the two first-stage outputs; the cross-add is
        // the interaction between the 3x1 and 1x3 stages.
        let u = self.conv_u.apply(flow, &xb)?;
        let v = self.conv_v.apply(flow, &xb)?;
        let interaction = flow.add(&u, &v)?;
        let y1 = self.branch1.apply(flow, &interaction)?;
        let y1 = self.ca1.apply(flow, &y1)?;
        let y2 = self.branch2.apply(flow, &interaction)?;
        let y2 = self.ca2.apply(flow, &y2)?;
        let merged = flow.add(&y1, &y2)?;
        let merged = self.act_mid.apply(flow, &merged)?;
        let merged = self.ca3.apply(flow, &merged)?;
        let recovered = self.pointwise.apply(flow, &merged)?;
        let residual = flow.add(&recovered, x)?;
        flow.shuffle(&residual, self.cfg.shuffle_groups)
    }
}

/// Downsampling block: a single stride-2 3x3 convolution when the channel
/// count does not grow, otherwise that convolution concatenated with a
/// stride-2 2x2 max-pool of the input; batch norm and PReLU after the merge.
#[derive(Clone, Debug)]
pub struct DownsampleBlock {
    pub n_in: usize,
    pub n_out: usize,
    conv: ParamId,
    pub use_pool: bool,
    bn: BnParams,
    act: PreluParams,
}

impl DownsampleBlock {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        n_in: usize,
        n_out: usize,
    ) -> Result<Self> {
        if n_out < 1 {
            return Err(Error::InvalidConfig(
                "downsample output channels must be >= 1".into(),
            ));
        }
        let use_pool = n_in < n_out;
        let conv_out = if use_pool { n_out - n_in } else { n_out };
        Ok(DownsampleBlock {
            n_in,
            n_out,
            conv: store.register(
                format!("{prefix}.conv.weight"),
                he_uniform(rng, Shape::new(conv_out, n_in, 3, 3)),
                true,
                false,
            ),
            use_pool,
            bn: BnParams::register(store, &format!("{prefix}.bn"), n_out),
            act: PreluParams::register(store, &format!("{prefix}.act"), n_out),
        })
    }

    pub fn conv_weight(&self) -> ParamId {
        self.conv
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let w = flow.param(self.conv);
        let spec = Conv2dSpec {
            stride: (2, 2),
            padding: (1, 1),
            ..Default::default()
        };
        let conv = flow.conv2d(x, &w, None, spec)?;
        let merged = if self.use_pool {
            // ceil-mode pooling so odd extents agree with the convolution
            let pooled = flow.max_pool2d(x, (2, 2), (2, 2), true)?;
            flow.concat(&[&conv, &pooled])?
        } else {
            conv
        };
        let y = self.bn.apply(flow, &merged)?;
        self.act.apply(flow, &y)
    }
}

/// Initial feature extractor: three 3x3 convolutions, the first with
/// stride 2, each followed by batch norm and PReLU.
#[derive(Clone, Debug)]
pub struct InitialBlock {
    convs: Vec<ConvBn>,
    acts: Vec<PreluParams>,
}

impl InitialBlock {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        width: usize,
    ) -> Self {
        let mut convs = Vec::new();
        let mut acts = Vec::new();
        for i in 0..3 {
            let (in_c, stride) = if i == 0 { (3, (2, 2)) } else { (width, (1, 1)) };
            convs.push(ConvBn::register(
                store,
                rng,
                &format!("{prefix}.conv{i}"),
                in_c,
                width,
                (3, 3),
                Conv2dSpec {
                    stride,
                    padding: (1, 1),
                    ..Default::default()
                },
            ));
            acts.push(PreluParams::register(store, &format!("{prefix}.act{i}"), width));
        }
        InitialBlock { convs, acts }
    }

    pub fn apply(&self, flow: &mut Flow, x: &Val) -> Result<Val> {
        let mut h = x.clone();
        for (conv, act) in self.convs.iter().zip(self.acts.iter()) {
            h = conv.apply(flow, &h)?;
            h = act.apply(flow, &h)?;
        }
        Ok(h)
    }
}

/// Input injection: average-pool the raw image n times (2x2, stride 2) and
/// pass it through spatial attention when enabled. Channel count stays 3.
#[derive(Clone, Debug)]
pub struct InputInjection {
    pub n: usize,
    pub sa: Option<SpatialAttention>,
}

impl InputInjection {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        n: usize,
        spatial: bool,
    ) -> Self {
        InputInjection {
            n,
            sa: spatial.then(|| SpatialAttention::register(store, rng, &format!("{prefix}.sa"))),
        }
    }

    pub fn apply(&self, flow: &mut Flow, image: &Val) -> Result<Val> {
        let shape = image.shape();
        let divisor = 1usize << self.n;
        for (axis, extent) in [("height", shape.h), ("width", shape.w)] {
            if extent % divisor != 0 {
                return Err(Error::NotDivisible {
                    axis,
                    extent,
                    divisor,
                });
            }
        }
        let mut h = image.clone();
        for _ in 0..self.n {
            h = flow.avg_pool2d(&h, (2, 2), (2, 2), false)?;
        }
        match &self.sa {
            Some(sa) => sa.apply(flow, &h),
            None => Ok(h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn random_input(shape: Shape, seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| r.gen_range(-1.0..1.0))
    }

    /// Zero every trainable tensor that is not a batch-norm affine or an
    /// activation slope (i.e. all convolution kernels and biases).
    fn zero_conv_weights(store: &mut ParamStore) {
        for id in store.ids().collect::<Vec<_>>() {
            let p = store.get(id);
            if p.trainable && !p.decay_exempt {
                store.value_mut(id).data_mut().fill(0.0);
            }
        }
    }

    #[test]
    fn eca_kernel_size_table() {
        assert_eq!(eca_kernel_size(128), 3); // exact tie at 4.0 rounds down
        assert_eq!(eca_kernel_size(131), 5);
        assert_eq!(eca_kernel_size(64), 3);
        assert_eq!(eca_kernel_size(8), 3); // clamped up from 1
        assert_eq!(eca_kernel_size(1 << 13), 7);
    }

    #[test]
    fn ear_preserves_shape() {
        let mut store = ParamStore::new();
        let ear = EarModule::register(
            &mut store,
            &mut rng(),
            "ear",
            EarConfig {
                channels: 64,
                dilation: 5,
                shuffle_groups: 2,
            },
            AttentionKind::Eca,
        )
        .unwrap();
        let x = random_input(Shape::new(2, 64, 23, 31), 1);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x);
        let y = ear.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 64, 23, 31));
    }

    #[test]
    fn ear_rejects_odd_channels() {
        let mut store = ParamStore::new();
        let err = EarModule::register(
            &mut store,
            &mut rng(),
            "ear",
            EarConfig {
                channels: 63,
                dilation: 1,
                shuffle_groups: 1,
            },
            AttentionKind::None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn zero_weight_ear_collapses_to_channel_shuffle() {
        let mut store = ParamStore::new();
        let ear = EarModule::register(
            &mut store,
            &mut rng(),
            "ear",
            EarConfig {
                channels: 8,
                dilation: 2,
                shuffle_groups: 2,
            },
            AttentionKind::Eca,
        )
        .unwrap();
        zero_conv_weights(&mut store);
        let x = random_input(Shape::new(1, 8, 6, 7), 3);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x.clone());
        let y = ear.apply(&mut flow, &xv).unwrap();
        let expect = crate::tensor::channel_shuffle(&x, 2).unwrap();
        assert_eq!(y.tensor(), &expect);
    }

    #[test]
    fn ear_trainable_count_matches_closed_form() {
        // C=64, ECA: 9*C*(C/2) bottleneck + 4*3*(C/2) depthwise
        // + (C/2)*C pointwise + 6 batch norms (five at C/2, one at C)
        // + PReLU slopes (C + C/2) + three ECA kernels of k(C/2).
        let mut store = ParamStore::new();
        let c = 64;
        EarModule::register(
            &mut store,
            &mut rng(),
            "ear",
            EarConfig {
                channels: c,
                dilation: 7,
                shuffle_groups: 2,
            },
            AttentionKind::Eca,
        )
        .unwrap();
        let half = c / 2;
        let expected = 9 * c * half
            + 4 * 3 * half
            + half * c
            + 5 * (2 * half)
            + 2 * c
            + (c + half)
            + 3 * eca_kernel_size(half);
        assert_eq!(store.trainable_scalars(), expected);
        assert_eq!(expected, 21_417);
    }

    #[test]
    fn spatial_attention_zero_weights_halve_input() {
        let mut store = ParamStore::new();
        let sa = SpatialAttention::register(&mut store, &mut rng(), "sa");
        zero_conv_weights(&mut store);
        let x = random_input(Shape::new(1, 3, 5, 5), 5);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x.clone());
        let y = sa.apply(&mut flow, &xv).unwrap();
        for (out, inp) in y.tensor().data().iter().zip(x.data().iter()) {
            assert!((out - 0.5 * inp).abs() < 1e-15);
        }
    }

    #[test]
    fn spatial_attention_preserves_shape_and_gates_in_unit_interval() {
        let mut store = ParamStore::new();
        let sa = SpatialAttention::register(&mut store, &mut rng(), "sa");
        let x = random_input(Shape::new(1, 3, 60, 80), 6).map(|v| v.abs() + 0.1);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x.clone());
        let y = sa.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 60, 80));
        // with strictly positive input, out/in recovers the gate per pixel
        for (out, inp) in y.tensor().data().iter().zip(x.data().iter()) {
            let gate = out / inp;
            assert!(gate > 0.0 && gate < 1.0, "gate {gate} outside (0,1)");
            assert!(out.abs() <= inp.abs());
        }
    }

    #[test]
    fn eca_zero_kernel_gates_at_half() {
        let mut store = ParamStore::new();
        let ca = ChannelAttention::register(&mut store, &mut rng(), "ca", AttentionKind::Eca, 16);
        zero_conv_weights(&mut store);
        let x = random_input(Shape::new(2, 16, 4, 4), 7);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x.clone());
        let y = ca.apply(&mut flow, &xv).unwrap();
        for (out, inp) in y.tensor().data().iter().zip(x.data().iter()) {
            assert!((out - 0.5 * inp).abs() < 1e-15);
        }
    }

    #[test]
    fn se_parameter_count_is_bias_free_dense_pair() {
        let mut store = ParamStore::new();
        ChannelAttention::register(&mut store, &mut rng(), "se", AttentionKind::Se, 128);
        // 128*8 + 8*128; the fixed activation slope is not trainable
        assert_eq!(store.trainable_scalars(), 2048);
    }

    #[test]
    fn downsample_concat_path_channel_arithmetic() {
        let mut store = ParamStore::new();
        let block = DownsampleBlock::register(&mut store, &mut rng(), "down", 35, 64).unwrap();
        assert!(block.use_pool);
        assert_eq!(
            store.get(block.conv_weight()).value.shape(),
            Shape::new(29, 35, 3, 3)
        );
        let x = random_input(Shape::new(1, 35, 46, 30), 8);
        let mut flow = Flow::new(&store, Mode::Train, false);
        let xv = flow.input(x);
        let y = block.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 64, 23, 15));
    }

    #[test]
    fn downsample_single_conv_path_when_channels_do_not_grow() {
        let mut store = ParamStore::new();
        let block = DownsampleBlock::register(&mut store, &mut rng(), "down", 64, 64).unwrap();
        assert!(!block.use_pool);
        assert_eq!(
            store.get(block.conv_weight()).value.shape(),
            Shape::new(64, 64, 3, 3)
        );
        let x = random_input(Shape::new(1, 64, 8, 8), 9);
        let mut flow = Flow::new(&store, Mode::Train, false);
        let xv = flow.input(x);
        let y = block.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 64, 4, 4));
    }

    #[test]
    fn initial_block_halves_resolution() {
        let mut store = ParamStore::new();
        let block = InitialBlock::register(&mut store, &mut rng(), "initial", 32);
        let x = random_input(Shape::new(1, 3, 64, 128), 10);
        let mut flow = Flow::new(&store, Mode::Train, false);
        let xv = flow.input(x);
        let y = block.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 32, 32, 64));
    }

    #[test]
    fn initial_block_census() {
        let mut store = ParamStore::new();
        let w0 = 32;
        InitialBlock::register(&mut store, &mut rng(), "initial", w0);
        // 27*W0 + 2*9*W0^2 convolutions + 3 batch norms + 3 PReLU slopes
        let expected = 27 * w0 + 18 * w0 * w0 + 3 * 2 * w0 + 3 * w0;
        assert_eq!(store.trainable_scalars(), expected);
        let convs = store
            .iter()
            .filter(|(_, p)| p.name.contains(".conv") && p.name.ends_with(".weight"))
            .count();
        assert_eq!(convs, 3);
    }

    #[test]
    fn injection_scales_by_two_pow_n() {
        let mut store = ParamStore::new();
        let inj = InputInjection::register(&mut store, &mut rng(), "inj3", 3, true);
        let x = random_input(Shape::new(1, 3, 512, 1024), 11);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x);
        let y = inj.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 64, 128));
    }

    #[test]
    fn injection_of_constant_image_is_spatially_constant() {
        let mut store = ParamStore::new();
        let inj = InputInjection::register(&mut store, &mut rng(), "inj1", 1, false);
        let x = Tensor::filled(Shape::new(1, 3, 8, 8), 0.75);
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x);
        let y = inj.apply(&mut flow, &xv).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 4, 4));
        assert!(y.tensor().data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn injection_requires_divisible_extents() {
        let mut store = ParamStore::new();
        let inj = InputInjection::register(&mut store, &mut rng(), "inj2", 2, false);
        let x = Tensor::zeros(Shape::new(1, 3, 6, 8));
        let mut flow = Flow::eval(&store);
        let xv = flow.input(x);
        assert!(matches!(
            inj.apply(&mut flow, &xv),
            Err(Error::NotDivisible { .. })
        ));
    }
}
