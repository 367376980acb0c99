//! Full network assembly: encoder with EAR blocks and injection pyramid,
//! multi-scale context branches, fusion, and the two-step decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BnUpdate, Flow, Val};
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::layers::{
    AttentionKind, ChannelAttention, ConvBn, DownsampleBlock, EarConfig, EarModule, InitialBlock,
    InputInjection, PreluParams, DEFAULT_SHUFFLE_GROUPS,
};
use crate::params::{he_uniform, ParamId, ParamStore};
use crate::tensor::{Conv2dSpec, Shape, Tensor};

/// How the context branches are combined before classification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FusionMode {
    Add,
    Concat,
    None,
}

/// Which taps feed context branches. The high-level tap is mandatory: the
/// main path must reach the classifier.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BranchLevels {
    pub low: bool,
    pub mid: bool,
    pub high: bool,
}

impl BranchLevels {
    pub const ALL: BranchLevels = BranchLevels {
        low: true,
        mid: true,
        high: true,
    };
    pub const HIGH_ONLY: BranchLevels = BranchLevels {
        low: false,
        mid: false,
        high: true,
    };
    pub const HIGH_MID: BranchLevels = BranchLevels {
        low: false,
        mid: true,
        high: true,
    };

    pub fn count(&self) -> usize {
        self.low as usize + self.mid as usize + self.high as usize
    }
}

/// Declarative description of one network variant.
#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub num_classes: usize,
    /// Channel widths at the 1/2, 1/4 and 1/8 scales.
    pub stage_widths: (usize, usize, usize),
    /// EAR modules per encoder block.
    pub ear_counts: (usize, usize),
    pub dilation_schedule_1: Vec<usize>,
    pub dilation_schedule_2: Vec<usize>,
    pub attention: AttentionKind,
    pub spatial_attention: bool,
    pub fusion: FusionMode,
    pub branch_levels: BranchLevels,
    pub branch_width: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        let (w0, w1, w2) = self.stage_widths;
        for (name, w) in [
            ("stage width 0", w0),
            ("stage width 1", w1),
            ("stage width 2", w2),
            ("branch width", self.branch_width),
        ] {
            if w == 0 || w % 2 != 0 {
                return fail(format!("{name} must be even and positive, got {w}"));
            }
        }
        if self.dilation_schedule_1.len() != self.ear_counts.0 {
            return fail(format!(
                "dilation schedule 1 has {} rates for {} modules",
                self.dilation_schedule_1.len(),
                self.ear_counts.0
            ));
        }
        if self.dilation_schedule_2.len() != self.ear_counts.1 {
            return fail(format!(
                "dilation schedule 2 has {} rates for {} modules",
                self.dilation_schedule_2.len(),
                self.ear_counts.1
            ));
        }
        if !self.branch_levels.high {
            return fail("the high-level branch is mandatory".into());
        }
        if self.fusion == FusionMode::None && self.branch_levels.count() != 1 {
            return fail("fusion `none` supports only the high-level branch".into());
        }
        Ok(())
    }

    /// Channel counts at the three taps (after injection concat; the high
    /// tap sits after the 1x1 recovery back to the stage width).
    pub fn tap_channels(&self) -> [usize; 3] {
        let (w0, w1, w2) = self.stage_widths;
        [w0 + 3, w1 + 3, w2]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BranchLevel {
    Low,
    Mid,
    High,
}

impl BranchLevel {
    pub fn upsample_factor(&self) -> usize {
        match self {
            BranchLevel::Low => 1,
            BranchLevel::Mid => 2,
            BranchLevel::High => 4,
        }
    }
}

#[derive(Clone, Debug)]
struct Branch {
    level: BranchLevel,
    proj: ParamId,
    ca: ChannelAttention,
}

#[derive(Clone, Debug)]
struct Classifier {
    conv: ParamId,
    bias: ParamId,
    deconv: ParamId,
}

/// Shapes and factors observed during one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Low/mid/high tap shapes (1/2, 1/4, 1/8 scales).
    pub tap_shapes: [Shape; 3],
    /// (level, bilinear factor) per active branch.
    pub branch_factors: Vec<(BranchLevel, usize)>,
    /// Common shape at which the branches are fused.
    pub fused_shape: Shape,
    pub logits_shape: Shape,
}

/// The assembled network: parameter store plus the layer graph.
#[derive(Clone, Debug)]
pub struct MscfNet {
    cfg: NetworkConfig,
    params: ParamStore,
    initial: InitialBlock,
    injections: [InputInjection; 3],
    encoder_ca: [ChannelAttention; 3],
    down1: DownsampleBlock,
    down2: DownsampleBlock,
    stage1: Vec<EarModule>,
    stage2: Vec<EarModule>,
    post: ConvBn,
    post_act: PreluParams,
    branches: Vec<Branch>,
    fusion_conv: Option<ParamId>,
    fusion_act: PreluParams,
    classifier: Classifier,
}

impl MscfNet {
    /// Deterministic construction: a fixed (config, seed) pair yields
    /// identical parameter names, shapes and initial values.
    pub fn build(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w0, w1, w2) = cfg.stage_widths;
        let sa = cfg.spatial_attention;

        let initial = InitialBlock::register(&mut store, &mut rng, "initial", w0);
        let inj1 = InputInjection::register(&mut store, &mut rng, "inject1", 1, sa);
        let ca1 =
            ChannelAttention::register(&mut store, &mut rng, "encoder_ca1", cfg.attention, w0 + 3);
        let down1 = DownsampleBlock::register(&mut store, &mut rng, "down1", w0 + 3, w1)?;
        let mut stage1 = Vec::new();
        for (i, &d) in cfg.dilation_schedule_1.iter().enumerate() {
            stage1.push(EarModule::register(
                &mut store,
                &mut rng,
                &format!("stage1.ear{i}"),
                EarConfig {
                    channels: w1,
                    dilation: d,
                    shuffle_groups: DEFAULT_SHUFFLE_GROUPS,
                },
                cfg.attention,
            )?);
        }
        let inj2 = InputInjection::register(&mut store, &mut rng, "inject2", 2, sa);
        let ca2 =
            ChannelAttention::register(&mut store, &mut rng, "encoder_ca2", cfg.attention, w1 + 3);
        let down2 = DownsampleBlock::register(&mut store, &mut rng, "down2", w1 + 3, w2)?;
        let mut stage2 = Vec::new();
        for (i, &d) in cfg.dilation_schedule_2.iter().enumerate() {
            stage2.push(EarModule::register(
                &mut store,
                &mut rng,
                &format!("stage2.ear{i}"),
                EarConfig {
                    channels: w2,
                    dilation: d,
                    shuffle_groups: DEFAULT_SHUFFLE_GROUPS,
                },
                cfg.attention,
            )?);
        }
        let inj3 = InputInjection::register(&mut store, &mut rng, "inject3", 3, sa);
        let ca3 =
            ChannelAttention::register(&mut store, &mut rng, "encoder_ca3", cfg.attention, w2 + 3);
        let post = ConvBn::register(
            &mut store,
            &mut rng,
            "post",
            w2 + 3,
            w2,
            (1, 1),
            Conv2dSpec::default(),
        );
        let post_act = PreluParams::register(&mut store, "post.act", w2);

        let tap_channels = cfg.tap_channels();
        let mut branches = Vec::new();
        let levels = [
            (BranchLevel::Low, cfg.branch_levels.low, "branch_low", 0),
            (BranchLevel::Mid, cfg.branch_levels.mid, "branch_mid", 1),
            (BranchLevel::High, cfg.branch_levels.high, "branch_high", 2),
        ];
        for (level, enabled, prefix, tap) in levels {
            if !enabled {
                continue;
            }
            branches.push(Branch {
                level,
                proj: store.register(
                    format!("{prefix}.proj.weight"),
                    he_uniform(
                        &mut rng,
                        Shape::new(cfg.branch_width, tap_channels[tap], 1, 1),
                    ),
                    true,
                    false,
                ),
                ca: ChannelAttention::register(
                    &mut store,
                    &mut rng,
                    &format!("{prefix}.ca"),
                    cfg.attention,
                    cfg.branch_width,
                ),
            });
        }
        let fusion_conv = (cfg.fusion == FusionMode::Concat).then(|| {
            store.register(
                "fusion.conv.weight",
                he_uniform(
                    &mut rng,
                    Shape::new(
                        cfg.branch_width,
                        cfg.branch_width * branches.len(),
                        1,
                        1,
                    ),
                ),
                true,
                false,
            )
        });
        let fusion_act = PreluParams::register(&mut store, "fusion.act", cfg.branch_width);
        let classifier = Classifier {
            conv: store.register(
                "classifier.conv.weight",
                he_uniform(&mut rng, Shape::new(cfg.num_classes, cfg.branch_width, 1, 1)),
                true,
                false,
            ),
            bias: store.register(
                "classifier.conv.bias",
                Tensor::zeros(Shape::new(1, cfg.num_classes, 1, 1)),
                true,
                false,
            ),
            deconv: store.register(
                "classifier.deconv.weight",
                he_uniform(&mut rng, Shape::new(cfg.num_classes, cfg.num_classes, 2, 2)),
                true,
                false,
            ),
        };

        Ok(MscfNet {
            cfg,
            params: store,
            initial,
            injections: [inj1, inj2, inj3],
            encoder_ca: [ca1, ca2, ca3],
            down1,
            down2,
            stage1,
            stage2,
            post,
            post_act,
            branches,
            fusion_conv,
            fusion_act,
            classifier,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_input(&self, image: Shape) -> Result<()> {
        if image.c != 3 {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: "3 channels".into(),
                actual: image.to_string(),
            });
        }
        for (axis, extent) in [("height", image.h), ("width", image.w)] {
            if extent % 8 != 0 {
                return Err(Error::NotDivisible {
                    axis,
                    extent,
                    divisor: 8,
                });
            }
        }
        Ok(())
    }

    /// Core forward pass through an execution context.
    pub fn run(&self, flow: &mut Flow, image: &Val) -> Result<(Val, ForwardTrace)> {
        self.check_input(image.shape())?;

        let o1 = self.initial.apply(flow, image)?;
        let i1 = self.injections[0].apply(flow, image)?;
        let c1 = flow.concat(&[&o1, &i1])?;
        let tap_low = self.encoder_ca[0].apply(flow, &c1)?;

        let d1 = self.down1.apply(flow, &tap_low)?;
        let mut h = d1;
        for ear in &self.stage1 {
            h = ear.apply(flow, &h)?;
        }
        let i2 = self.injections[1].apply(flow, image)?;
        let c2 = flow.concat(&[&h, &i2])?;
        let tap_mid = self.encoder_ca[1].apply(flow, &c2)?;

        let d2 = self.down2.apply(flow, &tap_mid)?;
        let mut h = d2;
        for ear in &self.stage2 {
            h = ear.apply(flow, &h)?;
        }
        let i3 = self.injections[2].apply(flow, image)?;
        let c3 = flow.concat(&[&h, &i3])?;
        let a3 = self.encoder_ca[2].apply(flow, &c3)?;
        let p = self.post.apply(flow, &a3)?;
        let tap_high = self.post_act.apply(flow, &p)?;

        let taps = [&tap_low, &tap_mid, &tap_high];
        let tap_shapes = [tap_low.shape(), tap_mid.shape(), tap_high.shape()];

        let mut branch_vals = Vec::new();
        let mut branch_factors = Vec::new();
        for branch in &self.branches {
            let tap = match branch.level {
                BranchLevel::Low => taps[0],
                BranchLevel::Mid => taps[1],
                BranchLevel::High => taps[2],
            };
            let w = flow.param(branch.proj);
            let projected = flow.conv2d(tap, &w, None, Conv2dSpec::default())?;
            let factor = branch.level.upsample_factor();
            let up = flow.upsample(&projected, factor)?;
            let attended = branch.ca.apply(flow, &up)?;
            branch_factors.push((branch.level, factor));
            branch_vals.push(attended);
        }

        let combined = match self.cfg.fusion {
            FusionMode::Add | FusionMode::None => {
                let mut acc = branch_vals[0].clone();
                for b in &branch_vals[1..] {
                    acc = flow.add(&acc, b)?;
                }
                acc
            }
            FusionMode::Concat => {
                let refs: Vec<&Val> = branch_vals.iter().collect();
                let cat = flow.concat(&refs)?;
                let w = flow.param(self.fusion_conv.expect("concat fusion has a conv"));
                flow.conv2d(&cat, &w, None, Conv2dSpec::default())?
            }
        };
        let fused = self.fusion_act.apply(flow, &combined)?;
        let fused_shape = fused.shape();

        let cw = flow.param(self.classifier.conv);
        let cb = flow.param(self.classifier.bias);
        let logits_half = flow.conv2d(&fused, &cw, Some(&cb), Conv2dSpec::default())?;
        let dw = flow.param(self.classifier.deconv);
        let logits = flow.transposed_conv2d(&logits_half, &dw, (2, 2), (0, 0))?;

        let trace = ForwardTrace {
            tap_shapes,
            branch_factors,
            fused_shape,
            logits_shape: logits.shape(),
        };
        Ok((logits, trace))
    }

    /// Pure inference: no recording, frozen statistics.
    pub fn forward_eval(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_eval_traced(image)?.0)
    }

    pub fn forward_eval_traced(&self, image: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        let mut flow = Flow::eval(&self.params);
        let x = flow.input(image.clone());
        let (logits, trace) = self.run(&mut flow, &x)?;
        Ok((logits.tensor().clone(), trace))
    }

    /// Training-mode loss without recording: used by finite-difference
    /// probes. Batch-norm running statistics are left untouched.
    pub fn loss_value(
        &self,
        images: &Tensor,
        labels: &LabelMap,
        class_weights: Option<&[f64]>,
    ) -> Result<f64> {
        let mut flow = Flow::new(&self.params, crate::autodiff::Mode::Train, false);
        let x = flow.input(images.clone());
        let (logits, _) = self.run(&mut flow, &x)?;
        let ce = flow.cross_entropy(&logits, labels, class_weights)?;
        Ok(ce.loss.tensor().item())
    }

    /// One recorded forward/backward: accumulates parameter gradients and
    /// folds batch statistics into the running estimates. Returns the loss.
    pub fn accumulate_loss_gradients(
        &mut self,
        images: &Tensor,
        labels: &LabelMap,
        class_weights: Option<&[f64]>,
    ) -> Result<f64> {
        let (loss, grads, updates) = {
            let mut flow = Flow::train(&self.params);
            let x = flow.input(images.clone());
            let (logits, _) = self.run(&mut flow, &x)?;
            let ce = flow.cross_entropy(&logits, labels, class_weights)?;
            let loss = ce.loss.tensor().item();
            let grads = flow.backward(&ce.loss)?;
            let updates = flow.take_bn_updates();
            (loss, grads, updates)
        };
        for (pid, g) in &grads.by_param {
            self.params.accumulate_grad(*pid, g);
        }
        self.apply_bn_updates(updates);
        Ok(loss)
    }

    pub fn apply_bn_updates(&mut self, updates: Vec<BnUpdate>) {
        use crate::tensor::BN_MOMENTUM;
        for u in updates {
            let mean = self.params.value_mut(u.mean);
            for (m, &b) in mean.data_mut().iter_mut().zip(u.batch_mean.iter()) {
                *m = (1.0 - BN_MOMENTUM) * *m + BN_MOMENTUM * b;
            }
            let var = self.params.value_mut(u.var);
            for (v, &b) in var.data_mut().iter_mut().zip(u.batch_var.iter()) {
                *v = (1.0 - BN_MOMENTUM) * *v + BN_MOMENTUM * b;
            }
        }
    }

    /// Trainable scalar count (the optimizer-visible parameters).
    pub fn count_params(&self) -> usize {
        self.params.trainable_scalars()
    }
}

/// Canonical dilation schedules.
pub const SCHEDULE_1: [usize; 5] = [1, 1, 2, 2, 5];
pub const SCHEDULE_2: [usize; 10] = [1, 2, 5, 7, 9, 2, 5, 7, 9, 17];
pub const SCHEDULE_2_POW2: [usize; 10] = [1, 1, 2, 2, 4, 4, 8, 8, 16, 16];

/// The full-size configuration (ablation-table context: 11 classes).
pub fn canonical_config() -> NetworkConfig {
    NetworkConfig {
        num_classes: 11,
        stage_widths: (32, 64, 128),
        ear_counts: (5, 10),
        dilation_schedule_1: SCHEDULE_1.to_vec(),
        dilation_schedule_2: SCHEDULE_2.to_vec(),
        attention: AttentionKind::Eca,
        spatial_attention: true,
        fusion: FusionMode::Add,
        branch_levels: BranchLevels::ALL,
        branch_width: 32,
    }
}

/// Desk-scale configuration for the training harness.
pub fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        num_classes: 3,
        stage_widths: (16, 32, 64),
        ear_counts: (2, 4),
        dilation_schedule_1: vec![1, 2],
        dilation_schedule_2: vec![1, 2, 3, 5],
        attention: AttentionKind::Eca,
        spatial_attention: true,
        fusion: FusionMode::Add,
        branch_levels: BranchLevels::ALL,
        branch_width: 32,
    }
}

/// Smallest end-to-end configuration, used by gradient checks.
pub fn micro_config() -> NetworkConfig {
    NetworkConfig {
        num_classes: 3,
        stage_widths: (8, 16, 32),
        ear_counts: (1, 2),
        dilation_schedule_1: vec![1],
        dilation_schedule_2: vec![1, 2],
        attention: AttentionKind::Eca,
        spatial_attention: true,
        fusion: FusionMode::Add,
        branch_levels: BranchLevels::ALL,
        branch_width: 16,
    }
}

/// The ablation variants, exactly one per ablation-table row.
pub fn variant_presets() -> Vec<(&'static str, NetworkConfig)> {
    let base = canonical_config();
    let bare = NetworkConfig {
        attention: AttentionKind::None,
        spatial_attention: false,
        ..base.clone()
    };
    vec![
        ("final", base.clone()),
        (
            "no-fusion",
            NetworkConfig {
                fusion: FusionMode::None,
                branch_levels: BranchLevels::HIGH_ONLY,
                ..bare.clone()
            },
        ),
        (
            "fusion-concat",
            NetworkConfig {
                fusion: FusionMode::Concat,
                ..bare.clone()
            },
        ),
        ("fusion-add", bare.clone()),
        (
            "attention-se",
            NetworkConfig {
                attention: AttentionKind::Se,
                spatial_attention: false,
                ..base.clone()
            },
        ),
        (
            "attention-eca",
            NetworkConfig {
                spatial_attention: false,
                ..base.clone()
            },
        ),
        ("+spatial", base.clone()),
        (
            "reduced-modules",
            NetworkConfig {
                ear_counts: (3, 6),
                dilation_schedule_1: vec![1, 1, 2],
                dilation_schedule_2: vec![1, 2, 5, 7, 9, 17],
                ..base.clone()
            },
        ),
        (
            "power-of-two-rates",
            NetworkConfig {
                dilation_schedule_2: SCHEDULE_2_POW2.to_vec(),
                ..base.clone()
            },
        ),
        (
            "high-only",
            NetworkConfig {
                branch_levels: BranchLevels::HIGH_ONLY,
                ..base.clone()
            },
        ),
        (
            "high+mid",
            NetworkConfig {
                branch_levels: BranchLevels::HIGH_MID,
                ..base.clone()
            },
        ),
        ("high+mid+low", base),
    ]
}

/// Look up a named configuration: the ablation presets plus the two
/// desk-scale configs.
pub fn preset(name: &str) -> Result<NetworkConfig> {
    if name == "tiny" {
        return Ok(tiny_config());
    }
    if name == "micro" {
        return Ok(micro_config());
    }
    let presets = variant_presets();
    presets
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, cfg)| cfg.clone())
        .ok_or_else(|| {
            let mut known: Vec<&str> = presets.iter().map(|(n, _)| *n).collect();
            known.push("tiny");
            known.push("micro");
            Error::UnknownPreset(name.to_string(), known.join(", "))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(shape: Shape, seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| r.gen_range(0.0..1.0))
    }

    #[test]
    fn build_is_deterministic() {
        let a = MscfNet::build(micro_config(), 11).unwrap();
        let b = MscfNet::build(micro_config(), 11).unwrap();
        assert_eq!(a.params().len(), b.params().len());
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.1.name, pb.1.name);
            assert_eq!(pa.1.value.as_ref(), pb.1.value.as_ref());
            assert_eq!(pa.1.trainable, pb.1.trainable);
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let net = MscfNet::build(micro_config(), 3).unwrap();
        let img = random_image(Shape::new(1, 3, 16, 24), 5);
        let a = net.forward_eval(&img).unwrap();
        let b = net.forward_eval(&img).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_shape_contract_camvid_geometry() {
        let mut cfg = micro_config();
        cfg.num_classes = 11;
        let net = MscfNet::build(cfg, 1).unwrap();
        let img = random_image(Shape::new(1, 3, 360, 480), 2);
        let (logits, trace) = net.forward_eval_traced(&img).unwrap();
        assert_eq!(logits.shape(), Shape::new(1, 11, 360, 480));
        assert_eq!(trace.tap_shapes[0].h, 180);
        assert_eq!(trace.tap_shapes[1].h, 90);
        assert_eq!(trace.tap_shapes[2].h, 45);
        assert_eq!(trace.fused_shape.h, 180);
    }

    #[test]
    fn forward_works_for_any_config_on_toy_geometry() {
        for (name, cfg) in variant_presets() {
            let mut cfg = cfg;
            cfg.num_classes = 4;
            let net = MscfNet::build(cfg, 0).unwrap();
            let img = random_image(Shape::new(2, 3, 64, 96), 3);
            let logits = net.forward_eval(&img).unwrap();
            assert_eq!(logits.shape(), Shape::new(2, 4, 64, 96), "preset {name}");
        }
    }

    #[test]
    fn branch_factors_are_one_two_four() {
        let net = MscfNet::build(micro_config(), 9).unwrap();
        let img = random_image(Shape::new(1, 3, 32, 32), 4);
        let (_, trace) = net.forward_eval_traced(&img).unwrap();
        assert_eq!(
            trace.branch_factors,
            vec![
                (BranchLevel::Low, 1),
                (BranchLevel::Mid, 2),
                (BranchLevel::High, 4),
            ]
        );
    }

    #[test]
    fn indivisible_input_is_rejected_with_extent() {
        let net = MscfNet::build(micro_config(), 9).unwrap();
        let img = Tensor::zeros(Shape::new(1, 3, 30, 32));
        match net.forward_eval(&img) {
            Err(Error::NotDivisible { axis, extent, .. }) => {
                assert_eq!(axis, "height");
                assert_eq!(extent, 30);
            }
            other => panic!("expected divisibility error, got {other:?}"),
        }
    }

    #[test]
    fn removing_a_branch_changes_params_by_its_census() {
        let all = MscfNet::build(canonical_config(), 0).unwrap();
        let mut cfg = canonical_config();
        cfg.branch_levels = BranchLevels::HIGH_MID;
        let without_low = MscfNet::build(cfg, 0).unwrap();
        let low_census = all.params().trainable_scalars_under("branch_low");
        assert!(low_census > 0);
        assert_eq!(
            all.count_params() - without_low.count_params(),
            low_census
        );
    }

    #[test]
    fn presets_match_table_rows() {
        let presets = variant_presets();
        let get = |n: &str| preset(n).unwrap();
        assert_eq!(presets.len(), 12);
        assert_eq!(get("high-only").branch_levels, BranchLevels::HIGH_ONLY);
        let nf = get("no-fusion");
        assert_eq!(nf.fusion, FusionMode::None);
        assert_eq!(nf.branch_levels, BranchLevels::HIGH_ONLY);
        assert_eq!(nf.attention, AttentionKind::None);
        assert!(!nf.spatial_attention);
        let fin = get("final");
        assert_eq!(fin.stage_widths, (32, 64, 128));
        assert_eq!(fin.ear_counts, (5, 10));
        assert_eq!(fin.dilation_schedule_1, SCHEDULE_1.to_vec());
        assert_eq!(fin.dilation_schedule_2, SCHEDULE_2.to_vec());
        assert_eq!(fin.attention, AttentionKind::Eca);
        assert!(fin.spatial_attention);
        assert_eq!(fin.fusion, FusionMode::Add);
        assert_eq!(fin.branch_width, 32);
        assert_eq!(
            get("reduced-modules").dilation_schedule_2,
            vec![1, 2, 5, 7, 9, 17]
        );
        assert_eq!(
            get("power-of-two-rates").dilation_schedule_2,
            SCHEDULE_2_POW2.to_vec()
        );
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_, _))));
    }

    #[test]
    fn config_validation_rejects_bad_combinations() {
        let mut cfg = canonical_config();
        cfg.branch_levels.high = false;
        assert!(cfg.validate().is_err());

        let mut cfg = canonical_config();
        cfg.dilation_schedule_1 = vec![1, 2];
        assert!(cfg.validate().is_err());

        let mut cfg = canonical_config();
        cfg.stage_widths.1 = 63;
        assert!(cfg.validate().is_err());

        let mut cfg = canonical_config();
        cfg.fusion = FusionMode::None; // all levels still enabled
        assert!(cfg.validate().is_err());
    }
}
