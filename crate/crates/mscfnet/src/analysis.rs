//! Static analyzers: parameter census, multiply-accumulate census,
//! receptive-field arithmetic, and dilation-schedule footprint coverage.
//!
//! MAC accounting: one multiply-accumulate = one unit. Convolutions count
//! `out_elems * (kh*kw*in_channels/groups)`; window pools count
//! `out_elems * window`; bilinear upsampling counts four taps per output;
//! attention, normalization and elementwise ops count one per element
//! touched. Parameter counts are trainable scalars only.

use crate::error::Result;
use crate::layers::{eca_kernel_size, AttentionKind, SE_REDUCTION, SPATIAL_KERNEL};
use crate::network::{BranchLevel, FusionMode, MscfNet, NetworkConfig};
use crate::tensor::{Conv2dSpec, Shape};

/// One block-level row of the analysis table. `name` is the dotted prefix
/// of the block's parameters.
#[derive(Clone, Debug)]
pub struct LayerRow {
    pub name: String,
    pub output: Shape,
    pub params: usize,
    pub macs: u64,
}

/// Receptive field extent and stride (jump) along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RfState {
    pub rf: usize,
    pub jump: usize,
}

/// One conv/pool step of a receptive-field chain.
#[derive(Clone, Copy, Debug)]
pub struct RfStep {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl RfStep {
    pub fn new(kernel: usize, stride: usize, dilation: usize) -> Self {
        RfStep {
            kernel,
            stride,
            dilation,
        }
    }
}

/// Apply the receptive-field recurrence `r' = r + (k-1)*d*j`, `j' = j*s`
/// over a chain in order.
pub fn receptive_field(chain: &[RfStep]) -> RfState {
    let mut state = RfState { rf: 1, jump: 1 };
    for step in chain {
        state.rf += (step.kernel - 1) * step.dilation * state.jump;
        state.jump *= step.stride;
    }
    state
}

/// Footprint coverage of a stack of 3-tap dilated convolutions, computed by
/// brute-force set convolution of the offset sets {-d, 0, d}.
#[derive(Clone, Debug)]
pub struct CoverageReport {
    pub schedule: Vec<usize>,
    /// Half-width of the theoretical receptive field.
    pub radius: usize,
    pub reachable: usize,
    pub positions: usize,
    pub density: f64,
    pub largest_gap: usize,
}

impl CoverageReport {
    pub fn full(&self) -> bool {
        self.reachable == self.positions
    }

    pub fn verdict(&self) -> &'static str {
        if self.full() {
            "full"
        } else {
            "gapped"
        }
    }
}

pub fn dilation_coverage(schedule: &[usize]) -> CoverageReport {
    assert!(!schedule.is_empty(), "coverage of an empty schedule");
    let radius: usize = schedule.iter().sum();
    let len = 2 * radius + 1;
    let mut hit = vec![false; len];
    hit[radius] = true;
    for &d in schedule {
        let mut next = vec![false; len];
        for (i, &h) in hit.iter().enumerate() {
            if !h {
                continue;
            }
            next[i] = true;
            if i >= d {
                next[i - d] = true;
            }
            if i + d < len {
                next[i + d] = true;
            }
        }
        hit = next;
    }
    let reachable = hit.iter().filter(|&&h| h).count();
    let mut largest_gap = 0;
    let mut run = 0;
    for &h in &hit {
        if h {
            largest_gap = largest_gap.max(run);
            run = 0;
        } else {
            run += 1;
        }
    }
    largest_gap = largest_gap.max(run);
    CoverageReport {
        schedule: schedule.to_vec(),
        radius,
        reachable,
        positions: len,
        density: reachable as f64 / len as f64,
        largest_gap,
    }
}

/// Whole-network analysis for a given input geometry.
#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub input: Shape,
    pub rows: Vec<LayerRow>,
    pub total_params: usize,
    pub total_macs: u64,
    /// Main-path receptive field at the low/mid/high taps (square axes).
    pub tap_rf: [RfState; 3],
    pub coverage: [CoverageReport; 2],
}

const REFERENCE_PARAMS: f64 = 1.1486e6;

impl AnalysisReport {
    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "analysis for input {} (MACs: 1 unit = 1 multiply-accumulate)\n",
            self.input
        ));
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        s.push_str(&format!(
            "{:<name_w$}  {:>16}  {:>12}  {:>14}\n",
            "layer", "output", "params", "MACs"
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<name_w$}  {:>16}  {:>12}  {:>14}\n",
                r.name,
                r.output.to_string(),
                r.params,
                r.macs
            ));
        }
        s.push_str(&format!(
            "total params: {} ({:.4}M)\n",
            self.total_params,
            self.total_params as f64 / 1e6
        ));
        s.push_str(&format!(
            "reference size 1.1486M, delta: {:+.4}M\n",
            (self.total_params as f64 - REFERENCE_PARAMS) / 1e6
        ));
        s.push_str(&format!(
            "total MACs: {} ({:.2}G)\n",
            self.total_macs,
            self.total_macs as f64 / 1e9
        ));
        for (i, (label, rf)) in ["low", "mid", "high"].iter().zip(self.tap_rf.iter()).enumerate() {
            let _ = i;
            s.push_str(&format!(
                "receptive field at {label} tap: {} (jump {})\n",
                rf.rf, rf.jump
            ));
        }
        for (i, c) in self.coverage.iter().enumerate() {
            s.push_str(&format!(
                "schedule {} {:?}: coverage: {} (density {:.4}, largest gap {}, radius {})\n",
                i + 1,
                c.schedule,
                c.verdict(),
                c.density,
                c.largest_gap,
                c.radius
            ));
        }
        s
    }

    /// CSV rendering, one row per layer.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("name,out_batch,out_channels,out_height,out_width,params,macs\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.name, r.output.b, r.output.c, r.output.h, r.output.w, r.params, r.macs
            ));
        }
        s
    }
}

fn conv_macs(out: Shape, kernel: (usize, usize), in_per_group: usize) -> u64 {
    out.count() as u64 * (kernel.0 * kernel.1 * in_per_group) as u64
}

fn eca_macs(shape: Shape) -> u64 {
    let gap = shape.count() as u64;
    let k = eca_kernel_size(shape.c) as u64;
    let conv = (shape.b * shape.c) as u64 * k;
    let gate = (shape.b * shape.c) as u64;
    gap + conv + gate + shape.count() as u64
}

fn se_macs(shape: Shape) -> u64 {
    let hidden = (shape.c / SE_REDUCTION).max(1) as u64;
    let bc = (shape.b * shape.c) as u64;
    let gap = shape.count() as u64;
    let dense = bc * hidden * 2;
    let act = shape.b as u64 * hidden;
    gap + dense + act + bc + shape.count() as u64
}

fn attention_macs(kind: AttentionKind, shape: Shape) -> u64 {
    match kind {
        AttentionKind::None => 0,
        AttentionKind::Eca => eca_macs(shape),
        AttentionKind::Se => se_macs(shape),
    }
}

fn sa_macs(shape: Shape) -> u64 {
    let plane = (shape.b * shape.plane()) as u64;
    let reductions = 2 * shape.count() as u64;
    let conv = plane * (SPATIAL_KERNEL * SPATIAL_KERNEL * 2) as u64;
    reductions + conv + plane + shape.count() as u64
}

fn bn_act_macs(shape: Shape) -> u64 {
    2 * shape.count() as u64
}

/// Walk the network structure for one input geometry, mirroring the layer
/// arithmetic without touching tensor data.
pub fn analyze(net: &MscfNet, input: Shape) -> Result<AnalysisReport> {
    let cfg = net.config();
    let store = net.params();
    let (w0, w1, w2) = cfg.stage_widths;
    let mut rows: Vec<LayerRow> = Vec::new();
    let mut push = |rows: &mut Vec<LayerRow>, name: &str, output: Shape, macs: u64| {
        rows.push(LayerRow {
            name: name.to_string(),
            output,
            params: store.trainable_scalars_under(name),
            macs,
        });
    };

    let s2 = Conv2dSpec {
        stride: (2, 2),
        padding: (1, 1),
        ..Default::default()
    };
    let s1 = Conv2dSpec::with_padding(1, 1);

    // initial block: stride-2 conv then two stride-1 convs, each with bn+act
    let half = s2.output_shape(input, w0, 3, 3)?;
    let mut macs = conv_macs(half, (3, 3), 3) + bn_act_macs(half);
    for _ in 0..2 {
        macs += conv_macs(s1.output_shape(half, w0, 3, 3)?, (3, 3), w0) + bn_act_macs(half);
    }
    push(&mut rows, "initial", half, macs);

    // injection при scale n: n average pools then optional spatial attention
    let injection = |n: usize| -> (Shape, u64) {
        let mut s = input;
        let mut macs = 0u64;
        for _ in 0..n {
            s = Shape::new(s.b, s.c, s.h / 2, s.w / 2);
            macs += s.count() as u64 * 4;
        }
        if cfg.spatial_attention {
            macs += sa_macs(s);
        }
        (s, macs)
    };

    let (inj1, inj1_macs) = injection(1);
    push(&mut rows, "inject1", inj1, inj1_macs);
    let cat1 = Shape::new(half.b, w0 + 3, half.h, half.w);
    push(
        &mut rows,
        "encoder_ca1",
        cat1,
        attention_macs(cfg.attention, cat1),
    );

    // downsample: stride-2 conv (+ 2x2 pool on the concat path), bn+act
    let down = |in_shape: Shape, n_in: usize, n_out: usize| -> Result<(Shape, u64)> {
        let out = s2.output_shape(in_shape, n_out, 3, 3)?;
        let conv_out = if n_in < n_out { n_out - n_in } else { n_out };
        let mut macs = conv_macs(Shape::new(out.b, conv_out, out.h, out.w), (3, 3), n_in);
        if n_in < n_out {
            macs += (out.b * n_in * out.h * out.w) as u64 * 4;
        }
        Ok((out, macs + bn_act_macs(out)))
    };

    let (quarter, d1_macs) = down(cat1, w0 + 3, w1)?;
    push(&mut rows, "down1", quarter, d1_macs);

    // EAR module at channel count c
    let ear_macs = |s: Shape, c: usize| -> u64 {
        let hc = c / 2;
        let hs = Shape::new(s.b, hc, s.h, s.w);
        let mut m = s.count() as u64; // entry activation
        m += conv_macs(hs, (3, 3), c) + bn_act_macs(hs) - hs.count() as u64; // bottleneck conv+bn
        m += 4 * (conv_macs(hs, (3, 1), 1) + hs.count() as u64); // four depthwise convs + bns
        m += 2 * hs.count() as u64; // two interaction adds
        m += 3 * attention_macs(cfg.attention, hs);
        m += hs.count() as u64; // mid activation
        m += conv_macs(s, (1, 1), hc) + s.count() as u64; // pointwise + bn
        m += s.count() as u64; // residual add
        m
    };

    for (i, d) in cfg.dilation_schedule_1.iter().enumerate() {
        let _ = d;
        push(
            &mut rows,
            &format!("stage1.ear{i}"),
            quarter,
            ear_macs(quarter, w1),
        );
    }

    let (inj2, inj2_macs) = injection(2);
    push(&mut rows, "inject2", inj2, inj2_macs);
    let cat2 = Shape::new(quarter.b, w1 + 3, quarter.h, quarter.w);
    push(
        &mut rows,
        "encoder_ca2",
        cat2,
        attention_macs(cfg.attention, cat2),
    );

    let (eighth, d2_macs) = down(cat2, w1 + 3, w2)?;
    push(&mut rows, "down2", eighth, d2_macs);

    for (i, d) in cfg.dilation_schedule_2.iter().enumerate() {
        let _ = d;
        push(
            &mut rows,
            &format!("stage2.ear{i}"),
            eighth,
            ear_macs(eighth, w2),
        );
    }

    let (inj3, inj3_macs) = injection(3);
    push(&mut rows, "inject3", inj3, inj3_macs);
    let cat3 = Shape::new(eighth.b, w2 + 3, eighth.h, eighth.w);
    push(
        &mut rows,
        "encoder_ca3",
        cat3,
        attention_macs(cfg.attention, cat3),
    );
    push(
        &mut rows,
        "post",
        eighth,
        conv_macs(eighth, (1, 1), w2 + 3) + bn_act_macs(eighth),
    );

    // branches: 1x1 projection at tap scale, upsample to 1/2, attention
    let taps = [
        (BranchLevel::Low, cfg.branch_levels.low, "branch_low", cat1),
        (BranchLevel::Mid, cfg.branch_levels.mid, "branch_mid", cat2),
        (BranchLevel::High, cfg.branch_levels.high, "branch_high", eighth),
    ];
    let bw = cfg.branch_width;
    let fused_shape = Shape::new(half.b, bw, half.h, half.w);
    let mut active = 0;
    for (level, enabled, name, tap) in taps {
        if !enabled {
            continue;
        }
        active += 1;
        let proj = Shape::new(tap.b, bw, tap.h, tap.w);
        let mut m = conv_macs(proj, (1, 1), tap.c);
        if level.upsample_factor() > 1 {
            m += fused_shape.count() as u64 * 4;
        }
        m += attention_macs(cfg.attention, fused_shape);
        push(&mut rows, name, fused_shape, m);
    }

    let fusion_macs = match cfg.fusion {
        FusionMode::Add | FusionMode::None => {
            (active as u64 - 1) * fused_shape.count() as u64 + fused_shape.count() as u64
        }
        FusionMode::Concat => {
            conv_macs(fused_shape, (1, 1), bw * active) + fused_shape.count() as u64
        }
    };
    push(&mut rows, "fusion", fused_shape, fusion_macs);

    let k = cfg.num_classes;
    let logits_half = Shape::new(half.b, k, half.h, half.w);
    let logits = Shape::new(input.b, k, input.h, input.w);
    let classifier_macs =
        conv_macs(logits_half, (1, 1), bw) + logits_half.count() as u64 * (4 * k) as u64;
    push(&mut rows, "classifier", logits, classifier_macs);

    let total_params: usize = rows.iter().map(|r| r.params).sum();
    let total_macs: u64 = rows.iter().map(|r| r.macs).sum();
    debug_assert_eq!(total_params, net.count_params());

    Ok(AnalysisReport {
        input,
        rows,
        total_params,
        total_macs,
        tap_rf: tap_receptive_fields(cfg),
        coverage: [
            dilation_coverage(&cfg.dilation_schedule_1),
            dilation_coverage(&cfg.dilation_schedule_2),
        ],
    })
}

/// Main-path receptive-field chains to the three taps. EAR modules
/// contribute their 3x3 bottleneck plus the dilated factorized pair (the
/// axes are symmetric: 3x1 acts on height where 1x3 acts on width).
pub fn tap_chains(cfg: &NetworkConfig) -> [Vec<RfStep>; 3] {
    let mut low = vec![
        RfStep::new(3, 2, 1),
        RfStep::new(3, 1, 1),
        RfStep::new(3, 1, 1),
    ];
    let mut mid = low.clone();
    mid.push(RfStep::new(3, 2, 1));
    for &d in &cfg.dilation_schedule_1 {
        mid.push(RfStep::new(3, 1, 1)); // bottleneck
        mid.push(RfStep::new(3, 1, d)); // dilated factorized pair
    }
    let mut high = mid.clone();
    high.push(RfStep::new(3, 2, 1));
    for &d in &cfg.dilation_schedule_2 {
        high.push(RfStep::new(3, 1, 1));
        high.push(RfStep::new(3, 1, d));
    }
    high.push(RfStep::new(1, 1, 1)); // 1x1 recovery
    low.shrink_to_fit();
    [low, mid, high]
}

pub fn tap_receptive_fields(cfg: &NetworkConfig) -> [RfState; 3] {
    let [low, mid, high] = tap_chains(cfg);
    [
        receptive_field(&low),
        receptive_field(&mid),
        receptive_field(&high),
    ]
}
