//! Fixed class color palette for rendering label maps.

use crate::labels::{LabelMap, IGNORE_LABEL};

/// Street-scene palette (road, sidewalk, building, wall, fence, pole,
/// traffic light, traffic sign, vegetation, terrain, sky, person, rider,
/// car, truck, bus, train, motorcycle, bicycle).
pub const CITYSCAPES_COLORS: [[u8; 3]; 19] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
];

/// Palette for `k` classes: the fixed table when it suffices, otherwise a
/// deterministic golden-angle hue walk.
pub fn class_palette(k: usize) -> Vec<[u8; 3]> {
    if k <= CITYSCAPES_COLORS.len() {
        return CITYSCAPES_COLORS[..k].to_vec();
    }
    (0..k)
        .map(|c| {
            let hue = (c as f64 * 137.50776405) % 360.0;
            let (h, s, v) = (hue, 0.8, 0.9);
            let c_ = v * s;
            let hp = h / 60.0;
            let x = c_ * (1.0 - (hp % 2.0 - 1.0).abs());
            let (r, g, b) = match hp as usize {
                0 => (c_, x, 0.0),
                1 => (x, c_, 0.0),
                2 => (0.0, c_, x),
                3 => (0.0, x, c_),
                4 => (x, 0.0, c_),
                _ => (c_, 0.0, x),
            };
            let m = v - c_;
            [
                ((r + m) * 255.0).round() as u8,
                ((g + m) * 255.0).round() as u8,
                ((b + m) * 255.0).round() as u8,
            ]
        })
        .collect()
}

/// Color-code a label map; ignore pixels render black.
pub fn render_labels(labels: &LabelMap, palette: &[[u8; 3]]) -> Vec<u8> {
    let (b, h, w) = labels.dims();
    assert_eq!(b, 1, "render one map at a time");
    let mut rgb = vec![0u8; h * w * 3];
    for (i, &value) in labels.data().iter().enumerate() {
        let color = if value == IGNORE_LABEL {
            [0, 0, 0]
        } else {
            palette[value as usize]
        };
        rgb[i * 3..i * 3 + 3].copy_from_slice(&color);
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_class_renders_its_palette_color_exactly() {
        let palette = class_palette(4);
        let labels = LabelMap::new(1, 1, 4, vec![0, 1, 2, 3]);
        let rgb = render_labels(&labels, &palette);
        for k in 0..4 {
            assert_eq!(&rgb[k * 3..k * 3 + 3], &palette[k]);
        }
    }

    #[test]
    fn large_palettes_are_deterministic_and_distinct_enough() {
        let a = class_palette(40);
        let b = class_palette(40);
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
    }

    #[test]
    fn ignore_renders_black() {
        let palette = class_palette(2);
        let labels = LabelMap::new(1, 1, 1, vec![IGNORE_LABEL]);
        assert_eq!(render_labels(&labels, &palette), vec![0, 0, 0]);
    }
}
