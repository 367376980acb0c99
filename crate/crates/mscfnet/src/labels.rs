//! Integer label maps for dense classification targets.

/// Reserved label value excluded from losses and metrics.
pub const IGNORE_LABEL: u8 = 255;

/// Batched integer label map (batch x height x width), values in `[0, K)`
/// or [`IGNORE_LABEL`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    b: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(b: usize, h: usize, w: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), b * h * w, "label map length mismatch");
        LabelMap { b, h, w, data }
    }

    pub fn filled(b: usize, h: usize, w: usize, value: u8) -> Self {
        LabelMap::new(b, h, w, vec![value; b * h * w])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.b, self.h, self.w)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, b: usize, h: usize, w: usize) -> u8 {
        self.data[(b * self.h + h) * self.w + w]
    }

    pub fn set(&mut self, b: usize, h: usize, w: usize, v: u8) {
        self.data[(b * self.h + h) * self.w + w] = v;
    }

    /// Stack single-batch maps into one batched map.
    pub fn stack(maps: &[&LabelMap]) -> Self {
        assert!(!maps.is_empty());
        let (b0, h, w) = maps[0].dims();
        assert_eq!(b0, 1, "stack expects single-batch maps");
        let mut data = Vec::with_capacity(maps.len() * h * w);
        for m in maps {
            assert_eq!(m.dims(), (1, h, w));
            data.extend_from_slice(m.data());
        }
        LabelMap::new(maps.len(), h, w, data)
    }
}
