//! Central finite-difference gradient verification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl FdReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Compare an analytic gradient against central differences of `f` on a
/// random coordinate subset (at most `max_coords`, seeded). Relative error
/// uses a `max(|analytic|, |fd|, 1e-8)` denominator.
pub fn finite_difference_check(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    analytic: &Tensor,
    step: f64,
    tolerance: f64,
    max_coords: usize,
    seed: u64,
) -> FdReport {
    assert_eq!(x.shape(), analytic.shape(), "analytic gradient shape");
    let n = x.shape().count();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, max_coords).into_vec()
    };

    let mut probe = x.clone();
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for &i in &coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * step);
        let a = analytic.data()[i];
        let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    FdReport {
        checked: coords.len(),
        max_rel_err,
        worst_index,
        tolerance,
    }
}
