use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::Rng;

/// `count` Latin-hypercube samples in `[0, 1)^dim`: along every dimension
/// each of the `count` equal strata holds exactly one sample.
pub fn latin_hypercube(count: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; count];
    let mut strata: Vec<usize> = (0..count).collect();
    for j in 0..dim {
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(&strata) {
            p[j] = (*s as f64 + rng.random::<f64>()) / count as f64;
        }
    }
    points
}
