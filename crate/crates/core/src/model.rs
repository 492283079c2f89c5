//! The interface every perturbation mechanism exposes to estimators and certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A discrete mechanism mapping a domain index `x` to an output index `y`
/// with probability `q(y | x)`.
pub trait PerturbationModel: Sync {
    fn domain_size(&self) -> usize;

    fn prob(&self, x: usize, y: usize) -> f64;

    /// The full conditional distribution `q(· | x)`.
    fn row(&self, x: usize) -> Vec<f64> {
        (0..self.domain_size()).map(|y| self.prob(x, y)).collect()
    }

    fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize;
}

/// Exhaustive LDP certificate: `max_{x,x',y} ln(q(y|x) / q(y|x'))`.
///
/// For each output the worst pair is the largest over the smallest entry of
/// its column, so the scan is O(d²).
pub fn ldp_certificate<M: PerturbationModel + ?Sized>(model: &M) -> f64 {
    let d = model.domain_size();
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut lo = vec![f64::INFINITY; d];
    for x in 0..d {
        for (y, q) in model.row(x).into_iter().enumerate() {
            hi[y] = hi[y].max(q);
            lo[y] = lo[y].min(q);
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| (h / l).ln()).fold(f64::NEG_INFINITY, f64::max)
}

/// Per-user random stream: the run seed picks the key, the user id picks the stream.
pub fn user_rng(seed: u64, user: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user);
    rng
}
