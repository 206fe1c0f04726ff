use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Elem;
use crate::error::{Error, Result};

/// Glorot (Xavier) uniform initialization for a `(out_c, in_c, kd, kh, kw)`
/// kernel: i.i.d. uniform on +-sqrt(6 / (fan_in + fan_out)) with
/// `fan_in = in_c*kd*kh*kw` and `fan_out = out_c*kd*kh*kw`. Bit-reproducible
/// for a given `(seed, shape)`; the stream is ChaCha8, so the result does not
/// depend on platform.
pub fn glorot_uniform_init<E: Elem>(shape: &[usize; 5], seed: u64) -> Result<Vec<E>> {
    let [out_c, in_c, kd, kh, kw] = *shape;
    let fan_in = in_c * kd * kh * kw;
    let fan_out = out_c * kd * kh * kw;
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Config(format!("glorot init: zero fan for shape {shape:?}")));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = out_c * fan_in;
    Ok((0..len)
        .map(|_| {
            let u: f64 = rng.random();
            E::from_f64(bound * (2.0 * u - 1.0))
        })
        .collect())
}
