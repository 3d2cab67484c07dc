use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// `fan_in x fan_out` weights drawn uniformly from `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!(
            "glorot init needs positive dims, got {fan_in}x{fan_out}"
        )));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Ok(Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform(-limit, limit)))
}
