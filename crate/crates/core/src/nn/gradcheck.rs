//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used here, so the checker is independent of
//! the analytic backward code it validates.

use crate::error::Result;
use crate::matrix::Matrix;

use super::{reconstruction_loss, Autoencoder, Gradients};

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Magnitude below which gradient entries are compared absolutely, i.e.
/// `|a - b| / max(|a|, |b|, floor)`. Entries of this size are at the level of
/// the rounding noise of a central difference with `h = 1e-6`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central-difference gradient of `loss` w.r.t. every entry of `params`.
/// `params` is restored exactly after each probe.
pub fn numeric_gradient(params: &mut [f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let plus = loss(params);
        params[i] = orig - h;
        let minus = loss(params);
        params[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Numeric gradient of the reconstruction loss w.r.t. every model parameter,
/// laid out like [`Gradients`].
pub fn numeric_reconstruction_gradients(model: &Autoencoder, batch: &Matrix, h: f64) -> Result<Gradients> {
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    let n_groups = model.parameter_sizes().len();
    for group in 0..n_groups {
        let len = probe.parameters_mut()[group].len();
        for j in 0..len {
            let orig = probe.parameters_mut()[group][j];
            probe.parameters_mut()[group][j] = orig + h;
            let plus = reconstruction_loss(batch, &probe.forward(batch)?.reconstruction().clone())?;
            probe.parameters_mut()[group][j] = orig - h;
            let minus = reconstruction_loss(batch, &probe.forward(batch)?.reconstruction().clone())?;
            probe.parameters_mut()[group][j] = orig;
            let layer = &mut grads.layers[group / 2];
            let slot = if group % 2 == 0 {
                &mut layer.weights.as_mut_slice()[j]
            } else {
                &mut layer.biases[j]
            };
            *slot = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Largest [`relative_error`] between two gradient sets of the same layout.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    analytic
        .slices()
        .into_iter()
        .zip(numeric.slices())
        .flat_map(|(a, n)| a.iter().zip(n).map(|(&x, &y)| relative_error(x, y)))
        .fold(0.0, f64::max)
}

/// Compares analytic and numeric reconstruction gradients; returns the
/// worst relative error.
pub fn check_reconstruction(model: &Autoencoder, batch: &Matrix, h: f64) -> Result<f64> {
    let (_, analytic) = model.backward_reconstruction(batch)?;
    let numeric = numeric_reconstruction_gradients(model, batch, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_instance(seed: u64) -> (Autoencoder, Matrix) {
        let mut rng = Rng::new(seed);
        let input = 2 + rng.below(3);
        let hidden = 2 + rng.below(4);
        let embed = 1 + rng.below(3);
        let mut model = Autoencoder::new(input, &[hidden], embed, &mut rng).unwrap();
        for p in model.parameters_mut() {
            p.iter_mut().for_each(|x| *x = rng.uniform(-0.5, 0.5));
        }
        let n = 1 + rng.below(8);
        let batch = Matrix::from_fn(n, input, |_, _| rng.next_f64());
        (model, batch)
    }

    #[test]
    fn numeric_gradient_of_quadratic() {
        let mut p = vec![1.0, -2.0];
        let g = numeric_gradient(&mut p, 1e-6, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn reconstruction_backprop_matches_finite_differences() {
        for seed in 0..25 {
            let (model, batch) = random_instance(seed);
            let err = check_reconstruction(&model, &batch, DEFAULT_STEP).unwrap();
            assert!(err < 1e-5, "seed {seed}: relative error {err}");
        }
    }
}
