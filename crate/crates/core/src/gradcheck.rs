//! Central finite differences, used as the independent oracle for every
//! backward rule. Nothing here calls into the reverse pass.

use crate::engine::{ParamGrads, ParamStore};
use crate::error::Result;

pub const STEP: f64 = 1e-5;

/// `∂f/∂x_i ≈ (f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute difference norm when both
/// vectors are below `1e-10`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Per-parameter relative error between `analytic` and finite differences of
/// `loss`, which must run a full forward pass over the given store.
pub fn check_params(
    store: &ParamStore<f64>,
    analytic: &ParamGrads<f64>,
    h: f64,
    mut loss: impl FnMut(&mut ParamStore<f64>) -> Result<f64>,
) -> Result<Vec<(String, f64)>> {
    let mut work = store.clone();
    let mut report = Vec::new();
    for name in store.trainable_names() {
        let base = store.tensor(&name)?.data().to_vec();
        let mut failure = None;
        let numeric = numeric_gradient(&base, h, |probe| {
            let entry = work.get_mut(&name).expect("name from store");
            entry.tensor.data_mut().copy_from_slice(probe);
            match loss(&mut work) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        work.get_mut(&name)?.tensor.data_mut().copy_from_slice(&base);
        let got = analytic
            .get(&name)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; base.len()]);
        report.push((name, relative_error(&got, &numeric)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let g = numeric_gradient(&[2.0, -1.0], STEP, |x| x[0].powi(3) + 4.0 * x[1]);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_scales() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-15);
    }
}
