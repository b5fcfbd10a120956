//! Central finite-difference gradient checking.
//!
//! The independent oracle for every analytic gradient in this crate: perturb
//! one coordinate at a time and compare (f(x+h) - f(x-h)) / 2h against the
//! tape's output.

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Default relative tolerance for gradient agreement.
pub const FD_REL_TOL: f64 = 1e-3;

/// Relative error between an analytic gradient entry and its central
/// finite-difference estimate: |a - fd| / max(|a|, 1e-8).
pub fn rel_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1e-8)
}

/// Maximum relative error over all coordinates of `x0`.
///
/// `f` must be a pure function of its argument; it is re-evaluated 2·len
/// times with per-coordinate perturbations of `step`.
pub fn max_rel_error(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    assert_eq!(x0.len(), analytic.len());
    let mut worst: f64 = 0.0;
    let mut x = x0.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        let fd = (up - down) / (2.0 * step);
        worst = worst.max(rel_error(analytic[i], fd));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        // f(x) = sum x_i^2, grad = 2x
        let x0 = [0.4, -1.3, 2.2];
        let analytic: Vec<f64> = x0.iter().map(|v| 2.0 * v).collect();
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let err = max_rel_error(&mut f, &x0, &analytic, FD_STEP);
        assert!(err < FD_REL_TOL, "err = {err}");
    }
}
