use nalgebra::Vector3;

use crate::scalar::Real;

/// Inequality residuals (feasible when all ≤ 0) for one foot.
///
/// Stance: the four pyramid faces `±f_x − μ f_z`, `±f_y − μ f_z`, then
/// `−f_z` and `f_z − f_max`. Swing: `|f_x|, |f_y|, |f_z|`, which are only
/// non-positive for a zero force.
pub fn friction_residuals<T: Real>(f: &Vector3<T>, stance: bool, mu: T, f_max: T) -> Vec<T> {
    if stance {
        vec![
            f.x - mu * f.z,
            -f.x - mu * f.z,
            f.y - mu * f.z,
            -f.y - mu * f.z,
            -f.z,
            f.z - f_max,
        ]
    } else {
        vec![f.x.abs(), f.y.abs(), f.z.abs()]
    }
}

pub fn friction_feasible<T: Real>(f: &Vector3<T>, stance: bool, mu: T, f_max: T, tol: T) -> bool {
    friction_residuals(f, stance, mu, f_max).iter().all(|r| *r <= tol)
}
