//! Small dense-vector helpers shared by the store, the objective and the generator.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `a` to unit L2 norm in place. Vectors whose norm is already exactly
/// one are left bit-identical. Returns the norm before scaling.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n != 1.0 && n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}
