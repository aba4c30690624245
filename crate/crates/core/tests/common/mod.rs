use nalgebra::{DMatrix, DVector};

/// Algebraic least-squares circle through `pts`: solves
/// `x^2 + y^2 + D x + E y + F = 0` and returns `(cx, cy, r)`.
pub fn fit_circle(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let a = DMatrix::from_fn(pts.len(), 3, |r, c| match c {
        0 => pts[r].0,
        1 => pts[r].1,
        _ => 1.0,
    });
    let b = DVector::from_fn(pts.len(), |r, _| -(pts[r].0.powi(2) + pts[r].1.powi(2)));
    let sol = a.svd(true, true).solve(&b, 1e-12).expect("solvable");
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    (cx, cy, (cx * cx + cy * cy - sol[2]).sqrt())
}
