//! Small reference instances used by tests, the acceptance suite and the CLI docs.

use nalgebra::{DMatrix, DVector};

use crate::poly::PolyFunc;
use crate::problem::{Instance, Tolerances};

fn build(f: PolyFunc, g: Vec<PolyFunc>, n: usize, sigma: f64) -> Instance {
    Instance::new(f, g, DVector::zeros(n), sigma, Tolerances::default(), 0).expect("catalog instance is valid")
}

fn identity_g() -> Vec<PolyFunc> {
    (0..3)
        .map(|i| {
            let mut a = [0.0; 3];
            a[i] = 1.0;
            PolyFunc::affine(&a, 0.0)
        })
        .collect()
}

/// Degenerate in-kernel program on `R³` with `m = 2`: tilt-stable although the
/// simplified sufficient test fails.
pub fn example_degenerate() -> Instance {
    let s15 = 15f64.sqrt();
    let c = (7.0 - s15) / s15 / 4.0;
    let f = PolyFunc::from_pairs(3, &[(0.75, &[2, 0, 0]), (c, &[0, 2, 0]), (c, &[1, 1, 0]), (-1.0, &[0, 0, 1])]);
    let g1 = PolyFunc::from_pairs(3, &[(0.5, &[2, 0, 0]), (0.5, &[0, 2, 0]), (0.5, &[1, 1, 0])]);
    let g2 = PolyFunc::from_pairs(3, &[(0.125, &[2, 0, 0]), (0.25, &[0, 2, 0]), (0.25, &[1, 1, 0])]);
    let g3 = PolyFunc::from_pairs(3, &[(0.25, &[2, 0, 0]), (0.25, &[0, 2, 0]), (0.25, &[1, 1, 0]), (1.0, &[0, 0, 1])]);
    build(f, vec![g1, g2, g3], 3, 2.0 * 2f64.sqrt() / 3f64.sqrt())
}

/// `g = id` on `R³`, `f = ½‖x‖² + x₀ - x₁`: out-of-kernel with exact bound 1.
pub fn out_of_kernel() -> Instance {
    let f = PolyFunc::quadratic(&DMatrix::identity(3, 3), &[1.0, -1.0, 0.0], 0.0);
    build(f, identity_g(), 3, 1.0)
}

/// `g = id` on `R³`, `f = x₀ - x₁ + ½(x₂² - x₁²)`: negative curvature along the
/// only critical direction.
pub fn out_of_kernel_unstable() -> Instance {
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, -1.0, 1.0]));
    let f = PolyFunc::quadratic(&h, &[1.0, -1.0, 0.0], 0.0);
    build(f, identity_g(), 3, 1.0)
}

/// `g = id` on `R³` and `f = ½‖x‖²`: the critical cone is all of `Q`.
pub fn identity_zero_gradient() -> Instance {
    let f = PolyFunc::quadratic(&DMatrix::identity(3, 3), &[0.0; 3], 0.0);
    build(f, identity_g(), 3, 1.0)
}

/// Half-plane `x₁ ≥ 0` written as `(x₁, 0) ∈ Q₂`, `f = ½a x₀² + ½x₁² + x₁`.
/// In-kernel with `χ₁ = a`.
pub fn half_plane(a: f64) -> Instance {
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(&[a, 1.0]));
    let f = PolyFunc::quadratic(&h, &[0.0, 1.0], 0.0);
    let g = vec![PolyFunc::affine(&[0.0, 1.0], 0.0), PolyFunc::zero(2)];
    build(f, g, 2, 1.0)
}

/// Constraint map identically zero on `R²` with `f = ½‖x‖²`.
pub fn zero_constraint() -> Instance {
    let f = PolyFunc::quadratic(&DMatrix::identity(2, 2), &[0.0; 2], 0.0);
    build(f, vec![PolyFunc::zero(2), PolyFunc::zero(2)], 2, 1.0)
}

/// `g(x) = (-x², 0)` on `R`, so `Γ = {0}` while `dist(g(x); Q) = x²`: MSCQ fails.
pub fn squared_vertex() -> Instance {
    let f = PolyFunc::from_pairs(1, &[(0.5, &[2])]);
    let g0 = PolyFunc::from_pairs(1, &[(-1.0, &[2])]);
    build(f, vec![g0, PolyFunc::zero(1)], 1, 1.0)
}
