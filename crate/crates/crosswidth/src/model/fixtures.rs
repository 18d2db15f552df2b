//! Named problems shipped with the library.
//!
//! All of them share the well `V1 = 1 - sech^2 x` at `E0 = 0.75`
//! (walls at `+-arccosh 2`) except [`harmonic`].

use nalgebra::{DMatrix, DVector};

use super::{ModelError, Problem};
use crate::exprs::{parse, taylor_jet};

const WELL: &str = "1 - 1/cosh(x)^2";
const WINDOW: (f64, f64) = (-10.0, 10.0);
const E0: f64 = 0.75;
/// Default box half-size in units of h.
pub const BOX_L: f64 = 3.0;

fn lit(v: f64) -> String {
    format!("({v:?})")
}

/// Transversal fixture with two crossing pairs; only the right crossing is coupled.
pub fn f0() -> Problem {
    Problem::parse(
        WELL,
        "0.35 - 0.25*tanh(x)",
        "0.2*(tanh(x) + 0.125 + sqrt(0.365625))",
        "0",
        E0,
        WINDOW,
        BOX_L,
    )
    .expect("fixture parses")
}

/// Tangential fixture (m0 = 2): `V2 = mu - nu tanh x` touching the well at `x = -0.45`.
pub fn f1() -> Problem {
    tangent_family(-0.45, 2, "0.2", "0").expect("fixture solves")
}

/// Cubic contact (m0 = 3) at `tanh x = -0.4`; single crossing pair with a V2 turning point.
pub fn f2() -> Problem {
    tangent_family((-0.4f64).atanh(), 3, "0.2", "0.1").expect("fixture solves")
}

/// Single transversal crossing at the origin, `V2 = -tanh x`.
pub fn simple_transversal() -> Problem {
    Problem::parse(WELL, "0 - tanh(x)", "0.2", "0.1", E0, WINDOW, BOX_L).expect("fixture parses")
}

/// Quadratic contact at `x = -1`, with the V2 turning point just outside the left wall.
pub fn tangent_well() -> Problem {
    tangent_family(-1.0, 2, "0.2", "0.05").expect("fixture solves")
}

/// `V1 = x^2`, used for closed-form quadrature checks.
pub fn harmonic() -> Problem {
    Problem::parse("x^2", "0 - x", "0", "0", 1.0, (-3.0, 3.0), BOX_L).expect("fixture parses")
}

/// `V2 = mu - nu tanh x - sigma tanh^3 x` (sigma only for `order >= 3`) with
/// `V1 - V2` vanishing to the given order at `x_c`.
pub fn tangent_family(x_c: f64, order: usize, r0: &str, r1: &str) -> Result<Problem, ModelError> {
    let basis = ["1", "0 - tanh(x)", "0 - tanh(x)^3"];
    let n = order.clamp(1, 3);
    let mut a = DMatrix::zeros(n, n);
    let v1 = parse(WELL).expect("well parses");
    let j1 = taylor_jet(&v1, x_c, n).map_err(|source| ModelError::Domain { x: x_c, source })?;
    for (col, src) in basis.iter().take(n).enumerate() {
        let e = parse(src).expect("basis parses");
        let j = taylor_jet(&e, x_c, n).map_err(|source| ModelError::Domain { x: x_c, source })?;
        for row in 0..n {
            a[(row, col)] = j.coeffs[row];
        }
    }
    let rhs = DVector::from_iterator(n, j1.coeffs.iter().take(n).copied());
    let coef = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ModelError::Invalid(format!("no tangent family member at x = {x_c}")))?;
    let mut v2 = format!("{} - {}*tanh(x)", lit(coef[0]), lit(coef.get(1).copied().unwrap_or(0.0)));
    if n == 3 {
        v2.push_str(&format!(" - {}*tanh(x)^3", lit(coef[2])));
    }
    Problem::parse(WELL, &v2, r0, r1, E0, WINDOW, BOX_L)
}
