//! Adaptive Dormand-Prince 5(4) integrator over real or complex vectors.

use nalgebra::{ComplexField, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h0: 1e-2, h_min: 1e-12, h_max: 1.0, max_steps: 200_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<T: ComplexField<RealField = f64>>(y: &DVector<T>, terms: &[(f64, &DVector<T>)], h: f64) -> DVector<T> {
    let mut out = y.clone();
    for (c, k) in terms {
        out.axpy(T::from_real(h * c), k, T::one());
    }
    out
}

/// Integrate `y' = f(x, y)` from `x0` to `x1` (either direction). `observe` is
/// called after every accepted step with `(x, &mut y)` and may rescale `y`;
/// returning `false` stops the integration early.
pub fn dopri45<T, F, O>(
    mut f: F,
    x0: f64,
    y0: DVector<T>,
    x1: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Result<(f64, DVector<T>)>
where
    T: ComplexField<RealField = f64>,
    F: FnMut(f64, &DVector<T>) -> DVector<T>,
    O: FnMut(f64, &mut DVector<T>) -> bool,
{
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut h = opts.h0.min((x1 - x0).abs()).max(opts.h_min);
    let mut k1 = f(x, &y);
    let mut steps = 0;
    while dir * (x1 - x) > 1e-14 * (1.0 + x1.abs()) {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StiffIntegration { x });
        }
        if h > (x1 - x).abs() {
            h = (x1 - x).abs();
        }
        let hs = dir * h;
        let k2 = f(x + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
        let k3 = f(x + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
        let k4 = f(x + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
        let k5 = f(x + C5 * hs, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs));
        let k6 = f(
            x + hs,
            &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
        );
        let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
        let k7 = f(x + hs, &y_new);
        let err_vec = axpy(
            &DVector::zeros(y.len()),
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
            hs,
        );
        let mut err: f64 = 0.0;
        for i in 0..y.len() {
            let sc = opts.atol + opts.rtol * y[i].clone().modulus().max(y_new[i].clone().modulus());
            err = err.max(err_vec[i].clone().modulus() / sc);
        }
        if !err.is_finite() {
            h *= 0.2;
            if h < opts.h_min {
                return Err(Error::StiffIntegration { x });
            }
            continue;
        }
        if err <= 1.0 {
            x += hs;
            y = y_new;
            let before = y.clone();
            if !observe(x, &mut y) {
                return Ok((x, y));
            }
            // Reuse the last stage unless the observer rescaled y.
            k1 = if y == before { k7 } else { f(x, &y) };
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * fac).min(opts.h_max);
        if h < opts.h_min {
            return Err(Error::StiffIntegration { x });
        }
    }
    Ok((x, y))
}
