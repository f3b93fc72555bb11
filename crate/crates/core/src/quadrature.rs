//! Adaptive one-dimensional quadrature.

const INITIAL_PANELS: usize = 64;
const MAX_DEPTH: u32 = 40;

/// Adaptive trapezoid rule on `[a, b]` to absolute tolerance `tol`.
///
/// The interval starts as 64 panels; each panel is halved until the
/// one-step Richardson error estimate falls below its share of `tol`. The
/// accepted panel value is the extrapolated one. Integrand errors abort the
/// integration.
pub fn adaptive_trapezoid<E>(mut f: impl FnMut(f64) -> Result<f64, E>, a: f64, b: f64, tol: f64) -> Result<f64, E> {
    if a == b {
        return Ok(0.0);
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    let mut total = 0.0;
    let mut left = f(a)?;
    for i in 0..INITIAL_PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
        let right = f(hi)?;
        total += panel(&mut f, lo, hi, left, right, panel_tol, 0)?;
        left = right;
    }
    Ok(total)
}

fn panel<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, E> {
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let coarse = 0.5 * (b - a) * (fa + fb);
    let fine = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
    let err = (fine - coarse) / 3.0;
    if err.abs() <= tol || depth >= MAX_DEPTH {
        return Ok(fine + err);
    }
    Ok(panel(f, a, m, fa, fm, 0.5 * tol, depth + 1)? + panel(f, m, b, fm, fb, 0.5 * tol, depth + 1)?)
}

/// [`adaptive_trapezoid`] for infallible integrands.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    match adaptive_trapezoid(|t| Ok::<_, std::convert::Infallible>(f(t)), a, b, tol) {
        Ok(v) => v,
        Err(e) => match e {},
    }
}
