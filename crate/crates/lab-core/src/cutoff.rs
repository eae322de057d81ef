//! Smooth compactly supported cutoffs built from the exponential glue
//! f(s) = exp(-1/s). Infinitely smooth, so spectral sampling of fields built
//! from them carries no algebraic truncation tail.

/// exp(-1/s) for s > 0, extended by 0. Smooth on all of R.
fn glue(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// glue'(s) = glue(s) / s^2.
fn glue_d1(s: f64) -> f64 {
    if s > 0.0 {
        glue(s) / (s * s)
    } else {
        0.0
    }
}

/// glue''(s) = glue(s) (1 - 2 s) / s^4.
fn glue_d2(s: f64) -> f64 {
    if s > 0.0 {
        glue(s) * (1.0 - 2.0 * s) / (s * s * s * s)
    } else {
        0.0
    }
}

/// Even plateau cutoff: 1 on |t| <= 1, 0 on |t| >= 2, glued in between.
pub fn plateau(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let a = glue(2.0 - t);
        let b = glue(t - 1.0);
        a / (a + b)
    }
}

/// d/dt plateau(t), odd in t.
pub fn plateau_d1(t: f64) -> f64 {
    let sg = if t < 0.0 { -1.0 } else { 1.0 };
    let t = t.abs();
    if t <= 1.0 || t >= 2.0 {
        return 0.0;
    }
    let a = glue(2.0 - t);
    let b = glue(t - 1.0);
    let ap = -glue_d1(2.0 - t);
    let bp = glue_d1(t - 1.0);
    sg * (ap * b - a * bp) / ((a + b) * (a + b))
}

/// Second derivative of the plateau cutoff.
pub fn plateau_d2(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 || t >= 2.0 {
        return 0.0;
    }
    let a = glue(2.0 - t);
    let b = glue(t - 1.0);
    let ap = -glue_d1(2.0 - t);
    let bp = glue_d1(t - 1.0);
    let app = glue_d2(2.0 - t);
    let bpp = glue_d2(t - 1.0);
    let s = a + b;
    // quotient rule on (a'b - ab') / s^2
    ((app * b - a * bpp) * s - 2.0 * (ap * b - a * bp) * (ap + bp)) / (s * s * s)
}

/// Monotone ramp: 0 for t <= 0, 1 for t >= 1.
pub fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = glue(t);
        a / (a + glue(1.0 - t))
    }
}

/// d/dt ramp(t).
pub fn ramp_d1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = glue(t);
    let b = glue(1.0 - t);
    let ap = glue_d1(t);
    let bp = -glue_d1(1.0 - t);
    (ap * b - a * bp) / ((a + b) * (a + b))
}
