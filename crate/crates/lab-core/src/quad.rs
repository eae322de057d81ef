//! Adaptive Gauss-Kronrod quadrature with explicit breakpoints, plus tensor
//! and polar-annulus integrators for the 2D pairing integrals.
//!
//! The integrands here are smooth but can be sharply localized (widths down to
//! 1e-4 of the interval). Plain adaptivity can step over such spikes entirely,
//! so every integral whose support edges are known passes them as breakpoints.

use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct QuadOpts {
    /// Absolute error budget for the whole integral.
    pub abs_tol: f64,
    /// Relative acceptance test applied per segment.
    pub rel_tol: f64,
    /// Bisection depth limit per initial segment.
    pub max_depth: u32,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { abs_tol: 1e-12, rel_tol: 1e-12, max_depth: 48 }
    }
}

impl QuadOpts {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        QuadOpts { abs_tol, ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge on [{a}, {b}], error estimate {err:.3e}")]
    NonConvergence { a: f64, b: f64, err: f64 },
    #[error("non-finite integrand value near x = {x}")]
    NonFinite { x: f64 },
}

// 15-point Kronrod nodes with the embedded 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_2,
    0.949_107_912_342_758_524_5,
    0.864_864_423_359_769_072_8,
    0.741_531_185_599_394_439_9,
    0.586_087_235_467_691_130_3,
    0.405_845_151_377_397_166_9,
    0.207_784_955_007_898_467_6,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_964,
    0.063_092_092_629_978_553_29,
    0.104_790_010_322_250_183_84,
    0.140_653_259_715_525_918_75,
    0.169_004_726_639_267_902_83,
    0.190_350_578_064_785_409_91,
    0.204_432_940_075_298_892_41,
    0.209_482_141_084_727_828_01,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_27,
    0.279_705_391_489_276_667_9,
    0.381_830_050_505_118_944_95,
    0.417_959_183_673_469_387_76,
];

/// One Kronrod pass: returns (K15 value, |K15 - G7| error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        kron += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    let k = kron * h;
    if !k.is_finite() {
        return Err(QuadError::NonFinite { x: c });
    }
    Ok((k, (kron - gauss).abs() * h.abs()))
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    budget: f64,
    rel_tol: f64,
    depth: u32,
) -> Result<f64, QuadError> {
    let (k, err) = gk15(f, a, b)?;
    if err <= budget || err <= rel_tol * k.abs() || b - a <= 1e-15 * (a.abs() + b.abs()) {
        return Ok(k);
    }
    if depth == 0 {
        return Err(QuadError::NonConvergence { a, b, err });
    }
    let c = 0.5 * (a + b);
    let lo = adapt(f, a, c, 0.5 * budget, rel_tol, depth - 1)?;
    let hi = adapt(f, c, b, 0.5 * budget, rel_tol, depth - 1)?;
    Ok(lo + hi)
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn quad1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<f64, QuadError> {
    quad1d_break(f, a, b, &[], opts)
}

/// Adaptive integral with interior breakpoints (support edges, ramp corners).
/// Points outside `(a, b)` are ignored.
pub fn quad1d_break<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    points: &[f64],
    opts: QuadOpts,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let mut edges = vec![a];
    let mut interior: Vec<f64> = points.iter().copied().filter(|p| *p > a && *p < b).collect();
    interior.sort_by(|p, q| p.partial_cmp(q).unwrap());
    interior.dedup();
    edges.extend(interior);
    edges.push(b);
    let budget = opts.abs_tol / (edges.len() - 1) as f64;
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += adapt(&f, w[0], w[1], budget, opts.rel_tol, opts.max_depth)?;
    }
    Ok(total)
}

/// Tensor-product integral over a box, adaptive in both directions.
/// The inner (y) integral is resolved to a fraction of the outer budget so its
/// noise stays below the outer acceptance test.
pub fn quad2d<F: Fn(f64, f64) -> f64>(
    f: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    x_points: &[f64],
    y_points: &[f64],
    opts: QuadOpts,
) -> Result<f64, QuadError> {
    let width = (x_range.1 - x_range.0).abs().max(f64::MIN_POSITIVE);
    let inner_opts = QuadOpts {
        abs_tol: 0.02 * opts.abs_tol / width,
        rel_tol: 0.1 * opts.rel_tol,
        max_depth: opts.max_depth,
    };
    let inner_err = std::cell::Cell::new(None);
    let outer = |x: f64| match quad1d_break(|y| f(x, y), y_range.0, y_range.1, y_points, inner_opts)
    {
        Ok(v) => v,
        Err(e) => {
            inner_err.set(Some(e));
            f64::NAN
        }
    };
    let result = quad1d_break(outer, x_range.0, x_range.1, x_points, opts);
    if let Some(e) = inner_err.take() {
        return Err(e);
    }
    result
}

/// Integral over the annulus `r_lo <= |x| <= r_hi` of a field given in
/// Cartesian coordinates. The angular direction uses the periodic trapezoid
/// rule (exact for the finite trigonometric polynomials all our integrands
/// reduce to on circles); the radial direction is adaptive.
pub fn annulus<F: Fn(f64, f64) -> f64>(
    f: F,
    r_lo: f64,
    r_hi: f64,
    n_theta: usize,
    opts: QuadOpts,
) -> Result<f64, QuadError> {
    assert!(r_lo >= 0.0 && r_hi > r_lo);
    assert!(n_theta >= 4);
    let dth = std::f64::consts::TAU / n_theta as f64;
    let ring = |r: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n_theta {
            let th = i as f64 * dth;
            s += f(r * th.cos(), r * th.sin());
        }
        s * dth * r
    };
    quad1d(ring, r_lo, r_hi, opts)
}
