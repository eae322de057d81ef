//! Quadrature verification of the integral conditions the annular profile
//! must satisfy: the positive growth coefficient, vanishing first moments
//! of `g = (lap a) grad F`, and the far-field decay of the induced
//! potential `lap^{-1} div g`.

use crate::envelope::Envelope;
use crate::kernels::inv_lap_d12_grad;
use crate::profiles::ProfileA;
use crate::quad::{annulus, quad1d, QuadError, QuadOpts};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How an entry's value is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// `|value| <= tolerance`.
    Zero,
    /// `value > 0`.
    Positive,
    /// `value <= tolerance` (signed, used for decay exponents).
    UpperBound,
    /// `value >= tolerance` (used for dominance ratios).
    LowerBound,
    /// Recorded for inspection, never fails.
    Info,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportEntry {
    pub condition: String,
    pub value: f64,
    pub tolerance: f64,
    pub kind: ConditionKind,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportEntry {
    pub(crate) fn zero(condition: &str, value: f64, tolerance: f64) -> Self {
        ReportEntry {
            condition: condition.into(),
            value,
            tolerance,
            kind: ConditionKind::Zero,
            pass: value.abs() <= tolerance,
            note: None,
        }
    }

    pub(crate) fn positive(condition: &str, value: f64) -> Self {
        ReportEntry {
            condition: condition.into(),
            value,
            tolerance: 0.0,
            kind: ConditionKind::Positive,
            pass: value > 0.0,
            note: None,
        }
    }

    pub(crate) fn upper_bound(condition: &str, value: f64, tolerance: f64) -> Self {
        ReportEntry {
            condition: condition.into(),
            value,
            tolerance,
            kind: ConditionKind::UpperBound,
            pass: value <= tolerance,
            note: None,
        }
    }

    pub(crate) fn lower_bound(condition: &str, value: f64, tolerance: f64) -> Self {
        ReportEntry {
            condition: condition.into(),
            value,
            tolerance,
            kind: ConditionKind::LowerBound,
            pass: value >= tolerance,
            note: None,
        }
    }

    pub(crate) fn info(condition: &str, value: f64) -> Self {
        ReportEntry {
            condition: condition.into(),
            value,
            // tolerance is unused for Info but must stay JSON-representable
            tolerance: 0.0,
            kind: ConditionKind::Info,
            pass: true,
            note: None,
        }
    }

    pub(crate) fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureReport {
    /// Quadrature scheme the values came from.
    pub rule: String,
    /// Magnitude the zero tolerances are relative to.
    pub scale: f64,
    pub entries: Vec<ReportEntry>,
}

impl QuadratureReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, condition: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.condition == condition)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| !e.pass).map(|e| e.condition.as_str()).collect()
    }
}

/// Anything with closed-form partials up to order 2 supported on an annulus
/// away from the origin; the integrands below only need `lap a` and
/// `grad^perp a`.
pub trait MomentSource {
    fn deriv(&self, k1: usize, k2: usize, x: [f64; 2]) -> f64;
    /// Radial interval containing the support, bounded away from 0.
    fn radial_support(&self) -> (f64, f64);

    fn laplacian(&self, x: [f64; 2]) -> f64 {
        self.deriv(2, 0, x) + self.deriv(0, 2, x)
    }

    fn grad_perp(&self, x: [f64; 2]) -> [f64; 2] {
        [-self.deriv(0, 1, x), self.deriv(1, 0, x)]
    }
}

impl MomentSource for ProfileA {
    fn deriv(&self, k1: usize, k2: usize, x: [f64; 2]) -> f64 {
        ProfileA::deriv(self, k1, k2, x)
    }

    fn radial_support(&self) -> (f64, f64) {
        (1.0 - self.envelope.eps, 1.0 + self.envelope.eps)
    }
}

/// Which vector field the moment conditions are applied to:
/// `g = (lap a) grad F` or its pointwise rotation `g^perp = (-g2, g1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    GradF,
    GradFPerp,
}

fn g_at<S: MomentSource>(a: &S, variant: MomentVariant, x: [f64; 2]) -> [f64; 2] {
    let lap = a.laplacian(x);
    let gf = inv_lap_d12_grad(x);
    match variant {
        MomentVariant::GradF => [lap * gf[0], lap * gf[1]],
        MomentVariant::GradFPerp => [-lap * gf[1], lap * gf[0]],
    }
}

const N_THETA: usize = 128;
const RULE: &str = "adaptive Gauss-Kronrod 7-15 radially, 128-point trapezoid in angle";

fn annular_integral<S: MomentSource>(
    a: &S,
    f: impl Fn(&S, [f64; 2]) -> f64,
) -> Result<f64, QuadError> {
    let (lo, hi) = a.radial_support();
    annulus(|x, y| f(a, [x, y]), lo.max(1e-9), hi, N_THETA, QuadOpts::with_abs_tol(1e-12))
}

/// The growth coefficient `integral of (lap a)(grad F . grad^perp a)`.
pub fn growth_coefficient<S: MomentSource>(a: &S) -> Result<f64, QuadError> {
    annular_integral(a, |a, x| {
        let gf = inv_lap_d12_grad(x);
        let gp = a.grad_perp(x);
        a.laplacian(x) * (gf[0] * gp[0] + gf[1] * gp[1])
    })
}

/// Radial reduction of the growth coefficient:
/// `(pi/32) integral of r^4 (33 A A' + 9 A'^2 r + 3 A A'' r + A' A'' r^2)`.
pub fn radial_coefficient(env: &Envelope) -> Result<f64, QuadError> {
    let (lo, hi) = ((1.0 - env.eps).max(1e-9), 1.0 + env.eps);
    let v = quad1d(
        |r| {
            let (a, a1, a2) = (env.a(r), env.a1(r), env.a2(r));
            r.powi(4)
                * (33.0 * a * a1 + 9.0 * a1 * a1 * r + 3.0 * a * a2 * r + a1 * a2 * r * r)
        },
        lo,
        hi,
        QuadOpts::with_abs_tol(1e-13),
    )?;
    Ok(PI / 32.0 * v)
}

/// The alternative closed-form constant `(3 pi/2) integral of A'^2 / r`.
/// Does not match the 2D integral: the ratio tends to 16 as the shell
/// thins, so it is reported for inspection only.
pub fn alt_constant(env: &Envelope) -> Result<f64, QuadError> {
    let (lo, hi) = ((1.0 - env.eps).max(1e-9), 1.0 + env.eps);
    let v = quad1d(|r| env.a1(r).powi(2) / r, lo, hi, QuadOpts::with_abs_tol(1e-13))?;
    Ok(1.5 * PI * v)
}

/// Verifies the full condition set on the annular profile: positive growth
/// coefficient (cross-checked against the radial reduction), and the four
/// vanishing first moments of `g = (lap a) grad F`.
pub fn verify_profile_moments(p: &ProfileA) -> Result<QuadratureReport, QuadError> {
    let coeff = growth_coefficient(p)?;
    let radial = radial_coefficient(&p.envelope)?;
    let alt = alt_constant(&p.envelope)?;
    let scale = coeff.abs().max(f64::MIN_POSITIVE);
    let tol = 1e-8 * scale;
    let moment = |w: fn([f64; 2]) -> f64, pick: usize| {
        annular_integral(p, move |p, x| {
            let g = g_at(p, MomentVariant::GradF, x);
            w(x) * g[pick]
        })
    };
    let entries = vec![
        ReportEntry::positive("coefficient_positive", coeff),
        ReportEntry::zero("radial_reduction_match", (coeff - radial) / scale, 1e-6)
            .with_note("relative gap between the 2D integral and its radial reduction"),
        ReportEntry::zero("first_moment_x1g1", moment(|x| x[0], 0)?, tol),
        ReportEntry::zero("first_moment_x2g2", moment(|x| x[1], 1)?, tol),
        ReportEntry::zero("first_moment_x1g2", moment(|x| x[0], 1)?, tol),
        ReportEntry::zero("first_moment_x2g1", moment(|x| x[1], 0)?, tol),
        ReportEntry::info("alt_constant_ratio", alt / coeff).with_note(
            "(3 pi/2) integral of A'^2/r over the 2D coefficient; tends to 16 \
             for thin shells, so it is not the matching normalization",
        ),
    ];
    Ok(QuadratureReport { rule: RULE.into(), scale, entries })
}

/// Complex moment `M_k = integral of w^k (g1 + i g2) dA`.
fn complex_moment<S: MomentSource>(
    a: &S,
    variant: MomentVariant,
    k: u32,
) -> Result<Complex64, QuadError> {
    let part = |re: bool| {
        annular_integral(a, move |a, x| {
            let g = g_at(a, variant, x);
            let w = Complex64::new(x[0], x[1]).powu(k) * Complex64::new(g[0], g[1]);
            if re {
                w.re
            } else {
                w.im
            }
        })
    };
    Ok(Complex64::new(part(true)?, part(false)?))
}

/// Potential value with the first three multipole orders subtracted:
/// `(1/2pi) Re integral of (g1 + i g2)(w) w^3 / (z^3 (z - w)) dA(w)`.
/// Equal to `lap^{-1} div g` at `z` once `M_0 = M_1 = M_2 = 0`.
fn remainder_potential<S: MomentSource>(
    a: &S,
    variant: MomentVariant,
    z: Complex64,
) -> Result<f64, QuadError> {
    let z3 = z * z * z;
    let v = annular_integral(a, move |a, x| {
        let g = g_at(a, variant, x);
        let w = Complex64::new(x[0], x[1]);
        let gc = Complex64::new(g[0], g[1]);
        (gc * w * w * w / (z3 * (z - w))).re
    })?;
    Ok(v / (2.0 * PI))
}

/// Verifies the conditions that force `lap^{-1} div g = O(|x|^{-3})`: zero
/// mass, zero first moments, and an empirical far-field check at
/// `|x| = 8, 16, 32`.
///
/// For the annular profile every multipole moment vanishes, so the
/// potential is identically zero outside the support and direct evaluation
/// only measures roundoff. The far-field check therefore evaluates the
/// multipole remainder: if it sits below the quadrature floor at all radii
/// the decay condition passes by certificate; otherwise the fitted
/// exponent must be at most -2.8.
pub fn verify_potential_moments<S: MomentSource>(
    a: &S,
    variant: MomentVariant,
) -> Result<QuadratureReport, QuadError> {
    let scale = growth_coefficient(a)?.abs().max(f64::MIN_POSITIVE);
    let tol = 1e-8 * scale;
    let int_g = |w: fn([f64; 2]) -> f64, pick: usize| {
        annular_integral(a, move |a, x| {
            let g = g_at(a, variant, x);
            w(x) * g[pick]
        })
    };
    let mut entries = vec![
        ReportEntry::zero("mass_g1", int_g(|_| 1.0, 0)?, tol),
        ReportEntry::zero("mass_g2", int_g(|_| 1.0, 1)?, tol),
        ReportEntry::zero("first_moment_x1g1", int_g(|x| x[0], 0)?, tol),
        ReportEntry::zero("first_moment_x2g2", int_g(|x| x[1], 1)?, tol),
        ReportEntry::zero(
            "first_moment_mixed",
            int_g(|x| x[0], 1)? + int_g(|x| x[1], 0)?,
            tol,
        ),
        ReportEntry::zero("second_moment_magnitude", complex_moment(a, variant, 2)?.norm(), tol)
            .with_note("certifies the multipole subtraction in the far-field remainder"),
    ];

    let radii = [8.0, 16.0, 32.0];
    let mut maxima = [0.0f64; 3];
    for (i, &r) in radii.iter().enumerate() {
        for k in 0..8 {
            let th = std::f64::consts::TAU * k as f64 / 8.0;
            let z = Complex64::from_polar(r, th);
            maxima[i] = maxima[i].max(remainder_potential(a, variant, z)?.abs());
        }
    }
    let floor = 1e-10 * scale.max(1.0);
    if maxima.iter().all(|&v| v <= floor) {
        entries.push(
            ReportEntry::zero("farfield_below_floor", maxima[0].max(maxima[1]).max(maxima[2]), floor)
                .with_note(
                    "potential vanishes outside the support to quadrature precision at \
                     |x| = 8, 16, 32; decay faster than any measurable power",
                ),
        );
    } else {
        // least-squares slope of log|v| against log|x|
        let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = maxima.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        entries.push(
            ReportEntry::upper_bound("farfield_decay_exponent", num / den, -2.8)
                .with_note("log-log slope of the far-field maxima at |x| = 8, 16, 32"),
        );
    }
    Ok(QuadratureReport { rule: RULE.into(), scale, entries })
}
