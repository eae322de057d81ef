//! Axisymmetric (no-swirl) quadrature conditions. At the axis the first and
//! second z-derivatives of the axial velocity are pairings of the meridional
//! vorticity against homogeneous kernels in (r, z); the profile below is the
//! two-shell interpolation whose balance parameter kills the first-order
//! pairing while the squared-gradient pairing stays large.

use crate::cutoff::{plateau, plateau_d1, plateau_d2};
use crate::moments::{QuadratureReport, ReportEntry};
use crate::profiles::ConstructionError;
use crate::quad::{quad1d_break, QuadError, QuadOpts};

/// Radial anchor 2/sqrt(3), the root of 3 r^3 = 4 r: the balance weight
/// changes sign across |z| = 1 there, which is what lets the two shells
/// at |z| = 1 -+ eps pull the pairing in opposite directions.
pub fn anchor_radius() -> f64 {
    2.0 / 3.0f64.sqrt()
}

/// Kernel of the second z-derivative of the axial velocity at the origin,
/// `3 r^2 (r^2 - 4 z^2) / (r^2 + z^2)^{7/2}`. Homogeneous of degree -3,
/// even in z.
pub fn axial_curvature_kernel(r: f64, z: f64) -> f64 {
    let d = r * r + z * z;
    3.0 * r * r * (r * r - 4.0 * z * z) / d.powf(3.5)
}

/// Derivative of the curvature kernel along the anisotropic rescaling
/// `(r, z) -> (lambda r, lambda^{-2} z)` at lambda = 1:
/// `-270 r (r^4 - 12 r^2 z^2 + 8 z^4) / (r^2 + z^2)^{11/2}`.
/// Homogeneous of degree -6, even in z.
pub fn anisotropy_response_kernel(r: f64, z: f64) -> f64 {
    let (r2, z2) = (r * r, z * z);
    let d = r2 + z2;
    -270.0 * r * (r2 * r2 - 12.0 * r2 * z2 + 8.0 * z2 * z2) / d.powf(5.5)
}

/// Kernel of the first z-derivative of the axial velocity at the origin,
/// `r^2 z / (r^2 + z^2)^{5/2}`. Homogeneous of degree -2, odd in z.
pub fn axial_gradient_kernel(r: f64, z: f64) -> f64 {
    let d = r * r + z * z;
    r * r * z / d.powf(2.5)
}

/// First-variation weight `z (3 r^3 - 4 r z^2) / (r^2 + z^2)^{9/2}`: the
/// pairing of the profile against this must vanish for the chosen s.
/// Homogeneous of degree -5, odd in z.
pub fn balance_weight(r: f64, z: f64) -> f64 {
    let d = r * r + z * z;
    z * (3.0 * r * r * r - 4.0 * r * z * z) / d.powf(4.5)
}

/// The three weights of the squared-gradient pairing, multiplying
/// `(d_r h)^2`, `(d_z h)^2` and `d_z h d_r h` in that order.
pub fn gradient_pairing_weights(r: f64, z: f64) -> [f64; 3] {
    let (r2, z2) = (r * r, z * z);
    let d = r2 + z2;
    let p = d.powf(4.5);
    [
        (3.0 * r2 * r2 - 24.0 * r2 * z2 + 8.0 * z2 * z2) / (r * p),
        (-4.0 * r2 * r2 + 27.0 * r2 * z2 - 4.0 * z2 * z2) / (r * p),
        10.0 * z * (3.0 * r2 - 4.0 * z2) / p,
    ]
}

/// Interpolated two-shell profile
/// `h = (1-s) h_lo + s h_hi`, where `h_c = z phi((r - r0)/delta) phi((|z| - c)/eps^2)`
/// with plateau cutoff phi, `r0 = 2/sqrt(3)` and shell centers `c = 1 -+ eps`.
/// Odd in z by construction; supported in `|r - r0| <= 2 delta`.
#[derive(Clone, Copy, Debug)]
pub struct AxiProfile {
    pub eps: f64,
    pub delta: f64,
    pub s: f64,
}

impl AxiProfile {
    pub fn new(eps: f64, delta: f64, s: f64) -> Result<Self, ConstructionError> {
        if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < eps / 10.0) {
            return Err(ConstructionError::ShellSeparation { eps, delta });
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(ConstructionError::InterpolationRange { s });
        }
        Ok(AxiProfile { eps, delta, s })
    }

    fn radial_arg(&self, r: f64) -> f64 {
        (r - anchor_radius()) / self.delta
    }

    /// Blend of the two |z|-shell cutoffs and its first two |z|-derivatives.
    fn shells(&self, az: f64) -> (f64, f64, f64) {
        let e2 = self.eps * self.eps;
        let mut q = 0.0;
        let mut q1 = 0.0;
        let mut q2 = 0.0;
        for (c, wt) in [(1.0 - self.eps, 1.0 - self.s), (1.0 + self.eps, self.s)] {
            let t = (az - c) / e2;
            q += wt * plateau(t);
            q1 += wt * plateau_d1(t) / e2;
            q2 += wt * plateau_d2(t) / (e2 * e2);
        }
        (q, q1, q2)
    }

    pub fn value(&self, r: f64, z: f64) -> f64 {
        let fr = plateau(self.radial_arg(r));
        if fr == 0.0 {
            return 0.0;
        }
        z * fr * self.shells(z.abs()).0
    }

    pub fn d_r(&self, r: f64, z: f64) -> f64 {
        let fr = plateau_d1(self.radial_arg(r)) / self.delta;
        if fr == 0.0 {
            return 0.0;
        }
        z * fr * self.shells(z.abs()).0
    }

    pub fn d_z(&self, r: f64, z: f64) -> f64 {
        let fr = plateau(self.radial_arg(r));
        if fr == 0.0 {
            return 0.0;
        }
        let (q, q1, _) = self.shells(z.abs());
        // d/dz [z Q(|z|)] = Q + |z| Q'
        fr * (q + z.abs() * q1)
    }

    pub fn d_rr(&self, r: f64, z: f64) -> f64 {
        let fr = plateau_d2(self.radial_arg(r)) / (self.delta * self.delta);
        if fr == 0.0 {
            return 0.0;
        }
        z * fr * self.shells(z.abs()).0
    }

    pub fn d_rz(&self, r: f64, z: f64) -> f64 {
        let fr = plateau_d1(self.radial_arg(r)) / self.delta;
        if fr == 0.0 {
            return 0.0;
        }
        let (q, q1, _) = self.shells(z.abs());
        fr * (q + z.abs() * q1)
    }

    pub fn d_zz(&self, r: f64, z: f64) -> f64 {
        let fr = plateau(self.radial_arg(r));
        if fr == 0.0 {
            return 0.0;
        }
        let (_, q1, q2) = self.shells(z.abs());
        // d/dz [Q + |z| Q'] = sign(z) (2 Q' + |z| Q''); shells avoid z = 0
        z.signum() * fr * (2.0 * q1 + z.abs() * q2)
    }

    /// Radial support interval.
    pub fn support_r(&self) -> (f64, f64) {
        (anchor_radius() - 2.0 * self.delta, anchor_radius() + 2.0 * self.delta)
    }

    /// |z|-support (union of the two shells, padded to one interval).
    pub fn support_abs_z(&self) -> (f64, f64) {
        let e2 = self.eps * self.eps;
        (1.0 - self.eps - 2.0 * e2, 1.0 + self.eps + 2.0 * e2)
    }

    fn r_breakpoints(&self) -> [f64; 2] {
        let r0 = anchor_radius();
        [r0 - self.delta, r0 + self.delta]
    }

    fn z_breakpoints(&self) -> [f64; 8] {
        let e2 = self.eps * self.eps;
        let mut pts = [0.0; 8];
        for (i, c) in [1.0 - self.eps, 1.0 + self.eps].into_iter().enumerate() {
            pts[4 * i] = c - 2.0 * e2;
            pts[4 * i + 1] = c - e2;
            pts[4 * i + 2] = c + e2;
            pts[4 * i + 3] = c + 2.0 * e2;
        }
        pts
    }
}

/// Integral over the meridional half-plane of an integrand even in z:
/// computes z > 0 and doubles. Breakpoints sit at every cutoff corner.
fn pairing_integral(
    p: &AxiProfile,
    f: impl Fn(f64, f64) -> f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    let (r_lo, r_hi) = p.support_r();
    let (z_lo, z_hi) = p.support_abs_z();
    let zb = p.z_breakpoints();
    let rb = p.r_breakpoints();
    let opts = QuadOpts::with_abs_tol(abs_tol);
    let inner_opts = QuadOpts::with_abs_tol(abs_tol / 10.0);
    let inner_err: std::cell::Cell<Option<QuadError>> = std::cell::Cell::new(None);
    let v = quad1d_break(
        |r| match quad1d_break(|z| f(r, z), z_lo, z_hi, &zb, inner_opts) {
            Ok(v) => v,
            Err(e) => {
                inner_err.set(Some(e));
                0.0
            }
        },
        r_lo,
        r_hi,
        &rb,
        opts,
    )?;
    if let Some(e) = inner_err.take() {
        return Err(e);
    }
    Ok(2.0 * v)
}

const PAIRING_TOL: f64 = 1e-10;

/// First-variation pairing `integral of balance_weight * h dr dz`.
/// Linear in s; positive at s = 0, negative at s = 1 for thin shells.
pub fn balance_integral(p: &AxiProfile) -> Result<f64, QuadError> {
    pairing_integral(p, |r, z| balance_weight(r, z) * p.value(r, z), PAIRING_TOL)
}

/// The three terms of the squared-gradient pairing, in the order
/// `(d_r h)^2`, `(d_z h)^2`, `d_z h d_r h`. The first scales like
/// 1/delta and must dominate; the others stay O(1).
pub fn gradient_pairing_terms(p: &AxiProfile) -> Result<[f64; 3], QuadError> {
    let term = |pick: usize| {
        pairing_integral(
            p,
            |r, z| {
                let w = gradient_pairing_weights(r, z);
                match pick {
                    0 => p.d_r(r, z).powi(2) * w[0],
                    1 => p.d_z(r, z).powi(2) * w[1],
                    _ => p.d_z(r, z) * p.d_r(r, z) * w[2],
                }
            },
            PAIRING_TOL,
        )
    };
    Ok([term(0)?, term(1)?, term(2)?])
}

/// Sum of the three squared-gradient terms.
pub fn gradient_pairing_integral(p: &AxiProfile) -> Result<f64, QuadError> {
    Ok(gradient_pairing_terms(p)?.iter().sum())
}

/// Bisection for the s at which the balance pairing vanishes: converges the
/// bracket to width `tol`, then re-quadratures the blended profile at the
/// root so the returned s also satisfies `|I(s)| <= tol`. Errors with both
/// endpoint values if I(0) and I(1) do not straddle zero.
pub fn find_balance(eps: f64, delta: f64, tol: f64) -> Result<f64, ConstructionError> {
    let tol = tol.max(1e-12);
    let base = |s: f64| -> Result<f64, ConstructionError> {
        Ok(balance_integral(&AxiProfile::new(eps, delta, s)?)?)
    };
    let i0 = base(0.0)?;
    let i1 = base(1.0)?;
    if !(i0 > 0.0 && i1 < 0.0) {
        return Err(ConstructionError::NoSignChange { at_zero: i0, at_one: i1 });
    }
    // the blend is affine in s and integration is linear, so the endpoint
    // quadratures determine the pairing at every s
    let affine = |s: f64| (1.0 - s) * i0 + s * i1;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if affine(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let v = balance_integral(&AxiProfile::new(eps, delta, s)?)?;
    if v.abs() > tol {
        return Err(ConstructionError::Quadrature(QuadError::NonConvergence {
            a: lo,
            b: hi,
            err: v.abs(),
        }));
    }
    Ok(s)
}

/// Full condition report: sign change of the balance pairing, the balanced
/// profile's residual, interiority of s, the 1/delta scaling of the leading
/// squared-gradient term, and its dominance over the other two at
/// delta = eps^2/10.
pub fn verify_axi_conditions(eps: f64, delta: f64) -> Result<QuadratureReport, ConstructionError> {
    let i0 = balance_integral(&AxiProfile::new(eps, delta, 0.0)?)?;
    let i1 = balance_integral(&AxiProfile::new(eps, delta, 1.0)?)?;
    let scale = i0.abs().max(i1.abs()).max(f64::MIN_POSITIVE);
    let mut entries = vec![
        ReportEntry::positive("balance_pairing_positive_at_low_shell", i0),
        ReportEntry::positive("balance_pairing_negative_at_high_shell", -i1),
    ];
    if i0 > 0.0 && i1 < 0.0 {
        let s0 = find_balance(eps, delta, 1e-8)?;
        let residual = balance_integral(&AxiProfile::new(eps, delta, s0)?)?;
        entries.push(ReportEntry::zero("balance_residual_at_root", residual, 1e-8));
        entries.push(
            ReportEntry::positive("balance_root_interior", s0 * (1.0 - s0))
                .with_note(format!("s = {s0:.8}")),
        );
    }

    // dominance regime: width tied to the shell thickness
    let d_dom = eps * eps / 10.0;
    let terms_at = |d: f64| -> Result<[f64; 3], ConstructionError> {
        let s = find_balance(eps, d, 1e-8)?;
        Ok(gradient_pairing_terms(&AxiProfile::new(eps, d, s)?)?)
    };
    let t = terms_at(d_dom)?;
    let t_half = terms_at(d_dom / 2.0)?;
    entries.push(
        ReportEntry::zero(
            "radial_term_inverse_width_scaling",
            t_half[0] / t[0] / 2.0 - 1.0,
            0.2,
        )
        .with_note("halving the radial width must double the squared-radial-derivative term"),
    );
    entries.push(
        ReportEntry::lower_bound(
            "radial_term_dominance",
            t[0].abs() / (t[1].abs() + t[2].abs()),
            10.0,
        )
        .with_note(format!(
            "terms at delta = eps^2/10: {:+.6e}, {:+.6e}, {:+.6e}",
            t[0], t[1], t[2]
        )),
    );
    Ok(QuadratureReport {
        rule: "iterated adaptive Gauss-Kronrod 7-15 with cutoff-corner breakpoints".into(),
        scale,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernels_are_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(417);
        for _ in 0..100 {
            let r = rng.gen_range(0.3..2.0);
            let z = rng.gen_range(-2.0..2.0);
            let lam = rng.gen_range(0.5..3.0);
            let cases: [(fn(f64, f64) -> f64, i32); 4] = [
                (axial_curvature_kernel, -3),
                (anisotropy_response_kernel, -6),
                (axial_gradient_kernel, -2),
                (balance_weight, -5),
            ];
            for (k, deg) in cases {
                assert_relative_eq!(
                    k(lam * r, lam * z),
                    lam.powi(deg) * k(r, z),
                    max_relative = 1e-10,
                    epsilon = 1e-12
                );
            }
            let w = gradient_pairing_weights(r, z);
            let ws = gradient_pairing_weights(lam * r, lam * z);
            for i in 0..3 {
                assert_relative_eq!(ws[i], lam.powi(-6) * w[i], max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kernel_parity_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(418);
        for _ in 0..50 {
            let r = rng.gen_range(0.3..2.0);
            let z = rng.gen_range(0.05..2.0);
            assert_eq!(axial_curvature_kernel(r, -z), axial_curvature_kernel(r, z));
            assert_eq!(anisotropy_response_kernel(r, -z), anisotropy_response_kernel(r, z));
            assert_eq!(axial_gradient_kernel(r, -z), -axial_gradient_kernel(r, z));
            assert_eq!(balance_weight(r, -z), -balance_weight(r, z));
            let wp = gradient_pairing_weights(r, z);
            let wm = gradient_pairing_weights(r, -z);
            assert_eq!(wm[0], wp[0]);
            assert_eq!(wm[1], wp[1]);
            assert_eq!(wm[2], -wp[2]);
        }
    }

    /// Derivative of the curvature kernel along `(r, z) -> (lam r, z/lam^2)`
    /// at lam = 1, in closed form so quadrature over it stays noise-free.
    fn scaling_deriv(r: f64, z: f64) -> f64 {
        let (r2, z2) = (r * r, z * z);
        let d = r2 + z2;
        -9.0 * r2 * (r2 * r2 - 18.0 * r2 * z2 + 16.0 * z2 * z2) / d.powf(4.5)
    }

    #[test]
    fn scaling_derivative_closed_form_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(419);
        for _ in 0..30 {
            let r = rng.gen_range(0.5..1.8);
            let z = rng.gen_range(-1.5..1.5);
            let h = 1e-5;
            let f = |lam: f64| axial_curvature_kernel(lam * r, z / (lam * lam));
            let fd = (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
            assert_relative_eq!(scaling_deriv(r, z), fd, max_relative = 1e-7, epsilon = 1e-9);
        }
    }

    /// The response kernel is defined through the pairing identity
    /// `int d/dlam F(lam r, z/lam^2)|_1 * (1/r)(-d_zz - d_rr + d_r/r) a = int F2 a`
    /// for test functions a supported away from r = 0; the closed form is
    /// the result of the integrations by parts.
    #[test]
    fn anisotropy_response_satisfies_weak_identity() {
        use crate::quad::quad2d;
        let a = |r: f64, z: f64| plateau(4.0 * (r - 1.0)) * plateau(4.0 * z);
        let a_rr = |r: f64, z: f64| 16.0 * plateau_d2(4.0 * (r - 1.0)) * plateau(4.0 * z);
        let a_zz = |r: f64, z: f64| 16.0 * plateau(4.0 * (r - 1.0)) * plateau_d2(4.0 * z);
        let a_r = |r: f64, z: f64| 4.0 * plateau_d1(4.0 * (r - 1.0)) * plateau(4.0 * z);
        let opts = QuadOpts::with_abs_tol(1e-9);
        let lhs = quad2d(
            |r, z| scaling_deriv(r, z) * (-a_zz(r, z) - a_rr(r, z) + a_r(r, z) / r) / r,
            (0.5, 1.5),
            (-0.5, 0.5),
            &[0.75, 1.25],
            &[-0.25, 0.25],
            opts,
        )
        .unwrap();
        let rhs = quad2d(
            |r, z| anisotropy_response_kernel(r, z) * a(r, z),
            (0.5, 1.5),
            (-0.5, 0.5),
            &[0.75, 1.25],
            &[-0.25, 0.25],
            opts,
        )
        .unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-6);
    }

    #[test]
    fn profile_rejects_bad_parameters() {
        assert!(matches!(
            AxiProfile::new(0.05, 0.01, 0.5),
            Err(ConstructionError::ShellSeparation { .. })
        ));
        assert!(matches!(
            AxiProfile::new(0.05, 0.002, 1.5),
            Err(ConstructionError::InterpolationRange { .. })
        ));
        assert!(AxiProfile::new(0.05, 0.002, 0.5).is_ok());
    }

    #[test]
    fn profile_is_odd_in_z_and_zero_at_midplane() {
        let p = AxiProfile::new(0.05, 0.002, 0.3).unwrap();
        let r0 = anchor_radius();
        for z in [0.93, 0.95, 1.0, 1.04, 1.055] {
            assert_eq!(p.value(r0, -z), -p.value(r0, z));
            assert_eq!(p.d_r(r0 + 0.001, -z), -p.d_r(r0 + 0.001, z));
            assert_eq!(p.d_z(r0, -z), p.d_z(r0, z));
        }
        assert_eq!(p.value(r0, 0.0), 0.0);
    }

    #[test]
    fn endpoints_pick_out_single_shells() {
        let eps = 0.05;
        let p0 = AxiProfile::new(eps, 0.002, 0.0).unwrap();
        let p1 = AxiProfile::new(eps, 0.002, 1.0).unwrap();
        let r0 = anchor_radius();
        // on the low shell plateau the s=0 profile equals z, the s=1 vanishes
        let z = 1.0 - eps;
        assert_abs_diff_eq!(p0.value(r0, z), z);
        assert_abs_diff_eq!(p1.value(r0, z), 0.0);
        let z = 1.0 + eps;
        assert_abs_diff_eq!(p0.value(r0, z), 0.0);
        assert_abs_diff_eq!(p1.value(r0, z), z);
    }

    /// Agreement to 1e-6 of each derivative's natural scale (1/delta per
    /// radial order, 1/eps^2 per z order); the profiles are steep, so
    /// absolute comparisons would say nothing.
    #[test]
    fn derivatives_match_finite_differences() {
        let p = AxiProfile::new(0.05, 0.002, 0.37).unwrap();
        let r0 = anchor_radius();
        let e2 = p.eps * p.eps;
        let mut rng = ChaCha8Rng::seed_from_u64(420);
        for _ in 0..20 {
            let r = r0 + rng.gen_range(-2.2..2.2) * p.delta;
            let z = (1.0 + rng.gen_range(-1.3..1.3) * p.eps) * [-1.0, 1.0][rng.gen_range(0..2)];
            let h = 1e-8;
            let fd_r = (p.value(r + h, z) - p.value(r - h, z)) / (2.0 * h);
            let fd_z = (p.value(r, z + h) - p.value(r, z - h)) / (2.0 * h);
            assert_abs_diff_eq!(p.d_r(r, z), fd_r, epsilon = 1e-6 / p.delta);
            assert_abs_diff_eq!(p.d_z(r, z), fd_z, epsilon = 1e-6 / e2);
            let fd_rr = (p.d_r(r + h, z) - p.d_r(r - h, z)) / (2.0 * h);
            let fd_rz = (p.d_r(r, z + h) - p.d_r(r, z - h)) / (2.0 * h);
            let fd_zz = (p.d_z(r, z + h) - p.d_z(r, z - h)) / (2.0 * h);
            assert_abs_diff_eq!(p.d_rr(r, z), fd_rr, epsilon = 1e-6 / (p.delta * p.delta));
            assert_abs_diff_eq!(p.d_rz(r, z), fd_rz, epsilon = 1e-6 / (p.delta * e2));
            assert_abs_diff_eq!(p.d_zz(r, z), fd_zz, epsilon = 1e-6 / (e2 * e2));
        }
    }

    #[test]
    fn balance_integral_matches_frozen_values() {
        // adaptive scipy quadrature on the same breakpoint layout
        let i0 = balance_integral(&AxiProfile::new(0.05, 0.002, 0.0).unwrap()).unwrap();
        let i1 = balance_integral(&AxiProfile::new(0.05, 0.002, 1.0).unwrap()).unwrap();
        assert_relative_eq!(i0, 9.788690916e-7, max_relative = 1e-6);
        assert_relative_eq!(i1, -8.550126902e-7, max_relative = 1e-6);
    }

    #[test]
    fn balance_is_linear_in_s() {
        let at = |s: f64| balance_integral(&AxiProfile::new(0.05, 0.002, s).unwrap()).unwrap();
        let (i0, ih, i1) = (at(0.0), at(0.5), at(1.0));
        assert_relative_eq!(ih, 0.5 * (i0 + i1), max_relative = 1e-6);
    }

    #[test]
    fn even_profile_kills_the_balance_pairing() {
        // replace h by |z| * cutoffs (even in z): integrand turns odd, so the
        // full-plane integral is zero; the half-plane routine shows this as
        // the even-part pairing computed directly
        let p = AxiProfile::new(0.05, 0.002, 0.4).unwrap();
        let even = |r: f64, z: f64| p.value(r, z.abs());
        let (r_lo, r_hi) = p.support_r();
        let (z_lo, z_hi) = p.support_abs_z();
        let zb = p.z_breakpoints();
        let opts = QuadOpts::with_abs_tol(1e-12);
        let upper = quad1d_break(
            |r| {
                quad1d_break(|z| balance_weight(r, z) * even(r, z), z_lo, z_hi, &zb, opts)
                    .unwrap()
            },
            r_lo,
            r_hi,
            &p.r_breakpoints(),
            opts,
        )
        .unwrap();
        let lower = quad1d_break(
            |r| {
                quad1d_break(
                    |z| balance_weight(r, -z) * even(r, -z),
                    z_lo,
                    z_hi,
                    &zb,
                    opts,
                )
                .unwrap()
            },
            r_lo,
            r_hi,
            &p.r_breakpoints(),
            opts,
        )
        .unwrap();
        assert_abs_diff_eq!(upper + lower, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn find_balance_hits_frozen_root_and_requadrature_vanishes() {
        let s0 = find_balance(0.05, 0.002, 1e-8).unwrap();
        assert_relative_eq!(s0, 0.5337689165, max_relative = 1e-5);
        assert!(s0 > 0.0 && s0 < 1.0);
        let res = balance_integral(&AxiProfile::new(0.05, 0.002, s0).unwrap()).unwrap();
        assert!(res.abs() <= 1e-8);
        let coarse = find_balance(0.05, 0.002, 1e-4).unwrap();
        assert!((coarse - s0).abs() < 1e-3);
    }

    #[test]
    fn gradient_terms_match_frozen_values_and_scale_inversely_with_width() {
        let eps = 0.05;
        let d = eps * eps / 10.0;
        let s = find_balance(eps, d, 1e-8).unwrap();
        let t = gradient_pairing_terms(&AxiProfile::new(eps, d, s).unwrap()).unwrap();
        assert_relative_eq!(t[0], -32.7125015, max_relative = 1e-6);
        assert_relative_eq!(t[1], 0.438119, max_relative = 1e-4);
        assert!(t[0].abs() / (t[1].abs() + t[2].abs()) > 10.0);

        let s2 = find_balance(eps, d / 2.0, 1e-8).unwrap();
        let t2 = gradient_pairing_terms(&AxiProfile::new(eps, d / 2.0, s2).unwrap()).unwrap();
        assert_relative_eq!(t2[0], -65.4249896, max_relative = 1e-6);
        assert_relative_eq!(t2[0] / t[0], 2.0, max_relative = 0.2);
    }

    #[test]
    fn condition_report_passes() {
        let report = verify_axi_conditions(0.05, 0.002).unwrap();
        assert!(report.all_pass(), "failed: {:?}", report.failed());
        assert!(report.entry("balance_residual_at_root").is_some());
        assert!(report.entry("radial_term_dominance").unwrap().value > 10.0);
    }
}
