//! Stream profiles and the multi-scale initial-data families built on them.
//!
//! The annular profile `a(x) = A(|x|) x1^3 x2` and the disk bump `a0` carry
//! closed-form partial derivatives, so constructions are grid-free and
//! sampling error never enters the reference values.

use crate::cutoff::{plateau, plateau_d1, plateau_d2};
use crate::envelope::{Bump, Envelope};
use crate::field::RealField;
use crate::grid::Grid;
use crate::kernels::cm_pullback_weight;
use crate::quad::{quad1d, QuadError, QuadOpts};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error(
        "coercivity check failed at eps = {eps}: gradient term {grad_term:.6e} \
         <= 12 * amplitude term {amp_term:.6e}; choose a smaller eps"
    )]
    CoercivityFailed { eps: f64, grad_term: f64, amp_term: f64 },
    #[error(
        "pairing of the order-{m} weight with the bump at ({cx}, {cy}) is \
         {value:.6e}, not positive; move the center or flip orientation"
    )]
    NonPositivePairing { m: usize, value: f64, cx: f64, cy: f64 },
    #[error(
        "scale j = {j} unresolvable: shell width {shell:.4e} < 8 dx = \
         {limit:.4e} on the n = {n}, L = {l} grid"
    )]
    UnresolvableScale { j: i32, shell: f64, limit: f64, n: usize, l: f64 },
    #[error("scaled supports overlap: width parameter {width} >= 1/3")]
    OverlappingScales { width: f64 },
    #[error("steering cutoff reaches |x| = {reach} > 1; shrink rho")]
    SteeringReach { reach: f64 },
    #[error(
        "radial shell width delta = {delta} must lie in (0, eps/10) for \
         eps = {eps}; the two z-shells need the radial support much thinner"
    )]
    ShellSeparation { eps: f64, delta: f64 },
    #[error("interpolation parameter s = {s} outside [0, 1]")]
    InterpolationRange { s: f64 },
    #[error(
        "pairing integral does not change sign: I(0) = {at_zero:.6e}, \
         I(1) = {at_one:.6e}; adjust eps or delta"
    )]
    NoSignChange { at_zero: f64, at_one: f64 },
    #[error("construction-time quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

/// The two sides of the coercivity condition: `integral of A'^2 r^5` and
/// `integral of A^2 r^3` over the support. The construction requires
/// `grad > 12 * amp`.
pub fn coercivity_terms(env: &Envelope) -> Result<(f64, f64), QuadError> {
    let opts = QuadOpts::with_abs_tol(1e-13);
    let (lo, hi) = ((1.0 - env.eps).max(1e-9), 1.0 + env.eps);
    let grad = quad1d(|r| env.a1(r).powi(2) * r.powi(5), lo, hi, opts)?;
    let amp = quad1d(|r| env.a(r).powi(2) * r.powi(3), lo, hi, opts)?;
    Ok((grad, amp))
}

/// Builds the envelope `A(r) = m((r-1)/eps)/r` and verifies the coercivity
/// sign by quadrature. The first-moment condition `integral of A r dr = 0`
/// holds analytically because the bump is odd.
pub fn make_envelope(bump: Bump, eps: f64) -> Result<Envelope, ConstructionError> {
    let env = Envelope::new(bump, eps);
    let (grad_term, amp_term) = coercivity_terms(&env)?;
    if grad_term <= 12.0 * amp_term {
        return Err(ConstructionError::CoercivityFailed { eps, grad_term, amp_term });
    }
    Ok(env)
}

/// One monomial `c * A^(da)(r) * r^rp * x1^e1 * x2^e2` of a profile
/// derivative. Differentiation rewrites each term into at most three.
#[derive(Clone, Copy, Debug)]
struct Term {
    c: f64,
    da: usize,
    rp: i32,
    e1: u32,
    e2: u32,
}

fn differentiate(terms: &[Term], axis: usize) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(3 * terms.len());
    for t in terms {
        let bump_e = |t: &Term| {
            let mut s = *t;
            if axis == 0 {
                s.e1 += 1;
            } else {
                s.e2 += 1;
            }
            s
        };
        // chain rule through A^(da)(r): dr/dxi = xi/r
        out.push(bump_e(&Term { da: t.da + 1, rp: t.rp - 1, ..*t }));
        if t.rp != 0 {
            out.push(bump_e(&Term { c: t.c * t.rp as f64, rp: t.rp - 2, ..*t }));
        }
        let e = if axis == 0 { t.e1 } else { t.e2 };
        if e > 0 {
            let mut s = Term { c: t.c * e as f64, ..*t };
            if axis == 0 {
                s.e1 -= 1;
            } else {
                s.e2 -= 1;
            }
            out.push(s);
        }
    }
    merge(out)
}

fn merge(terms: Vec<Term>) -> Vec<Term> {
    use std::collections::BTreeMap;
    let mut acc: BTreeMap<(usize, i32, u32, u32), f64> = BTreeMap::new();
    for t in terms {
        *acc.entry((t.da, t.rp, t.e1, t.e2)).or_insert(0.0) += t.c;
    }
    acc.into_iter()
        .filter(|&(_, c)| c != 0.0)
        .map(|((da, rp, e1, e2), c)| Term { c, da, rp, e1, e2 })
        .collect()
}

#[derive(Clone, Debug)]
struct DerivTable {
    terms: Vec<Term>,
    max_da: usize,
}

pub const PROFILE_MAX_ORDER: usize = 4;

/// Derivative term tables of `R(|x|) x1^3 x2` for a generic radial factor:
/// independent of R, built once.
fn profile_tables() -> &'static [Option<DerivTable>] {
    use std::sync::OnceLock;
    static TABLES: OnceLock<Vec<Option<DerivTable>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut tables: Vec<Option<DerivTable>> = vec![None; 25];
        let pack = |terms: Vec<Term>| {
            let max_da = terms.iter().map(|t| t.da).max().unwrap_or(0);
            Some(DerivTable { terms, max_da })
        };
        tables[0] = pack(vec![Term { c: 1.0, da: 0, rp: 0, e1: 3, e2: 1 }]);
        for k1 in 0..=PROFILE_MAX_ORDER {
            for k2 in 0..=PROFILE_MAX_ORDER - k1 {
                if k1 + k2 == 0 {
                    continue;
                }
                let (src, axis) =
                    if k1 > 0 { ((k1 - 1) * 5 + k2, 0) } else { (k1 * 5 + k2 - 1, 1) };
                let parent = tables[src].as_ref().expect("table built in order");
                tables[k1 * 5 + k2] = pack(differentiate(&parent.terms, axis));
            }
        }
        tables
    })
}

/// `d1^k1 d2^k2` of `R(|x|) x1^3 x2` at `x`, where the radial factor is
/// given by its derivative evaluator `radial(order, r)` and vanishes with
/// all derivatives outside `(support.0, support.1)`. `k1 + k2 <= 4`.
pub fn profile_deriv_with(
    radial: impl Fn(usize, f64) -> f64,
    support: (f64, f64),
    k1: usize,
    k2: usize,
    x: [f64; 2],
) -> f64 {
    assert!(
        k1 + k2 <= PROFILE_MAX_ORDER,
        "profile derivatives stop at total order 4, asked for ({k1}, {k2})"
    );
    let r = x[0].hypot(x[1]);
    if r <= support.0 || r >= support.1 {
        return 0.0;
    }
    let table = profile_tables()[k1 * 5 + k2].as_ref().unwrap();
    let mut a_val = [0.0; PROFILE_MAX_ORDER + 1];
    for (d, slot) in a_val.iter_mut().enumerate().take(table.max_da + 1) {
        *slot = radial(d, r);
    }
    let mut acc = 0.0;
    for t in &table.terms {
        acc += t.c
            * a_val[t.da]
            * r.powi(t.rp)
            * x[0].powi(t.e1 as i32)
            * x[1].powi(t.e2 as i32);
    }
    acc
}

/// Annular profile `a(x) = A(|x|) x1^3 x2` with all partial derivatives up
/// to total order 4 in closed form. Odd in each coordinate, supported in
/// `1 - eps < |x| < 1 + eps`.
#[derive(Clone, Copy, Debug)]
pub struct ProfileA {
    pub envelope: Envelope,
}

impl ProfileA {
    pub fn new(envelope: Envelope) -> Self {
        ProfileA { envelope }
    }

    /// Partial derivative `d1^k1 d2^k2 a` at `x`, for `k1 + k2 <= 4`.
    pub fn deriv(&self, k1: usize, k2: usize, x: [f64; 2]) -> f64 {
        let env = self.envelope;
        profile_deriv_with(
            |d, r| env.a_deriv(d, r),
            (1.0 - env.eps, 1.0 + env.eps),
            k1,
            k2,
            x,
        )
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.deriv(0, 0, x)
    }

    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        self.deriv(2, 0, x) + self.deriv(0, 2, x)
    }

    /// `grad^perp a = (-d2 a, d1 a)`.
    pub fn grad_perp(&self, x: [f64; 2]) -> [f64; 2] {
        [-self.deriv(0, 1, x), self.deriv(1, 0, x)]
    }
}

/// Radial bump `a0(x) = (1 - |x - c|^2/w^2)^8` on the disk of radius `w`
/// about `c`, zero outside. `C^7` across the rim; spectral tails fall like
/// `k^-9`, enough for the third-order derivatives used here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskBump {
    pub center: [f64; 2],
    pub w: f64,
}

impl DiskBump {
    pub fn new(center: [f64; 2], w: f64) -> Self {
        assert!(w > 0.0, "disk radius must be positive, got {w}");
        DiskBump { center, w }
    }

    #[inline]
    fn shape(u: f64) -> [f64; 4] {
        // q(u) = (1-u)^8 and its first three u-derivatives
        let v = 1.0 - u;
        let v5 = v.powi(5);
        [v5 * v * v * v, -8.0 * v5 * v * v, 56.0 * v5 * v, -336.0 * v5]
    }

    /// Partial derivative `d1^k1 d2^k2 a0` at `x`, for `k1 + k2 <= 3`.
    pub fn deriv(&self, k1: usize, k2: usize, x: [f64; 2]) -> f64 {
        let y = [x[0] - self.center[0], x[1] - self.center[1]];
        let w2 = self.w * self.w;
        let u = (y[0] * y[0] + y[1] * y[1]) / w2;
        if u >= 1.0 {
            return 0.0;
        }
        let q = Self::shape(u);
        let (w4, w6) = (w2 * w2, w2 * w2 * w2);
        match (k1, k2) {
            (0, 0) => q[0],
            (1, 0) => q[1] * 2.0 * y[0] / w2,
            (0, 1) => q[1] * 2.0 * y[1] / w2,
            (2, 0) => q[2] * 4.0 * y[0] * y[0] / w4 + q[1] * 2.0 / w2,
            (1, 1) => q[2] * 4.0 * y[0] * y[1] / w4,
            (0, 2) => q[2] * 4.0 * y[1] * y[1] / w4 + q[1] * 2.0 / w2,
            (3, 0) => q[3] * 8.0 * y[0].powi(3) / w6 + q[2] * 12.0 * y[0] / w4,
            (2, 1) => q[3] * 8.0 * y[0] * y[0] * y[1] / w6 + q[2] * 4.0 * y[1] / w4,
            (1, 2) => q[3] * 8.0 * y[0] * y[1] * y[1] / w6 + q[2] * 4.0 * y[0] / w4,
            (0, 3) => q[3] * 8.0 * y[1].powi(3) / w6 + q[2] * 12.0 * y[1] / w4,
            _ => panic!("disk bump derivatives stop at total order 3, asked for ({k1}, {k2})"),
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.deriv(0, 0, x)
    }

    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        self.deriv(2, 0, x) + self.deriv(0, 2, x)
    }

    pub fn grad_perp(&self, x: [f64; 2]) -> [f64; 2] {
        [-self.deriv(0, 1, x), self.deriv(1, 0, x)]
    }
}

/// Localized profile for the order-m mechanism: a [`DiskBump`] whose pairing
/// with the order-m pullback weight is verified positive at construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProfileA0 {
    pub bump: DiskBump,
    pub m_order: usize,
}

/// Center on the unit circle where the order-m weight is maximal positive:
/// `(1, 0)` for m = 2; rotated to 30 degrees for m = 3 where the weight's
/// angular factor `-cos(6 theta)` peaks.
pub fn default_center(m_order: usize) -> [f64; 2] {
    match m_order {
        2 => [1.0, 0.0],
        3 => [(std::f64::consts::PI / 6.0).cos(), (std::f64::consts::PI / 6.0).sin()],
        _ => panic!("localized profiles support m in 2..=3, got {m_order}"),
    }
}

impl ProfileA0 {
    /// Checks `integral of weight * a0 > 0` by quadrature before accepting.
    pub fn new(bump: DiskBump, m_order: usize) -> Result<Self, ConstructionError> {
        let value = pairing_integral(&bump, m_order)?;
        if value <= 0.0 {
            return Err(ConstructionError::NonPositivePairing {
                m: m_order,
                value,
                cx: bump.center[0],
                cy: bump.center[1],
            });
        }
        Ok(ProfileA0 { bump, m_order })
    }
}

/// `integral of cm_pullback_weight(m, x) a0(x) dx` over the bump's disk,
/// polar about the center: periodic trapezoid in angle, adaptive in radius.
pub fn pairing_integral(bump: &DiskBump, m_order: usize) -> Result<f64, QuadError> {
    let n_theta = 256;
    let dth = std::f64::consts::TAU / n_theta as f64;
    let c = bump.center;
    let ring = |rho: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n_theta {
            let th = i as f64 * dth;
            let x = [c[0] + rho * th.cos(), c[1] + rho * th.sin()];
            s += cm_pullback_weight(m_order, x) * bump.value(x);
        }
        s * dth * rho
    };
    quad1d(ring, 0.0, bump.w, QuadOpts::with_abs_tol(1e-12))
}

/// Hyperbolic steering flow `psi = -beta x1 x2 chi(|x|/rho)`: a stagnation
/// point at the origin with `Du(0) = diag(beta, -beta)`, vorticity confined
/// to the cutoff collar `rho < |x| < 2 rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub beta: f64,
    pub rho: f64,
}

impl SteeringSpec {
    pub fn new(beta: f64, rho: f64) -> Result<Self, ConstructionError> {
        assert!(rho > 0.0, "cutoff radius must be positive, got {rho}");
        if 2.0 * rho > 1.0 {
            return Err(ConstructionError::SteeringReach { reach: 2.0 * rho });
        }
        Ok(SteeringSpec { beta, rho })
    }

    pub fn psi(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        -self.beta * x[0] * x[1] * plateau(r / self.rho)
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        let t = r / self.rho;
        let chi = plateau(t);
        // chi' = 0 wherever r could vanish, so the r-division is safe
        let cp_over_rr = if t <= 1.0 || t >= 2.0 { 0.0 } else { plateau_d1(t) / (self.rho * r) };
        [
            self.beta * x[0] * (chi + x[1] * x[1] * cp_over_rr),
            -self.beta * x[1] * (chi + x[0] * x[0] * cp_over_rr),
        ]
    }

    pub fn omega(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        let t = r / self.rho;
        if t <= 1.0 || t >= 2.0 {
            return 0.0;
        }
        let lap_chi = plateau_d2(t) / (self.rho * self.rho)
            + 5.0 * plateau_d1(t) / (self.rho * r);
        -self.beta * x[0] * x[1] * lap_chi
    }

    /// `Du(0)` in closed form.
    pub fn velocity_gradient_origin(&self) -> [[f64; 2]; 2] {
        [[self.beta, 0.0], [0.0, -self.beta]]
    }
}

/// Which profile a dyadic family rescales.
#[derive(Clone, Debug)]
pub enum ScaleProfile {
    Annular(ProfileA),
    Disk(DiskBump),
}

impl ScaleProfile {
    /// Width parameter governing shell thickness at scale 0.
    pub fn width(&self) -> f64 {
        match self {
            ScaleProfile::Annular(p) => p.envelope.eps,
            ScaleProfile::Disk(b) => b.w,
        }
    }

    fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            ScaleProfile::Annular(p) => p.value(x),
            ScaleProfile::Disk(b) => b.value(x),
        }
    }

    fn grad_perp(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            ScaleProfile::Annular(p) => p.grad_perp(x),
            ScaleProfile::Disk(b) => b.grad_perp(x),
        }
    }

    fn laplacian(&self, x: [f64; 2]) -> f64 {
        match self {
            ScaleProfile::Annular(p) => p.laplacian(x),
            ScaleProfile::Disk(b) => b.laplacian(x),
        }
    }
}

/// Dyadic window of rescaled profiles with the order-m amplitude law
/// `psi = sum over j of 2^(-(m+1)j) p(2^j x)`.
#[derive(Clone, Debug)]
pub struct MultiScaleSpec {
    pub m_order: usize,
    pub j_min: i32,
    pub j_max: i32,
    pub profile: ScaleProfile,
}

impl MultiScaleSpec {
    pub fn new(m_order: usize, j_min: i32, j_max: i32, profile: ScaleProfile) -> Self {
        assert!(m_order >= 1, "amplitude law needs m >= 1, got {m_order}");
        MultiScaleSpec { m_order, j_min, j_max, profile }
    }

    pub fn window(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    pub fn is_empty(&self) -> bool {
        self.j_min > self.j_max
    }

    /// All violations of the grid-resolvability and disjointness rules.
    pub fn validate(&self, grid: Grid) -> Vec<ConstructionError> {
        let mut errs = Vec::new();
        let width = self.profile.width();
        if width >= 1.0 / 3.0 {
            errs.push(ConstructionError::OverlappingScales { width });
        }
        if !self.is_empty() {
            let shell = 2f64.powi(-self.j_max) * width;
            let limit = 8.0 * grid.dx();
            if shell < limit {
                errs.push(ConstructionError::UnresolvableScale {
                    j: self.j_max,
                    shell,
                    limit,
                    n: grid.n,
                    l: grid.l,
                });
            }
        }
        errs
    }

    pub fn psi_at(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for j in self.window() {
            let lam = 2f64.powi(j);
            s += lam.powi(-(self.m_order as i32 + 1))
                * self.profile.value([lam * x[0], lam * x[1]]);
        }
        s
    }

    pub fn u_at(&self, x: [f64; 2]) -> [f64; 2] {
        let mut s = [0.0, 0.0];
        for j in self.window() {
            let lam = 2f64.powi(j);
            let amp = lam.powi(-(self.m_order as i32));
            let g = self.profile.grad_perp([lam * x[0], lam * x[1]]);
            s[0] += amp * g[0];
            s[1] += amp * g[1];
        }
        s
    }

    pub fn omega_at(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for j in self.window() {
            let lam = 2f64.powi(j);
            s += lam.powi(-(self.m_order as i32 - 1))
                * self.profile.laplacian([lam * x[0], lam * x[1]]);
        }
        s
    }
}

/// A family sampled onto a grid: stream, velocity components, vorticity,
/// all from the closed-form evaluators.
pub struct FamilyFields {
    pub psi: RealField,
    pub u1: RealField,
    pub u2: RealField,
    pub omega: RealField,
}

impl FamilyFields {
    fn sample(
        grid: Grid,
        psi: impl Fn([f64; 2]) -> f64,
        u: impl Fn([f64; 2]) -> [f64; 2],
        omega: impl Fn([f64; 2]) -> f64,
    ) -> Self {
        FamilyFields {
            psi: RealField::sample(grid, |x, y| psi([x, y])),
            u1: RealField::sample(grid, |x, y| u([x, y])[0]),
            u2: RealField::sample(grid, |x, y| u([x, y])[1]),
            omega: RealField::sample(grid, |x, y| omega([x, y])),
        }
    }

    fn add(&mut self, other: &FamilyFields) {
        let acc = |a: &mut RealField, b: &RealField| {
            a.data.zip_mut_with(&b.data, |x, y| *x += y);
        };
        acc(&mut self.psi, &other.psi);
        acc(&mut self.u1, &other.u1);
        acc(&mut self.u2, &other.u2);
        acc(&mut self.omega, &other.omega);
    }
}

fn first_validation_error(spec: &MultiScaleSpec, grid: Grid) -> Result<(), ConstructionError> {
    match spec.validate(grid).into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Samples the order-1 family onto the grid. The amplitude law puts unit
/// sup-norm vorticity on every shell.
pub fn c1_family(spec: &MultiScaleSpec, grid: Grid) -> Result<FamilyFields, ConstructionError> {
    assert_eq!(spec.m_order, 1, "the order-1 family requires m_order = 1");
    first_validation_error(spec, grid)?;
    Ok(FamilyFields::sample(
        grid,
        |x| spec.psi_at(x),
        |x| spec.u_at(x),
        |x| spec.omega_at(x),
    ))
}

/// High/low split for the order-m experiments: multi-scale high part plus
/// the steering flow, returned separately and summed.
pub struct CmFamily {
    pub total: FamilyFields,
    pub high: FamilyFields,
    pub low: FamilyFields,
}

pub fn cm_family(
    spec: &MultiScaleSpec,
    steering: &SteeringSpec,
    grid: Grid,
) -> Result<CmFamily, ConstructionError> {
    first_validation_error(spec, grid)?;
    let high = FamilyFields::sample(
        grid,
        |x| spec.psi_at(x),
        |x| spec.u_at(x),
        |x| spec.omega_at(x),
    );
    let low = steering_field(steering, grid);
    let mut total = FamilyFields::sample(grid, |_| 0.0, |_| [0.0, 0.0], |_| 0.0);
    total.add(&high);
    total.add(&low);
    Ok(CmFamily { total, high, low })
}

/// Samples the steering flow onto the grid from its closed forms.
pub fn steering_field(spec: &SteeringSpec, grid: Grid) -> FamilyFields {
    FamilyFields::sample(
        grid,
        |x| spec.psi(x),
        |x| spec.velocity(x),
        |x| spec.omega(x),
    )
}
