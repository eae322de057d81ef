//! Odd radial envelopes for the annular stream profiles.
//!
//! A bump `m(s)` lives on `|s| < 1` and is odd, so the envelope
//! `A(r) = m((r-1)/eps) / r` integrates to zero against `r dr` to leading
//! order in `eps`; the stream profiles in [`crate::profiles`] rely on that
//! cancellation to start experiments from an exact stagnation state.

use serde::{Deserialize, Serialize};

/// Odd bump shape on `(-1, 1)`.
///
/// `Exp` is `s exp(-1/(1-s^2))`, smooth but with a slowly decaying Fourier
/// tail. `Poly(p)` is `s (1-s^2)^p`, only `C^{p-1}` at the edges but with a
/// tail falling like `k^-(p+1)`; the solver presets use `Poly(10)` so the
/// sampled stagnation value sits below 1e-6 at realistic resolutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bump {
    Exp,
    Poly(u32),
}

impl Bump {
    pub fn m(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        match *self {
            Bump::Exp => s * (-1.0 / (1.0 - s * s)).exp(),
            Bump::Poly(p) => s * (1.0 - s * s).powi(p as i32),
        }
    }

    pub fn m1(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s * s;
        match *self {
            Bump::Exp => (-1.0 / u).exp() * (1.0 - 2.0 * s * s / (u * u)),
            Bump::Poly(p) => u.powi(p as i32 - 1) * (u - 2.0 * p as f64 * s * s),
        }
    }

    pub fn m2(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s * s;
        let s2 = s * s;
        match *self {
            Bump::Exp => {
                (-1.0 / u).exp() * 2.0 * s * (s2 * s2 + 4.0 * s2 - 3.0) / u.powi(4)
            }
            Bump::Poly(p) => {
                let pf = p as f64;
                u.powi(p as i32 - 2) * 2.0 * pf * s * (s2 * (2.0 * pf + 1.0) - 3.0)
            }
        }
    }

    pub fn m3(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s * s;
        let s2 = s * s;
        let s4 = s2 * s2;
        match *self {
            Bump::Exp => {
                let s6 = s4 * s2;
                (-1.0 / u).exp() * -2.0 * (3.0 * s4 * s4 + 24.0 * s6 - 26.0 * s4 + 3.0)
                    / u.powi(6)
            }
            Bump::Poly(p) => {
                let pf = p as f64;
                u.powi(p as i32 - 3)
                    * 2.0
                    * pf
                    * ((1.0 - 4.0 * pf * pf) * s4 + (12.0 * pf - 6.0) * s2 - 3.0)
            }
        }
    }

    pub fn m4(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s * s;
        let s2 = s * s;
        let s4 = s2 * s2;
        match *self {
            Bump::Exp => {
                let s6 = s4 * s2;
                (-1.0 / u).exp()
                    * 4.0
                    * s
                    * (6.0 * s6 * s4 + 81.0 * s4 * s4 - 92.0 * s6 - 46.0 * s4 + 70.0 * s2
                        - 15.0)
                    / u.powi(8)
            }
            Bump::Poly(p) => {
                let pf = p as f64;
                u.powi(p as i32 - 4)
                    * 4.0
                    * pf
                    * s
                    * (15.0 * pf + s4 * (4.0 * pf.powi(3) - 4.0 * pf * pf - pf + 1.0)
                        + s2 * (-20.0 * pf * pf + 30.0 * pf - 10.0)
                        - 15.0)
            }
        }
    }

    /// k-th derivative, k <= 4.
    pub fn m_deriv(&self, k: usize, s: f64) -> f64 {
        match k {
            0 => self.m(s),
            1 => self.m1(s),
            2 => self.m2(s),
            3 => self.m3(s),
            4 => self.m4(s),
            _ => panic!("bump derivatives stop at order 4, asked for {k}"),
        }
    }
}

/// Envelope `A(r) = m((r-1)/eps) / r` supported on the annulus
/// `1-eps < r < 1+eps`, with closed-form first and second derivatives.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Envelope {
    pub bump: Bump,
    pub eps: f64,
}

impl Envelope {
    pub fn new(bump: Bump, eps: f64) -> Self {
        assert!(eps > 0.0 && eps < 1.0, "annulus width must be in (0,1), got {eps}");
        Envelope { bump, eps }
    }

    #[inline]
    pub fn supported(&self, r: f64) -> bool {
        (r - 1.0).abs() < self.eps
    }

    pub fn a(&self, r: f64) -> f64 {
        self.bump.m((r - 1.0) / self.eps) / r
    }

    pub fn a1(&self, r: f64) -> f64 {
        let s = (r - 1.0) / self.eps;
        self.bump.m1(s) / (self.eps * r) - self.bump.m(s) / (r * r)
    }

    pub fn a2(&self, r: f64) -> f64 {
        let s = (r - 1.0) / self.eps;
        self.bump.m2(s) / (self.eps * self.eps * r) - 2.0 * self.bump.m1(s) / (self.eps * r * r)
            + 2.0 * self.bump.m(s) / (r * r * r)
    }

    /// k-th radial derivative, k <= 4, by the Leibniz rule on m(s(r)) * (1/r).
    pub fn a_deriv(&self, k: usize, r: f64) -> f64 {
        assert!(k <= 4, "envelope derivatives stop at order 4, asked for {k}");
        const BINOM: [[f64; 5]; 5] = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 3.0, 1.0, 0.0],
            [1.0, 4.0, 6.0, 4.0, 1.0],
        ];
        const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
        let s = (r - 1.0) / self.eps;
        let mut acc = 0.0;
        for i in 0..=k {
            let j = k - i;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += BINOM[k][i] * self.bump.m_deriv(i, s) / self.eps.powi(i as i32) * sign
                * FACT[j]
                / r.powi(j as i32 + 1);
        }
        acc
    }
}
