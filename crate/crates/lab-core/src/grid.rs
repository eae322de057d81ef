//! Uniform periodic grid on the square `[-L, L)^2`.

use serde::{Deserialize, Serialize};

/// Grid descriptor. `n` points per side, half-width `l`, spacing `2l/n`.
///
/// Nodes sit at `x_i = -l + i * dx`, so the origin is the node `(n/2, n/2)`;
/// `n` must be even for that to hold exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even, got {n}");
        assert!(l > 0.0, "half-width must be positive, got {l}");
        Grid { n, l }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Node coordinate along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.dx()
    }

    /// Signed integer wavenumber in FFT storage order.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Physical wavenumber `k * pi / l` in FFT storage order.
    #[inline]
    pub fn kappa(&self, i: usize) -> f64 {
        self.wavenumber(i) as f64 * std::f64::consts::PI / self.l
    }

    /// Index of the origin node.
    #[inline]
    pub fn origin(&self) -> (usize, usize) {
        (self.n / 2, self.n / 2)
    }

    /// Nearest node index to a coordinate, wrapped periodically.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x + self.l) / self.dx()).round() as i64;
        i.rem_euclid(self.n as i64) as usize
    }

    /// Largest retained integer wavenumber under the 2/3 rule.
    #[inline]
    pub fn dealias_cut(&self) -> i64 {
        (self.n / 3) as i64
    }
}
