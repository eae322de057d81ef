//! Closed-form singular kernels on the plane.
//!
//! Everything here is a rational function of `(x1, x2)` away from the
//! origin, harmonic where noted, and pairs with compactly supported
//! vorticity to express pointwise velocity derivatives at the origin:
//!
//! - `inv_lap_d12`: `(d1 u1)(0) = (1/pi) * integral of omega(x) K(x) dx`.
//! - `d1_chain(m)`: successive `d1` derivatives of `x1/|x|^2`, the kernels
//!   behind `lap^{-1} d1^{m+1}`; `(d1^m u2)(0)` pairs with
//!   `-(1/(2 pi)) d1_chain(m+1)`.
//! - `stretch_kernel`: rate of change of the `m = 3` pairing under the
//!   area-preserving stretch `diag(r, 1/r)` at `r = 1`.

/// Kernel of `lap^{-1} d1 d2`: `x1 x2 / |x|^4`. Harmonic away from 0.
pub fn inv_lap_d12(x: [f64; 2]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    x[0] * x[1] / (r2 * r2)
}

/// Gradient of [`inv_lap_d12`].
pub fn inv_lap_d12_grad(x: [f64; 2]) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    let r2 = x1 * x1 + x2 * x2;
    let r6 = r2 * r2 * r2;
    [x2 * (r2 - 4.0 * x1 * x1) / r6, x1 * (r2 - 4.0 * x2 * x2) / r6]
}

/// `m`-th kernel of the derivative chain `K1 = x1/|x|^2`,
/// `K_{m+1} = d1 K_m`, for `m` in `1..=4`.
pub fn d1_chain(m: usize, x: [f64; 2]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let (s1, s2) = (x1 * x1, x2 * x2);
    let r2 = s1 + s2;
    match m {
        1 => x1 / r2,
        2 => (s2 - s1) / (r2 * r2),
        3 => 2.0 * x1 * (s1 - 3.0 * s2) / (r2 * r2 * r2),
        4 => -6.0 * (s1 * s1 - 6.0 * s1 * s2 + s2 * s2) / r2.powi(4),
        _ => panic!("chain kernel defined for m in 1..=4, got {m}"),
    }
}

/// `d1 d1` of [`d1_chain`], i.e. the chain element two steps on.
pub fn d1_chain_d11(m: usize, x: [f64; 2]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let (s1, s2) = (x1 * x1, x2 * x2);
    let r2 = s1 + s2;
    match m {
        1 => d1_chain(3, x),
        2 => d1_chain(4, x),
        3 => 24.0 * x1 * (s1 * s1 - 10.0 * s1 * s2 + 5.0 * s2 * s2) / r2.powi(5),
        4 => {
            -120.0
                * (s1.powi(3) - 15.0 * s1 * s1 * s2 + 15.0 * s1 * s2 * s2 - s2.powi(3))
                / r2.powi(6)
        }
        _ => panic!("chain kernel defined for m in 1..=4, got {m}"),
    }
}

/// `d1 d2` of [`d1_chain`].
pub fn d1_chain_d12(m: usize, x: [f64; 2]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let (s1, s2) = (x1 * x1, x2 * x2);
    let r2 = s1 + s2;
    match m {
        1 => 2.0 * x2 * (3.0 * s1 - s2) / r2.powi(3),
        2 => -24.0 * x1 * x2 * (s1 - s2) / r2.powi(4),
        3 => 24.0 * x2 * (5.0 * s1 * s1 - 10.0 * s1 * s2 + s2 * s2) / r2.powi(5),
        _ => panic!("chain kernel defined for m in 1..=3, got {m}"),
    }
}

/// Kernel pairing with `(d1 d1 u2)(0)`: half of `d1_chain(3)`,
/// i.e. `(x1^3 - 3 x1 x2^2)/|x|^6`. The sign convention is
/// `(d1 d1 u2)(0) = -(1/pi) * integral of omega * third_kernel`.
pub fn third_kernel(x: [f64; 2]) -> f64 {
    0.5 * d1_chain(3, x)
}

/// `d/dr [lap(third_kernel(r x1, x2/r))]` at `r = 1`; equals
/// `4 d11 third_kernel = 2 d11 d1_chain(3)`:
/// `48 (x1^5 - 10 x1^3 x2^2 + 5 x1 x2^4)/|x|^10`.
pub fn stretch_kernel(x: [f64; 2]) -> f64 {
    2.0 * d1_chain_d11(3, x)
}

/// Weight pairing the degree-`m` profile against the stretched flow map,
/// for `m` in `{2, 3}`: twice the chain element `d1_chain_d11(m + 1)`.
/// Nonvanishing (e.g. `48` at `(1,0)` for `m = 2`, `-240` for `m = 3`)
/// is what the witness scan certifies.
pub fn cm_pullback_weight(m: usize, x: [f64; 2]) -> f64 {
    assert!((2..=3).contains(&m), "pullback weight defined for m in 2..=3, got {m}");
    2.0 * d1_chain_d11(m + 1, x)
}

/// Laplacian of the composition `x -> d1_chain(m, T x)` for a linear map
/// `T = [[a11, a12], [a21, a22]]`, using harmonicity of the kernel:
/// vanishes identically iff `T T^t` is a multiple of the identity.
///
/// Requires `det T = 1` (volume preserving) and `x != 0`.
pub fn pullback_laplacian(m: usize, t: [[f64; 2]; 2], x: [f64; 2]) -> f64 {
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    assert!(
        (det - 1.0).abs() <= 1e-10,
        "pullback requires a unit-determinant map, det = {det}"
    );
    assert!(x[0] != 0.0 || x[1] != 0.0, "kernel pullback undefined at the origin");
    let tx = [t[0][0] * x[0] + t[0][1] * x[1], t[1][0] * x[0] + t[1][1] * x[1]];
    let c11 = t[0][0] * t[0][0] + t[0][1] * t[0][1] - t[1][0] * t[1][0] - t[1][1] * t[1][1];
    let c12 = t[0][0] * t[1][0] + t[0][1] * t[1][1];
    c11 * d1_chain_d11(m, tx) + 2.0 * c12 * d1_chain_d12(m, tx)
}

/// Floor below which a circle-scan maximum counts as identically zero.
pub const WITNESS_FLOOR: f64 = 1e-8;

/// Outcome of scanning the unit circle for a nonvanishing point of
/// the pulled-back Laplacian.
#[derive(Debug, Clone, Copy)]
pub struct WitnessScan {
    /// Largest `|pullback_laplacian|` found.
    pub max_abs: f64,
    /// Point on the unit circle achieving it.
    pub at: [f64; 2],
}

impl WitnessScan {
    /// `true` when the scan maximum clears [`WITNESS_FLOOR`], so the
    /// pullback is certifiably not identically zero.
    pub fn is_witness(&self) -> bool {
        self.max_abs > WITNESS_FLOOR
    }
}

/// Scans `|pullback_laplacian(m, t, .)|` over 4096 points of the unit
/// circle, then sharpens the best bracket by ternary search. Homogeneity
/// in `|x|` means vanishing on the circle decides vanishing everywhere,
/// so the scan is exhaustive up to angular resolution.
pub fn find_witness(m: usize, t: [[f64; 2]; 2]) -> WitnessScan {
    const N: usize = 4096;
    let f = |th: f64| pullback_laplacian(m, t, [th.cos(), th.sin()]).abs();
    let step = 2.0 * std::f64::consts::PI / N as f64;
    let (mut best_v, mut best_th) = (f(0.0), 0.0);
    for k in 1..N {
        let th = k as f64 * step;
        let v = f(th);
        if v > best_v {
            (best_v, best_th) = (v, th);
        }
    }
    let (mut lo, mut hi) = (best_th - step, best_th + step);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let th = 0.5 * (lo + hi);
    let v = f(th);
    if v > best_v {
        (best_v, best_th) = (v, th);
    }
    WitnessScan { max_abs: best_v, at: [best_th.cos(), best_th.sin()] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const PTS: [[f64; 2]; 5] =
        [[1.0, 0.0], [0.3, -0.8], [-1.1, 0.4], [0.7, 0.7], [-0.2, -1.5]];

    fn fd_laplacian(f: impl Fn([f64; 2]) -> f64, x: [f64; 2]) -> f64 {
        let h = 1e-4;
        (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h)
    }

    #[test]
    fn kernels_are_harmonic() {
        for &x in &PTS {
            assert_abs_diff_eq!(fd_laplacian(inv_lap_d12, x), 0.0, epsilon = 1e-4);
            for m in 1..=4 {
                assert_abs_diff_eq!(
                    fd_laplacian(|y| d1_chain(m, y), x),
                    0.0,
                    epsilon = 1e-2
                );
            }
        }
    }

    #[test]
    fn kernels_are_homogeneous() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        for _ in 0..100 {
            let x = [rng.gen_range(-2.0..2.0f64), rng.gen_range(-2.0..2.0f64)];
            if x[0] * x[0] + x[1] * x[1] < 1e-2 {
                continue;
            }
            let lam: f64 = rng.gen_range(0.3..3.0);
            let lx = [lam * x[0], lam * x[1]];
            let deg = |f: &dyn Fn([f64; 2]) -> f64, d: i32| {
                assert_relative_eq!(f(lx), lam.powi(d) * f(x), max_relative = 1e-10);
            };
            deg(&inv_lap_d12, -2);
            for m in 1..=4i32 {
                deg(&|y| d1_chain(m as usize, y), -m);
                deg(&|y| d1_chain_d11(m as usize, y), -m - 2);
            }
            for m in 1..=3i32 {
                deg(&|y| d1_chain_d12(m as usize, y), -m - 2);
            }
            deg(&third_kernel, -3);
            deg(&stretch_kernel, -5);
            deg(&|y| cm_pullback_weight(2, y), -5);
            deg(&|y| cm_pullback_weight(3, y), -6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for &x in &PTS {
            let g = inv_lap_d12_grad(x);
            let fd1 = (inv_lap_d12([x[0] + h, x[1]]) - inv_lap_d12([x[0] - h, x[1]])) / (2.0 * h);
            let fd2 = (inv_lap_d12([x[0], x[1] + h]) - inv_lap_d12([x[0], x[1] - h])) / (2.0 * h);
            assert_relative_eq!(g[0], fd1, max_relative = 1e-6, epsilon = 1e-8);
            assert_relative_eq!(g[1], fd2, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn chain_consistency_under_d1() {
        let h = 1e-6;
        for &x in &PTS {
            for m in 1..=3 {
                let fd = (d1_chain(m, [x[0] + h, x[1]]) - d1_chain(m, [x[0] - h, x[1]]))
                    / (2.0 * h);
                assert_relative_eq!(fd, d1_chain(m + 1, x), max_relative = 1e-5, epsilon = 1e-6);
            }
            // second differences need a larger step to beat roundoff
            let h2 = 1e-4;
            for m in 1..=4 {
                let fd11 = (d1_chain(m, [x[0] + h2, x[1]]) - 2.0 * d1_chain(m, x)
                    + d1_chain(m, [x[0] - h2, x[1]]))
                    / (h2 * h2);
                assert_relative_eq!(fd11, d1_chain_d11(m, x), max_relative = 1e-3, epsilon = 1e-3);
            }
            for m in 1..=3 {
                let fd12 = (d1_chain(m, [x[0] + h2, x[1] + h2])
                    - d1_chain(m, [x[0] + h2, x[1] - h2])
                    - d1_chain(m, [x[0] - h2, x[1] + h2])
                    + d1_chain(m, [x[0] - h2, x[1] - h2]))
                    / (4.0 * h2 * h2);
                assert_relative_eq!(fd12, d1_chain_d12(m, x), max_relative = 1e-3, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn stretch_kernel_closed_form() {
        for &x in &PTS {
            let (x1, x2) = (x[0], x[1]);
            let r2 = x1 * x1 + x2 * x2;
            let expect = 48.0
                * (x1.powi(5) - 10.0 * x1.powi(3) * x2 * x2 + 5.0 * x1 * x2.powi(4))
                / r2.powi(5);
            assert_relative_eq!(stretch_kernel(x), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn stretch_kernel_is_the_stretch_rate() {
        // central difference in r of lap[K(r x1, x2/r)] at r = 1
        let dr = 1e-5;
        for &x in &[[1.3, 0.2], [0.9, -0.6]] {
            let lap_at =
                |r: f64| fd_laplacian(|y| third_kernel([r * y[0], y[1] / r]), x);
            let fd = (lap_at(1.0 + dr) - lap_at(1.0 - dr)) / (2.0 * dr);
            assert_relative_eq!(fd, stretch_kernel(x), max_relative = 2e-2);
        }
    }

    #[test]
    fn diagonal_stretch_example() {
        // T = diag(2, 1/2), m = 1, x = (1, 0): (4 - 1/4) * d11 K1(2, 0) = 15/16
        let t = [[2.0, 0.0], [0.0, 0.5]];
        assert_relative_eq!(pullback_laplacian(1, t, [1.0, 0.0]), 15.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn rotations_leave_kernels_harmonic() {
        for i in 0..8 {
            let th = 0.3 + i as f64 * 0.7;
            let rot = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
            for m in 1..=3 {
                for &x in &PTS {
                    assert_abs_diff_eq!(pullback_laplacian(m, rot, x), 0.0, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    #[should_panic(expected = "unit-determinant")]
    fn pullback_rejects_area_changing_maps() {
        pullback_laplacian(1, [[2.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
    }

    #[test]
    fn pullback_weight_values_on_axis() {
        assert_relative_eq!(cm_pullback_weight(2, [1.0, 0.0]), 48.0, max_relative = 1e-14);
        assert_relative_eq!(cm_pullback_weight(3, [1.0, 0.0]), -240.0, max_relative = 1e-14);
        for &x in &PTS {
            assert_relative_eq!(cm_pullback_weight(2, x), stretch_kernel(x), max_relative = 1e-14);
        }
    }

    #[test]
    fn witness_scan_certifies_rotations_as_zero() {
        let th = 1.1f64;
        let rot = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
        for m in 1..=3 {
            let scan = find_witness(m, rot);
            assert!(!scan.is_witness(), "rotation produced spurious witness {scan:?}");
            assert!(scan.max_abs <= 1e-10);
        }
    }

    #[test]
    fn witness_scan_finds_diagonal_stretch() {
        // max over the circle is at least the value at (1, 0), which is 15/16
        let scan = find_witness(1, [[2.0, 0.0], [0.0, 0.5]]);
        assert!(scan.is_witness());
        assert!(scan.max_abs >= 0.1, "max {} too small", scan.max_abs);
        assert!(scan.max_abs >= 15.0 / 16.0 - 1e-9);
    }

    #[test]
    fn witness_scan_finds_shear() {
        let shear = [[1.0, 1.0], [0.0, 1.0]];
        for m in 1..=3 {
            let scan = find_witness(m, shear);
            assert!(scan.is_witness(), "shear should witness m = {m}: {scan:?}");
            let r2 = scan.at[0] * scan.at[0] + scan.at[1] * scan.at[1];
            assert_relative_eq!(r2, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn witness_refinement_beats_coarse_grid() {
        // the refined max should dominate every coarse sample
        let t = [[1.3, 0.4], [0.1, (1.0 + 0.04) / 1.3]];
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        assert_abs_diff_eq!(det, 1.0, epsilon = 1e-12);
        let scan = find_witness(2, t);
        for k in 0..4096 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 4096.0;
            let v = pullback_laplacian(2, t, [th.cos(), th.sin()]).abs();
            assert!(v <= scan.max_abs + 1e-12);
        }
    }
}
