//! Lagrangian tracers: particle paths `phi(t, x0)` and flow-map Jacobians.
//!
//! Tracers advance by the same RK4 stages as the vorticity, evaluating the
//! stage velocity fields spectrally at the particle positions. Jacobians
//! come two ways and are cross-checked: centered differences of four
//! satellite tracers (offset `2 dx`), and the variational equation
//! `d/dt Dphi = Du(phi) Dphi` integrated alongside the path.

use crate::field::VelocityPair;
use crate::solver::{DriftSpec, SolverError, StepperConfig, VelocitySeries};

pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn frob(m: &Mat2) -> f64 {
    (m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2)).sqrt()
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_axpy(y: &mut Mat2, c: f64, x: &Mat2) {
    for i in 0..2 {
        for j in 0..2 {
            y[i][j] += c * x[i][j];
        }
    }
}

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// What to trace during a run.
pub struct TracerSpec {
    pub seeds: Vec<[f64; 2]>,
    /// Component indices whose summed vorticity induces the advecting flow.
    pub sources: Vec<usize>,
    /// Component whose external drift the tracer also feels, if any.
    pub drift_of: Option<usize>,
    pub with_jacobians: bool,
    /// Satellite offset for the finite-difference Jacobian; `2 dx` when unset.
    pub fd_offset: Option<f64>,
}

impl TracerSpec {
    pub fn flow_of(seeds: Vec<[f64; 2]>, sources: Vec<usize>) -> Self {
        TracerSpec { seeds, sources, drift_of: None, with_jacobians: true, fd_offset: None }
    }

    pub fn positions_only(seeds: Vec<[f64; 2]>, sources: Vec<usize>) -> Self {
        TracerSpec { seeds, sources, drift_of: None, with_jacobians: false, fd_offset: None }
    }
}

/// Particle paths and Jacobians recorded at every solver step.
pub struct FlowMapSample {
    pub times: Vec<f64>,
    pub seeds: Vec<[f64; 2]>,
    /// `positions[time_index][seed]`.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Centered-difference Jacobians; empty when not tracked.
    pub jacobians_fd: Vec<Vec<Mat2>>,
    /// Variational-equation Jacobians; empty when not tracked.
    pub jacobians_var: Vec<Vec<Mat2>>,
}

impl FlowMapSample {
    pub fn path(&self, seed: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.positions.iter().map(move |p| p[seed])
    }

    pub fn final_position(&self, seed: usize) -> [f64; 2] {
        self.positions.last().unwrap()[seed]
    }

    pub fn final_jacobian(&self, seed: usize) -> Mat2 {
        self.jacobians_var.last().unwrap()[seed]
    }

    /// Largest `|det Dphi - 1|` over all recorded variational Jacobians.
    pub fn max_det_deviation(&self) -> f64 {
        self.jacobians_var
            .iter()
            .flatten()
            .map(|m| (det2(m) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest relative Frobenius gap between the two Jacobian flavors.
    pub fn max_jacobian_disagreement(&self) -> f64 {
        self.jacobians_fd
            .iter()
            .zip(&self.jacobians_var)
            .flat_map(|(fd_row, var_row)| fd_row.iter().zip(var_row))
            .map(|(fd, var)| {
                let mut diff = *fd;
                mat_axpy(&mut diff, -1.0, var);
                frob(&diff) / frob(var).max(1e-300)
            })
            .fold(0.0, f64::max)
    }
}

fn drift_velocity(d: &DriftSpec, t: f64, p: [f64; 2]) -> [f64; 2] {
    match d {
        DriftSpec::None => [0.0, 0.0],
        DriftSpec::Frozen(pair) => pair.at(p),
        DriftSpec::TimeVarying(f) => f(t).at(p),
    }
}

fn drift_gradient(d: &DriftSpec, t: f64, p: [f64; 2]) -> Mat2 {
    match d {
        DriftSpec::None => [[0.0; 2]; 2],
        DriftSpec::Frozen(pair) => pair.gradient_at(p),
        DriftSpec::TimeVarying(f) => f(t).gradient_at(p),
    }
}

/// Live tracer state co-integrated with a run. Points are laid out
/// center-first: with Jacobians, each seed owns four trailing satellites
/// at `+x, -x, +y, -y`.
pub(crate) struct Cohort<'a> {
    pub(crate) group: usize,
    drift: Option<&'a DriftSpec>,
    with_jacobians: bool,
    eta: f64,
    l_half: f64,
    pts: Vec<[f64; 2]>,
    jac: Vec<Mat2>,
    pub(crate) sample: FlowMapSample,
}

impl<'a> Cohort<'a> {
    pub(crate) fn new(
        spec: &TracerSpec,
        group: usize,
        drift: Option<&'a DriftSpec>,
        dx: f64,
        l: f64,
    ) -> Self {
        let eta = spec.fd_offset.unwrap_or(2.0 * dx);
        let mut pts = Vec::new();
        for &s in &spec.seeds {
            pts.push(s);
            if spec.with_jacobians {
                pts.push([s[0] + eta, s[1]]);
                pts.push([s[0] - eta, s[1]]);
                pts.push([s[0], s[1] + eta]);
                pts.push([s[0], s[1] - eta]);
            }
        }
        let jac = vec![IDENTITY; if spec.with_jacobians { spec.seeds.len() } else { 0 }];
        let mut cohort = Cohort {
            group,
            drift,
            with_jacobians: spec.with_jacobians,
            eta,
            l_half: l / 2.0,
            pts,
            jac,
            sample: FlowMapSample {
                times: Vec::new(),
                seeds: spec.seeds.clone(),
                positions: Vec::new(),
                jacobians_fd: Vec::new(),
                jacobians_var: Vec::new(),
            },
        };
        cohort.record(0.0);
        cohort
    }

    fn stride(&self) -> usize {
        if self.with_jacobians {
            5
        } else {
            1
        }
    }

    /// Current center positions (one per seed), without satellites.
    pub(crate) fn current_centers(&self) -> Vec<[f64; 2]> {
        let stride = self.stride();
        (0..self.sample.seeds.len()).map(|s| self.pts[s * stride]).collect()
    }

    pub(crate) fn record(&mut self, t: f64) {
        let stride = self.stride();
        let n_seeds = self.sample.seeds.len();
        self.sample.times.push(t);
        self.sample
            .positions
            .push((0..n_seeds).map(|s| self.pts[s * stride]).collect());
        if self.with_jacobians {
            self.sample.jacobians_var.push(self.jac.clone());
            let fd = (0..n_seeds)
                .map(|s| {
                    let b = s * stride;
                    let (px, mx, py, my) =
                        (self.pts[b + 1], self.pts[b + 2], self.pts[b + 3], self.pts[b + 4]);
                    let h = 2.0 * self.eta;
                    [
                        [(px[0] - mx[0]) / h, (py[0] - my[0]) / h],
                        [(px[1] - mx[1]) / h, (py[1] - my[1]) / h],
                    ]
                })
                .collect();
            self.sample.jacobians_fd.push(fd);
        }
    }

    /// One RK4 step through the four stage velocity fields of this cohort's
    /// source group, joint in (position, Jacobian).
    pub(crate) fn advance(
        &mut self,
        t: f64,
        dt: f64,
        stages: [&VelocityPair; 4],
        escape_guard: bool,
    ) -> Result<(), SolverError> {
        let stage_t = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
        let stride = self.stride();
        let vel = |stage: usize, p: [f64; 2]| -> [f64; 2] {
            let mut v = stages[stage].at(p);
            if let Some(d) = self.drift {
                let dv = drift_velocity(d, stage_t[stage], p);
                v[0] += dv[0];
                v[1] += dv[1];
            }
            v
        };
        let vel_grad = |stage: usize, p: [f64; 2]| -> ([f64; 2], Mat2) {
            let (mut v, mut g) = stages[stage].at_with_gradient(p);
            if let Some(d) = self.drift {
                let dv = drift_velocity(d, stage_t[stage], p);
                v[0] += dv[0];
                v[1] += dv[1];
                mat_axpy(&mut g, 1.0, &drift_gradient(d, stage_t[stage], p));
            }
            (v, g)
        };
        let shift = |p: [f64; 2], c: f64, v: [f64; 2]| [p[0] + c * v[0], p[1] + c * v[1]];

        for idx in 0..self.pts.len() {
            let p = self.pts[idx];
            let is_center = self.with_jacobians && idx % stride == 0;
            if is_center {
                let seed = idx / stride;
                let j = self.jac[seed];
                let (v1, g1) = vel_grad(0, p);
                let mut j1 = j;
                let kj1 = mat_mul(&g1, &j);
                let p2 = shift(p, 0.5 * dt, v1);
                mat_axpy(&mut j1, 0.5 * dt, &kj1);
                let (v2, g2) = vel_grad(1, p2);
                let mut j2 = j;
                let kj2 = mat_mul(&g2, &j1);
                let p3 = shift(p, 0.5 * dt, v2);
                mat_axpy(&mut j2, 0.5 * dt, &kj2);
                let (v3, g3) = vel_grad(2, p3);
                let mut j3 = j;
                let kj3 = mat_mul(&g3, &j2);
                let p4 = shift(p, dt, v3);
                mat_axpy(&mut j3, dt, &kj3);
                let (v4, g4) = vel_grad(3, p4);
                let kj4 = mat_mul(&g4, &j3);
                self.pts[idx] = [
                    p[0] + dt / 6.0 * (v1[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]),
                    p[1] + dt / 6.0 * (v1[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]),
                ];
                let mut jn = j;
                mat_axpy(&mut jn, dt / 6.0, &kj1);
                mat_axpy(&mut jn, dt / 3.0, &kj2);
                mat_axpy(&mut jn, dt / 3.0, &kj3);
                mat_axpy(&mut jn, dt / 6.0, &kj4);
                self.jac[seed] = jn;
            } else {
                let v1 = vel(0, p);
                let v2 = vel(1, shift(p, 0.5 * dt, v1));
                let v3 = vel(2, shift(p, 0.5 * dt, v2));
                let v4 = vel(3, shift(p, dt, v3));
                self.pts[idx] = [
                    p[0] + dt / 6.0 * (v1[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]),
                    p[1] + dt / 6.0 * (v1[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]),
                ];
            }
            let q = self.pts[idx];
            if escape_guard && (q[0].abs() > self.l_half || q[1].abs() > self.l_half) {
                return Err(SolverError::TracerEscaped { t: t + dt, x: q[0], y: q[1] });
            }
        }
        Ok(())
    }
}

/// Integrates tracers through a prescribed velocity series. Stage fields
/// come from the series' cubic-in-time interpolation; both stages at
/// `t + dt/2` share one interpolant.
pub fn integrate_tracer(
    series: &VelocitySeries,
    seeds: &[[f64; 2]],
    dt: f64,
    t_end: f64,
    with_jacobians: bool,
) -> Result<FlowMapSample, SolverError> {
    if !(dt > 0.0) || t_end < 0.0 {
        return Err(SolverError::BadConfig { dt, t_end });
    }
    if series.t_max() + 1e-9 * dt < t_end {
        return Err(SolverError::SourceExhausted { requested: t_end, available: series.t_max() });
    }
    let grid = series.fields[0].u1_hat.grid;
    let spec = TracerSpec {
        seeds: seeds.to_vec(),
        sources: Vec::new(),
        drift_of: None,
        with_jacobians,
        fd_offset: None,
    };
    let mut cohort = Cohort::new(&spec, 0, None, grid.dx(), grid.l);
    let n_steps = (t_end / dt).round() as usize;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let s1 = series.at(t)?;
        let s_mid = series.at(t + 0.5 * dt)?;
        let s4 = series.at(t + dt)?;
        cohort.advance(t, dt, [&s1, &s_mid, &s_mid, &s4], true)?;
        cohort.record(t + dt);
    }
    Ok(cohort.sample)
}

/// Convenience wrapper matching the solver's config.
pub fn integrate_tracer_over_run(
    series: &VelocitySeries,
    seeds: &[[f64; 2]],
    config: &StepperConfig,
    with_jacobians: bool,
) -> Result<FlowMapSample, SolverError> {
    integrate_tracer(series, seeds, config.dt, config.t_end, with_jacobians)
}
