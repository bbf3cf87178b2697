//! Time integration: classical RK4 on the free system, Rattle with nodewise
//! constraint projections, and the evolution driver.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::config::{Method, RunConfig};
use crate::diagnostics::{self, DiagnosticsRecord, Sampler};
use crate::error::{Error, Result};
use crate::grid::{self, Grid2D, GHOSTS};
use crate::model::{self, FieldState};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub method: Method,
    /// `dt = cfl * h`.
    pub cfl: f64,
    /// Largest accepted nodewise `|phi|` and `|psi|` after a Rattle step.
    pub tol: f64,
    /// Newton iteration cap per projection.
    pub max_iter: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            method: Method::Rattle,
            cfl: 0.2,
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

impl From<&RunConfig> for StepperConfig {
    fn from(c: &RunConfig) -> Self {
        StepperConfig {
            method: c.method,
            cfl: c.cfl,
            tol: c.tol,
            max_iter: c.max_iter,
        }
    }
}

/// One classical RK4 step of the free system. The multiplier is
/// re-evaluated from the stage values at every stage; nothing is projected.
pub fn rk4_step(state: &FieldState, dt: f64, grid: &Grid2D) -> Result<FieldState> {
    let mut acc = state.clone();
    let mut stage = state.clone();
    let weights = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    let offsets = [0.5, 0.5, 1.0];
    for s in 0..4 {
        let k = model::rhs_free(&stage, grid);
        acc.add_scaled(&k, weights[s] * dt);
        if s < 3 {
            stage.clone_from(state);
            stage.add_scaled(&k, offsets[s] * dt);
            stage.fill_ghosts(grid);
        }
    }
    acc.fill_ghosts(grid);
    acc.time = state.time + dt;
    if !acc.is_finite(grid) {
        return Err(Error::NonFinite { t: acc.time });
    }
    Ok(acc)
}

/// Newton iterations spent by the two Rattle projections (max over nodes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RattleStats {
    pub position_iters: usize,
    pub velocity_iters: usize,
}

/// One Rattle step.
///
/// Kick-drift with the unconstrained force, then a nodewise Newton solve for
/// the multiplier that puts `U_{n+1}` on the sphere; second half-kick, then a
/// nodewise solve for the multiplier that makes `U_{n+1} . U_t{n+1} = 0`.
/// The constraint gradient `2U` is local, so every node is solved
/// independently.
pub fn rattle_step(
    state: &FieldState,
    dt: f64,
    grid: &Grid2D,
    cfg: &StepperConfig,
) -> Result<(FieldState, RattleStats)> {
    let lap = laplacians(state, grid);
    let (next, stats, _) = rattle_step_cached(state, &lap, dt, grid, cfg)?;
    Ok((next, stats))
}

fn laplacians(state: &FieldState, grid: &Grid2D) -> [Vec<f64>; 3] {
    std::array::from_fn(|a| {
        let mut out = vec![0.0; grid.len()];
        grid::laplacian_into(&state.pos[a].values, &mut out, grid);
        out
    })
}

/// Unconstrained drift `U + dt P + dt^2/2 L`.
#[inline(always)]
fn drift(u: f64, p: f64, l: f64, dt: f64) -> f64 {
    u + dt * p + (0.5 * dt * dt) * l
}

/// Half kick `P + dt/2 L`.
#[inline(always)]
fn kick(p: f64, l: f64, dt: f64) -> f64 {
    p + (0.5 * dt) * l
}

const FAILED: usize = usize::MAX;

/// Rattle step reusing the Laplacian of the incoming positions. Returns the
/// Laplacian of the outgoing positions for the next step.
fn rattle_step_cached(
    state: &FieldState,
    lap: &[Vec<f64>; 3],
    dt: f64,
    grid: &Grid2D,
    cfg: &StepperConfig,
) -> Result<(FieldState, RattleStats, [Vec<f64>; 3])> {
    let n = grid.n();
    let stride = grid.stride();
    let tol = cfg.tol;
    let max_iter = cfg.max_iter;
    let t_next = state.time + dt;
    let u = [&state.pos[0].values, &state.pos[1].values, &state.pos[2].values];
    let p = [&state.vel[0].values, &state.vel[1].values, &state.vel[2].values];

    // position projection: |Q + mu U_n|^2 = 1, mu = dt^2 Lambda
    let mut mu = vec![0.0; grid.len()];
    let pos_iters = AtomicUsize::new(0);
    par::for_each_row(&mut mu, stride, |k, row| {
        if !(GHOSTS..n + GHOSTS).contains(&k) {
            return;
        }
        let mut row_max = 0;
        for j in GHOSTS..n + GHOSTS {
            let c = k * stride + j;
            let un = [u[0][c], u[1][c], u[2][c]];
            let q: [f64; 3] = std::array::from_fn(|a| drift(un[a], p[a][c], lap[a][c], dt));
            let mut m = 0.0;
            let mut it = 0;
            loop {
                let z: [f64; 3] = std::array::from_fn(|a| q[a] + m * un[a]);
                let g = z[0] * z[0] + z[1] * z[1] + z[2] * z[2] - 1.0;
                if g.abs() <= tol {
                    break;
                }
                if it == max_iter || !g.is_finite() {
                    it = FAILED;
                    break;
                }
                let dg = 2.0 * (z[0] * un[0] + z[1] * un[1] + z[2] * un[2]);
                m -= g / dg;
                it += 1;
            }
            row[j] = m;
            row_max = row_max.max(it);
        }
        pos_iters.fetch_max(row_max, Ordering::Relaxed);
    });
    let position_iters = pos_iters.into_inner();
    if position_iters == FAILED {
        return Err(Error::ProjectionFailed {
            stage: "position",
            t: t_next,
            max_iter,
        });
    }

    let mut next = FieldState::zeros(grid);
    next.time = t_next;
    let inv_dt = 1.0 / dt;
    for a in 0..3 {
        let (ua, pa, la) = (u[a], p[a], &lap[a]);
        let mu = &mu;
        par::for_each_row(&mut next.pos[a].values, stride, |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            for j in GHOSTS..n + GHOSTS {
                let c = k * stride + j;
                row[j] = drift(ua[c], pa[c], la[c], dt) + mu[c] * ua[c];
            }
        });
        par::for_each_row(&mut next.vel[a].values, stride, |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            for j in GHOSTS..n + GHOSTS {
                let c = k * stride + j;
                // P* = P + dt/2 (L + 2 Lambda U) with mu = dt^2 Lambda
                row[j] = kick(pa[c], la[c], dt) + mu[c] * inv_dt * ua[c];
            }
        });
        next.pos[a].fill_ghosts(grid);
    }
    let lap_next = laplacians(&next, grid);

    // velocity projection: U . (R + nu U) = 0 with R = P* + dt/2 L_{n+1}
    let vel_iters = AtomicUsize::new(0);
    let mut nu = vec![0.0; grid.len()];
    {
        let un = [&next.pos[0].values, &next.pos[1].values, &next.pos[2].values];
        let ps = [&next.vel[0].values, &next.vel[1].values, &next.vel[2].values];
        let ln = &lap_next;
        par::for_each_row(&mut nu, stride, |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            let mut row_max = 0;
            for j in GHOSTS..n + GHOSTS {
                let c = k * stride + j;
                let uc = [un[0][c], un[1][c], un[2][c]];
                let r: [f64; 3] = std::array::from_fn(|a| kick(ps[a][c], ln[a][c], dt));
                let uu = uc[0] * uc[0] + uc[1] * uc[1] + uc[2] * uc[2];
                let mut m = 0.0;
                let mut it = 0;
                loop {
                    let g = 2.0
                        * ((r[0] + m * uc[0]) * uc[0]
                            + (r[1] + m * uc[1]) * uc[1]
                            + (r[2] + m * uc[2]) * uc[2]);
                    if g.abs() <= tol {
                        break;
                    }
                    if it == max_iter || !g.is_finite() {
                        it = FAILED;
                        break;
                    }
                    m -= g / (2.0 * uu);
                    it += 1;
                }
                row[j] = m;
                row_max = row_max.max(it);
            }
            vel_iters.fetch_max(row_max, Ordering::Relaxed);
        });
    }
    let velocity_iters = vel_iters.into_inner();
    if velocity_iters == FAILED {
        return Err(Error::ProjectionFailed {
            stage: "velocity",
            t: t_next,
            max_iter,
        });
    }
    for a in 0..3 {
        let ua = &next.pos[a].values;
        let la = &lap_next[a];
        let nu = &nu;
        par::for_each_row(&mut next.vel[a].values, stride, |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            for j in GHOSTS..n + GHOSTS {
                let c = k * stride + j;
                row[j] = kick(row[j], la[c], dt) + nu[c] * ua[c];
            }
        });
        next.vel[a].fill_ghosts(grid);
    }
    if !next.is_finite(grid) {
        return Err(Error::NonFinite { t: t_next });
    }
    Ok((
        next,
        RattleStats {
            position_iters,
            velocity_iters,
        },
        lap_next,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    ProjectionFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub samples: Vec<DiagnosticsRecord>,
    /// `w(t, 0, 0)` at every sample, aligned with `samples`.
    pub origin_w: Vec<f64>,
    /// `w(t, h, 0)` at every sample, aligned with `samples`.
    pub core_w: Vec<f64>,
    pub final_state: FieldState,
    pub status: RunStatus,
    /// Time and message of the failing step, if any.
    pub failure: Option<(f64, String)>,
    /// States at the requested snapshot times (first step at or after each).
    pub snapshots: Vec<FieldState>,
    pub steps: usize,
    pub dt: f64,
    pub max_position_iters: usize,
    pub max_velocity_iters: usize,
}

impl RunRecord {
    /// Sample with the smallest `min_w`.
    pub fn global_min_w(&self) -> Option<&DiagnosticsRecord> {
        self.samples
            .iter()
            .min_by(|a, b| a.min_w.total_cmp(&b.min_w))
    }

    /// `(t, s)` for every sample where the scaling function is defined.
    pub fn scaling_series(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|r| r.s.map(|s| (r.t, s)))
            .collect()
    }
}

/// Number of steps and regular step size for `[0, t_end]`; the last step is
/// shortened to land on `t_end`.
pub fn step_plan(t_end: f64, dt: f64) -> (usize, f64) {
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, dt)
}

/// Evolves the configured initial data.
pub fn evolve(config: &RunConfig, grid: &Grid2D) -> Result<RunRecord> {
    config.validate()?;
    let initial = model::initial_state(&config.initial_data(), grid);
    evolve_from(initial, config, grid)
}

/// Evolves an arbitrary initial state with the configured stepper and
/// diagnostics.
pub fn evolve_from(initial: FieldState, config: &RunConfig, grid: &Grid2D) -> Result<RunRecord> {
    let cfg = StepperConfig::from(config);
    let dt = cfg.cfl * grid.h();
    let (steps, _) = step_plan(config.t_end, dt);
    let mut sampler = Sampler::new(config.energy_lambda_phi);
    let mut snapshot_times = config.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;

    let mut state = initial;
    state.fill_ghosts(grid);
    let mut samples = Vec::new();
    let mut origin_w = Vec::new();
    let mut core_w = Vec::new();
    let mut snapshots = Vec::new();
    let mut delta_e = 0.0;
    let mut rate = if config.energy_correction {
        diagnostics::energy_correction_rate(&state, grid)
    } else {
        0.0
    };
    let mut lap = match cfg.method {
        Method::Rattle => Some(laplacians(&state, grid)),
        Method::Rk4 => None,
    };
    let mut stats = RattleStats::default();
    let mut status = RunStatus::Completed;
    let mut failure = None;

    let take_snapshots = |state: &FieldState, next: &mut usize, out: &mut Vec<FieldState>| {
        while *next < snapshot_times.len() && snapshot_times[*next] <= state.time + 1e-9 {
            out.push(state.clone());
            *next += 1;
        }
    };

    samples.push(sampler.sample(&state, grid, delta_e));
    origin_w.push(state.origin_w(grid));
    core_w.push(state.core_w(grid));
    take_snapshots(&state, &mut next_snapshot, &mut snapshots);

    let mut completed_steps = 0;
    for step in 1..=steps {
        let t_target = if step == steps {
            config.t_end
        } else {
            step as f64 * dt
        };
        let h_t = t_target - state.time;
        let result = match cfg.method {
            Method::Rk4 => rk4_step(&state, h_t, grid),
            Method::Rattle => {
                let cached = lap.as_ref().expect("rattle keeps a Laplacian cache");
                rattle_step_cached(&state, cached, h_t, grid, &cfg).map(|(next, s, l)| {
                    stats.position_iters = stats.position_iters.max(s.position_iters);
                    stats.velocity_iters = stats.velocity_iters.max(s.velocity_iters);
                    lap = Some(l);
                    next
                })
            }
        };
        let mut next = match result {
            Ok(next) => next,
            Err(e) => {
                status = match e {
                    Error::ProjectionFailed { .. } => RunStatus::ProjectionFailed,
                    _ => RunStatus::NonFinite,
                };
                failure = Some((t_target, e.to_string()));
                break;
            }
        };
        next.time = t_target;
        state = next;
        completed_steps = step;

        if config.energy_correction {
            let new_rate = diagnostics::energy_correction_rate(&state, grid);
            delta_e = diagnostics::accumulate_correction(delta_e, rate, new_rate, h_t);
            rate = new_rate;
        }
        let flipped = config.stop_on_flip && (state.origin_w(grid) < 0.0 || state.core_w(grid) < 0.0);
        if step % config.sample_stride == 0 || step == steps || flipped {
            samples.push(sampler.sample(&state, grid, delta_e));
            origin_w.push(state.origin_w(grid));
            core_w.push(state.core_w(grid));
        }
        take_snapshots(&state, &mut next_snapshot, &mut snapshots);
        if flipped {
            break;
        }
    }

    Ok(RunRecord {
        samples,
        origin_w,
        core_w,
        final_state: state,
        status,
        failure,
        snapshots,
        steps: completed_steps,
        dt,
        max_position_iters: stats.position_iters,
        max_velocity_iters: stats.velocity_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::max_norms;
    use crate::grid::Domain;
    use crate::model::{initial_state, static_solution, InitialDataParams, Pole};

    fn full(n: usize) -> Grid2D {
        Grid2D::new(Domain::Full, n).unwrap()
    }

    #[test]
    fn stop_on_flip_ends_at_first_negative_core() {
        let mut cfg = RunConfig::new(1.5, 41).with_domain(Domain::Quarter);
        let grid = cfg.grid().unwrap();
        let full_run = evolve(&cfg, &grid).unwrap();
        // the projection keeps the origin node itself at w = 1
        assert!(full_run.origin_w.iter().all(|&w| (w - 1.0).abs() < 1e-10));
        let first_flip = full_run.core_w.iter().position(|&w| w < 0.0).expect("flips");
        cfg.stop_on_flip = true;
        let short = evolve(&cfg, &grid).unwrap();
        assert_eq!(short.status, RunStatus::Completed);
        assert_eq!(short.samples.len(), first_flip + 1);
        assert_eq!(short.samples[..], full_run.samples[..first_flip + 1]);
        assert!(short.final_state.time < cfg.t_end);
    }

    #[test]
    fn constant_map_is_fixed_point() {
        let g = full(21);
        let s = FieldState::north_pole(&g);
        let next = rk4_step(&s, 0.01, &g).unwrap();
        assert_eq!(next.pos, s.pos);
        assert_eq!(next.vel, s.vel);
        let (next, stats) = rattle_step(&s, 0.01, &g, &StepperConfig::default()).unwrap();
        assert_eq!(next.pos, s.pos);
        assert_eq!(next.vel, s.vel);
        assert!(stats.position_iters <= 1 && stats.velocity_iters <= 1);
    }

    #[test]
    fn rattle_step_lands_on_constraints() {
        let g = full(41);
        let s = initial_state(&InitialDataParams::new(0.6), &g);
        let cfg = StepperConfig::default();
        let dt = cfg.cfl * g.h();
        let mut cur = s;
        for _ in 0..20 {
            let (next, stats) = rattle_step(&cur, dt, &g, &cfg).unwrap();
            let (phi, psi) = max_norms(&next, &g);
            assert!(phi <= 1e-12 && psi <= 1e-12, "{phi} {psi}");
            assert!(stats.position_iters <= cfg.max_iter);
            cur = next;
        }
    }

    #[test]
    fn projection_cap_is_reported() {
        let g = full(21);
        let s = initial_state(&InitialDataParams::new(0.6), &g);
        let cfg = StepperConfig {
            max_iter: 1,
            tol: 1e-300,
            ..StepperConfig::default()
        };
        let err = rattle_step(&s, 0.02, &g, &cfg).unwrap_err();
        assert!(matches!(err, Error::ProjectionFailed { stage: "position", .. }));
    }

    #[test]
    fn step_plan_lands_on_end() {
        assert_eq!(step_plan(1.6, 0.2 * 2.0 / 160.0).0, 640);
        assert_eq!(step_plan(1.0, 0.3).0, 4);
    }

    #[test]
    fn evolve_zero_amplitude() {
        let cfg = RunConfig::new(0.0, 21).with_t_end(0.3);
        let g = cfg.grid().unwrap();
        for method in [Method::Rk4, Method::Rattle] {
            let rec = evolve(&cfg.clone().with_method(method), &g).unwrap();
            assert_eq!(rec.status, RunStatus::Completed);
            assert_eq!(rec.final_state.pos, FieldState::north_pole(&g).pos);
            assert!((rec.samples.last().unwrap().t - 0.3).abs() < 1e-15);
            for s in &rec.samples {
                assert_eq!(s.energy, 0.0);
                assert_eq!(s.delta_e, 0.0);
                assert_eq!(s.phi_max, 0.0);
            }
        }
    }

    #[test]
    fn rattle_is_reversible() {
        let g = full(41);
        let cfg = StepperConfig::default();
        let dt = cfg.cfl * g.h();
        let start = initial_state(&InitialDataParams::new(0.5), &g);
        let mut s = start.clone();
        for _ in 0..10 {
            s = rattle_step(&s, dt, &g, &cfg).unwrap().0;
        }
        for v in s.vel.iter_mut() {
            v.values.iter_mut().for_each(|x| *x = -*x);
        }
        for _ in 0..10 {
            s = rattle_step(&s, dt, &g, &cfg).unwrap().0;
        }
        for a in 0..3 {
            let d = s.pos[a]
                .interior(&g)
                .zip(start.pos[a].interior(&g))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(d <= 10.0 * cfg.tol, "component {a}: {d}");
            let d = s.vel[a]
                .interior(&g)
                .zip(start.vel[a].interior(&g))
                .map(|(x, y)| (x + y).abs())
                .fold(0.0, f64::max);
            assert!(d <= 10.0 * cfg.tol, "velocity {a}: {d}");
        }
    }

    #[test]
    fn static_solution_barely_moves() {
        let g = full(81);
        let s = static_solution(&g, Pole::South);
        let cfg = StepperConfig::default();
        let (next, _) = rattle_step(&s, cfg.cfl * g.h(), &g, &cfg).unwrap();
        // interior box away from the Neumann boundary
        let mut max = 0.0f64;
        for k in 0..g.n() {
            for i in 0..g.n() {
                if g.coord(i).abs() <= 0.5 && g.coord(k).abs() <= 0.5 {
                    max = max.max((next.w().get(&g, i, k) - s.w().get(&g, i, k)).abs());
                }
            }
        }
        assert!(max < 1e-9, "{max}");
    }
}
