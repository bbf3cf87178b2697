//! Measured quantities: constraint norms, the origin monitor, energy and its
//! constraint-violation correction, the blow-up scaling function, rescaled
//! profiles and disk (light-cone) energies.
//!
//! All integrals use the trapezoid rule over the computational domain and are
//! multiplied by the grid's symmetry factor, so quarter-domain values refer to
//! the full square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid2D, ScalarField, GHOSTS};
use crate::model::{self, FieldState};
use crate::par;

/// Below this `|w_rr(0)|` the scaling function is reported as absent.
pub const MIN_CURVATURE: f64 = 1e-12;

/// Relative slack for the sharp disk indicator, so nodes lying on the
/// circle up to round-off are counted as inside.
const DISK_SLACK: f64 = 1e-12;

/// Scalars recorded at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub phi_max: f64,
    pub psi_max: f64,
    pub origin_dev: f64,
    pub energy: f64,
    pub energy_rel: f64,
    pub delta_e: f64,
    pub s: Option<f64>,
    pub min_w: f64,
}

impl DiagnosticsRecord {
    /// `E - Delta E`.
    pub fn corrected_energy(&self) -> f64 {
        corrected_energy(self.energy, self.delta_e)
    }
}

/// Max over interior nodes of `|phi|` and `|psi|`.
pub fn max_norms(state: &FieldState, grid: &Grid2D) -> (f64, f64) {
    let stride = grid.stride();
    let n = grid.n();
    let rows = par::map_rows(grid.interior_rows(), |k| {
        let mut phi_max: f64 = 0.0;
        let mut psi_max: f64 = 0.0;
        for j in GHOSTS..n + GHOSTS {
            let c = k * stride + j;
            let (mut uu, mut up) = (0.0, 0.0);
            for a in 0..3 {
                let u = state.pos[a].values[c];
                uu += u * u;
                up += u * state.vel[a].values[c];
            }
            phi_max = par::nan_max(phi_max, (uu - 1.0).abs());
            psi_max = par::nan_max(psi_max, (2.0 * up).abs());
        }
        (phi_max, psi_max)
    });
    rows.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (par::nan_max(a, x), par::nan_max(b, y))
    })
}

/// `|w(t, 0, 0) - 1|`.
pub fn origin_deviation(state: &FieldState, grid: &Grid2D) -> f64 {
    (state.origin_w(grid) - 1.0).abs()
}

/// Minimum of `w` over the interior nodes.
pub fn min_w(state: &FieldState, grid: &Grid2D) -> f64 {
    let stride = grid.stride();
    let n = grid.n();
    let w = &state.w().values;
    par::map_rows(grid.interior_rows(), |k| {
        w[k * stride + GHOSTS..k * stride + GHOSTS + n]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Energy `1/2 int (|U_t|^2 + |U_x|^2 + |U_y|^2 - lambda phi)`. With
/// `include_lambda_phi = false` the multiplier term is dropped.
/// Requires filled ghosts.
pub fn total_energy(state: &FieldState, grid: &Grid2D, include_lambda_phi: bool) -> f64 {
    let stride = grid.stride();
    let h = grid.h();
    let integral = grid.integrate_nodes(|i, k| {
        let c = grid.idx(i, k);
        let (kin, grad) = model::energy_terms_at(state, c, stride, h);
        let mut density = kin + grad;
        if include_lambda_phi {
            let lambda = -0.5 * (kin - grad);
            density -= lambda * phi_at(state, c);
        }
        0.5 * density
    });
    grid.symmetry_factor() * integral
}

/// Energy with an externally supplied multiplier field; used to check that
/// the multiplier term drops out on the constraint manifold.
pub fn total_energy_with_lambda(state: &FieldState, grid: &Grid2D, lambda: &[f64]) -> f64 {
    let stride = grid.stride();
    let h = grid.h();
    let integral = grid.integrate_nodes(|i, k| {
        let c = grid.idx(i, k);
        let (kin, grad) = model::energy_terms_at(state, c, stride, h);
        0.5 * (kin + grad - lambda[c] * phi_at(state, c))
    });
    grid.symmetry_factor() * integral
}

#[inline]
fn phi_at(state: &FieldState, c: usize) -> f64 {
    let [u, v, w] = &state.pos;
    u.values[c] * u.values[c] + v.values[c] * v.values[c] + w.values[c] * w.values[c] - 1.0
}

#[inline]
fn psi_at(state: &FieldState, c: usize) -> f64 {
    2.0 * (0..3)
        .map(|a| state.pos[a].values[c] * state.vel[a].values[c])
        .sum::<f64>()
}

/// `dE/dt = int lambda psi`; the boundary flux vanishes under homogeneous
/// Neumann conditions. Requires filled ghosts.
pub fn energy_correction_rate(state: &FieldState, grid: &Grid2D) -> f64 {
    let stride = grid.stride();
    let h = grid.h();
    let integral = grid.integrate_nodes(|i, k| {
        let c = grid.idx(i, k);
        model::lambda_at(state, c, stride, h) * psi_at(state, c)
    });
    grid.symmetry_factor() * integral
}

/// One trapezoid step of `Delta E = int int lambda psi dt`.
pub fn accumulate_correction(delta_e_prev: f64, rate_prev: f64, rate_curr: f64, dt: f64) -> f64 {
    delta_e_prev + dt * (rate_prev + rate_curr) / 2.0
}

pub fn corrected_energy(energy: f64, delta_e: f64) -> f64 {
    energy - delta_e
}

/// `w_rr` at the origin from the five-point stencil along the x axis.
pub fn origin_w_rr(state: &FieldState, grid: &Grid2D) -> f64 {
    let o = grid.origin_node();
    grid::d2(&state.w().values, grid.idx(o, o), 1, grid.h())
}

/// Scaling factor `s = 2 / sqrt(|w_rr(t, 0)|)`, matching the curvature of the
/// south-pole static solution at the origin. `None` when the curvature is
/// below [`MIN_CURVATURE`]. Requires filled ghosts.
pub fn scaling_function(state: &FieldState, grid: &Grid2D) -> Option<f64> {
    let wrr = origin_w_rr(state, grid).abs();
    (wrr >= MIN_CURVATURE).then(|| 2.0 / wrr.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub r: f64,
    /// `w(t, s r)` on the positive x axis.
    pub w: f64,
    /// `w_S(r)` of the south-pole static solution.
    pub w_static: f64,
}

/// Samples `w` along the positive x axis at radii `s r` using cubic
/// Lagrange interpolation through the four surrounding nodes.
pub fn rescaled_profile(
    state: &FieldState,
    grid: &Grid2D,
    s: f64,
    radii: &[f64],
) -> Result<Vec<ProfilePoint>> {
    let extent = grid.x_max();
    let o = grid.origin_node();
    let row = &state.w().values[grid.idx(0, o) - GHOSTS..grid.idx(0, o) - GHOSTS + grid.stride()];
    radii
        .iter()
        .map(|&r| {
            let x = s * r;
            if !(x >= 0.0 && x <= extent) || r < 0.0 {
                return Err(Error::OutOfRange { radius: x, extent });
            }
            Ok(ProfilePoint {
                r,
                w: interpolate_row(row, grid, x),
                w_static: model::static_w(r),
            })
        })
        .collect()
}

/// Cubic interpolation in a storage row (ghosts included) at coordinate `x`.
fn interpolate_row(row: &[f64], grid: &Grid2D, x: f64) -> f64 {
    let pos = (x - grid.x_min()) / grid.h();
    let base = (pos.floor() as usize).min(grid.n() - 1);
    let t = pos - base as f64;
    // nodes base-1 .. base+2 in interior numbering, shifted into storage
    let s = base + GHOSTS;
    let (f0, f1, f2, f3) = (row[s - 1], row[s], row[s + 1], row[s + 2]);
    let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    l0 * f0 + l1 * f1 + l2 * f2 + l3 * f3
}

/// Kinetic and potential energy inside the disk `r <= radius`, using a sharp
/// nodewise indicator. Requires filled ghosts.
pub fn lightcone_energies(state: &FieldState, grid: &Grid2D, radius: f64) -> (f64, f64) {
    let stride = grid.stride();
    let h = grid.h();
    let limit = radius * radius * (1.0 + DISK_SLACK);
    let inside = |i: usize, k: usize| {
        let (x, y) = (grid.coord(i), grid.coord(k));
        x * x + y * y <= limit
    };
    let kin = grid.integrate_nodes(|i, k| {
        if !inside(i, k) {
            return 0.0;
        }
        let c = grid.idx(i, k);
        0.5 * (0..3).map(|a| state.vel[a].values[c].powi(2)).sum::<f64>()
    });
    let pot = grid.integrate_nodes(|i, k| {
        if !inside(i, k) {
            return 0.0;
        }
        let (_, grad) = model::energy_terms_at(state, grid.idx(i, k), stride, h);
        0.5 * grad
    });
    (grid.symmetry_factor() * kin, grid.symmetry_factor() * pot)
}

/// Largest nodewise `|a - b|` over the disk `r <= radius`.
pub fn max_deviation_in_disk(a: &ScalarField, b: &ScalarField, grid: &Grid2D, radius: f64) -> f64 {
    let limit = radius * radius * (1.0 + DISK_SLACK);
    let n = grid.n();
    par::max_rows(grid.interior_rows(), |k| {
        let y = grid.coord(k - GHOSTS);
        let mut m: f64 = 0.0;
        for i in 0..n {
            let x = grid.coord(i);
            if x * x + y * y <= limit {
                let c = grid.idx(i, k - GHOSTS);
                m = par::nan_max(m, (a.values[c] - b.values[c]).abs());
            }
        }
        m
    })
}

/// Builds [`DiagnosticsRecord`]s, remembering the initial energy.
#[derive(Debug, Clone)]
pub struct Sampler {
    include_lambda_phi: bool,
    initial_energy: Option<f64>,
}

impl Sampler {
    pub fn new(include_lambda_phi: bool) -> Self {
        Sampler {
            include_lambda_phi,
            initial_energy: None,
        }
    }

    pub fn initial_energy(&self) -> Option<f64> {
        self.initial_energy
    }

    pub fn sample(&mut self, state: &FieldState, grid: &Grid2D, delta_e: f64) -> DiagnosticsRecord {
        let (phi_max, psi_max) = max_norms(state, grid);
        let energy = total_energy(state, grid, self.include_lambda_phi);
        let e0 = *self.initial_energy.get_or_insert(energy);
        DiagnosticsRecord {
            t: state.time,
            phi_max,
            psi_max,
            origin_dev: origin_deviation(state, grid),
            energy,
            energy_rel: relative_energy(energy, e0),
            delta_e,
            s: scaling_function(state, grid),
            min_w: min_w(state, grid),
        }
    }
}

/// `|1 - E / E0|`, or `|E|` when `E0 = 0`.
pub fn relative_energy(energy: f64, e0: f64) -> f64 {
    if e0 == 0.0 {
        energy.abs()
    } else {
        (1.0 - energy / e0).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::model::{initial_state, static_solution, InitialDataParams, Pole};
    use std::f64::consts::PI;

    fn full(n: usize) -> Grid2D {
        Grid2D::new(Domain::Full, n).unwrap()
    }

    #[test]
    fn norms_of_static_solution() {
        let g = full(81);
        let (phi, psi) = max_norms(&static_solution(&g, Pole::South), &g);
        assert!(phi <= 1e-15);
        assert_eq!(psi, 0.0);
    }

    #[test]
    fn norms_of_perturbed_node() {
        let g = full(11);
        let mut s = FieldState::north_pole(&g);
        s.pos[2].set(&g, 3, 4, 1.1);
        let (phi, psi) = max_norms(&s, &g);
        assert!((phi - 0.21).abs() < 1e-15);
        assert_eq!(psi, 0.0);
    }

    #[test]
    fn origin_deviation_examples() {
        let g = full(41);
        let s = initial_state(&InitialDataParams::new(0.7), &g);
        assert_eq!(origin_deviation(&s, &g), 0.0);
        let n = static_solution(&g, Pole::North);
        assert_eq!(origin_deviation(&n, &g), 2.0);
    }

    #[test]
    fn energy_of_constant_map_is_zero() {
        let g = full(21);
        let s = FieldState::north_pole(&g);
        assert_eq!(total_energy(&s, &g, true), 0.0);
        let s = initial_state(&InitialDataParams::new(0.0), &g);
        assert_eq!(total_energy(&s, &g, true), 0.0);
        assert_eq!(energy_correction_rate(&s, &g), 0.0);
    }

    #[test]
    fn correction_accumulation() {
        assert_eq!(accumulate_correction(0.3, 0.0, 0.0, 0.1), 0.3);
        assert!((accumulate_correction(0.0, 1.0, 1.0, 0.1) - 0.1).abs() < 1e-17);
    }

    #[test]
    fn scaling_of_static_solution_is_one() {
        // w_S = 1 - 2 r^2 + O(r^4)  =>  w_rr(0) = -4, s = 1
        for domain in [Domain::Full, Domain::Quarter] {
            let g = Grid2D::new(domain, 201).unwrap();
            let s = scaling_function(&static_solution(&g, Pole::South), &g).unwrap();
            assert!((s - 1.0).abs() < 1e-6, "{domain:?}: {s}");
        }
    }

    #[test]
    fn scaling_of_quadratic_profile() {
        let g = Grid2D::new(Domain::Quarter, 41).unwrap();
        let mut s = FieldState::north_pole(&g);
        s.pos[2] = crate::grid::ScalarField::from_fn(&g, s.pos[2].parity_x, s.pos[2].parity_y, |x, y| {
            1.0 - 8.0 * (x * x + y * y)
        });
        assert!((scaling_function(&s, &g).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_absent_for_flat_origin() {
        let g = full(41);
        let s = initial_state(&InitialDataParams::new(0.4), &g);
        assert_eq!(scaling_function(&s, &g), None);
    }

    #[test]
    fn profile_of_static_solution() {
        let g = Grid2D::new(Domain::Quarter, 161).unwrap();
        let st = static_solution(&g, Pole::South);
        let radii: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let prof = rescaled_profile(&st, &g, 1.0, &radii).unwrap();
        assert_eq!(prof[0].w, 1.0);
        for p in &prof {
            assert!((p.w - p.w_static).abs() < 1e-7, "{p:?}");
        }
        assert!(matches!(
            rescaled_profile(&st, &g, 2.0, &[0.6]),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn profile_at_origin_on_full_domain() {
        let g = full(41);
        let s = initial_state(&InitialDataParams::new(0.4), &g);
        let p = rescaled_profile(&s, &g, 0.3, &[0.0]).unwrap();
        assert_eq!(p[0].w, s.origin_w(&g));
    }

    #[test]
    fn disk_energy_of_static_solution() {
        let g = full(161);
        let st = static_solution(&g, Pole::South);
        let (kin, pot) = lightcone_energies(&st, &g, 1.0);
        assert_eq!(kin, 0.0);
        assert!((pot / (2.0 * PI) - 1.0).abs() < 1e-2, "{pot}");
    }

    #[test]
    fn zero_velocity_has_no_kinetic_energy() {
        let g = full(41);
        let (kin, _) = lightcone_energies(&FieldState::north_pole(&g), &g, 0.7);
        assert_eq!(kin, 0.0);
    }
}
