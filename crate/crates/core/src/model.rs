//! The wave map into the 2-sphere in extrinsic form.
//!
//! The target sphere is embedded in R^3 as `U = (u, v, w)` with the algebraic
//! constraint `|U|^2 = 1`. The equations of motion are
//! `U_tt = Lap U + 2 lambda U` with the multiplier
//! `lambda = -1/2 (|U_t|^2 - |U_x|^2 - |U_y|^2)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{self, Grid2D, Parity, ScalarField, GHOSTS};
use crate::par;

/// Reflection parities of `u`, `v`, `w` across the low `x` and `y` axes.
pub const COMPONENT_PARITIES: [(Parity, Parity); 3] = [
    (Parity::Odd, Parity::Even),
    (Parity::Even, Parity::Odd),
    (Parity::Even, Parity::Even),
];

/// Sphere components and their velocities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// `u`, `v`, `w`.
    pub pos: [ScalarField; 3],
    /// `u_t`, `v_t`, `w_t`; each shares the parity of its component.
    pub vel: [ScalarField; 3],
    pub time: f64,
}

impl FieldState {
    pub fn zeros(grid: &Grid2D) -> Self {
        let make = |a: usize| {
            let (px, py) = COMPONENT_PARITIES[a];
            ScalarField::zeros(grid, px, py)
        };
        FieldState {
            pos: [make(0), make(1), make(2)],
            vel: [make(0), make(1), make(2)],
            time: 0.0,
        }
    }

    /// The constant map `U = (0, 0, 1)` at rest.
    pub fn north_pole(grid: &Grid2D) -> Self {
        let mut s = Self::zeros(grid);
        s.pos[2].values.fill(1.0);
        s
    }

    pub fn u(&self) -> &ScalarField {
        &self.pos[0]
    }
    pub fn v(&self) -> &ScalarField {
        &self.pos[1]
    }
    pub fn w(&self) -> &ScalarField {
        &self.pos[2]
    }
    pub fn ut(&self) -> &ScalarField {
        &self.vel[0]
    }
    pub fn vt(&self) -> &ScalarField {
        &self.vel[1]
    }
    pub fn wt(&self) -> &ScalarField {
        &self.vel[2]
    }

    pub fn fill_ghosts(&mut self, grid: &Grid2D) {
        for f in self.pos.iter_mut().chain(self.vel.iter_mut()) {
            f.fill_ghosts(grid);
        }
    }

    /// `self += c * other` over the whole storage, ghosts included.
    pub fn add_scaled(&mut self, other: &FieldState, c: f64) {
        for (a, b) in self
            .pos
            .iter_mut()
            .chain(self.vel.iter_mut())
            .zip(other.pos.iter().chain(other.vel.iter()))
        {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += c * y;
            }
        }
    }

    /// True if every interior value is finite.
    pub fn is_finite(&self, grid: &Grid2D) -> bool {
        self.pos
            .iter()
            .chain(self.vel.iter())
            .all(|f| f.max_abs(grid).is_finite())
    }

    /// Value of `w` at the coordinate origin.
    pub fn origin_w(&self, grid: &Grid2D) -> f64 {
        let o = grid.origin_node();
        self.w().get(grid, o, o)
    }

    /// Value of `w` one grid spacing from the origin along the x axis.
    pub fn core_w(&self, grid: &Grid2D) -> f64 {
        let o = grid.origin_node();
        self.w().get(grid, o + 1, o)
    }
}

/// Ring-shaped polynomial bump for the polar angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDataParams {
    pub amplitude: f64,
    pub r1: f64,
    pub r2: f64,
    pub n: u32,
}

impl InitialDataParams {
    pub fn new(amplitude: f64) -> Self {
        InitialDataParams {
            amplitude,
            r1: 0.5,
            r2: 1.0,
            n: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::config("amplitude", "must be finite"));
        }
        if !(self.r1 >= 0.0 && self.r1 < self.r2 && self.r2.is_finite()) {
            return Err(Error::config("r1", "need 0 <= r1 < r2"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "exponent must be positive"));
        }
        Ok(())
    }
}

impl Default for InitialDataParams {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Initial polar angle: `A (4 (r - r1)(r2 - r) / (r2 - r1)^2)^n` on
/// `[r1, r2]`, zero elsewhere.
pub fn theta0(r: f64, p: &InitialDataParams) -> f64 {
    if r < p.r1 || r > p.r2 {
        return 0.0;
    }
    let width = p.r2 - p.r1;
    let bracket = 4.0 * (r - p.r1) * (p.r2 - r) / (width * width);
    p.amplitude * bracket.powi(p.n as i32)
}

/// Radial derivative of [`theta0`].
pub fn theta0_prime(r: f64, p: &InitialDataParams) -> f64 {
    if r < p.r1 || r > p.r2 {
        return 0.0;
    }
    let width = p.r2 - p.r1;
    let w2 = width * width;
    let bracket = 4.0 * (r - p.r1) * (p.r2 - r) / w2;
    let dbracket = 4.0 * (p.r1 + p.r2 - 2.0 * r) / w2;
    p.amplitude * p.n as f64 * bracket.powi(p.n as i32 - 1) * dbracket
}

/// Spherical angles to the embedded unit vector.
pub fn intrinsic_to_extrinsic(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Equivariant data `phi = atan2(y, x)` built from [`theta0`], with the
/// velocities that make the ring move inwards.
pub fn initial_state(p: &InitialDataParams, grid: &Grid2D) -> FieldState {
    let mut s = FieldState::zeros(grid);
    for k in 0..grid.n() {
        let y = grid.coord(k);
        for i in 0..grid.n() {
            let x = grid.coord(i);
            let idx = grid.idx(i, k);
            let r = x.hypot(y);
            if r == 0.0 {
                // theta0(0) = 0 for every parameter choice; velocity limits are 0
                s.pos[2].values[idx] = 1.0;
                continue;
            }
            let theta = theta0(r, p);
            let dtheta = theta0_prime(r, p);
            let sigma = y.atan2(x);
            let pos = intrinsic_to_extrinsic(theta, sigma);
            let (ss, cs) = sigma.sin_cos();
            let (st, ct) = theta.sin_cos();
            let vel = [ct * dtheta * cs, ct * dtheta * ss, -st * dtheta];
            for a in 0..3 {
                s.pos[a].values[idx] = pos[a];
                s.vel[a].values[idx] = vel[a];
            }
        }
    }
    s.fill_ghosts(grid);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pole {
    /// Stereographic projection from the south pole, `w(0) = +1`.
    #[default]
    South,
    /// Stereographic projection from the north pole, `w(0) = -1`.
    North,
}

/// Static harmonic map `(2x, 2y, +-(1 - r^2)) / (1 + r^2)`.
pub fn static_point(x: f64, y: f64, pole: Pole) -> [f64; 3] {
    let r2 = x * x + y * y;
    let d = 1.0 + r2;
    let sign = match pole {
        Pole::South => 1.0,
        Pole::North => -1.0,
    };
    [2.0 * x / d, 2.0 * y / d, sign * (1.0 - r2) / d]
}

/// Radial profile of the south-pole static solution's `w`.
pub fn static_w(r: f64) -> f64 {
    (1.0 - r * r) / (1.0 + r * r)
}

pub fn static_solution(grid: &Grid2D, pole: Pole) -> FieldState {
    let mut s = FieldState::zeros(grid);
    for k in 0..grid.n() {
        let y = grid.coord(k);
        for i in 0..grid.n() {
            let p = static_point(grid.coord(i), y, pole);
            let idx = grid.idx(i, k);
            for a in 0..3 {
                s.pos[a].values[idx] = p[a];
            }
        }
    }
    s.fill_ghosts(grid);
    s
}

/// `(|U_t|^2, |U_x|^2 + |U_y|^2)` at storage index `c`.
#[inline(always)]
pub(crate) fn energy_terms_at(state: &FieldState, c: usize, stride: usize, h: f64) -> (f64, f64) {
    let mut kin = 0.0;
    let mut grad = 0.0;
    for a in 0..3 {
        let p = &state.pos[a].values;
        let v = state.vel[a].values[c];
        let dx = grid::d1(p, c, 1, h);
        let dy = grid::d1(p, c, stride, h);
        kin += v * v;
        grad += dx * dx + dy * dy;
    }
    (kin, grad)
}

#[inline(always)]
pub(crate) fn lambda_at(state: &FieldState, c: usize, stride: usize, h: f64) -> f64 {
    let (kin, grad) = energy_terms_at(state, c, stride, h);
    -0.5 * (kin - grad)
}

/// Lagrange multiplier field. Requires filled ghosts.
pub fn lambda_field(state: &FieldState, grid: &Grid2D) -> ScalarField {
    let mut out = ScalarField::zeros(grid, Parity::Even, Parity::Even);
    let n = grid.n();
    let stride = grid.stride();
    let h = grid.h();
    par::for_each_row(&mut out.values, stride, |k, row| {
        if !(GHOSTS..n + GHOSTS).contains(&k) {
            return;
        }
        for j in GHOSTS..n + GHOSTS {
            row[j] = lambda_at(state, k * stride + j, stride, h);
        }
    });
    out
}

/// Right-hand side of the free system: position rates are the velocities,
/// velocity rates are `Lap_h U + 2 lambda U` with the multiplier evaluated
/// from the same state. Requires filled ghosts; ghosts of the result are
/// unspecified.
pub fn rhs_free(state: &FieldState, grid: &Grid2D) -> FieldState {
    let lambda = lambda_field(state, grid);
    let n = grid.n();
    let stride = grid.stride();
    let h = grid.h();
    let mut rates = FieldState::zeros(grid);
    rates.time = state.time;
    for a in 0..3 {
        rates.pos[a].values.copy_from_slice(&state.vel[a].values);
        let u = &state.pos[a].values;
        let lam = &lambda.values;
        par::for_each_row(&mut rates.vel[a].values, stride, |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            let base = k * stride;
            for j in GHOSTS..n + GHOSTS {
                let c = base + j;
                row[j] = grid::laplacian_at(u, c, stride, h) + 2.0 * lam[c] * u[c];
            }
        });
    }
    rates
}

/// `u^2 + v^2 + w^2 - 1` at every node.
pub fn constraint_phi(state: &FieldState, grid: &Grid2D) -> ScalarField {
    let mut out = ScalarField::zeros(grid, Parity::Even, Parity::Even);
    let [u, v, w] = &state.pos;
    for (o, ((a, b), c)) in out
        .values
        .iter_mut()
        .zip(u.values.iter().zip(&v.values).zip(&w.values))
    {
        *o = a * a + b * b + c * c - 1.0;
    }
    out
}

/// `2 (u u_t + v v_t + w w_t)` at every node.
pub fn constraint_psi(state: &FieldState, grid: &Grid2D) -> ScalarField {
    let mut out = ScalarField::zeros(grid, Parity::Even, Parity::Even);
    for (c, o) in out.values.iter_mut().enumerate() {
        *o = 2.0
            * (state.pos[0].values[c] * state.vel[0].values[c]
                + state.pos[1].values[c] * state.vel[1].values[c]
                + state.pos[2].values[c] * state.vel[2].values[c]);
    }
    out
}

/// Energy of the static solution inside the disk of radius `r`, closed form
/// `4 pi r^2 / (1 + r^2)`.
pub fn static_disk_energy(r: f64) -> f64 {
    4.0 * PI * r * r / (1.0 + r * r)
}
