//! Uniform node-centred grid with two ghost layers per side, five-point
//! finite-difference stencils, parity-based ghost filling and trapezoidal
//! quadrature.
//!
//! Storage is row-major with `x` as the fast index. Interior node `(i, k)`,
//! `0 <= i, k < n`, lives at storage position `(i + 2, k + 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Number of ghost layers on every side.
pub const GHOSTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// `[-1, 1] x [-1, 1]`, homogeneous Neumann on all four sides.
    Full,
    /// `[0, 1] x [0, 1]`; the low sides are symmetry axes.
    Quarter,
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Domain::Full),
            "quarter" => Ok(Domain::Quarter),
            other => Err(Error::config("domain", format!("unknown domain `{other}`"))),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Full => "full",
            Domain::Quarter => "quarter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Reflection symmetry across the low boundary of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    /// No symmetry declared; reflected like `Even`.
    None,
}

impl Parity {
    /// Parity of the derivative of a field with this parity.
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::None => Parity::None,
        }
    }

    /// Parity of a product of two fields.
    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n: usize,
    h: f64,
    domain: Domain,
    x_min: f64,
}

impl Grid2D {
    pub const MIN_NODES: usize = 3;

    /// Builds the grid with `n` interior nodes per axis. `n` must be odd so
    /// that `x = 0` is a node of the full domain.
    pub fn new(domain: Domain, n: usize) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(Error::config(
                "grid_n",
                format!("need at least {} nodes per axis, got {n}", Self::MIN_NODES),
            ));
        }
        if n % 2 == 0 {
            return Err(Error::config("grid_n", format!("must be odd, got {n}")));
        }
        let (extent, x_min) = match domain {
            Domain::Full => (2.0, -1.0),
            Domain::Quarter => (1.0, 0.0),
        };
        Ok(Grid2D {
            n,
            h: extent / (n - 1) as f64,
            domain,
            x_min,
        })
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn ghost_layers(&self) -> usize {
        GHOSTS
    }

    /// Coordinate of the first interior node on either axis.
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.coord(self.n - 1)
    }

    /// Row length of the storage including ghosts.
    pub fn stride(&self) -> usize {
        self.n + 2 * GHOSTS
    }

    /// Total number of stored values.
    pub fn len(&self) -> usize {
        self.stride() * self.stride()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of interior node `i` on either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    /// Storage index of interior node `(i, k)`.
    #[inline]
    pub fn idx(&self, i: usize, k: usize) -> usize {
        (k + GHOSTS) * self.stride() + i + GHOSTS
    }

    /// Interior index of the node at the coordinate origin.
    pub fn origin_node(&self) -> usize {
        match self.domain {
            Domain::Full => (self.n - 1) / 2,
            Domain::Quarter => 0,
        }
    }

    /// Storage rows holding interior nodes.
    pub(crate) fn interior_rows(&self) -> std::ops::Range<usize> {
        GHOSTS..self.n + GHOSTS
    }

    /// Trapezoid weight of interior node `i` along one axis.
    #[inline]
    pub fn weight_1d(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Factor turning an integral over the computational domain into one
    /// over the full square: 4 on the quarter domain, 1 otherwise.
    pub fn symmetry_factor(&self) -> f64 {
        match self.domain {
            Domain::Full => 1.0,
            Domain::Quarter => 4.0,
        }
    }

    /// Trapezoid rule over the computational domain for a nodewise
    /// integrand `f(i, k)` given in interior indices.
    pub fn integrate_nodes<F>(&self, f: F) -> f64
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        par::sum_rows(0..self.n, |k| {
            let wy = self.weight_1d(k);
            let row: f64 = (0..self.n).map(|i| self.weight_1d(i) * f(i, k)).sum();
            wy * row
        })
    }
}

/// A grid function including its ghost layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub parity_x: Parity,
    pub parity_y: Parity,
}

impl ScalarField {
    pub fn zeros(grid: &Grid2D, parity_x: Parity, parity_y: Parity) -> Self {
        ScalarField {
            values: vec![0.0; grid.len()],
            parity_x,
            parity_y,
        }
    }

    /// Samples `f(x, y)` at the interior nodes and fills the ghosts.
    pub fn from_fn<F>(grid: &Grid2D, parity_x: Parity, parity_y: Parity, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut field = Self::zeros(grid, parity_x, parity_y);
        for k in 0..grid.n() {
            let y = grid.coord(k);
            for i in 0..grid.n() {
                field.values[grid.idx(i, k)] = f(grid.coord(i), y);
            }
        }
        field.fill_ghosts(grid);
        field
    }

    #[inline]
    pub fn get(&self, grid: &Grid2D, i: usize, k: usize) -> f64 {
        self.values[grid.idx(i, k)]
    }

    #[inline]
    pub fn set(&mut self, grid: &Grid2D, i: usize, k: usize, value: f64) {
        self.values[grid.idx(i, k)] = value;
    }

    /// Interior values in row-major order.
    pub fn interior<'a>(&'a self, grid: &'a Grid2D) -> impl Iterator<Item = f64> + 'a {
        (0..grid.n()).flat_map(move |k| (0..grid.n()).map(move |i| self.get(grid, i, k)))
    }

    /// Maximum absolute interior value (NaN if any interior value is NaN).
    pub fn max_abs(&self, grid: &Grid2D) -> f64 {
        let stride = grid.stride();
        par::max_rows(grid.interior_rows(), |k| {
            self.values[k * stride + GHOSTS..k * stride + GHOSTS + grid.n()]
                .iter()
                .fold(0.0, |m, v| par::nan_max(m, v.abs()))
        })
    }

    /// Sets the ghost layers by reflection.
    ///
    /// On the full domain every side is an even (Neumann) reflection. On the
    /// quarter domain the low `x`/`y` sides use the declared parity and the
    /// high sides are even. Odd parity pins the boundary node to zero.
    pub fn fill_ghosts(&mut self, grid: &Grid2D) {
        fill_ghosts_slice(&mut self.values, grid, self.parity_x, self.parity_y);
    }

    /// Five-point derivative at the interior nodes; ghosts of the result are
    /// left at zero. Requires filled ghosts.
    pub fn derivative(&self, grid: &Grid2D, axis: Axis, order: Order) -> ScalarField {
        let (parity_x, parity_y) = match (axis, order) {
            (_, Order::Second) => (self.parity_x, self.parity_y),
            (Axis::X, Order::First) => (self.parity_x.flip(), self.parity_y),
            (Axis::Y, Order::First) => (self.parity_x, self.parity_y.flip()),
        };
        let mut out = ScalarField::zeros(grid, parity_x, parity_y);
        let step = match axis {
            Axis::X => 1,
            Axis::Y => grid.stride(),
        };
        let src = &self.values;
        let n = grid.n();
        let h = grid.h();
        par::for_each_row(&mut out.values, grid.stride(), |k, row| {
            if !(GHOSTS..n + GHOSTS).contains(&k) {
                return;
            }
            let base = k * grid.stride();
            for j in GHOSTS..n + GHOSTS {
                let c = base + j;
                row[j] = match order {
                    Order::First => d1(src, c, step, h),
                    Order::Second => d2(src, c, step, h),
                };
            }
        });
        out
    }
}

/// Ghost filling on a raw storage slice.
pub(crate) fn fill_ghosts_slice(values: &mut [f64], grid: &Grid2D, px: Parity, py: Parity) {
    let n = grid.n();
    let stride = grid.stride();
    let (low_x, low_y) = match grid.domain() {
        Domain::Full => (Parity::Even, Parity::Even),
        Domain::Quarter => (px, py),
    };
    let lo = GHOSTS;
    let hi = n + GHOSTS - 1;
    // x direction, interior rows
    for k in lo..=hi {
        let row = &mut values[k * stride..(k + 1) * stride];
        reflect_low(row, 1, lo, low_x);
        reflect_high(row, 1, hi);
    }
    // y direction, every column including x ghosts
    for j in 0..stride {
        let col = &mut values[j..];
        reflect_low(col, stride, lo, low_y);
        reflect_high(col, stride, hi);
    }
}

#[inline]
fn reflect_low(v: &mut [f64], step: usize, b: usize, parity: Parity) {
    match parity {
        Parity::Odd => {
            v[b * step] = 0.0;
            v[(b - 1) * step] = -v[(b + 1) * step];
            v[(b - 2) * step] = -v[(b + 2) * step];
        }
        Parity::Even | Parity::None => {
            v[(b - 1) * step] = v[(b + 1) * step];
            v[(b - 2) * step] = v[(b + 2) * step];
        }
    }
}

#[inline]
fn reflect_high(v: &mut [f64], step: usize, b: usize) {
    v[(b + 1) * step] = v[(b - 1) * step];
    v[(b + 2) * step] = v[(b - 2) * step];
}

/// Five-point first derivative at storage index `c` along `step`.
#[inline(always)]
pub(crate) fn d1(f: &[f64], c: usize, step: usize, h: f64) -> f64 {
    (f[c - 2 * step] - 8.0 * f[c - step] + 8.0 * f[c + step] - f[c + 2 * step]) / (12.0 * h)
}

/// Five-point second derivative at storage index `c` along `step`.
#[inline(always)]
pub(crate) fn d2(f: &[f64], c: usize, step: usize, h: f64) -> f64 {
    (-f[c - 2 * step] + 16.0 * f[c - step] - 30.0 * f[c] + 16.0 * f[c + step] - f[c + 2 * step])
        / (12.0 * h * h)
}

/// Five-point Laplacian at storage index `c`.
#[inline(always)]
pub(crate) fn laplacian_at(f: &[f64], c: usize, stride: usize, h: f64) -> f64 {
    d2(f, c, 1, h) + d2(f, c, stride, h)
}

/// Writes the five-point Laplacian of `src` into the interior of `dst`.
pub(crate) fn laplacian_into(src: &[f64], dst: &mut [f64], grid: &Grid2D) {
    let n = grid.n();
    let stride = grid.stride();
    let h = grid.h();
    par::for_each_row(dst, stride, |k, row| {
        if !(GHOSTS..n + GHOSTS).contains(&k) {
            return;
        }
        let base = k * stride;
        for j in GHOSTS..n + GHOSTS {
            row[j] = laplacian_at(src, base + j, stride, h);
        }
    });
}

/// Trapezoid rule over the computational domain. No symmetry factor is
/// applied on the quarter domain.
pub fn quadrature(field: &ScalarField, grid: &Grid2D) -> f64 {
    grid.integrate_nodes(|i, k| field.get(grid, i, k))
}
