//! Arc projectors of unitary monodromies, the fiberwise spectral measure acting on
//! states over a Brillouin grid, and centering diagnostics.

use std::sync::Arc as Shared;

use rayon::prelude::*;

use crate::bloch::FiberSystem;
use crate::error::{Error, Result};
use crate::evolve::Monodromy;
use crate::lattice::BrillouinGrid;
use crate::linalg::{CMat, CVec};
use crate::scalar::{cis, cplx, Cplx, Real};

/// Open arc `{e^{−iy} : y ∈ (lo, lo + length)}` of the unit circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc<T: Real> {
    pub start: T,
    pub length: T,
}

/// Exponents closer than this to an endpoint are treated as lying on it.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Exponents closer than this to an endpoint produce a warning.
pub const WARN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    /// Within [`BOUNDARY_TOL`] of an endpoint; counted as inside.
    Boundary,
}

impl<T: Real> Arc<T> {
    /// Arc from `lo` to `hi` in the direction of increasing `y`; wraps through `π`
    /// when `lo > hi`. Equal endpoints give the full circle minus that point.
    pub fn new(lo: T, hi: T) -> Self {
        let two_pi = T::two_pi();
        let mut len = (hi - lo) % two_pi;
        if len <= T::zero() {
            len += two_pi;
        }
        Arc { start: lo, length: len }
    }

    /// `(−g, g)`.
    pub fn symmetric(g: T) -> Self {
        Arc { start: -g, length: g * T::lit(2.0) }
    }

    /// `S¹ ∖ [−g, g]`, i.e. the open arc `(g, 2π − g)`.
    pub fn outside(g: T) -> Self {
        Arc { start: g, length: T::two_pi() - g * T::lit(2.0) }
    }

    pub fn full_minus_point(p: T) -> Self {
        Arc { start: p, length: T::two_pi() }
    }

    pub fn lo(&self) -> T {
        self.start
    }

    pub fn hi(&self) -> T {
        self.start + self.length
    }

    pub fn wraps(&self) -> bool {
        crate::scalar::wrap_angle(self.start) + self.length > T::pi()
    }

    pub fn midpoint(&self) -> T {
        self.start + self.length * T::lit(0.5)
    }

    /// Complementary open arc sharing the same endpoints.
    pub fn complement(&self) -> Self {
        Arc { start: self.hi(), length: T::two_pi() - self.length }
    }

    pub fn classify(&self, theta: T) -> Membership {
        let two_pi = T::two_pi();
        let mut d = (theta - self.start) % two_pi;
        if d < T::zero() {
            d += two_pi;
        }
        let tol = T::lit(BOUNDARY_TOL);
        let near_start = d < tol || two_pi - d < tol;
        let near_end = (d - self.length).abs() < tol;
        if near_start || near_end {
            return Membership::Boundary;
        }
        if d < self.length {
            Membership::Inside
        } else {
            Membership::Outside
        }
    }

    pub fn contains(&self, theta: T) -> bool {
        match self.classify(theta) {
            Membership::Inside => true,
            Membership::Outside => false,
            Membership::Boundary => {
                log::warn!("exponent {theta} lies on an endpoint of arc ({}, {}); counted inside", self.lo(), self.hi());
                true
            }
        }
    }

    /// Distance from `theta` to the nearest endpoint along the circle.
    pub fn endpoint_distance(&self, theta: T) -> T {
        crate::scalar::circular_distance(theta, self.lo()).min(crate::scalar::circular_distance(theta, self.hi()))
    }
}

/// `Σ_{θ_j ∈ arc} v_j v_j*`.
pub fn arc_projector<T: Real>(mono: &Monodromy<T>, arc: &Arc<T>) -> CMat<T> {
    let n = mono.matrix.nrows();
    let mut p = CMat::<T>::zeros(n, n);
    for (j, &theta) in mono.exponents.iter().enumerate() {
        if arc.endpoint_distance(theta) < T::lit(WARN_TOL) {
            log::warn!("exponent {theta} is within {WARN_TOL:e} of an arc endpoint");
        }
        if arc.contains(theta) {
            let v = mono.vectors.column(j);
            p += &v * v.adjoint();
        }
    }
    p
}

/// A state in the discrete direct integral: per grid point, coefficients in the
/// eigenbasis of `H(k)`.
#[derive(Clone, Debug)]
pub struct StateFiberRep<T: Real> {
    pub grid: Shared<BrillouinGrid<T>>,
    pub coeffs: Vec<CVec<T>>,
}

impl<T: Real> StateFiberRep<T> {
    pub fn zeros(grid: Shared<BrillouinGrid<T>>, n_bands: usize) -> Self {
        let coeffs = vec![CVec::zeros(n_bands); grid.len()];
        StateFiberRep { grid, coeffs }
    }

    pub fn n_bands(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.len())
    }

    /// `Σ_j w_j ⟨a_j, b_j⟩`.
    pub fn inner(&self, other: &Self) -> Cplx<T> {
        let mut acc = Cplx::<T>::default();
        for (j, (a, b)) in self.coeffs.iter().zip(&other.coeffs).enumerate() {
            acc += a.dotc(b) * self.grid.weights[j];
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.coeffs
            .iter()
            .zip(&self.grid.weights)
            .map(|(c, &w)| c.norm_squared() * w)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        StateFiberRep {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        StateFiberRep {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        StateFiberRep { grid: self.grid.clone(), coeffs: self.coeffs.iter().map(|c| c * cplx(s, T::zero())).collect() }
    }
}

/// Per-fiber data shared by measures and windows: `H(k)` eigensystems on a grid.
#[derive(Clone, Debug)]
pub struct FiberBundle<T: Real> {
    pub grid: Shared<BrillouinGrid<T>>,
    pub fibers: Vec<FiberSystem<T>>,
}

impl<T: Real> FiberBundle<T> {
    pub fn build(crystal: &crate::bloch::Crystal<T>, grid: Shared<BrillouinGrid<T>>) -> Result<Self> {
        let fibers = grid.points.par_iter().map(|&k| crystal.fiber(k)).collect::<Result<Vec<_>>>()?;
        Ok(FiberBundle { grid, fibers })
    }

    pub fn n_bands(&self) -> usize {
        self.fibers.first().map_or(0, |f| f.dim())
    }
}

fn check_grid<T: Real>(state: &StateFiberRep<T>, bundle: &FiberBundle<T>, monos: &[Monodromy<T>]) -> Result<()> {
    if !state.grid.same_as(&bundle.grid) || state.coeffs.len() != bundle.fibers.len() {
        return Err(Error::GridMismatch("state and fiber bundle live on different grids".into()));
    }
    if monos.len() != bundle.fibers.len() {
        return Err(Error::GridMismatch(format!(
            "{} monodromies for {} fibers",
            monos.len(),
            bundle.fibers.len()
        )));
    }
    for (m, f) in monos.iter().zip(&bundle.fibers) {
        if m.k != f.k {
            return Err(Error::GridMismatch(format!("monodromy at {:?} paired with fiber at {:?}", m.k, f.k)));
        }
    }
    Ok(())
}

/// `Π[arc]` in each fiber's band basis: `V* P_arc V`, restricted to the stored bands.
pub fn band_arc_projectors<T: Real>(bundle: &FiberBundle<T>, monos: &[Monodromy<T>], arc: &Arc<T>, n_bands: usize) -> Vec<CMat<T>> {
    bundle
        .fibers
        .par_iter()
        .zip(monos.par_iter())
        .map(|(f, m)| {
            let v = f.vectors.columns(0, n_bands);
            v.adjoint() * arc_projector(m, arc) * v
        })
        .collect()
}

/// Applies `Π^ε[arc]` fiber by fiber.
pub fn apply_measure<T: Real>(
    state: &StateFiberRep<T>,
    arc: &Arc<T>,
    bundle: &FiberBundle<T>,
    monos: &[Monodromy<T>],
) -> Result<StateFiberRep<T>> {
    check_grid(state, bundle, monos)?;
    let projs = band_arc_projectors(bundle, monos, arc, state.n_bands());
    Ok(apply_blocks(state, &projs))
}

/// Applies one matrix per fiber.
pub fn apply_blocks<T: Real>(state: &StateFiberRep<T>, blocks: &[CMat<T>]) -> StateFiberRep<T> {
    let coeffs = state.coeffs.iter().zip(blocks).map(|(c, p)| p * c).collect();
    StateFiberRep { grid: state.grid.clone(), coeffs }
}

/// `η = Mu − e^{−iν₀}u` after projecting `u` onto `Π(arc)`; returns `(‖η‖, 2 sin(|I|/4)‖u‖)`.
pub fn centering_residual<T: Real>(mono: &Monodromy<T>, arc: &Arc<T>, u: &CVec<T>) -> (T, T) {
    let u = arc_projector(mono, arc) * u;
    let eta = &mono.matrix * &u - &u * cis(-arc.midpoint());
    let bound = T::lit(2.0) * (arc.length / T::lit(4.0)).sin() * u.norm();
    (eta.norm(), bound)
}
