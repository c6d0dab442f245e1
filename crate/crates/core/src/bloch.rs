//! Fiber Hamiltonians `H(k)`, band structures, degeneracy classification, band
//! derivatives and resolvent (Riesz) projectors.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{BrillouinGrid, Lattice, PlaneWaveBasis, PotentialCoeffs, Vec2};
use crate::linalg::{herm_eigen, CMat};
use crate::scalar::{cis, cplx, Cplx, Real};

/// Relative clustering tolerance: eigenvalues closer than `1e-8 (1 + |E|)` are one cluster.
pub fn cluster_tol<T: Real>(e: T) -> T {
    T::lit(1e-8) * (T::one() + e.abs())
}

pub const DEFAULT_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_CONE_TOL: f64 = 0.05;
pub const DEFAULT_N_QUAD: usize = 64;

/// Lattice, truncated basis and potential: everything needed to build any fiber.
#[derive(Clone, Debug)]
pub struct Crystal<T: Real> {
    pub lattice: Lattice<T>,
    pub basis: PlaneWaveBasis<T>,
    pub potential: PotentialCoeffs<T>,
}

impl<T: Real> Crystal<T> {
    pub fn new(lattice: Lattice<T>, basis: PlaneWaveBasis<T>, potential: PotentialCoeffs<T>) -> Self {
        Crystal { lattice, basis, potential }
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn fiber(&self, k: Vec2<T>) -> Result<FiberSystem<T>> {
        assemble_fiber(&self.potential, &self.basis, k)
    }

    /// Sorted eigenvalues only, at an arbitrary quasi-momentum.
    pub fn energies(&self, k: Vec2<T>) -> Result<Vec<T>> {
        Ok(self.fiber(k)?.energies)
    }

    /// Finite-difference step for velocities, `1e-4 |b_1|`.
    pub fn velocity_step(&self) -> T {
        T::lit(1e-4) * self.lattice.dual[0].norm()
    }

    /// Finite-difference step for Hessians, `1e-3 |b_1|`.
    pub fn hessian_step(&self) -> T {
        T::lit(1e-3) * self.lattice.dual[0].norm()
    }

    fn unit(&self, i: usize) -> Vec2<T> {
        if i == 0 {
            Vec2::new(T::one(), T::zero())
        } else {
            Vec2::new(T::zero(), T::one())
        }
    }
}

/// `H(k)` with its sorted, phase-fixed eigenpairs.
#[derive(Clone, Debug)]
pub struct FiberSystem<T: Real> {
    pub k: Vec2<T>,
    pub h: CMat<T>,
    /// `k + G` per basis vector.
    pub kg: Vec<Vec2<T>>,
    pub energies: Vec<T>,
    /// Columns are the periodic Bloch coefficient vectors `p_b(k)`.
    pub vectors: CMat<T>,
}

impl<T: Real> FiberSystem<T> {
    pub fn dim(&self) -> usize {
        self.kg.len()
    }

    /// `max_b ‖H v_b − E_b v_b‖ / ‖H‖`.
    pub fn residual(&self) -> T {
        let hn = self.h.norm().max(T::default_epsilon());
        (0..self.dim())
            .map(|b| {
                let v = self.vectors.column(b);
                (&self.h * v - v * cplx(self.energies[b], T::zero())).norm() / hn
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

pub fn hamiltonian<T: Real>(pot: &PotentialCoeffs<T>, basis: &PlaneWaveBasis<T>, k: Vec2<T>) -> CMat<T> {
    let n = basis.len();
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = cplx((k + basis.gvecs[i]).norm_squared(), T::zero());
    }
    if !pot.is_zero() {
        for i in 0..n {
            let mi = basis.coords[i];
            for j in 0..n {
                let mj = basis.coords[j];
                h[(i, j)] += pot.get([mi[0] - mj[0], mi[1] - mj[1]]);
            }
        }
    }
    h
}

pub fn assemble_fiber<T: Real>(
    pot: &PotentialCoeffs<T>,
    basis: &PlaneWaveBasis<T>,
    k: Vec2<T>,
) -> Result<FiberSystem<T>> {
    if basis.is_empty() {
        return Err(Error::InvalidInput("empty plane-wave basis".into()));
    }
    if !(k.x.is_finite() && k.y.is_finite()) {
        return Err(Error::InvalidInput("non-finite quasi-momentum".into()));
    }
    let h = hamiltonian(pot, basis, k);
    let eig = herm_eigen(&h).map_err(|e| Error::Eigensolver {
        k: vec![k.x.as_f64(), k.y.as_f64()],
        reason: e.to_string(),
    })?;
    let kg = basis.gvecs.iter().map(|g| k + g).collect();
    Ok(FiberSystem { k, h, kg, energies: eig.values, vectors: eig.vectors })
}

/// Lowest `n_bands` bands and Bloch vectors at every grid point.
#[derive(Clone, Debug)]
pub struct BandStructure<T: Real> {
    pub grid: BrillouinGrid<T>,
    pub n_bands: usize,
    pub energies: Vec<Vec<T>>,
    /// Per grid point, `basis × n_bands`.
    pub vectors: Vec<CMat<T>>,
}

pub fn band_structure<T: Real>(
    crystal: &Crystal<T>,
    grid: &BrillouinGrid<T>,
    n_bands: usize,
) -> Result<BandStructure<T>> {
    if n_bands == 0 || n_bands > crystal.basis.len() {
        return Err(Error::InvalidInput(format!(
            "n_bands = {n_bands} must lie in 1..={}",
            crystal.basis.len()
        )));
    }
    let fibers: Vec<FiberSystem<T>> =
        grid.points.par_iter().map(|&k| crystal.fiber(k)).collect::<Result<_>>()?;
    let energies: Vec<Vec<T>> = fibers.iter().map(|f| f.energies[..n_bands].to_vec()).collect();
    let vectors = fibers.iter().map(|f| f.vectors.columns(0, n_bands).into_owned()).collect();

    // Sanity check: |∂_k E| ≤ 2 max|k+G| + ‖V‖-independent slack.
    let kmax = fibers
        .iter()
        .flat_map(|f| f.kg.iter().map(|v| v.norm()))
        .fold(T::zero(), |a, b| a.max(b));
    for j in 1..grid.len() {
        let dk = (grid.points[j] - grid.points[j - 1]).norm();
        for b in 0..n_bands {
            let jump = (energies[j][b] - energies[j - 1][b]).abs();
            if jump > T::lit(2.0) * kmax * dk * T::lit(1.0 + 1e-8) + T::lit(1e-8) {
                log::warn!("band {b} jumps by {jump} between grid points {} and {j}", j - 1);
            }
        }
    }
    Ok(BandStructure { grid: grid.clone(), n_bands, energies, vectors })
}

/// Result of checking that bands `b⋆ .. b⋆+N−1` form an isolated cluster near `k⋆`.
#[derive(Clone, Debug)]
pub struct Separation<T: Real> {
    pub k_star: Vec2<T>,
    pub e_star: T,
    /// Zero-based index of the lowest band in the cluster.
    pub band: usize,
    pub multiplicity: usize,
    pub radius: T,
    /// Width of the cluster at `k⋆`.
    pub cluster_width: T,
    /// Smallest distance from `E⋆` to a neighbouring band over the checked points.
    pub margin: T,
    pub points_checked: usize,
}

/// Checks the cluster at `k⋆` and isolation on all grid points within `radius`.
pub fn verify_separation<T: Real>(
    crystal: &Crystal<T>,
    bands: &BandStructure<T>,
    k_star: Vec2<T>,
    band: usize,
    multiplicity: usize,
    radius: T,
    gap_tol: T,
) -> Result<Separation<T>> {
    if multiplicity == 0 {
        return Err(Error::InvalidInput("multiplicity must be at least 1".into()));
    }
    let fiber = crystal.fiber(k_star)?;
    let top = band + multiplicity;
    if top > fiber.energies.len() {
        return Err(Error::InvalidInput(format!(
            "bands {}..{} exceed basis size {}",
            band + 1,
            top,
            fiber.energies.len()
        )));
    }
    let cluster = &fiber.energies[band..top];
    let e_star = cluster.iter().fold(T::zero(), |a, &b| a + b) / T::of_usize(multiplicity);
    let width = cluster[multiplicity - 1] - cluster[0];
    let tol = cluster_tol(e_star);
    if width > tol {
        return Err(Error::Degeneracy(format!(
            "bands {}..{} span {:e} at k⋆, above cluster tolerance {:e}",
            band + 1,
            top,
            width.as_f64(),
            tol.as_f64()
        )));
    }
    if band > 0 && (e_star - fiber.energies[band - 1]).abs() <= tol {
        return Err(Error::Degeneracy(format!("band {band} joins the cluster at k⋆: multiplicity exceeds {multiplicity}")));
    }
    if top < fiber.energies.len() && (fiber.energies[top] - e_star).abs() <= tol {
        return Err(Error::Degeneracy(format!(
            "band {} joins the cluster at k⋆: multiplicity exceeds {multiplicity}",
            top + 1
        )));
    }

    let mut margin = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    let mut checked = 0usize;
    let mut check = |k: Vec2<T>, e: &[T]| -> Result<()> {
        checked += 1;
        if band > 0 {
            let below = e[band - 1];
            if !(below < e_star - gap_tol) {
                return Err(Error::SeparationViolated {
                    k: vec![k.x.as_f64(), k.y.as_f64()],
                    band,
                    detail: format!("E_{band} = {below} is not below E⋆ − gap_tol"),
                });
            }
            margin = margin.min(e_star - below);
        }
        if top < e.len() {
            let above = e[top];
            if !(above > e_star + gap_tol) {
                return Err(Error::SeparationViolated {
                    k: vec![k.x.as_f64(), k.y.as_f64()],
                    band: top + 1,
                    detail: format!("E_{} = {above} is not above E⋆ + gap_tol", top + 1),
                });
            }
            margin = margin.min(above - e_star);
        }
        Ok(())
    };
    check(k_star, &fiber.energies)?;
    for (j, k) in bands.grid.points.iter().enumerate() {
        if (k - k_star).norm() <= radius {
            let e = &bands.energies[j];
            if top < e.len() || band > 0 {
                // Stored bands may be truncated; recompute when the upper neighbour is missing.
                if top >= e.len() {
                    check(*k, &crystal.energies(*k)?)?;
                } else {
                    check(*k, e)?;
                }
            }
        }
    }
    Ok(Separation {
        k_star,
        e_star,
        band,
        multiplicity,
        radius,
        cluster_width: width,
        margin,
        points_checked: checked,
    })
}

/// Velocity of a simple band by the Bloch-mode inner product and by central differences.
#[derive(Clone, Debug)]
pub struct Velocity<T: Real> {
    /// `Σ_G 2(k+G)|p̂(G)|²`.
    pub inner: Vec2<T>,
    /// Finite-difference `∇_k E`.
    pub fd: Vec2<T>,
    /// `c = −∇_k E`.
    pub c: Vec2<T>,
}

pub fn group_velocity<T: Real>(crystal: &Crystal<T>, fiber: &FiberSystem<T>, band: usize) -> Result<Velocity<T>> {
    let e = &fiber.energies;
    if band >= e.len() {
        return Err(Error::InvalidInput(format!("band {} out of range", band + 1)));
    }
    let tol = cluster_tol(e[band]);
    let gap_lo = if band > 0 { e[band] - e[band - 1] } else { T::max_value().unwrap() };
    let gap_hi = if band + 1 < e.len() { e[band + 1] - e[band] } else { T::max_value().unwrap() };
    if gap_lo <= tol || gap_hi <= tol {
        return Err(Error::IllDefinedVelocity(format!(
            "band {} is degenerate at k = ({}, {})",
            band + 1,
            fiber.k.x,
            fiber.k.y
        )));
    }
    let p = fiber.vectors.column(band);
    let mut inner = Vec2::zeros();
    for (i, kg) in fiber.kg.iter().enumerate() {
        inner += kg * (T::lit(2.0) * p[i].norm_sqr());
    }
    let h = crystal.velocity_step();
    let mut fd = Vec2::zeros();
    for i in 0..crystal.dim() {
        // Fourth-order central stencil.
        let u = crystal.unit(i) * h;
        let e = |s: T| -> Result<T> { Ok(crystal.energies(fiber.k + u * s)?[band]) };
        let d1 = e(T::one())? - e(-T::one())?;
        let d2 = e(T::lit(2.0))? - e(T::lit(-2.0))?;
        fd[i] = (T::lit(8.0) * d1 - d2) / (T::lit(12.0) * h);
    }
    Ok(Velocity { inner, fd, c: -inner })
}

/// Like [`group_velocity`] but fails when the two estimates differ by more than `tol`.
pub fn checked_velocity<T: Real>(
    crystal: &Crystal<T>,
    fiber: &FiberSystem<T>,
    band: usize,
    tol: T,
) -> Result<Velocity<T>> {
    let v = group_velocity(crystal, fiber, band)?;
    if (v.inner - v.fd).norm() > tol {
        return Err(Error::VelocityMismatch {
            inner: vec![v.inner.x.as_f64(), v.inner.y.as_f64()],
            fd: vec![v.fd.x.as_f64(), v.fd.y.as_f64()],
        });
    }
    Ok(v)
}

/// Symmetric central-difference Hessian of band `band` at `k` with step `h`
/// (pass [`Crystal::hessian_step`] for the default).
pub fn hessian_with_step<T: Real>(crystal: &Crystal<T>, k: Vec2<T>, band: usize, h: T) -> Result<Matrix2<T>> {
    let e = |dk: Vec2<T>| -> Result<T> { Ok(crystal.energies(k + dk)?[band]) };
    let e0 = e(Vec2::zeros())?;
    let h2 = h * h;
    let mut d = Matrix2::zeros();
    for i in 0..crystal.dim() {
        let u = crystal.unit(i) * h;
        d[(i, i)] = (e(u)? - e0 * T::lit(2.0) + e(-u)?) / h2;
    }
    if crystal.dim() == 2 {
        let (u, v) = (crystal.unit(0) * h, crystal.unit(1) * h);
        let x = (e(u + v)? - e(u - v)? - e(v - u)? + e(-u - v)?) / (T::lit(4.0) * h2);
        d[(0, 1)] = x;
        d[(1, 0)] = x;
    }
    Ok(d)
}

pub fn hessian<T: Real>(crystal: &Crystal<T>, k: Vec2<T>, band: usize) -> Result<Matrix2<T>> {
    hessian_with_step(crystal, k, band, crystal.hessian_step())
}

/// Samples of a two-band touching along one ring: direction angle and `(E_+, E_−)`.
#[derive(Clone, Debug)]
pub struct RingSample<T: Real> {
    pub radius: T,
    pub angle: T,
    pub upper: T,
    pub lower: T,
}

#[derive(Clone, Debug)]
pub struct ConeFit<T: Real> {
    /// Least-squares slope of `(E_+ − E_−)/2` against `|k − k⋆|`.
    pub v_d: T,
    /// RMS deviation from the fitted line.
    pub residual: T,
    /// `(max − min) / mean` of per-direction slopes.
    pub anisotropy: T,
}

/// Fits `(E_+ − E_−)/2 ≈ v_D |κ|` through the origin.
pub fn fit_cone<T: Real>(samples: &[RingSample<T>]) -> Result<ConeFit<T>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no ring samples".into()));
    }
    let half = T::lit(0.5);
    let (mut srr, mut srs) = (T::zero(), T::zero());
    for s in samples {
        let split = (s.upper - s.lower) * half;
        srr += s.radius * s.radius;
        srs += s.radius * split;
    }
    let v = srs / srr;
    let mut res = T::zero();
    for s in samples {
        let d = (s.upper - s.lower) * half - v * s.radius;
        res += d * d;
    }
    let residual = (res / T::of_usize(samples.len())).sqrt();
    // Per-direction slopes, grouping samples by angle.
    let mut dirs: Vec<(T, T, T)> = Vec::new();
    for s in samples {
        let split = (s.upper - s.lower) * half;
        match dirs.iter_mut().find(|d| (d.0 - s.angle).abs() < T::lit(1e-12)) {
            Some(d) => {
                d.1 += s.radius * split;
                d.2 += s.radius * s.radius;
            }
            None => dirs.push((s.angle, s.radius * split, s.radius * s.radius)),
        }
    }
    let slopes: Vec<T> = dirs.iter().map(|d| d.1 / d.2).collect();
    let max = slopes.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b));
    let min = slopes.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    let mean = slopes.iter().fold(T::zero(), |a, &b| a + b) / T::of_usize(slopes.len());
    let anisotropy = if mean.abs() > T::zero() { (max - min) / mean.abs() } else { T::max_value().unwrap() };
    Ok(ConeFit { v_d: v, residual, anisotropy })
}

#[derive(Clone, Debug)]
pub struct DiracFit<T: Real> {
    pub radius: T,
    pub coarse: ConeFit<T>,
    pub fine: ConeFit<T>,
    /// `2 v(r/2) − v(r)`: removes the linear-in-r curvature bias.
    pub v_d: T,
    /// `|v(r/2) − v(r)| / v(r/2)`.
    pub stability: T,
}

/// Samples bands `band, band+1` on rings of radius `r` and `r/2` with `n_dirs`
/// directions (two in 1D) and fits a cone to each ring.
pub fn dirac_fit<T: Real>(
    crystal: &Crystal<T>,
    k_star: Vec2<T>,
    band: usize,
    radius: T,
    n_dirs: usize,
    cone_tol: T,
) -> Result<DiracFit<T>> {
    let dirs: Vec<T> = if crystal.dim() == 1 {
        vec![T::zero(), T::pi()]
    } else {
        (0..n_dirs.max(3)).map(|j| T::two_pi() * T::of_usize(j) / T::of_usize(n_dirs.max(3))).collect()
    };
    let ring = |r: T| -> Result<Vec<RingSample<T>>> {
        dirs.par_iter()
            .map(|&a| {
                let k = k_star + Vector2::new(a.cos(), a.sin()) * r;
                let e = crystal.energies(k)?;
                Ok(RingSample { radius: r, angle: a, upper: e[band + 1], lower: e[band] })
            })
            .collect()
    };
    let coarse = fit_cone(&ring(radius)?)?;
    let fine = fit_cone(&ring(radius * T::lit(0.5))?)?;
    let worst = coarse.anisotropy.max(fine.anisotropy);
    if !(fine.anisotropy <= cone_tol) || !(fine.v_d > T::zero()) {
        return Err(Error::NotDirac { anisotropy: worst.as_f64(), tol: cone_tol.as_f64() });
    }
    let v_d = fine.v_d * T::lit(2.0) - coarse.v_d;
    let stability = (fine.v_d - coarse.v_d).abs() / fine.v_d;
    Ok(DiracFit { radius, coarse, fine, v_d, stability })
}

#[derive(Clone, Debug)]
pub enum Classification<T: Real> {
    /// Simple band with nonzero velocity; `c = −∇E`.
    Noncritical { c: Vec2<T>, fd: Vec2<T> },
    /// Simple band at a critical point.
    QuadraticSimple { hessian: Matrix2<T> },
    Dirac { fit: DiracFit<T> },
    /// Quadratic two-fold touching, with coefficients of the model
    /// `α|κ|²σ₀ + γ̃(κ₁² − κ₂²)σ₂ + 2βκ₁κ₂σ₁` fitted on a ring (magnitudes only).
    QuadraticDouble { alpha: T, gamma: T, beta: T },
}

impl<T: Real> Classification<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            Classification::Noncritical { .. } => "noncritical",
            Classification::QuadraticSimple { .. } => "quadratic_simple",
            Classification::Dirac { .. } => "dirac",
            Classification::QuadraticDouble { .. } => "quadratic_double",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DegeneracyInfo<T: Real> {
    pub separation: Separation<T>,
    pub class: Classification<T>,
}

#[derive(Clone, Debug)]
pub struct ClassifyOptions<T: Real> {
    /// Velocities below this norm count as critical.
    pub critical_tol: T,
    pub cone_tol: T,
    /// Ring radius for cone fits, absolute.
    pub ring_radius: T,
    pub n_dirs: usize,
}

impl<T: Real> ClassifyOptions<T> {
    pub fn for_crystal(crystal: &Crystal<T>) -> Self {
        let b = crystal.lattice.dual[0].norm();
        ClassifyOptions {
            critical_tol: T::lit(1e-6) * (T::one() + b),
            cone_tol: T::lit(DEFAULT_CONE_TOL),
            ring_radius: T::lit(0.005) * b,
            n_dirs: 16,
        }
    }
}

pub fn classify<T: Real>(
    crystal: &Crystal<T>,
    sep: Separation<T>,
    opts: &ClassifyOptions<T>,
) -> Result<DegeneracyInfo<T>> {
    let class = match sep.multiplicity {
        1 => {
            let fiber = crystal.fiber(sep.k_star)?;
            let v = group_velocity(crystal, &fiber, sep.band)?;
            if v.inner.norm() > opts.critical_tol {
                Classification::Noncritical { c: v.c, fd: v.fd }
            } else {
                Classification::QuadraticSimple { hessian: hessian(crystal, sep.k_star, sep.band)? }
            }
        }
        2 => match dirac_fit(crystal, sep.k_star, sep.band, opts.ring_radius, opts.n_dirs, opts.cone_tol) {
            Ok(fit) if fit.fine.v_d > opts.critical_tol * T::lit(1e3) => Classification::Dirac { fit },
            _ => quadratic_double(crystal, &sep, opts)?,
        },
        n => {
            return Err(Error::Degeneracy(format!(
                "multiplicity {n} is outside the supported classes (1 or 2)"
            )))
        }
    };
    Ok(DegeneracyInfo { separation: sep, class })
}

fn quadratic_double<T: Real>(
    crystal: &Crystal<T>,
    sep: &Separation<T>,
    opts: &ClassifyOptions<T>,
) -> Result<Classification<T>> {
    if crystal.dim() != 2 {
        return Err(Error::Degeneracy("quadratic two-fold touching needs a 2D lattice".into()));
    }
    let r = opts.ring_radius;
    let n = opts.n_dirs.max(8);
    // E± − E⋆ = α r² ± r² sqrt(γ̃² cos² 2φ + β² sin² 2φ).
    let (mut a_sum, mut cc, mut cs, mut ss, mut yc, mut ys) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for j in 0..n {
        let phi = T::two_pi() * T::of_usize(j) / T::of_usize(n);
        let k = sep.k_star + Vector2::new(phi.cos(), phi.sin()) * r;
        let e = crystal.energies(k)?;
        let (lo, hi) = (e[sep.band] - sep.e_star, e[sep.band + 1] - sep.e_star);
        a_sum += (lo + hi) * T::lit(0.5) / (r * r);
        let s2 = ((hi - lo) * T::lit(0.5) / (r * r)).powi(2);
        let (c2, sn2) = ((phi * T::lit(2.0)).cos().powi(2), (phi * T::lit(2.0)).sin().powi(2));
        cc += c2 * c2;
        cs += c2 * sn2;
        ss += sn2 * sn2;
        yc += s2 * c2;
        ys += s2 * sn2;
    }
    let det = cc * ss - cs * cs;
    let g2 = (yc * ss - ys * cs) / det;
    let b2 = (cc * ys - cs * yc) / det;
    Ok(Classification::QuadraticDouble {
        alpha: a_sum / T::of_usize(n),
        gamma: g2.max(T::zero()).sqrt(),
        beta: b2.max(T::zero()).sqrt(),
    })
}

/// Relative tolerance used to detect eigenvalues on a contour: `0.05 · radius`.
pub fn ring_tol<T: Real>(radius: T) -> T {
    T::lit(0.05) * radius
}

/// `(1/2πi) ∮_{|ζ−E⋆|=radius} (ζ − H)^{-1} dζ` by the `n_quad`-point trapezoid rule.
pub fn riesz_projector<T: Real>(fiber: &FiberSystem<T>, e_star: T, radius: T, n_quad: usize) -> Result<CMat<T>> {
    if !(radius > T::zero()) || n_quad == 0 {
        return Err(Error::InvalidInput("contour needs positive radius and nodes".into()));
    }
    let tol = ring_tol(radius);
    for &e in &fiber.energies {
        if ((e - e_star).abs() - radius).abs() < tol {
            return Err(Error::ContourCollision { eigenvalue: e.as_f64(), tol: tol.as_f64() });
        }
    }
    let n = fiber.dim();
    let id = CMat::<T>::identity(n, n);
    let mut acc = CMat::<T>::zeros(n, n);
    for j in 0..n_quad {
        let phi = T::two_pi() * (T::of_usize(j) + T::lit(0.5)) / T::of_usize(n_quad);
        let dz = cis(phi) * radius;
        let zeta = dz + cplx(e_star, T::zero());
        let lu = (&id * zeta - &fiber.h).lu();
        let r = lu
            .solve(&id)
            .ok_or_else(|| Error::Numeric("singular resolvent on contour".into()))?;
        acc += r * dz;
    }
    Ok(acc / cplx(T::of_usize(n_quad), T::zero()))
}

/// `Σ v_b v_b*` over eigenvalues strictly inside the disc `|E − E⋆| < radius`.
pub fn eigen_projector<T: Real>(fiber: &FiberSystem<T>, e_star: T, radius: T) -> CMat<T> {
    let n = fiber.dim();
    let mut p = CMat::<T>::zeros(n, n);
    for (b, &e) in fiber.energies.iter().enumerate() {
        if (e - e_star).abs() < radius {
            let v = fiber.vectors.column(b);
            p += &v * v.adjoint();
        }
    }
    p
}

#[allow(dead_code)]
fn _assert_send_sync<T: Real>() {
    fn is<X: Send + Sync>() {}
    is::<FiberSystem<T>>();
    is::<Cplx<T>>();
}
