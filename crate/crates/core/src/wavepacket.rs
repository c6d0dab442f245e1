//! Band-limited wavepackets, the energy/momentum window `P₀^ε`, the averaging
//! identity and the near-invariance experiment.
//!
//! Everything lives in fiber coordinates on an anchored grid `k⋆ + εξ`, so envelope
//! nodes and fibers coincide and no interpolation is ever needed.

use std::sync::Arc as Shared;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bloch::{Crystal, Separation};
use crate::drive::DrivingProfile;
use crate::error::{Error, Result};
use crate::evolve::{DrivenFiber, Monodromy, SignConvention};
use crate::lattice::{anchored_grid, Coord, Lattice, Vec2};
use crate::linalg::{random_cmat, CMat, CVec};
use crate::scalar::{cis, cplx, Cplx, Real};
use crate::spectral::{apply_blocks, band_arc_projectors, Arc, FiberBundle, StateFiberRep};

/// Bloch modes spanning the degenerate eigenspace at `k⋆` (plane-wave coefficients).
#[derive(Clone, Debug)]
pub struct ModeFrame<T: Real> {
    pub k_star: Vec2<T>,
    pub e_star: T,
    pub band: usize,
    /// `basis × N`, orthonormal columns.
    pub modes: CMat<T>,
}

impl<T: Real> ModeFrame<T> {
    pub fn new(crystal: &Crystal<T>, k_star: Vec2<T>, band: usize, multiplicity: usize) -> Result<Self> {
        let fiber = crystal.fiber(k_star)?;
        if multiplicity == 0 || band + multiplicity > fiber.dim() {
            return Err(Error::InvalidInput(format!(
                "bands {band}..{} are not resolved by a basis of {}",
                band + multiplicity,
                fiber.dim()
            )));
        }
        let e_star = fiber.energies[band..band + multiplicity].iter().fold(T::zero(), |a, &b| a + b)
            / T::of_usize(multiplicity);
        Ok(ModeFrame { k_star, e_star, band, modes: fiber.vectors.columns(band, multiplicity).into_owned() })
    }

    pub fn from_separation(crystal: &Crystal<T>, sep: &Separation<T>) -> Result<Self> {
        let mut f = Self::new(crystal, sep.k_star, sep.band, sep.multiplicity)?;
        f.e_star = sep.e_star;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.modes.ncols()
    }
}

/// Envelope Fourier amplitudes on the Cartesian nodes `ξ = h m`, `|ξ| ≤ d₀`.
#[derive(Clone, Debug)]
pub struct Envelope<T: Real> {
    pub dim: usize,
    pub d0: T,
    pub h: T,
    pub offsets: Vec<Coord>,
    /// `h^n` per node.
    pub weights: Vec<T>,
    pub amplitudes: Vec<CVec<T>>,
}

impl<T: Real> Envelope<T> {
    pub fn from_fn(dim: usize, d0: T, h: T, n: usize, f: impl Fn(Vec2<T>) -> CVec<T>) -> Result<Self> {
        if !(h > T::zero()) || !(d0 >= T::zero()) || !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput("envelope needs h > 0, d0 ≥ 0, dim 1 or 2".into()));
        }
        let mmax = (d0 / h + T::lit(1e-9)).floor().as_f64() as i32;
        let mut offsets = Vec::new();
        for i in -mmax..=mmax {
            let js = if dim == 2 { -mmax..=mmax } else { 0..=0 };
            for j in js {
                let xi = Vec2::new(T::of_i32(i), T::of_i32(j)) * h;
                if xi.norm() <= d0 * T::lit(1.0 + 1e-12) {
                    offsets.push([i, j]);
                }
            }
        }
        let w = h.powi(dim as i32);
        let amplitudes = offsets
            .iter()
            .map(|m| {
                let a = f(Vec2::new(T::of_i32(m[0]), T::of_i32(m[1])) * h);
                assert_eq!(a.len(), n, "amplitude length");
                a
            })
            .collect();
        Ok(Envelope { dim, d0, h, weights: vec![w; offsets.len()], offsets, amplitudes })
    }

    /// Independent complex Gaussian amplitudes at every node.
    pub fn random(dim: usize, d0: T, h: T, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = Self::from_fn(dim, d0, h, n, |_| CVec::zeros(n))?;
        for a in env.amplitudes.iter_mut() {
            *a = random_cmat::<T, _>(&mut rng, n, 1).column(0).into_owned();
        }
        Ok(env)
    }

    /// `exp(−|ξ|²/2s²)` times a fixed unit vector, truncated to the ball.
    pub fn gaussian(dim: usize, d0: T, h: T, width: T, dir: &CVec<T>) -> Result<Self> {
        Self::from_fn(dim, d0, h, dir.len(), |xi| {
            dir * cplx((-xi.norm_squared() / (T::lit(2.0) * width * width)).exp(), T::zero())
        })
    }

    pub fn n(&self) -> usize {
        self.amplitudes.first().map_or(0, |a| a.len())
    }

    pub fn xi(&self, j: usize) -> Vec2<T> {
        let m = self.offsets[j];
        Vec2::new(T::of_i32(m[0]), T::of_i32(m[1])) * self.h
    }

    pub fn norm(&self) -> T {
        self.amplitudes
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| a.norm_squared() * w)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<CVec<T>>) -> Self {
        Envelope { amplitudes, ..self.clone() }
    }
}

/// `P₀^ε`: quasi-momenta `|k − k⋆| < ε`, energies `|E − E⋆| < Lε`.
#[derive(Clone, Copy, Debug)]
pub struct WindowSpec<T: Real> {
    pub k_star: Vec2<T>,
    pub e_star: T,
    pub eps: T,
    pub l: T,
}

impl<T: Real> WindowSpec<T> {
    pub fn new(k_star: Vec2<T>, e_star: T, eps: T, l: T) -> Result<Self> {
        if !(eps > T::zero()) || !(l > T::zero()) {
            return Err(Error::InvalidInput("window needs ε > 0 and L > 0".into()));
        }
        Ok(WindowSpec { k_star, e_star, eps, l })
    }
}

fn same_point<T: Real>(a: Vec2<T>, b: Vec2<T>) -> bool {
    (a - b).norm() <= T::lit(1e-12) * (T::one() + a.norm())
}

fn check_bundle<T: Real>(state: &StateFiberRep<T>, bundle: &FiberBundle<T>) -> Result<()> {
    if !state.grid.same_as(&bundle.grid) {
        return Err(Error::GridMismatch("state and fiber bundle live on different grids".into()));
    }
    Ok(())
}

/// Fiber coefficients of `ε^{n/2} α(εx)ᵀΦ⋆(x)`: at `k⋆ + εξ` the periodic part is
/// `p⋆ α̂(ξ)` expanded in the local eigenbasis, scaled so that `‖state‖ = ‖α‖`.
pub fn synthesize_bl<T: Real>(
    env: &Envelope<T>,
    frame: &ModeFrame<T>,
    bundle: &FiberBundle<T>,
) -> Result<StateFiberRep<T>> {
    let anchor = bundle
        .grid
        .anchor
        .as_ref()
        .ok_or_else(|| Error::GridMismatch("wavepackets need an anchored grid".into()))?;
    if !same_point(anchor.k_star, frame.k_star) {
        return Err(Error::GridMismatch("grid anchor differs from the mode frame's k⋆".into()));
    }
    if (anchor.h - env.h).abs() > T::lit(1e-12) * env.h {
        return Err(Error::GridMismatch("envelope spacing differs from the grid's ξ spacing".into()));
    }
    if env.n() != frame.n() {
        return Err(Error::InvalidInput(format!("{}-component envelope for {} modes", env.n(), frame.n())));
    }
    let nb = bundle.n_bands();
    let scale = cplx(anchor.eps.powf(-T::of_usize(env.dim) * T::lit(0.5)), T::zero());
    let mut out = StateFiberRep::zeros(bundle.grid.clone(), nb);
    for (m, a) in env.offsets.iter().zip(&env.amplitudes) {
        let j = anchor
            .index_of(*m)
            .ok_or_else(|| Error::GridMismatch(format!("envelope node {m:?} has no fiber")))?;
        let psi = &frame.modes * a;
        out.coeffs[j] = bundle.fibers[j].vectors.adjoint() * psi * scale;
    }
    Ok(out)
}

/// Keeps the fibers within `ε` of `k⋆` and the bands within `Lε` of `E⋆`.
pub fn project_p0<T: Real>(
    state: &StateFiberRep<T>,
    bundle: &FiberBundle<T>,
    window: &WindowSpec<T>,
) -> Result<StateFiberRep<T>> {
    check_bundle(state, bundle)?;
    let coeffs = state
        .coeffs
        .iter()
        .zip(&bundle.fibers)
        .map(|(c, f)| {
            let mut c = c.clone();
            let near = (f.k - window.k_star).norm() < window.eps;
            for (b, x) in c.iter_mut().enumerate() {
                if !near || !((f.energies[b] - window.e_star).abs() < window.l * window.eps) {
                    *x = Cplx::default();
                }
            }
            c
        })
        .collect();
    Ok(StateFiberRep { grid: state.grid.clone(), coeffs })
}

/// `‖(I − P₀^ε)u‖ / ‖u‖`.
pub fn bl_alignment<T: Real>(u: &StateFiberRep<T>, bundle: &FiberBundle<T>, window: &WindowSpec<T>) -> Result<T> {
    let n = u.norm();
    if n == T::zero() {
        return Err(Error::InvalidInput("alignment of the zero state".into()));
    }
    Ok(u.sub(&project_p0(u, bundle, window)?).norm() / n)
}

/// `u_ε[f]`: keep `|k − k⋆| < ε` and replace each fiber by its projection onto the
/// span of the `k⋆` modes.
pub fn frozen_mode_projection<T: Real>(
    f: &StateFiberRep<T>,
    frame: &ModeFrame<T>,
    bundle: &FiberBundle<T>,
    eps: T,
) -> Result<StateFiberRep<T>> {
    check_bundle(f, bundle)?;
    let nb = f.n_bands();
    let pp = &frame.modes * frame.modes.adjoint();
    let coeffs = f
        .coeffs
        .par_iter()
        .zip(bundle.fibers.par_iter())
        .map(|(c, fib)| {
            if (fib.k - frame.k_star).norm() < eps {
                let v = fib.vectors.columns(0, nb);
                v.adjoint() * (&pp * (v * c))
            } else {
                CVec::zeros(nb)
            }
        })
        .collect();
    Ok(StateFiberRep { grid: f.grid.clone(), coeffs })
}

/// Orthogonal projection onto `BL_ε` with bandwidth `d0`: the span of the `k⋆` modes
/// at fibers `k⋆ + εξ`, `|ξ| ≤ d0`.
pub fn project_bl<T: Real>(
    state: &StateFiberRep<T>,
    frame: &ModeFrame<T>,
    bundle: &FiberBundle<T>,
    d0: T,
) -> Result<StateFiberRep<T>> {
    let eps = bundle
        .grid
        .anchor
        .as_ref()
        .ok_or_else(|| Error::GridMismatch("wavepackets need an anchored grid".into()))?
        .eps;
    frozen_mode_projection(state, frame, bundle, eps * d0 * T::lit(1.0 + 1e-9))
}

/// A Fourier series on the reciprocal lattice: `p(x) = Σ p_m e^{i G_m·x}`.
#[derive(Clone, Debug)]
pub struct PeriodicFunction<T: Real> {
    pub terms: Vec<(Coord, Cplx<T>)>,
}

impl<T: Real> PeriodicFunction<T> {
    pub fn eval(&self, lattice: &Lattice<T>, x: Vec2<T>) -> Cplx<T> {
        self.terms
            .iter()
            .fold(Cplx::default(), |acc, &(m, c)| acc + c * cis(lattice.dual_point(m).dot(&x)))
    }

    /// Cell average `(1/|Ω|)∫_Ω p`.
    pub fn mean(&self) -> Cplx<T> {
        self.terms.iter().filter(|(m, _)| *m == [0, 0]).fold(Cplx::default(), |a, &(_, c)| a + c)
    }
}

/// Smooth band-limited profile `q̂(ξ) = exp(−|ξ−ξ₀|²/2s²)(1 − |ξ|²/R²)^p` on `|ξ| < R`.
#[derive(Clone, Copy, Debug)]
pub struct TaperedGaussian<T: Real> {
    pub dim: usize,
    pub width: T,
    pub centre: Vec2<T>,
    pub radius: T,
    pub power: i32,
}

impl<T: Real> TaperedGaussian<T> {
    pub fn hat(&self, xi: Vec2<T>) -> T {
        let r2 = xi.norm_squared() / (self.radius * self.radius);
        if r2 >= T::one() {
            return T::zero();
        }
        let d = xi - self.centre;
        (-d.norm_squared() / (T::lit(2.0) * self.width * self.width)).exp() * (T::one() - r2).powi(self.power)
    }

    /// `∫q = (2π)^n q̂(0)`.
    pub fn integral(&self) -> T {
        T::two_pi().powi(self.dim as i32) * self.hat(Vec2::zeros())
    }

    /// Nodes and weights of the midpoint rule over `[−R, R]^n` restricted to the ball.
    fn fourier_nodes(&self, n: usize) -> Vec<(Vec2<T>, T)> {
        let h = T::lit(2.0) * self.radius / T::of_usize(n);
        let t = |j: usize| -self.radius + h * (T::of_usize(j) + T::lit(0.5));
        let mut out = Vec::new();
        let js: Vec<usize> = if self.dim == 2 { (0..n).collect() } else { vec![0] };
        for i in 0..n {
            for &j in &js {
                let xi = if self.dim == 2 { Vec2::new(t(i), t(j)) } else { Vec2::new(t(i), T::zero()) };
                let w = self.hat(xi) * h.powi(self.dim as i32);
                if w != T::zero() {
                    out.push((xi, w));
                }
            }
        }
        out
    }
}

/// Number of box nodes per direction used by [`averaging_identity`].
pub const AVERAGING_BOX_NODES: usize = 1 << 14;
/// Half-width of the quadrature box, in slow units `X = εx`.
pub const AVERAGING_BOX_HALF: f64 = 20.0;
const AVERAGING_FOURIER_NODES: usize = 384;

/// Returns `(∫p(x)q(εx)dx, ε^{−n}⟨p⟩_Ω ∫q)`. The left side is a midpoint rule over the
/// box `|x_i| ≤ 20/ε` with `q` synthesized from `q̂`.
pub fn averaging_identity<T: Real>(
    lattice: &Lattice<T>,
    p: &PeriodicFunction<T>,
    q: &TaperedGaussian<T>,
    eps: T,
    box_nodes: usize,
) -> Result<(Cplx<T>, Cplx<T>)> {
    if q.dim != lattice.dim {
        return Err(Error::InvalidInput("profile and lattice dimensions differ".into()));
    }
    let eps0 = lattice.shortest_dual_length() / (T::lit(2.0) * q.radius);
    if !(eps < eps0) {
        return Err(Error::HypothesisViolation(format!(
            "averaging needs ε < {:e} (shortest dual vector over twice the support radius), got {:e}",
            eps0.as_f64(),
            eps.as_f64()
        )));
    }
    let nodes = q.fourier_nodes(AVERAGING_FOURIER_NODES);
    let qx = |x: Vec2<T>| -> Cplx<T> {
        nodes.iter().fold(Cplx::default(), |acc, &(xi, w)| acc + cis(xi.dot(&x)) * w)
    };
    let half = T::lit(AVERAGING_BOX_HALF) / eps;
    let dx = T::lit(2.0) * half / T::of_usize(box_nodes);
    let xs: Vec<T> = (0..box_nodes).map(|j| -half + dx * (T::of_usize(j) + T::lit(0.5))).collect();
    let lhs = if lattice.dim == 1 {
        xs.par_iter()
            .map(|&x| {
                let v = Vec2::new(x, T::zero());
                p.eval(lattice, v) * qx(v * eps)
            })
            .reduce(Cplx::default, |a, b| a + b)
            * dx
    } else {
        xs.par_iter()
            .map(|&x| {
                xs.iter().fold(Cplx::default(), |acc, &y| {
                    let v = Vec2::new(x, y);
                    acc + p.eval(lattice, v) * qx(v * eps)
                })
            })
            .reduce(Cplx::default, |a, b| a + b)
            * (dx * dx)
    };
    let rhs = p.mean() * (q.integral() / eps.powi(lattice.dim as i32));
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Random states in `ran P₀^ε`.
    P0Random,
    /// Random band-limited packets of bandwidth `d0`.
    BlPacket,
}

/// Scenario for the near-invariance experiment.
#[derive(Clone, Debug)]
pub struct InvarianceSetup<T: Real> {
    pub frame: ModeFrame<T>,
    pub drive: DrivingProfile<T>,
    pub sign: SignConvention,
    /// Half-width of the arc `(−g, g)`.
    pub g: T,
    /// Enclosure half-width of the effective monodromy; `g` must exceed it.
    pub g0: T,
    pub eps: Vec<T>,
    pub mode: ProbeMode,
    pub l: T,
    pub d0: T,
    /// Envelope node spacing `h` (grid spacing is `εh`).
    pub h: T,
    pub n_probe: usize,
    pub power_steps: usize,
    pub seed: u64,
    pub steps_per_period: usize,
}

impl<T: Real> InvarianceSetup<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > self.g0) || !(self.g < T::pi()) {
            return Err(Error::Config(format!(
                "arc half-width g = {} must lie in (g₀, π) with g₀ = {} from the effective enclosure",
                self.g, self.g0
            )));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > T::zero())) {
            return Err(Error::Config("ε list must be non-empty and positive".into()));
        }
        if self.n_probe == 0 || !(self.h > T::zero()) || !(self.d0 > T::zero()) || !(self.l > T::zero()) {
            return Err(Error::Config("need n_probe ≥ 1 and h, d0, L > 0".into()));
        }
        Ok(())
    }

    /// Radius in ξ units covered by the grid: the window needs 1, packets need `d0`.
    pub fn xi_radius(&self) -> T {
        self.d0.max(T::one())
    }
}

/// Fibers, monodromies and window at one `ε`.
pub struct EpsilonContext<T: Real> {
    pub eps: T,
    pub bundle: FiberBundle<T>,
    pub monos: Vec<Monodromy<T>>,
    pub window: WindowSpec<T>,
}

impl<T: Real> EpsilonContext<T> {
    pub fn build(crystal: &Crystal<T>, setup: &InvarianceSetup<T>, eps: T) -> Result<Self> {
        let f = &setup.frame;
        let grid = anchored_grid(crystal.dim(), f.k_star, eps, setup.h, setup.xi_radius())?;
        let bundle = FiberBundle::build(crystal, Shared::new(grid))?;
        let monos = bundle
            .fibers
            .par_iter()
            .map(|fib| {
                DrivenFiber::new(fib, &setup.drive, eps, f.e_star, setup.sign).monodromy(setup.steps_per_period)
            })
            .collect::<Result<Vec<_>>>()?;
        let window = WindowSpec::new(f.k_star, f.e_star, eps, setup.l)?;
        Ok(EpsilonContext { eps, bundle, monos, window })
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ResidualRow {
    pub eps: f64,
    /// Largest `‖Π[outside] f‖ / ‖f‖` seen (a lower bound on the operator norm).
    pub r: f64,
    pub fibers: usize,
    pub probe_seeds: Vec<u64>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ResidualTable {
    pub mode: ProbeMode,
    pub g: f64,
    pub g0: f64,
    pub n_probe: usize,
    pub power_steps: usize,
    pub rows: Vec<ResidualRow>,
    /// Least-squares slope of `log r` against `log ε`; absent when some `r` is zero.
    pub exponent: Option<f64>,
}

/// Least-squares slope of `log y` against `log x`; `None` if any value is non-positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn random_state<T: Real>(grid: &Shared<crate::lattice::BrillouinGrid<T>>, nb: usize, seed: u64) -> StateFiberRep<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..grid.len()).map(|_| random_cmat::<T, _>(&mut rng, nb, 1).column(0).into_owned()).collect();
    StateFiberRep { grid: grid.clone(), coeffs }
}

/// Largest `‖Π[arc](Q f)‖ / ‖Q f‖` over seeded probes followed by power steps on
/// `Q Π Q`, where `Q` is `P₀^ε` or the `BL_ε` projection.
pub fn measure_residual<T: Real>(
    ctx: &EpsilonContext<T>,
    setup: &InvarianceSetup<T>,
    arc: &Arc<T>,
) -> Result<(T, Vec<u64>)> {
    let nb = ctx.bundle.n_bands();
    let blocks = band_arc_projectors(&ctx.bundle, &ctx.monos, arc, nb);
    let restrict = |s: &StateFiberRep<T>| -> Result<StateFiberRep<T>> {
        match setup.mode {
            ProbeMode::P0Random => project_p0(s, &ctx.bundle, &ctx.window),
            ProbeMode::BlPacket => project_bl(s, &setup.frame, &ctx.bundle, setup.d0),
        }
    };
    let seeds: Vec<u64> = (0..setup.n_probe as u64).map(|i| setup.seed.wrapping_add(i)).collect();
    let mut best = T::zero();
    let mut best_probe: Option<StateFiberRep<T>> = None;
    for &s in &seeds {
        let f = restrict(&random_state(&ctx.bundle.grid, nb, s))?;
        let n = f.norm();
        if n == T::zero() {
            continue;
        }
        let r = apply_blocks(&f, &blocks).norm() / n;
        if best_probe.is_none() || r > best {
            best = r;
            best_probe = Some(f);
        }
    }
    let mut f = best_probe.ok_or_else(|| Error::Numeric("every probe vanished in the window".into()))?;
    for _ in 0..setup.power_steps {
        let g = restrict(&apply_blocks(&f, &blocks))?;
        let n = g.norm();
        if n == T::zero() {
            break;
        }
        f = g.scale(T::one() / n);
        best = best.max(apply_blocks(&f, &blocks).norm() / f.norm());
    }
    Ok((best, seeds))
}

/// `r(ε) = ‖Π^ε[S¹∖(−g, g)] ∘ Q‖` estimated for each `ε` in the setup.
pub fn near_invariance_experiment<T: Real>(crystal: &Crystal<T>, setup: &InvarianceSetup<T>) -> Result<ResidualTable> {
    setup.validate()?;
    let arc = Arc::outside(setup.g);
    let mut rows = Vec::new();
    for &eps in &setup.eps {
        let ctx = EpsilonContext::build(crystal, setup, eps)?;
        let (r, probe_seeds) = measure_residual(&ctx, setup, &arc)?;
        log::info!("ε = {eps}: r = {:e} over {} fibers", r.as_f64(), ctx.bundle.fibers.len());
        rows.push(ResidualRow { eps: eps.as_f64(), r: r.as_f64(), fibers: ctx.bundle.fibers.len(), probe_seeds });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.r).collect();
    Ok(ResidualTable {
        mode: setup.mode,
        g: setup.g.as_f64(),
        g0: setup.g0.as_f64(),
        n_probe: setup.n_probe,
        power_steps: setup.power_steps,
        exponent: loglog_slope(&x, &y),
        rows,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AlignmentRow {
    pub eps: f64,
    /// `‖(I − P₀^ε)u‖/‖u‖` for a band-limited packet.
    pub rho: f64,
    /// `max ‖P₀^ε f − u_ε[f]‖/‖f‖` over the probes.
    pub forward: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AlignmentTable {
    pub rows: Vec<AlignmentRow>,
    pub rho_exponent: Option<f64>,
    pub forward_exponent: Option<f64>,
}

/// Correspondence between `BL_ε` and `ran P₀^ε` in both directions, undriven.
/// The packet is a Gaussian of width `d0/2` truncated at `d0`; forward probes are seeded.
pub fn alignment_experiment<T: Real>(crystal: &Crystal<T>, setup: &InvarianceSetup<T>) -> Result<AlignmentTable> {
    let mut rows = Vec::new();
    for &eps in &setup.eps {
        let grid = anchored_grid(crystal.dim(), setup.frame.k_star, eps, setup.h, setup.xi_radius())?;
        let bundle = FiberBundle::build(crystal, Shared::new(grid))?;
        let window = WindowSpec::new(setup.frame.k_star, setup.frame.e_star, eps, setup.l)?;
        let n = setup.frame.n();
        let mut dir = CVec::zeros(n);
        dir[0] = Cplx::new(T::one(), T::zero());
        let env = Envelope::gaussian(crystal.dim(), setup.d0, setup.h, setup.d0 * T::lit(0.5), &dir)?;
        let u = synthesize_bl(&env, &setup.frame, &bundle)?;
        let rho = bl_alignment(&u, &bundle, &window)?;
        let mut forward = T::zero();
        for i in 0..setup.n_probe as u64 {
            let f = random_state(&bundle.grid, bundle.n_bands(), setup.seed.wrapping_add(i));
            let d = project_p0(&f, &bundle, &window)?.sub(&frozen_mode_projection(&f, &setup.frame, &bundle, eps)?);
            forward = forward.max(d.norm() / f.norm());
        }
        rows.push(AlignmentRow { eps: eps.as_f64(), rho: rho.as_f64(), forward: forward.as_f64() });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let rho: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let fwd: Vec<f64> = rows.iter().map(|r| r.forward).collect();
    Ok(AlignmentTable { rho_exponent: loglog_slope(&x, &rho), forward_exponent: loglog_slope(&x, &fwd), rows })
}
