//! Effective envelope models, their per-momentum Floquet multipliers, the enclosure
//! `g₀(d₀)` of the effective monodromy, and validation against the full fiber dynamics.
//!
//! Every model is a symbol `h(P)` evaluated at the envelope momentum `P = ξ + A(T)`;
//! `i∂_T α̂ = h(ξ + A(T)) α̂`. Exponents follow the monodromy convention `z = e^{−iθ}`.
//!
//! The full fibers use minimal coupling `k − ε^a A`, so near `k⋆` they follow
//! `h(P) = E(k⋆ + P) − E⋆` expanded to the model's order, driven by `−ε^{a−1}A`.
//! [`EffectiveModel::matched`] and [`matched_drive`] build exactly that pair.

use std::sync::Arc as Shared;

use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bloch::{Classification, Crystal, DegeneracyInfo};
use crate::drive::DrivingProfile;
use crate::error::{Error, Result};
use crate::evolve::{DrivenFiber, SignConvention};
use crate::lattice::{anchored_grid, Vec2};
use crate::linalg::{expm_hermitian, unitarity_defect, unitary_eigen, CMat, CVec};
use crate::scalar::{carg, cis, cplx, wrap_angle, Cplx, Real};
use crate::spectral::{FiberBundle, StateFiberRep};
use crate::wavepacket::{synthesize_bl, Envelope, ModeFrame};

#[derive(Clone, Debug)]
pub enum EffectiveModel<T: Real> {
    /// `h(P) = c·P`, one component.
    Transport { c: Vec2<T> },
    /// `h(P) = P₁B₁ + P₂B₂`; without a frame `B_j = v_D σ_j`.
    Dirac { v_d: T, frame: Option<[CMat<T>; 2]> },
    /// `h(P) = Pᵀ S P` with `S = ½D²E`.
    Schrodinger { half_hessian: Matrix2<T> },
    /// `α|P|²σ₀ + γ̃(P₁² − P₂²)σ₂ + 2βP₁P₂σ₁`.
    MatrixSchrodinger { alpha: T, gamma: T, beta: T },
}

pub fn pauli<T: Real>() -> [CMat<T>; 3] {
    let (o, z, i) = (cplx(T::one(), T::zero()), Cplx::default(), cplx(T::zero(), T::one()));
    [
        CMat::from_row_slice(2, 2, &[z, o, o, z]),
        CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

impl<T: Real> EffectiveModel<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            EffectiveModel::Transport { c } if c.norm() == T::zero() => {
                Err(Error::InvalidInput("transport needs a nonzero velocity".into()))
            }
            EffectiveModel::Dirac { v_d, .. } if !(*v_d > T::zero()) => {
                Err(Error::InvalidInput("Dirac velocity must be positive".into()))
            }
            EffectiveModel::Dirac { frame: Some(b), .. } if b.iter().any(|m| m.shape() != (2, 2)) => {
                Err(Error::InvalidInput("Dirac frame must be 2×2".into()))
            }
            EffectiveModel::Schrodinger { half_hessian } if (half_hessian - half_hessian.transpose()).norm() > T::lit(1e-12) * (T::one() + half_hessian.norm()) => {
                Err(Error::InvalidInput("half-Hessian must be symmetric".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            EffectiveModel::Transport { .. } => "transport",
            EffectiveModel::Dirac { .. } => "dirac",
            EffectiveModel::Schrodinger { .. } => "schrodinger",
            EffectiveModel::MatrixSchrodinger { .. } => "matrix_schrodinger",
        }
    }

    /// Envelope components `N`.
    pub fn components(&self) -> usize {
        match self {
            EffectiveModel::Transport { .. } | EffectiveModel::Schrodinger { .. } => 1,
            _ => 2,
        }
    }

    /// Natural scaling exponent `a`: 1 for linear symbols, 2 for quadratic ones.
    pub fn scaling(&self) -> u8 {
        match self {
            EffectiveModel::Transport { .. } | EffectiveModel::Dirac { .. } => 1,
            _ => 2,
        }
    }

    /// `h(P)` as an `N×N` Hermitian matrix.
    pub fn symbol(&self, p: Vec2<T>) -> CMat<T> {
        let r = |x: T| cplx(x, T::zero());
        match self {
            EffectiveModel::Transport { c } => CMat::from_element(1, 1, r(c.dot(&p))),
            EffectiveModel::Schrodinger { half_hessian } => CMat::from_element(1, 1, r(p.dot(&(half_hessian * p)))),
            EffectiveModel::Dirac { v_d, frame } => match frame {
                Some(b) => &b[0] * r(p.x) + &b[1] * r(p.y),
                None => {
                    let s = pauli::<T>();
                    (&s[0] * r(p.x) + &s[1] * r(p.y)) * r(*v_d)
                }
            },
            EffectiveModel::MatrixSchrodinger { alpha, .. } => {
                self.traceless_symbol(p) + CMat::identity(2, 2) * r(*alpha * p.norm_squared())
            }
        }
    }

    /// Traceless part of the matrix-Schrödinger symbol.
    fn traceless_symbol(&self, p: Vec2<T>) -> CMat<T> {
        let r = |x: T| cplx(x, T::zero());
        match self {
            EffectiveModel::MatrixSchrodinger { gamma, beta, .. } => {
                let s = pauli::<T>();
                &s[1] * r(*gamma * (p.x * p.x - p.y * p.y)) + &s[0] * r(T::lit(2.0) * *beta * p.x * p.y)
            }
            _ => self.symbol(p),
        }
    }

    /// Coefficients that make the effective evolution reproduce the full fibers near
    /// `k⋆`, expressed in the frame of `frame.modes`.
    pub fn matched(crystal: &Crystal<T>, info: &DegeneracyInfo<T>, frame: &ModeFrame<T>) -> Result<Self> {
        let model = match &info.class {
            Classification::Noncritical { c, .. } => EffectiveModel::Transport { c: -*c },
            Classification::QuadraticSimple { hessian } => {
                EffectiveModel::Schrodinger { half_hessian: hessian * T::lit(0.5) }
            }
            Classification::Dirac { fit } => {
                EffectiveModel::Dirac { v_d: fit.v_d, frame: Some(first_order_frame(crystal, frame)) }
            }
            Classification::QuadraticDouble { alpha, gamma, beta } => {
                EffectiveModel::MatrixSchrodinger { alpha: *alpha, gamma: *gamma, beta: *beta }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

/// `B_j = 2 p⋆* diag((k⋆+G)_j) p⋆`: the first-order term of `H(k⋆ + P)` on the modes.
pub fn first_order_frame<T: Real>(crystal: &Crystal<T>, frame: &ModeFrame<T>) -> [CMat<T>; 2] {
    let kg: Vec<Vec2<T>> = crystal.basis.gvecs.iter().map(|g| frame.k_star + g).collect();
    let b = |j: usize| {
        let mut d = frame.modes.clone();
        for (i, mut row) in d.row_iter_mut().enumerate() {
            row *= cplx(T::lit(2.0) * kg[i][j], T::zero());
        }
        let m = frame.modes.adjoint() * d;
        crate::linalg::hermitian_part(&m)
    };
    [b(0), b(1)]
}

/// Drive seen by the matched effective model: `−ε^{a−1} A`.
pub fn matched_drive<T: Real>(drive: &DrivingProfile<T>, eps: T) -> DrivingProfile<T> {
    drive.scaled(-eps.powi(drive.scaling as i32 - 1))
}

/// Default number of midpoint steps over one period.
pub const DEFAULT_EFFECTIVE_STEPS: usize = 4000;

fn midpoint<T: Real>(gen: impl Fn(T) -> CMat<T>, n: usize, t: T, size: usize) -> Result<CMat<T>> {
    let steps = n.max(1);
    let dt = t / T::of_usize(steps);
    let mut u = CMat::<T>::identity(size, size);
    for j in 0..steps {
        let tm = dt * (T::of_usize(j) + T::lit(0.5));
        u = expm_hermitian(&gen(tm), dt)? * u;
    }
    Ok(u)
}

/// `Û_eff(t; ξ)` for slow time `t`; `n_steps` is per period and is prorated.
pub fn effective_propagator<T: Real>(
    model: &EffectiveModel<T>,
    xi: Vec2<T>,
    drive: &DrivingProfile<T>,
    t: T,
    n_steps: usize,
) -> Result<CMat<T>> {
    let steps = (T::of_usize(n_steps) * (t / drive.period).abs()).ceil().as_f64() as usize;
    match model {
        EffectiveModel::Transport { c } => {
            let phase = c.dot(&(xi * t + drive.integral(t)));
            Ok(CMat::from_element(1, 1, cis(-phase)))
        }
        EffectiveModel::Schrodinger { half_hessian } => {
            Ok(CMat::from_element(1, 1, cis(-drive.quadratic_integral(half_hessian, xi, t))))
        }
        EffectiveModel::Dirac { .. } => midpoint(|s| model.symbol(xi + drive.eval(s)), steps, t, 2),
        EffectiveModel::MatrixSchrodinger { alpha, .. } => {
            let (phase, rest) = matrix_schrodinger_parts(model, *alpha, xi, drive, t, steps)?;
            Ok(rest * phase)
        }
    }
}

fn matrix_schrodinger_parts<T: Real>(
    model: &EffectiveModel<T>,
    alpha: T,
    xi: Vec2<T>,
    drive: &DrivingProfile<T>,
    t: T,
    steps: usize,
) -> Result<(Cplx<T>, CMat<T>)> {
    let id = Matrix2::identity() * alpha;
    let phase = cis(-drive.quadratic_integral(&id, xi, t));
    let rest = midpoint(|s| model.traceless_symbol(xi + drive.eval(s)), steps, t, 2)?;
    Ok((phase, rest))
}

/// One-period multiplier `Û_eff(T_per; ξ)`.
pub fn effective_multiplier<T: Real>(
    model: &EffectiveModel<T>,
    xi: Vec2<T>,
    drive: &DrivingProfile<T>,
    n_steps: usize,
) -> Result<CMat<T>> {
    effective_propagator(model, xi, drive, drive.period, n_steps)
}

/// Exponents `θ ∈ (−π, π]` of a multiplier, ascending.
pub fn exponents<T: Real>(u: &CMat<T>) -> Result<Vec<T>> {
    let mut th: Vec<T> = unitary_eigen(u)?.multipliers.iter().map(|&z| wrap_angle(-carg(z))).collect();
    th.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(th)
}

/// Matrix-Schrödinger exponents split into the full ones and those of the traceless factor.
pub fn split_exponents<T: Real>(
    model: &EffectiveModel<T>,
    xi: Vec2<T>,
    drive: &DrivingProfile<T>,
    n_steps: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    match model {
        EffectiveModel::MatrixSchrodinger { alpha, .. } => {
            let (phase, rest) = matrix_schrodinger_parts(model, *alpha, xi, drive, drive.period, n_steps)?;
            Ok((exponents(&(&rest * phase))?, exponents(&rest)?))
        }
        _ => {
            let e = exponents(&effective_multiplier(model, xi, drive, n_steps)?)?;
            Ok((e.clone(), e))
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SpectralEnclosure {
    pub d0: f64,
    /// Enclosure half-width, margin included.
    pub g0: f64,
    /// Largest `|θ|` found on the sweep (equal to `g0` for closed forms).
    pub sweep_max: f64,
    pub margin: f64,
    /// Number of ξ points evaluated (0 for closed forms).
    pub grid_points: usize,
    pub spacing: f64,
    pub closed_form: bool,
}

fn sweep_nodes<T: Real>(dim: usize, d0: T, resolution: usize) -> (T, Vec<[i32; 2]>) {
    let r = resolution.max(1) as i32;
    let h = d0 / T::of_i32(r);
    let mut out = Vec::new();
    for i in -r..=r {
        for j in if dim == 2 { -r..=r } else { 0..=0 } {
            if i * i + j * j <= r * r {
                out.push([i, j]);
            }
        }
    }
    (h, out)
}

/// `g₀(d₀)`: closed form for Transport and Schrödinger; otherwise a sweep over a grid
/// of spacing `d₀/resolution`, inflated by the half-diagonal times a finite-difference
/// Lipschitz estimate of the exponents.
pub fn effective_monodromy_bound<T: Real>(
    model: &EffectiveModel<T>,
    dim: usize,
    d0: T,
    drive: &DrivingProfile<T>,
    resolution: usize,
    n_steps: usize,
) -> Result<SpectralEnclosure> {
    model.validate()?;
    let tp = drive.period;
    let closed = match model {
        EffectiveModel::Transport { c } => Some(d0 * tp * c.norm()),
        EffectiveModel::Schrodinger { half_hessian } => {
            // θ(ξ) = T ξᵀSξ + ∫AᵀSA; the cross term integrates to zero over a period.
            let k = drive.quadratic_integral(half_hessian, Vec2::zeros(), tp);
            let s = if dim == 1 {
                let v = half_hessian[(0, 0)];
                (v.min(T::zero()), v.max(T::zero()))
            } else {
                let e = half_hessian.symmetric_eigenvalues();
                (e[0].min(e[1]).min(T::zero()), e[0].max(e[1]).max(T::zero()))
            };
            Some((k + tp * d0 * d0 * s.0).abs().max((k + tp * d0 * d0 * s.1).abs()))
        }
        _ => None,
    };
    let report = if let Some(g) = closed {
        SpectralEnclosure {
            d0: d0.as_f64(),
            g0: g.as_f64(),
            sweep_max: g.as_f64(),
            margin: 0.0,
            grid_points: 0,
            spacing: 0.0,
            closed_form: true,
        }
    } else {
        let (h, nodes) = sweep_nodes(dim, d0, resolution);
        let index: std::collections::HashMap<[i32; 2], usize> = nodes.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let thetas = nodes
            .par_iter()
            .map(|m| {
                let xi = Vec2::new(T::of_i32(m[0]), T::of_i32(m[1])) * h;
                exponents(&effective_multiplier(model, xi, drive, n_steps)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let sweep = thetas.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()));
        let mut lip = T::zero();
        for (i, m) in nodes.iter().enumerate() {
            for nb in [[m[0] + 1, m[1]], [m[0], m[1] + 1]] {
                if let Some(&j) = index.get(&nb) {
                    for (a, b) in thetas[i].iter().zip(&thetas[j]) {
                        lip = lip.max(crate::scalar::circular_distance(*a, *b) / h);
                    }
                }
            }
        }
        let half_diag = h * T::of_usize(dim).sqrt() * T::lit(0.5);
        let margin = lip * half_diag;
        SpectralEnclosure {
            d0: d0.as_f64(),
            g0: (sweep + margin).as_f64(),
            sweep_max: sweep.as_f64(),
            margin: margin.as_f64(),
            grid_points: nodes.len(),
            spacing: h.as_f64(),
            closed_form: false,
        }
    };
    if !(report.g0 < std::f64::consts::PI) {
        return Err(Error::HypothesisViolation(format!(
            "effective monodromy enclosure g₀ = {} reaches π; reduce d₀ = {}",
            report.g0, report.d0
        )));
    }
    Ok(report)
}

/// Nodewise `α̂(ξ) ↦ Û_eff(t; ξ) α̂(ξ)` at slow time `t = ε^a t_fast`.
pub fn apply_effective<T: Real>(
    env: &Envelope<T>,
    model: &EffectiveModel<T>,
    drive: &DrivingProfile<T>,
    t: T,
    n_steps: usize,
) -> Result<Envelope<T>> {
    if env.n() != model.components() {
        return Err(Error::InvalidInput(format!(
            "{}-component envelope for a {}-component model",
            env.n(),
            model.components()
        )));
    }
    let amps = (0..env.offsets.len())
        .into_par_iter()
        .map(|j| Ok(effective_propagator(model, env.xi(j), drive, t, n_steps)? * &env.amplitudes[j]))
        .collect::<Result<Vec<CVec<T>>>>()?;
    Ok(env.with_amplitudes(amps))
}

/// `(‖(e^{−iν₀} − M_eff) f‖, 2 sin((ν₀ − g₀)/2) ‖f‖)` nodewise.
pub fn lower_bound_check<T: Real>(
    model: &EffectiveModel<T>,
    nu0: T,
    g0: T,
    env: &Envelope<T>,
    drive: &DrivingProfile<T>,
    n_steps: usize,
) -> Result<(T, T)> {
    if !(nu0 > g0) || nu0 > T::pi() {
        return Err(Error::InvalidInput(format!("ν₀ = {nu0} must lie in (g₀, π] with g₀ = {g0}")));
    }
    let m = apply_effective(env, model, drive, drive.period, n_steps)?;
    let z = cis(-nu0);
    let lhs = env
        .amplitudes
        .iter()
        .zip(&m.amplitudes)
        .zip(&env.weights)
        .map(|((a, b), &w)| (a * z - b).norm_squared() * w)
        .fold(T::zero(), |x, y| x + y)
        .sqrt();
    let rhs = T::lit(2.0) * ((nu0 - g0) * T::lit(0.5)).sin() * env.norm();
    Ok((lhs, rhs))
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ValidationReport {
    pub eps: f64,
    /// Fast times of the checkpoints.
    pub times: Vec<f64>,
    /// `‖ψ_full(t) − ψ_eff(t)‖ / ‖ψ₀‖` per checkpoint.
    pub errors: Vec<f64>,
    pub max_error: f64,
}

/// Full fiber evolution of a band-limited packet against `synthesize_bl` of the
/// effectively evolved envelope, at `n_checkpoints` equally spaced times in `(0, T_per ε^{−a}]`.
#[allow(clippy::too_many_arguments)]
pub fn validate_effective<T: Real>(
    crystal: &Crystal<T>,
    frame: &ModeFrame<T>,
    model: &EffectiveModel<T>,
    drive: &DrivingProfile<T>,
    eps: T,
    env: &Envelope<T>,
    n_checkpoints: usize,
    steps_per_period: usize,
) -> Result<ValidationReport> {
    if model.scaling() != drive.scaling {
        log::warn!("{} model paired with a drive of scaling a = {}", model.tag(), drive.scaling);
    }
    let grid = anchored_grid(crystal.dim(), frame.k_star, eps, env.h, env.d0)?;
    let bundle = FiberBundle::build(crystal, Shared::new(grid))?;
    let psi0 = synthesize_bl(env, frame, &bundle)?;
    let norm0 = psi0.norm();
    let eff_drive = matched_drive(drive, eps);
    let nc = n_checkpoints.max(1);
    let per_segment = steps_per_period.div_ceil(nc).max(1);
    let ea = eps.powi(drive.scaling as i32);
    let period = drive.period / ea;
    let dt = period / T::of_usize(nc);

    // Plane-wave coefficients of the full state, advanced segment by segment.
    let mut waves: Vec<CVec<T>> = psi0
        .coeffs
        .iter()
        .zip(&bundle.fibers)
        .map(|(c, f)| &f.vectors * c)
        .collect();
    let mut times = Vec::new();
    let mut errors = Vec::new();
    for i in 1..=nc {
        let (t0, t1) = (dt * T::of_usize(i - 1), dt * T::of_usize(i));
        waves = waves
            .par_iter()
            .zip(bundle.fibers.par_iter())
            .map(|(w, f)| {
                let u = DrivenFiber::new(f, drive, eps, frame.e_star, SignConvention::Standard).propagate(t0, t1, per_segment)?;
                Ok(u * w)
            })
            .collect::<Result<Vec<_>>>()?;
        let full = StateFiberRep {
            grid: bundle.grid.clone(),
            coeffs: waves.iter().zip(&bundle.fibers).map(|(w, f)| f.vectors.adjoint() * w).collect(),
        };
        let eff = synthesize_bl(&apply_effective(env, model, &eff_drive, t1 * ea, steps_per_period)?, frame, &bundle)?;
        let err = full.sub(&eff).norm() / norm0;
        times.push(t1.as_f64());
        errors.push(err.as_f64());
    }
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    Ok(ValidationReport { eps: eps.as_f64(), times, errors, max_error })
}

/// Largest `‖Û*Û − I‖_F` over seeded random momenta with `|ξ| ≤ d₀`.
pub fn unitarity_sweep<T: Real>(
    model: &EffectiveModel<T>,
    dim: usize,
    d0: T,
    drive: &DrivingProfile<T>,
    samples: usize,
    seed: u64,
    n_steps: usize,
) -> Result<T> {
    let mut worst = T::zero();
    for xi in random_momenta(dim, d0, samples, seed) {
        worst = worst.max(unitarity_defect(&effective_multiplier(model, xi, drive, n_steps)?));
    }
    Ok(worst)
}

/// Uniform samples of the ball `|ξ| ≤ d₀` (rejection from the bounding box).
pub fn random_momenta<T: Real>(dim: usize, d0: T, samples: usize, seed: u64) -> Vec<Vec2<T>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let x: f64 = rng.random_range(-1.0..=1.0);
        let y: f64 = if dim == 2 { rng.random_range(-1.0..=1.0) } else { 0.0 };
        if x * x + y * y <= 1.0 {
            out.push(Vec2::new(T::lit(x), T::lit(y)) * d0);
        }
    }
    out
}
