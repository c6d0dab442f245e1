//! Invariant checks run on a live scenario: lattice duality, eigen-residuals,
//! unitarity, projection-valued-measure axioms, centering, window and synthesis.

use std::sync::Arc as Shared;

use serde::Serialize;

use crate::bloch::Crystal;
use crate::drive::DrivingProfile;
use crate::effective::{matched_drive, unitarity_sweep, EffectiveModel};
use crate::error::Result;
use crate::evolve::{DrivenFiber, Monodromy, SignConvention};
use crate::lattice::anchored_grid;
use crate::linalg::{projector_defect, unitarity_defect, CMat, CVec};
use crate::scalar::{cplx, Real};
use crate::spectral::{arc_projector, centering_residual, Arc, FiberBundle};
use crate::wavepacket::{project_p0, synthesize_bl, Envelope, ModeFrame, WindowSpec};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn le(name: &'static str, value: f64, tol: f64) -> Self {
        Check { name, value, tol, pass: value.is_finite() && value <= tol }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

pub struct SelfTestInput<'a, T: Real> {
    pub crystal: &'a Crystal<T>,
    pub frame: &'a ModeFrame<T>,
    pub drive: &'a DrivingProfile<T>,
    pub model: &'a EffectiveModel<T>,
    pub eps: T,
    pub steps_per_period: usize,
    pub seed: u64,
}

/// Midpoints of the four widest gaps between exponents, in increasing order.
fn gap_points<T: Real>(mono: &Monodromy<T>) -> Vec<T> {
    let mut th: Vec<T> = mono.exponents.clone();
    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = th.len();
    let mut gaps: Vec<(T, T)> = (0..n)
        .map(|j| {
            let next = if j + 1 < n { th[j + 1] } else { th[0] + T::two_pi() };
            (next - th[j], (th[j] + next) * T::lit(0.5))
        })
        .collect();
    gaps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut pts: Vec<T> = gaps.iter().take(4).map(|g| crate::scalar::wrap_angle(g.1)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

fn pvm_checks<T: Real>(mono: &Monodromy<T>, out: &mut Vec<Check>) {
    let n = mono.matrix.nrows();
    let id = CMat::<T>::identity(n, n);
    let p = gap_points(mono);
    if p.len() < 4 {
        return;
    }
    let full = arc_projector(mono, &Arc::full_minus_point(p[0]));
    let empty = arc_projector(mono, &Arc { start: p[0], length: T::zero() });
    let a = Arc::new(p[0], p[2]);
    let b = Arc::new(p[1], p[3]);
    let ab = Arc::new(p[1], p[2]);
    let (pa, pb, pab) = (arc_projector(mono, &a), arc_projector(mono, &b), arc_projector(mono, &ab));
    let pc = arc_projector(mono, &a.complement());
    out.push(Check::le("pvm_full_is_identity", (full - &id).norm().as_f64(), 1e-10));
    out.push(Check::le("pvm_empty_is_zero", empty.norm().as_f64(), 0.0));
    out.push(Check::le("pvm_idempotent_selfadjoint", projector_defect(&pa).as_f64(), 1e-10));
    out.push(Check::le("pvm_additive", (&pa + &pc - &id).norm().as_f64(), 1e-10));
    out.push(Check::le("pvm_multiplicative", (&pa * &pb - &pab).norm().as_f64(), 1e-10));
}

pub fn run<T: Real>(inp: &SelfTestInput<'_, T>) -> Result<SelfTestReport> {
    let c = inp.crystal;
    let f = inp.frame;
    let mut checks = Vec::new();

    checks.push(Check::le("lattice_duality", c.lattice.duality_residual().as_f64(), 1e-12));
    let fiber = c.fiber(f.k_star)?;
    checks.push(Check::le("fiber_eigen_residual", fiber.residual().as_f64(), 1e-10));

    let driven = DrivenFiber::new(&fiber, inp.drive, inp.eps, f.e_star, SignConvention::Standard);
    let u = driven.propagate(T::zero(), driven.period(), inp.steps_per_period)?;
    checks.push(Check::le("propagator_unitarity", unitarity_defect(&u).as_f64(), 1e-10));
    let mono = Monodromy::from_matrix(f.k_star, u, driven.period())?;
    checks.push(Check::le("monodromy_reconstruction", mono.reconstruction_error().as_f64(), 1e-10));
    pvm_checks(&mono, &mut checks);

    // Centering on an arc of width π/2 around the exponent of the target band.
    let nu = mono.exponents[f.band.min(mono.exponents.len() - 1)];
    let arc = Arc::symmetric(T::frac_pi_4());
    let arc = Arc { start: arc.start + nu, ..arc };
    let v = CVec::<T>::from_fn(mono.matrix.nrows(), |i, _| cplx(T::one(), T::of_usize(i) * T::lit(0.1)));
    let (eta, bound) = centering_residual(&mono, &arc, &v);
    checks.push(Check::le("centering_ratio", (eta / bound.max(T::lit(1e-300))).as_f64(), 1.0 + 1e-10));

    // Window projection and synthesis on an anchored grid.
    let h = T::lit(0.25);
    let d0 = T::one();
    let grid = anchored_grid(c.dim(), f.k_star, inp.eps, h, d0)?;
    let bundle = FiberBundle::build(c, Shared::new(grid))?;
    let env = Envelope::random(c.dim(), d0, h, f.n(), inp.seed)?;
    let state = synthesize_bl(&env, f, &bundle)?;
    let rel = ((state.norm() - env.norm()) / env.norm()).abs();
    checks.push(Check::le("synthesis_norm", rel.as_f64(), 1e-10));
    let window = WindowSpec::new(f.k_star, f.e_star, inp.eps, T::one())?;
    let p1 = project_p0(&state, &bundle, &window)?;
    let p2 = project_p0(&p1, &bundle, &window)?;
    checks.push(Check::le("window_idempotent", p2.sub(&p1).norm().as_f64(), 1e-12));
    let orth = crate::scalar::cabs(state.sub(&p1).inner(&p1));
    checks.push(Check::le("window_orthogonal", orth.as_f64() / env.norm().as_f64().powi(2), 1e-12));

    let d = matched_drive(inp.drive, inp.eps);
    let worst = unitarity_sweep(inp.model, c.dim(), T::lit(0.25), &d, 16, inp.seed, crate::effective::DEFAULT_EFFECTIVE_STEPS)?;
    checks.push(Check::le("effective_unitarity", worst.as_f64(), 1e-10));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(SelfTestReport { checks, all_pass })
}
