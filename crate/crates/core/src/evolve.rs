//! Time stepping of the driven fiber equation and monodromy operators.
//!
//! On a plane wave `e^{i(k+G)·x}` the drive term `2iε^a A(ε^a t)·∇` acts as the
//! diagonal `−2ε^a A(ε^a t)·(k+G)`. The spatially constant `ε^{2a}|A|²` that
//! completing the square would add is a pure global phase and is left out.

use std::cmp::Ordering;

use crate::bloch::FiberSystem;
use crate::drive::DrivingProfile;
use crate::error::Result;
use crate::linalg::{expm_hermitian, unitary_eigen, CMat};
use crate::scalar::{carg, cplx, wrap_angle, Cplx, Real};

/// Sign of `H⁰` in the driven generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `H⁰ + 2iε^a A·∇`.
    #[default]
    Standard,
    /// `−H⁰ + 2iε^a A·∇`, the alternative printed form, kept for comparison runs.
    Flipped,
}

impl SignConvention {
    pub fn sigma<T: Real>(self) -> T {
        match self {
            SignConvention::Standard => T::one(),
            SignConvention::Flipped => -T::one(),
        }
    }
}

pub const MIN_STEPS_PER_PERIOD: usize = 64;

/// A fiber together with the drive acting on it.
#[derive(Clone, Debug)]
pub struct DrivenFiber<'a, T: Real> {
    pub fiber: &'a FiberSystem<T>,
    pub drive: &'a DrivingProfile<T>,
    pub eps: T,
    /// `E⋆`, subtracted from `H(k)` before any driven run.
    pub e_shift: T,
    pub sign: SignConvention,
    h0: CMat<T>,
}

impl<'a, T: Real> DrivenFiber<'a, T> {
    pub fn new(
        fiber: &'a FiberSystem<T>,
        drive: &'a DrivingProfile<T>,
        eps: T,
        e_shift: T,
        sign: SignConvention,
    ) -> Self {
        let n = fiber.dim();
        let sigma = cplx(sign.sigma::<T>(), T::zero());
        let h0 = (&fiber.h - CMat::<T>::identity(n, n) * cplx(e_shift, T::zero())) * sigma;
        DrivenFiber { fiber, drive, eps, e_shift, sign, h0 }
    }

    pub fn eps_a(&self) -> T {
        self.eps.powi(self.drive.scaling as i32)
    }

    /// Driven period `T_per ε^{−a}`.
    pub fn period(&self) -> T {
        self.drive.period / self.eps_a()
    }

    /// `σ(H(k) − E⋆) + diag(−2ε^a A(ε^a t)·(k+G))`.
    pub fn generator(&self, t: T) -> CMat<T> {
        let ea = self.eps_a();
        let a = self.drive.eval(ea * t) * ea;
        let mut h = self.h0.clone();
        for (i, kg) in self.fiber.kg.iter().enumerate() {
            h[(i, i)] -= cplx(T::lit(2.0) * a.dot(kg), T::zero());
        }
        h
    }

    /// Exponential-midpoint propagator `U(t1, t0)` with `n_steps` equal steps.
    pub fn propagate(&self, t0: T, t1: T, n_steps: usize) -> Result<CMat<T>> {
        let n = self.fiber.dim();
        let steps = n_steps.max(1);
        let dt = (t1 - t0) / T::of_usize(steps);
        if self.drive.is_zero() {
            return expm_hermitian(&self.h0, t1 - t0);
        }
        let mut u = CMat::<T>::identity(n, n);
        for j in 0..steps {
            let tm = t0 + dt * (T::of_usize(j) + T::lit(0.5));
            u = expm_hermitian(&self.generator(tm), dt)? * u;
        }
        Ok(u)
    }

    pub fn monodromy(&self, n_steps: usize) -> Result<Monodromy<T>> {
        if n_steps < MIN_STEPS_PER_PERIOD && !self.drive.is_zero() {
            log::warn!("{n_steps} steps per period under-resolve the drive (minimum {MIN_STEPS_PER_PERIOD})");
        }
        let period = self.period();
        let m = self.propagate(T::zero(), period, n_steps)?;
        Monodromy::from_matrix(self.fiber.k, m, period)
    }
}

/// Unitary one-period map on a fiber with its multiplier decomposition.
#[derive(Clone, Debug)]
pub struct Monodromy<T: Real> {
    pub k: crate::lattice::Vec2<T>,
    pub matrix: CMat<T>,
    pub multipliers: Vec<Cplx<T>>,
    /// Orthonormal eigenvectors (columns), aligned with `exponents`.
    pub vectors: CMat<T>,
    /// `θ_j ∈ (−π, π]` with `z_j = e^{−iθ_j}`, ascending.
    pub exponents: Vec<T>,
    /// `T_per ε^{−a}`.
    pub period: T,
}

impl<T: Real> Monodromy<T> {
    pub fn from_matrix(k: crate::lattice::Vec2<T>, matrix: CMat<T>, period: T) -> Result<Self> {
        let eig = unitary_eigen(&matrix)?;
        let n = matrix.nrows();
        let theta: Vec<T> = eig.multipliers.iter().map(|&z| wrap_angle(-carg(z))).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let tie = T::lit(1e-12);
        order.sort_by(|&a, &b| {
            let d = theta[a] - theta[b];
            if d.abs() > tie {
                return d.partial_cmp(&T::zero()).unwrap_or(Ordering::Equal);
            }
            let (va, vb) = (eig.vectors.column(a), eig.vectors.column(b));
            for i in 0..n {
                for (x, y) in [(va[i].re, vb[i].re), (va[i].im, vb[i].im)] {
                    if (x - y).abs() > tie {
                        return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
                    }
                }
            }
            Ordering::Equal
        });
        let mut vectors = CMat::zeros(n, n);
        for (j, &i) in order.iter().enumerate() {
            vectors.set_column(j, &eig.vectors.column(i));
        }
        Ok(Monodromy {
            k,
            matrix,
            multipliers: order.iter().map(|&i| eig.multipliers[i]).collect(),
            vectors,
            exponents: order.iter().map(|&i| theta[i]).collect(),
            period,
        })
    }

    /// Quasi-energies `ν = θ / T_per^ε`.
    pub fn quasi_energies(&self) -> Vec<T> {
        self.exponents.iter().map(|&t| t / self.period).collect()
    }

    /// `max_j ‖M v_j − z_j v_j‖`.
    pub fn eigen_residual(&self) -> T {
        (0..self.exponents.len())
            .map(|j| {
                let v = self.vectors.column(j);
                (&self.matrix * v - v * self.multipliers[j]).norm()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `‖Σ z_j v_j v_j* − M‖_F`.
    pub fn reconstruction_error(&self) -> T {
        let mut acc = CMat::<T>::zeros(self.matrix.nrows(), self.matrix.ncols());
        for j in 0..self.exponents.len() {
            let v = self.vectors.column(j);
            acc += (&v * v.adjoint()) * self.multipliers[j];
        }
        (acc - &self.matrix).norm()
    }
}

pub fn fiber_generator<T: Real>(
    fiber: &FiberSystem<T>,
    drive: &DrivingProfile<T>,
    eps: T,
    t: T,
) -> CMat<T> {
    DrivenFiber::new(fiber, drive, eps, T::zero(), SignConvention::Standard).generator(t)
}

pub fn propagate<T: Real>(
    fiber: &FiberSystem<T>,
    drive: &DrivingProfile<T>,
    eps: T,
    t0: T,
    t1: T,
    n_steps: usize,
) -> Result<CMat<T>> {
    DrivenFiber::new(fiber, drive, eps, T::zero(), SignConvention::Standard).propagate(t0, t1, n_steps)
}

pub fn monodromy<T: Real>(
    fiber: &FiberSystem<T>,
    drive: &DrivingProfile<T>,
    eps: T,
    n_steps: usize,
) -> Result<Monodromy<T>> {
    DrivenFiber::new(fiber, drive, eps, T::zero(), SignConvention::Standard).monodromy(n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{hamiltonian, Crystal};
    use crate::lattice::{make_lattice, plane_wave_basis, potential_coefficients, CosineTerm, PotentialSpec, Vec2};
    use crate::linalg::unitarity_defect;
    use crate::scalar::circular_distance;
    use std::f64::consts::PI;

    fn crystal(amp: f64) -> Crystal<f64> {
        let l = make_lattice(&[vec![1.0]]).unwrap();
        let b = plane_wave_basis(&l, 4.5 * 2.0 * PI, 64).unwrap();
        let spec = PotentialSpec::CosineSum { terms: vec![CosineTerm { m: vec![1], amplitude: amp, phase: 0.0 }] };
        let v = potential_coefficients(&spec, &l, &b).unwrap();
        Crystal::new(l, b, v)
    }

    fn cos_drive(a0: f64, per: f64) -> DrivingProfile<f64> {
        DrivingProfile::new(1, per, 1, &[(1, [cplx(a0 / 2.0, 0.0), cplx(0.0, 0.0)])]).unwrap()
    }

    #[test]
    fn undriven_generator_is_hamiltonian() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(0.4, 0.0)).unwrap();
        let d = DrivingProfile::zero(1, 1.0, 1);
        for t in [0.0, 0.7, 3.0] {
            assert_eq!(fiber_generator(&f, &d, 0.1, t), f.h);
        }
    }

    #[test]
    fn free_generator_diagonal() {
        let c = crystal(0.0);
        let f = c.fiber(Vec2::zeros()).unwrap();
        let d = cos_drive(1.0, 2.0 * PI);
        let h = fiber_generator(&f, &d, 0.1, 0.0);
        for (i, g) in c.basis.gvecs.iter().enumerate() {
            let want = g.x * g.x - 0.2 * g.x;
            assert!((h[(i, i)].re - want).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_is_a_shifted_gauge() {
        let c = crystal(1.0);
        let k = Vec2::new(0.9, 0.0);
        let f = c.fiber(k).unwrap();
        let d = cos_drive(0.8, 2.0);
        let eps = 0.1;
        for t in [0.0, 3.3, 11.0] {
            let a = d.eval(eps * t) * eps;
            let shifted = hamiltonian(&c.potential, &c.basis, k - a);
            let n = f.dim();
            let want = shifted - CMat::<f64>::identity(n, n) * cplx(a.norm_squared(), 0.0);
            assert!((fiber_generator(&f, &d, eps, t) - want).norm() < 1e-11);
        }
    }

    #[test]
    fn autonomous_propagation_is_exact() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(0.4, 0.0)).unwrap();
        let d = DrivingProfile::zero(1, 1.0, 1);
        let exact = expm_hermitian(&f.h, 0.37).unwrap();
        for n in [1, 5, 40] {
            assert!((propagate(&f, &d, 0.1, 0.2, 0.57, n).unwrap() - &exact).norm() < 1e-12);
        }
    }

    #[test]
    fn undriven_exponents_are_band_phases() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(1.1, 0.0)).unwrap();
        let d = DrivingProfile::zero(1, 0.7, 1);
        let m = monodromy(&f, &d, 0.1, 64).unwrap();
        assert!(unitarity_defect(&m.matrix) < 1e-10);
        for &e in &f.energies[..4] {
            let want = wrap_angle(e * m.period);
            assert!(m.exponents.iter().any(|&t| circular_distance(t, want) < 1e-8));
        }
        assert!(m.exponents.windows(2).all(|w| w[0] <= w[1]));
        assert!(m.eigen_residual() < 1e-8);
    }

    #[test]
    fn resonant_free_period_gives_identity() {
        let c = crystal(0.0);
        let f = c.fiber(Vec2::zeros()).unwrap();
        // E = (2πm)²; T = 1/(2π) makes E·T = 2π m² ∈ 2πZ.
        let d = DrivingProfile::zero(1, 1.0 / (2.0 * PI) * 0.1, 1);
        let m = monodromy(&f, &d, 0.1, 1).unwrap();
        assert!((&m.matrix - CMat::<f64>::identity(9, 9)).norm() < 1e-9);
    }

    #[test]
    fn driven_monodromy_converges_at_second_order() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(0.25 * 2.0 * PI, 0.0)).unwrap();
        let d = cos_drive(1.0, 1.0);
        // Coarse steps alias the fast band phases; the asymptotic regime starts near 800 steps.
        let slow = DrivenFiber::new(&f, &d, 0.5, f.energies[0], SignConvention::Standard);
        let n0 = 800;
        let reference = slow.propagate(0.0, slow.period(), n0 * 8).unwrap();
        let e1 = (slow.propagate(0.0, slow.period(), n0).unwrap() - &reference).norm();
        let e2 = (slow.propagate(0.0, slow.period(), 2 * n0).unwrap() - &reference).norm();
        let slope = (e1 / e2).log2();
        assert!((1.8..=2.2).contains(&slope), "slope {slope} ({e1:e}, {e2:e})");

        let dyn_ = DrivenFiber::new(&f, &d, 0.1, f.energies[0], SignConvention::Standard);
        let fine = Monodromy::from_matrix(f.k, dyn_.propagate(0.0, dyn_.period(), 20_000).unwrap(), dyn_.period()).unwrap();
        let coarse = dyn_.monodromy(2000).unwrap();
        for (a, b) in coarse.multipliers.iter().zip(&fine.multipliers) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn composition_law() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(0.3, 0.0)).unwrap();
        let d = cos_drive(0.6, 1.0);
        let u01 = propagate(&f, &d, 0.2, 0.0, 1.0, 50).unwrap();
        let u12 = propagate(&f, &d, 0.2, 1.0, 3.0, 100).unwrap();
        let u02 = propagate(&f, &d, 0.2, 0.0, 3.0, 150).unwrap();
        assert!((u12 * u01 - u02).norm() < 1e-11);
    }

    #[test]
    fn flipped_sign_negates_undriven_exponents() {
        let c = crystal(1.0);
        let f = c.fiber(Vec2::new(0.5, 0.0)).unwrap();
        let d = DrivingProfile::zero(1, 0.3, 1);
        let a = DrivenFiber::new(&f, &d, 0.1, 0.0, SignConvention::Standard).monodromy(1).unwrap();
        let b = DrivenFiber::new(&f, &d, 0.1, 0.0, SignConvention::Flipped).monodromy(1).unwrap();
        for t in &a.exponents {
            assert!(b.exponents.iter().any(|&s| circular_distance(s, -*t) < 1e-9));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn propagators_are_unitary(k in -PI..PI, a0 in 0.0f64..2.0, eps in 0.05f64..0.5, n in 1usize..40) {
            let c = crystal(1.0);
            let f = c.fiber(Vec2::new(k, 0.0)).unwrap();
            let d = cos_drive(a0, 1.0);
            let u = propagate(&f, &d, eps, 0.0, 2.0, n).unwrap();
            proptest::prop_assert!(unitarity_defect(&u) < 1e-12);
            let m = Monodromy::from_matrix(f.k, u, 2.0).unwrap();
            proptest::prop_assert!(m.reconstruction_error() < 1e-10);
            proptest::prop_assert!(m.multipliers.iter().all(|z| (z.norm() - 1.0).abs() < 1e-10));
        }
    }
}
