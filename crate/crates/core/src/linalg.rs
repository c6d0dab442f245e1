//! Dense complex linear algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cabs, carg, cis, cplx, Cplx, Real};

pub type CMat<T> = DMatrix<Cplx<T>>;
pub type CVec<T> = DVector<Cplx<T>>;

/// Eigenpairs of a Hermitian matrix, ascending, with phase-fixed columns.
#[derive(Clone, Debug)]
pub struct HermEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: CMat<T>,
}

/// Rotates each column so that its largest-magnitude entry is real and positive.
/// Entries within a relative 1e-10 of the maximum count as ties; the lowest index wins.
pub fn phase_fix<T: Real>(v: &mut CMat<T>) {
    let rel = T::lit(1.0 - 1e-10);
    for mut col in v.column_iter_mut() {
        let mut max = T::zero();
        for z in col.iter() {
            max = max.max(cabs(*z));
        }
        if max == T::zero() {
            continue;
        }
        let pivot = col.iter().position(|z| cabs(*z) >= max * rel).unwrap_or(0);
        let z = col[pivot];
        let rot = z.conj() / cabs(z);
        for x in col.iter_mut() {
            *x *= rot;
        }
    }
}

/// Hermitian eigendecomposition, sorted ascending and phase fixed.
/// Only the Hermitian part of `h` is used.
pub fn herm_eigen<T: Real>(h: &CMat<T>) -> Result<HermEigen<T>> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}", n, h.ncols())));
    }
    if n == 0 {
        return Ok(HermEigen { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let hs = hermitian_part(h);
    let eig = SymmetricEigen::try_new(hs, T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.iter().any(|&i| !eig.eigenvalues[i].is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    phase_fix(&mut vectors);
    Ok(HermEigen { values, vectors })
}

pub fn hermitian_part<T: Real>(h: &CMat<T>) -> CMat<T> {
    let half = cplx(T::lit(0.5), T::zero());
    (h + h.adjoint()) * half
}

/// `V diag(f(lambda)) V*`.
pub fn spectral_map<T: Real>(eig: &HermEigen<T>, f: impl Fn(T) -> Cplx<T>) -> CMat<T> {
    let mut scaled = eig.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let s = f(eig.values[j]);
        for x in col.iter_mut() {
            *x *= s;
        }
    }
    scaled * eig.vectors.adjoint()
}

/// `exp(-i h tau)` for Hermitian `h`; unitary to machine precision.
pub fn expm_hermitian<T: Real>(h: &CMat<T>, tau: T) -> Result<CMat<T>> {
    if h.nrows() == 2 {
        return Ok(expm_hermitian_2x2(h, tau));
    }
    let eig = herm_eigen(h)?;
    Ok(spectral_map(&eig, |l| cis(-l * tau)))
}

/// Closed form for `h = h₀I + a·σ`: `e^{−ih₀τ}(cos(|a|τ) I − i sin(|a|τ)/|a| · a·σ)`.
fn expm_hermitian_2x2<T: Real>(h: &CMat<T>, tau: T) -> CMat<T> {
    let half = T::lit(0.5);
    let h0 = (h[(0, 0)].re + h[(1, 1)].re) * half;
    let az = (h[(0, 0)].re - h[(1, 1)].re) * half;
    let off = (h[(0, 1)] + h[(1, 0)].conj()) * half;
    let r = (az * az + off.norm_sqr()).sqrt();
    let (c, s) = if r > T::zero() { ((r * tau).cos(), (r * tau).sin() / r) } else { (T::one(), tau) };
    let ph = cis(-h0 * tau);
    let mis = cplx(T::zero(), -s);
    let mut u = CMat::<T>::zeros(2, 2);
    u[(0, 0)] = ph * (cplx(c, T::zero()) + mis * az);
    u[(1, 1)] = ph * (cplx(c, T::zero()) - mis * az);
    u[(0, 1)] = ph * mis * off;
    u[(1, 0)] = ph * mis * off.conj();
    u
}

/// `exp(-i tau diag(d))`.
pub fn expm_diag<T: Real>(d: &[T], tau: T) -> CMat<T> {
    let v: Vec<Cplx<T>> = d.iter().map(|&x| cis(-x * tau)).collect();
    CMat::from_diagonal(&CVec::from_vec(v))
}

/// `‖U*U − I‖_F`.
pub fn unitarity_defect<T: Real>(u: &CMat<T>) -> T {
    let n = u.ncols();
    (u.adjoint() * u - CMat::<T>::identity(n, n)).norm()
}

/// `‖P² − P‖_F + ‖P − P*‖_F`.
pub fn projector_defect<T: Real>(p: &CMat<T>) -> T {
    (p * p - p).norm() + (p - p.adjoint()).norm()
}

/// Eigendecomposition of a unitary matrix: multipliers on the unit circle and
/// an orthonormal eigenbasis (columns).
#[derive(Clone, Debug)]
pub struct UnitaryEigen<T: Real> {
    pub multipliers: Vec<Cplx<T>>,
    pub vectors: CMat<T>,
}

/// Unitary eigendecomposition through a Cayley transform.
///
/// A point `w` of the unit circle far from the spectrum is chosen from rough Schur
/// phases, and `H = i(w + M)(w − M)^{-1}` — Hermitian with the same eigenvectors —
/// is diagonalized by the Hermitian solver. This keeps degenerate clusters exactly
/// orthonormal, which a plain complex Schur form does not. Multipliers are the
/// Rayleigh quotients `v*Mv`, projected onto the circle.
pub fn unitary_eigen<T: Real>(m: &CMat<T>) -> Result<UnitaryEigen<T>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(UnitaryEigen { multipliers: vec![], vectors: CMat::zeros(0, 0) });
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut phases: Vec<T> = (0..n).map(|i| carg(t[(i, i)])).collect();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut best_gap = -T::one();
    let mut centre = T::zero();
    for i in 0..n {
        let a = phases[i];
        let b = if i + 1 < n { phases[i + 1] } else { phases[0] + T::two_pi() };
        if b - a > best_gap {
            best_gap = b - a;
            centre = (a + b) * T::lit(0.5);
        }
    }
    let w = cis(centre);
    let id = CMat::<T>::identity(n, n);
    let wm = &id * w;
    let inv = (&wm - m)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("Cayley transform is singular".into()))?;
    let h = (&wm + m) * inv * cplx(T::zero(), T::one());
    let eig = herm_eigen(&h)?;
    let vectors = eig.vectors;
    let multipliers = (0..n)
        .map(|j| {
            let c = vectors.column(j);
            let z = c.dotc(&(m * c));
            let r = cabs(z);
            if r > T::zero() {
                z / r
            } else {
                z
            }
        })
        .collect();
    Ok(UnitaryEigen { multipliers, vectors })
}

/// Random complex matrix with standard normal entries (used by tests and probes).
pub fn random_cmat<T: Real, R: rand::Rng>(rng: &mut R, r: usize, c: usize) -> CMat<T> {
    use rand_distr::{Distribution, StandardNormal};
    CMat::from_fn(r, c, |_, _| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        cplx(T::lit(a), T::lit(b))
    })
}

/// Random Haar-ish unitary from the QR factor of a Gaussian matrix.
pub fn random_unitary<T: Real, R: rand::Rng>(rng: &mut R, n: usize) -> CMat<T> {
    let g = random_cmat::<T, R>(rng, n, n);
    g.qr().q()
}
