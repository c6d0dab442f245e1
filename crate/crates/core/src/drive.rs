//! Time-periodic forcing `A(T)` as a finite, zero-mean Fourier series, and its exact
//! antiderivative `h(T)`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Vec2;
use crate::scalar::{cis, cplx, Cplx, Real};

/// One harmonic as it appears in a config: `m ≠ 0` with the complex vector `re + i·im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSpec {
    pub m: i32,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    pub period: f64,
    #[serde(default = "default_scaling")]
    pub scaling: u8,
    #[serde(default)]
    pub harmonics: Vec<HarmonicSpec>,
}

fn default_scaling() -> u8 {
    1
}

/// Coefficient `a_m` for `m > 0`; `a_{−m} = conj(a_m)` is implied.
#[derive(Clone, Debug, PartialEq)]
pub struct Harmonic<T: Real> {
    pub m: u32,
    pub a: [Cplx<T>; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrivingProfile<T: Real> {
    pub dim: usize,
    pub period: T,
    /// Exponent `a` in `ε^a A(ε^a t)`.
    pub scaling: u8,
    pub harmonics: Vec<Harmonic<T>>,
}

impl<T: Real> DrivingProfile<T> {
    pub fn zero(dim: usize, period: T, scaling: u8) -> Self {
        DrivingProfile { dim, period, scaling, harmonics: vec![] }
    }

    /// Builds a profile from `(m, a_m)` pairs. Both `m` and `−m` may be listed only
    /// when they are complex conjugates; `m = 0` is rejected (zero mean is exact).
    pub fn new(dim: usize, period: T, scaling: u8, pairs: &[(i32, [Cplx<T>; 2])]) -> Result<Self> {
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::InvalidInput("drive period must be positive".into()));
        }
        if !(1..=2).contains(&scaling) {
            return Err(Error::InvalidInput(format!("scaling exponent must be 1 or 2, got {scaling}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("drive dimension must be 1 or 2, got {dim}")));
        }
        let mut harmonics: Vec<Harmonic<T>> = Vec::new();
        for &(m, a) in pairs {
            if m == 0 {
                return Err(Error::InvalidInput("drive harmonic m = 0 breaks the zero-mean requirement".into()));
            }
            if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput("non-finite drive coefficient".into()));
            }
            if dim == 1 && a[1] != Cplx::default() {
                return Err(Error::InvalidInput("1D drive with a nonzero second component".into()));
            }
            let (mm, aa) = if m > 0 { (m as u32, a) } else { ((-m) as u32, [a[0].conj(), a[1].conj()]) };
            match harmonics.iter().find(|h| h.m == mm) {
                Some(h) => {
                    let d = (h.a[0] - aa[0]).norm_sqr() + (h.a[1] - aa[1]).norm_sqr();
                    if d > T::lit(1e-24) {
                        return Err(Error::InvalidInput(format!(
                            "harmonics ±{mm} are not complex conjugates: A would not be real"
                        )));
                    }
                }
                None => harmonics.push(Harmonic { m: mm, a: aa }),
            }
        }
        harmonics.sort_by_key(|h| h.m);
        Ok(DrivingProfile { dim, period, scaling, harmonics })
    }

    pub fn from_spec(spec: &DriveSpec, dim: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for h in &spec.harmonics {
            if h.re.len() != dim || !(h.im.is_empty() || h.im.len() == dim) {
                return Err(Error::InvalidInput(format!(
                    "harmonic m = {} has components of the wrong length for dimension {dim}",
                    h.m
                )));
            }
            let mut a = [Cplx::default(); 2];
            for i in 0..dim {
                let im = h.im.get(i).copied().unwrap_or(0.0);
                a[i] = cplx(T::lit(h.re[i]), T::lit(im));
            }
            pairs.push((h.m, a));
        }
        Self::new(dim, T::lit(spec.period), spec.scaling, &pairs)
    }

    pub fn is_zero(&self) -> bool {
        self.harmonics.iter().all(|h| h.a.iter().all(|z| *z == Cplx::default()))
    }

    pub fn omega(&self) -> T {
        T::two_pi() / self.period
    }

    /// Same profile with all coefficients multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for h in &mut out.harmonics {
            h.a = [h.a[0] * s, h.a[1] * s];
        }
        out
    }

    /// `e^{i ω m T}` with the phase reduced modulo the period first, so that
    /// whole periods give exactly 1.
    fn phase(&self, m: i64, t: T) -> Cplx<T> {
        let x = T::of_i32(m as i32) * t / self.period;
        let frac = x - x.floor();
        cis(T::two_pi() * frac)
    }

    /// `A(T)`.
    pub fn eval(&self, t: T) -> Vec2<T> {
        let mut out = Vec2::zeros();
        for h in &self.harmonics {
            let e = self.phase(h.m as i64, t);
            for i in 0..self.dim {
                out[i] += (h.a[i] * e).re * T::lit(2.0);
            }
        }
        out
    }

    /// `h(T) = ∫_0^T A`, exact term by term.
    pub fn integral(&self, t: T) -> Vec2<T> {
        let mut out = Vec2::zeros();
        let w = self.omega();
        for h in &self.harmonics {
            let e = self.phase(h.m as i64, t) - cplx(T::one(), T::zero());
            let denom = cplx(T::zero(), w * T::of_i32(h.m as i32));
            for i in 0..self.dim {
                out[i] += (h.a[i] * e / denom).re * T::lit(2.0);
            }
        }
        out
    }

    /// `∫_0^T (ξ + A)ᵀ S (ξ + A) dT'` for a real symmetric `S`, in closed form.
    pub fn quadratic_integral(&self, s: &Matrix2<T>, xi: Vec2<T>, t: T) -> T {
        let lin = self.integral(t);
        let mut total = xi.dot(&(s * xi)) * t + (s * xi).dot(&lin) * T::lit(2.0);
        // Signed harmonics: (p, a_p) with a_{−p} = conj(a_p).
        let mut signed: Vec<(i64, [Cplx<T>; 2])> = Vec::new();
        for h in &self.harmonics {
            signed.push((h.m as i64, h.a));
            signed.push((-(h.m as i64), [h.a[0].conj(), h.a[1].conj()]));
        }
        let w = self.omega();
        let mut acc = Cplx::<T>::default();
        for (p, ap) in &signed {
            for (q, aq) in &signed {
                let mut form = Cplx::<T>::default();
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        form += ap[i] * aq[j] * s[(i, j)];
                    }
                }
                let r = p + q;
                let int = if r == 0 {
                    cplx(t, T::zero())
                } else {
                    (self.phase(r, t) - cplx(T::one(), T::zero())) / cplx(T::zero(), w * T::of_i32(r as i32))
                };
                acc += form * int;
            }
        }
        total += acc.re;
        total
    }

    /// Largest `‖A(T)‖` over a sample of the period (used for safety margins).
    pub fn max_norm(&self) -> T {
        let mut m = T::zero();
        for h in &self.harmonics {
            m += (h.a[0].norm_sqr() + h.a[1].norm_sqr()).sqrt() * T::lit(2.0);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Cplx<f64> {
        cplx(re, im)
    }

    fn cosine() -> DrivingProfile<f64> {
        DrivingProfile::new(1, 2.0 * PI, 1, &[(1, [c(0.5, 0.0), c(0.0, 0.0)])]).unwrap()
    }

    fn circular() -> DrivingProfile<f64> {
        DrivingProfile::new(2, 2.0 * PI, 1, &[(1, [c(0.5, 0.0), c(0.0, -0.5)])]).unwrap()
    }

    #[test]
    fn cosine_drive_and_integral() {
        let d = cosine();
        for t in [0.0, 0.3, 1.7, 5.0] {
            assert!((d.eval(t).x - f64::cos(t)).abs() < 1e-14);
            assert!((d.integral(t).x - f64::sin(t)).abs() < 1e-14);
        }
        assert_eq!(d.integral(2.0 * PI).x, 0.0);
    }

    #[test]
    fn circular_drive_and_integral() {
        let d = circular();
        for t in [0.0, 0.3, 1.7, 5.0] {
            let a = d.eval(t);
            assert!((a.x - t.cos()).abs() < 1e-14 && (a.y - t.sin()).abs() < 1e-14);
            let h = d.integral(t);
            assert!((h.x - t.sin()).abs() < 1e-14 && (h.y - (1.0 - t.cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_drive_is_zero() {
        let d = DrivingProfile::<f64>::zero(2, 1.0, 1);
        assert_eq!(d.eval(0.4), Vec2::zeros());
        assert_eq!(d.integral(0.4), Vec2::zeros());
        assert!(d.is_zero());
    }

    #[test]
    fn rejects_mean_and_non_real() {
        assert!(DrivingProfile::new(1, 1.0, 1, &[(0, [c(1.0, 0.0), c(0.0, 0.0)])]).is_err());
        let bad = [(1, [c(1.0, 1.0), c(0.0, 0.0)]), (-1, [c(1.0, 1.0), c(0.0, 0.0)])];
        assert!(DrivingProfile::new(1, 1.0, 1, &bad).is_err());
        let good = [(1, [c(1.0, 1.0), c(0.0, 0.0)]), (-1, [c(1.0, -1.0), c(0.0, 0.0)])];
        assert_eq!(DrivingProfile::new(1, 1.0, 1, &good).unwrap().harmonics.len(), 1);
        assert!(DrivingProfile::new(1, 1.0, 3, &[]).is_err());
    }

    #[test]
    fn quadratic_integral_matches_quadrature() {
        let d = DrivingProfile::new(
            2,
            1.3,
            1,
            &[(1, [c(0.4, -0.2), c(0.1, 0.3)]), (3, [c(-0.2, 0.05), c(0.0, 0.25)])],
        )
        .unwrap();
        let s = Matrix2::new(1.2, -0.3, -0.3, 0.7);
        let xi = Vec2::new(0.3, -0.8);
        for t in [0.37, 1.3, 2.9] {
            let n = 20_000;
            let dt = t / n as f64;
            let mut q = 0.0;
            for j in 0..n {
                let v = xi + d.eval((j as f64 + 0.5) * dt);
                q += v.dot(&(s * v)) * dt;
            }
            let exact = d.quadratic_integral(&s, xi, t);
            assert!((q - exact).abs() < 1e-7 * (1.0 + exact.abs()), "{q} vs {exact}");
        }
    }

    #[test]
    fn spec_parses() {
        let spec: DriveSpec = toml::from_str("period = 6.283185307179586\n[[harmonics]]\nm = 1\nre = [0.5]\n").unwrap();
        let d = DrivingProfile::<f64>::from_spec(&spec, 1).unwrap();
        assert!((d.eval(0.0).x - 1.0).abs() < 1e-14);
        assert!(toml::from_str::<DriveSpec>("period = 1.0\nbogus = 1\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn drive_is_real_periodic_and_differentiates(
            t in -20.0f64..20.0, per in 0.2f64..8.0,
            a1 in -1.0f64..1.0, b1 in -1.0f64..1.0, a2 in -1.0f64..1.0, b2 in -1.0f64..1.0,
        ) {
            let d = DrivingProfile::new(2, per, 1, &[(1, [c(a1, b1), c(a2, 0.0)]), (2, [c(0.0, b2), c(b1, a1)])]).unwrap();
            proptest::prop_assert!((d.eval(t + per) - d.eval(t)).norm() < 1e-12);
            proptest::prop_assert!(d.integral(per).norm() < 1e-14);
            let dl = 1e-4;
            let fd = (d.integral(t + dl) - d.integral(t - dl)) / (2.0 * dl);
            // Truncation error δ²|A'''|/6, with |A'''| ≤ Σ 2|a_m|(ωm)³ and |a_m| ≤ √2 here.
            let w = 2.0 * PI / per;
            let third = 2.0 * 2f64.sqrt() * (w.powi(3) + 8.0 * w.powi(3));
            proptest::prop_assert!((fd - d.eval(t)).norm() < dl * dl * third / 6.0 + 1e-9);
        }
    }
}
