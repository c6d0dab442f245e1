//! Lattice geometry, Brillouin-zone grids, plane-wave bases and potential coefficients.
//!
//! Vectors are stored as `Vector2`; one-dimensional lattices use the `x` slot and
//! keep `y = 0`. Integer coordinates are `[i32; 2]` with the second entry zero in 1D.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, Cplx, Real};

pub type Vec2<T> = Vector2<T>;
pub type Coord = [i32; 2];

#[derive(Clone, Debug)]
pub struct Lattice<T: Real> {
    pub dim: usize,
    pub primitive: Vec<Vec2<T>>,
    pub dual: Vec<Vec2<T>>,
    pub cell_volume: T,
}

impl<T: Real> Lattice<T> {
    /// Volume of the Brillouin zone, `(2π)^n / |Ω|`.
    pub fn bz_volume(&self) -> T {
        T::two_pi().powi(self.dim as i32) / self.cell_volume
    }

    /// `Σ m_i b_i`.
    pub fn dual_point(&self, m: Coord) -> Vec2<T> {
        let mut g = self.dual[0] * T::of_i32(m[0]);
        if self.dim == 2 {
            g += self.dual[1] * T::of_i32(m[1]);
        }
        g
    }

    /// `Σ t_i b_i` for fractional coordinates.
    pub fn frac_to_k(&self, t: &[T]) -> Vec2<T> {
        let mut k = Vec2::zeros();
        for i in 0..self.dim {
            k += self.dual[i] * t[i];
        }
        k
    }

    pub fn shortest_dual_length(&self) -> T {
        let mut best = self.dual[0].norm();
        if self.dim == 2 {
            for m in [[0, 1], [1, 1], [1, -1]] {
                best = best.min(self.dual_point(m).norm());
            }
        }
        best
    }

    /// `max |b_i · v_j − 2π δ_ij|`.
    pub fn duality_residual(&self) -> T {
        let mut r = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let want = if i == j { T::two_pi() } else { T::zero() };
                r = r.max((self.dual[i].dot(&self.primitive[j]) - want).abs());
            }
        }
        r
    }
}

/// Builds a lattice from its primitive vectors (one per row, each of length `dim`).
pub fn make_lattice<T: Real>(primitive: &[Vec<T>]) -> Result<Lattice<T>> {
    let dim = primitive.len();
    if !(1..=2).contains(&dim) || primitive.iter().any(|v| v.len() != dim) {
        return Err(Error::DegenerateLattice(format!(
            "expected 1 or 2 vectors of matching dimension, got {dim}"
        )));
    }
    if primitive.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateLattice("non-finite component".into()));
    }
    if dim == 1 {
        let a = primitive[0][0];
        if a.abs() <= T::default_epsilon() {
            return Err(Error::DegenerateLattice("zero primitive vector".into()));
        }
        return Ok(Lattice {
            dim,
            primitive: vec![Vec2::new(a, T::zero())],
            dual: vec![Vec2::new(T::two_pi() / a, T::zero())],
            cell_volume: a.abs(),
        });
    }
    let v1 = Vec2::new(primitive[0][0], primitive[0][1]);
    let v2 = Vec2::new(primitive[1][0], primitive[1][1]);
    let rows = Matrix2::new(v1.x, v1.y, v2.x, v2.y);
    let det = rows.determinant();
    if det.abs() <= T::lit(1e-12) * v1.norm() * v2.norm() {
        return Err(Error::DegenerateLattice("primitive vectors are linearly dependent".into()));
    }
    // Rows of B satisfy B Vᵀ = 2π I.
    let b = rows
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateLattice("singular primitive matrix".into()))?
        * T::two_pi();
    Ok(Lattice {
        dim,
        primitive: vec![v1, v2],
        dual: vec![Vec2::new(b[(0, 0)], b[(0, 1)]), Vec2::new(b[(1, 0)], b[(1, 1)])],
        cell_volume: det.abs(),
    })
}

/// Truncated set of dual-lattice vectors, ordered lexicographically by coordinates.
#[derive(Clone, Debug)]
pub struct PlaneWaveBasis<T: Real> {
    pub coords: Vec<Coord>,
    pub gvecs: Vec<Vec2<T>>,
    index: HashMap<Coord, usize>,
}

impl<T: Real> PlaneWaveBasis<T> {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn index_of(&self, m: Coord) -> Option<usize> {
        self.index.get(&m).copied()
    }

    /// Position of `G = 0`.
    pub fn origin(&self) -> usize {
        self.index[&[0, 0]]
    }
}

pub const DEFAULT_MAX_BASIS: usize = 4096;

pub fn plane_wave_basis<T: Real>(
    lattice: &Lattice<T>,
    cutoff: T,
    max_size: usize,
) -> Result<PlaneWaveBasis<T>> {
    if !(cutoff > T::zero()) || !cutoff.is_finite() {
        return Err(Error::InvalidInput("cutoff must be positive and finite".into()));
    }
    // m_i = G·v_i / 2π, so |m_i| ≤ cutoff |v_i| / 2π.
    let bound = |i: usize| -> i32 {
        let b = (cutoff * lattice.primitive[i].norm() / T::two_pi()).floor().as_f64();
        b.min(1e6) as i32
    };
    let m1 = bound(0);
    let m2 = if lattice.dim == 2 { bound(1) } else { 0 };
    let estimate = (2 * m1 as u64 + 1) * (2 * m2 as u64 + 1);
    let slack = T::lit(1e-12) * (T::one() + cutoff);
    let mut coords = Vec::new();
    for i in -m1..=m1 {
        for j in -m2..=m2 {
            let g = lattice.dual_point([i, j]);
            if g.norm() <= cutoff + slack {
                coords.push([i, j]);
                if coords.len() > max_size {
                    return Err(Error::BasisTooLarge { size: estimate as usize, max: max_size });
                }
            }
        }
    }
    coords.sort();
    let gvecs = coords.iter().map(|&m| lattice.dual_point(m)).collect();
    let index = coords.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    Ok(PlaneWaveBasis { coords, gvecs, index })
}

/// One term `2·amplitude·cos(G_m·x + phase)` of a cosine-sum potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub m: Vec<i32>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    CosineSum { terms: Vec<CosineTerm> },
    /// `Σ_j 2·amplitude·cos(g_j·x)` over the three shortest dual vectors of a hexagonal lattice.
    Honeycomb { amplitude: f64 },
}

/// Fourier coefficients `V̂(G)` of a real periodic potential, keyed by coordinates.
#[derive(Clone, Debug, Default)]
pub struct PotentialCoeffs<T: Real> {
    pub coeffs: BTreeMap<Coord, Cplx<T>>,
}

impl<T: Real> PotentialCoeffs<T> {
    pub fn get(&self, m: Coord) -> Cplx<T> {
        self.coeffs.get(&m).copied().unwrap_or_else(Cplx::default)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `V(x) = Σ V̂(G) e^{iG·x}`.
    pub fn eval(&self, lattice: &Lattice<T>, x: Vec2<T>) -> T {
        self.coeffs
            .iter()
            .map(|(&m, &c)| (c * cis(lattice.dual_point(m).dot(&x))).re)
            .fold(T::zero(), |a, b| a + b)
    }

    fn add(&mut self, m: Coord, c: Cplx<T>) {
        let e = self.coeffs.entry(m).or_default();
        *e += c;
    }
}

/// The three dual vectors `b1, b2, −(b1+b2)`; must have equal length.
pub fn honeycomb_vectors<T: Real>(lattice: &Lattice<T>) -> Result<[Coord; 3]> {
    if lattice.dim != 2 {
        return Err(Error::InvalidInput("honeycomb potential needs a 2D lattice".into()));
    }
    let ms = [[1, 0], [0, 1], [-1, -1]];
    let l0 = lattice.dual_point(ms[0]).norm();
    for m in &ms[1..] {
        if (lattice.dual_point(*m).norm() - l0).abs() > T::lit(1e-10) * l0 {
            return Err(Error::InvalidInput(
                "honeycomb potential needs a hexagonal lattice with b1, b2, -(b1+b2) of equal length"
                    .into(),
            ));
        }
    }
    Ok(ms)
}

pub fn potential_coefficients<T: Real>(
    spec: &PotentialSpec,
    lattice: &Lattice<T>,
    basis: &PlaneWaveBasis<T>,
) -> Result<PotentialCoeffs<T>> {
    let mut out = PotentialCoeffs::default();
    match spec {
        PotentialSpec::Zero => {}
        PotentialSpec::CosineSum { terms } => {
            for t in terms {
                if !t.amplitude.is_finite() || !t.phase.is_finite() {
                    return Err(Error::InvalidInput("non-finite potential amplitude".into()));
                }
                if t.m.len() != lattice.dim {
                    return Err(Error::InvalidInput(format!(
                        "cosine term {:?} does not match lattice dimension {}",
                        t.m, lattice.dim
                    )));
                }
                let m = [t.m[0], if lattice.dim == 2 { t.m[1] } else { 0 }];
                if m == [0, 0] {
                    out.add(m, Cplx::new(T::lit(2.0 * t.amplitude * t.phase.cos()), T::zero()));
                    continue;
                }
                let c = cis(T::lit(t.phase)) * T::lit(t.amplitude);
                out.add(m, c);
                out.add([-m[0], -m[1]], c.conj());
            }
        }
        PotentialSpec::Honeycomb { amplitude } => {
            if !amplitude.is_finite() {
                return Err(Error::InvalidInput("non-finite potential amplitude".into()));
            }
            for m in honeycomb_vectors(lattice)? {
                out.add(m, Cplx::new(T::lit(*amplitude), T::zero()));
                out.add([-m[0], -m[1]], Cplx::new(T::lit(*amplitude), T::zero()));
            }
        }
    }
    // Keep only differences that can couple two basis vectors.
    let reach = basis.gvecs.iter().map(|g| g.norm()).fold(T::zero(), |a, b| a.max(b)) * T::lit(2.0);
    out.coeffs.retain(|&m, c| {
        *c != Cplx::default() && lattice.dual_point(m).norm() <= reach * T::lit(1.0 + 1e-12)
    });
    Ok(out)
}

/// Anchored sub-grid metadata: points `k⋆ + ε h m` for integer offsets `m`.
#[derive(Clone, Debug)]
pub struct Anchor<T: Real> {
    pub k_star: Vec2<T>,
    pub eps: T,
    /// Spacing of the envelope momentum grid `ξ = h m`.
    pub h: T,
    pub offsets: Vec<Coord>,
    index: HashMap<Coord, usize>,
}

impl<T: Real> Anchor<T> {
    pub fn index_of(&self, m: Coord) -> Option<usize> {
        self.index.get(&m).copied()
    }

    pub fn xi(&self, j: usize) -> Vec2<T> {
        let m = self.offsets[j];
        Vec2::new(T::of_i32(m[0]), T::of_i32(m[1])) * self.h
    }
}

#[derive(Clone, Debug)]
pub struct BrillouinGrid<T: Real> {
    pub dim: usize,
    pub points: Vec<Vec2<T>>,
    pub weights: Vec<T>,
    pub anchor: Option<Anchor<T>>,
}

impl<T: Real> BrillouinGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// True when both grids carry the same points and weights.
    pub fn same_as(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| a == b)
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a == b)
    }
}

/// Midpoint grid on the parallelepiped `{Σ t_i b_i : t_i ∈ [−1/2, 1/2)}` with `n`
/// points per direction; weights sum to `vol(B)`.
pub fn full_zone_grid<T: Real>(lattice: &Lattice<T>, n: usize) -> Result<BrillouinGrid<T>> {
    if n == 0 {
        return Err(Error::InvalidInput("grid needs at least one point per direction".into()));
    }
    let ts: Vec<T> = (0..n)
        .map(|j| (T::of_usize(j) - T::of_usize(n - 1) * T::lit(0.5)) / T::of_usize(n))
        .collect();
    let mut points = Vec::new();
    if lattice.dim == 1 {
        for &t in &ts {
            points.push(lattice.frac_to_k(&[t]));
        }
    } else {
        for &t1 in &ts {
            for &t2 in &ts {
                points.push(lattice.frac_to_k(&[t1, t2]));
            }
        }
    }
    let w = lattice.bz_volume() / T::of_usize(points.len());
    let weights = vec![w; points.len()];
    Ok(BrillouinGrid { dim: lattice.dim, points, weights, anchor: None })
}

/// Grid `k⋆ + ε h m` over integer offsets with `|h m| ≤ radius` (Cartesian ξ grid);
/// weights `(ε h)^n`. Envelope nodes `ξ = h m` map onto fibers exactly.
pub fn anchored_grid<T: Real>(
    dim: usize,
    k_star: Vec2<T>,
    eps: T,
    h: T,
    radius: T,
) -> Result<BrillouinGrid<T>> {
    if !(eps > T::zero()) || !(h > T::zero()) || !(radius >= T::zero()) {
        return Err(Error::InvalidInput("anchored grid needs eps > 0, h > 0, radius ≥ 0".into()));
    }
    let mmax = (radius / h + T::lit(1e-9)).floor().as_f64() as i32;
    let mut offsets = Vec::new();
    for i in -mmax..=mmax {
        let js = if dim == 2 { -mmax..=mmax } else { 0..=0 };
        for j in js {
            let xi = Vec2::new(T::of_i32(i), T::of_i32(j)) * h;
            if xi.norm() <= radius * T::lit(1.0 + 1e-12) {
                offsets.push([i, j]);
            }
        }
    }
    let w = (eps * h).powi(dim as i32);
    let points = offsets
        .iter()
        .map(|m| k_star + Vec2::new(T::of_i32(m[0]), T::of_i32(m[1])) * (eps * h))
        .collect::<Vec<_>>();
    let weights = vec![w; points.len()];
    let index = offsets.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    Ok(BrillouinGrid {
        dim,
        points,
        weights,
        anchor: Some(Anchor { k_star, eps, h, offsets, index }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn hex() -> Lattice<f64> {
        let s = 3f64.sqrt() / 2.0;
        make_lattice(&[vec![s, 0.5], vec![s, -0.5]]).unwrap()
    }

    #[test]
    fn one_dimensional_dual() {
        let l = make_lattice(&[vec![1.0]]).unwrap();
        assert!((l.dual[0].x - 2.0 * PI).abs() < 1e-15);
        assert_eq!(l.cell_volume, 1.0);
    }

    #[test]
    fn square_dual() {
        let l = make_lattice(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((l.dual[0] - Vec2::new(2.0 * PI, 0.0)).norm() < 1e-14);
        assert!((l.dual[1] - Vec2::new(0.0, 2.0 * PI)).norm() < 1e-14);
    }

    #[test]
    fn hexagonal_dual_solves_linear_system() {
        let l = hex();
        // Independent route: b_i = 2π R v_j / (v_i · R v_j) with R the quarter turn.
        let rot = |v: Vec2<f64>| Vec2::new(-v.y, v.x);
        let b1 = rot(l.primitive[1]) * (2.0 * PI / l.primitive[0].dot(&rot(l.primitive[1])));
        let b2 = rot(l.primitive[0]) * (2.0 * PI / l.primitive[1].dot(&rot(l.primitive[0])));
        assert!((b1 - l.dual[0]).norm() < 1e-12);
        assert!((b2 - l.dual[1]).norm() < 1e-12);
        assert!(l.duality_residual() < 1e-12);
        assert!((l.cell_volume - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_lattice_rejected() {
        let err = make_lattice(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateLattice(_)));
        assert!(make_lattice::<f64>(&[vec![0.0]]).is_err());
    }

    #[test]
    fn basis_counts() {
        let l = make_lattice(&[vec![1.0]]).unwrap();
        let b = plane_wave_basis(&l, 4.5 * 2.0 * PI, 100).unwrap();
        assert_eq!(b.len(), 9);
        assert_eq!(b.coords.first(), Some(&[-4, 0]));
        assert_eq!(b.coords[b.origin()], [0, 0]);
        let tiny = plane_wave_basis(&l, 1.0, 100).unwrap();
        assert_eq!(tiny.len(), 1);
    }

    #[test]
    fn square_basis_matches_brute_force() {
        let l = make_lattice(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let cutoff = 2.0 * PI * 1.5;
        let b = plane_wave_basis(&l, cutoff, 100).unwrap();
        let mut brute = 0;
        for i in -10i32..=10 {
            for j in -10i32..=10 {
                if 2.0 * PI * ((i * i + j * j) as f64).sqrt() <= cutoff {
                    brute += 1;
                }
            }
        }
        assert_eq!(b.len(), brute);
        assert_eq!(b.len(), 9);
    }

    #[test]
    fn basis_size_limit() {
        let l = make_lattice(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let err = plane_wave_basis(&l, 200.0, 50).unwrap_err();
        assert!(matches!(err, Error::BasisTooLarge { .. }));
    }

    #[test]
    fn cosine_coefficients() {
        let l = make_lattice(&[vec![1.0]]).unwrap();
        let b = plane_wave_basis(&l, 30.0, 100).unwrap();
        let spec = PotentialSpec::CosineSum { terms: vec![CosineTerm { m: vec![1], amplitude: 1.0, phase: 0.0 }] };
        let v = potential_coefficients(&spec, &l, &b).unwrap();
        assert_eq!(v.coeffs.len(), 2);
        assert_eq!(v.get([1, 0]), Cplx::new(1.0, 0.0));
        assert_eq!(v.get([-1, 0]), Cplx::new(1.0, 0.0));
        let zero = potential_coefficients(&PotentialSpec::Zero, &l, &b).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn honeycomb_coefficients_match_cell_quadrature() {
        let l = hex();
        let basis = plane_wave_basis(&l, 40.0, 4096).unwrap();
        let v = potential_coefficients(&PotentialSpec::Honeycomb { amplitude: 1.0 }, &l, &basis).unwrap();
        assert_eq!(v.coeffs.len(), 6);
        assert!(v.coeffs.values().all(|c| (c - Cplx::new(1.0, 0.0)).norm() < 1e-15));
        // V̂(G) = |Ω|^{-1} ∫_Ω e^{-iG·x} V(x) dx by midpoint rule on the cell.
        let n = 48;
        for m in [[1, 0], [0, 1], [-1, -1], [1, 1], [2, 0]] {
            let g = l.dual_point(m);
            let mut acc = Cplx::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let s = (i as f64 + 0.5) / n as f64;
                    let t = (j as f64 + 0.5) / n as f64;
                    let x = l.primitive[0] * s + l.primitive[1] * t;
                    acc += cis(-g.dot(&x)) * v.eval(&l, x);
                }
            }
            acc /= (n * n) as f64;
            assert!((acc - v.get(m)).norm() < 1e-12, "{m:?}: {acc}");
        }
    }

    #[test]
    fn full_zone_weights_sum_to_zone_volume() {
        let l = hex();
        let g = full_zone_grid(&l, 7).unwrap();
        assert_eq!(g.len(), 49);
        assert!((g.total_weight() - l.bz_volume()).abs() < 1e-10);
        let l1 = make_lattice::<f64>(&[vec![1.0]]).unwrap();
        let g1 = full_zone_grid(&l1, 11).unwrap();
        assert!(g1.points.iter().all(|k| k.x.abs() <= PI));
        assert!(g1.points.iter().any(|k| k.x == 0.0));
    }

    #[test]
    fn anchored_grid_hits_envelope_nodes() {
        let ks: Vec2<f64> = Vec2::new(0.3, 0.0);
        let g = anchored_grid::<f64>(1, ks, 0.05, 0.1, 1.0).unwrap();
        let a = g.anchor.as_ref().unwrap();
        assert_eq!(g.len(), 21);
        let j = a.index_of([4, 0]).unwrap();
        assert!((g.points[j].x - (0.3 + 0.05 * 0.4)).abs() < 1e-15);
        assert!((a.xi(j).x - 0.4).abs() < 1e-15);
        let g2 = anchored_grid(2, Vec2::zeros(), 0.1, 0.25, 1.0).unwrap();
        assert!(g2.anchor.unwrap().offsets.iter().all(|m| (m[0] * m[0] + m[1] * m[1]) <= 16));
    }

    proptest::proptest! {
        #[test]
        fn duality_holds_for_random_lattices(a in 0.3f64..3.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in 0.3f64..3.0) {
            proptest::prop_assume!((a * d - b * c).abs() > 0.1);
            let l = make_lattice(&[vec![a, b], vec![c, d]]).unwrap();
            proptest::prop_assert!(l.duality_residual() < 1e-12);
        }

        #[test]
        fn basis_is_symmetric(cut in 1.0f64..40.0, a in 0.5f64..2.0, skew in -0.5f64..0.5) {
            let l = make_lattice(&[vec![a, 0.0], vec![skew, 1.0]]).unwrap();
            let b = plane_wave_basis(&l, cut, 10_000).unwrap();
            proptest::prop_assert!(b.index_of([0, 0]).is_some());
            for m in &b.coords {
                proptest::prop_assert!(b.index_of([-m[0], -m[1]]).is_some());
            }
            proptest::prop_assert!(b.coords.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn coefficients_are_hermitian(amp in -3.0f64..3.0, ph in -3.0f64..3.0, m1 in -2i32..3, m2 in -2i32..3) {
            let l = make_lattice(&[vec![1.0, 0.0], vec![0.3, 1.1]]).unwrap();
            let basis = plane_wave_basis(&l, 30.0, 10_000).unwrap();
            let spec = PotentialSpec::CosineSum { terms: vec![
                CosineTerm { m: vec![m1, m2], amplitude: amp, phase: ph },
                CosineTerm { m: vec![1, 0], amplitude: 0.5, phase: 0.0 },
            ]};
            let v = potential_coefficients(&spec, &l, &basis).unwrap();
            for (&m, c) in &v.coeffs {
                proptest::prop_assert_eq!(v.get([-m[0], -m[1]]), c.conj());
            }
        }
    }
}
