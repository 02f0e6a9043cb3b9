//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here works on `dim <= 8` matrices and compares values with an
//! explicit [`Tolerance`]. Rounding to a `1e-6` grid is used only to build
//! hash keys; arithmetic always uses the raw entries.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Grid used by [`ComplexMatrix::hash_key`].
pub const HASH_GRID: f64 = 1e-6;

/// Global comparison policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    /// Absolute entrywise tolerance for matrix equality.
    pub eq_eps: f64,
    /// Eigenvalues closer than this are merged into one eigenspace.
    pub eig_cluster_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { eq_eps: 1e-9, eig_cluster_eps: 1e-7 }
    }
}

impl Tolerance {
    pub fn new(eq_eps: f64, eig_cluster_eps: f64) -> Result<Self> {
        let tol = Tolerance { eq_eps, eig_cluster_eps };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eq_eps > 0.0 && self.eq_eps < self.eig_cluster_eps && self.eig_cluster_eps < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTolerance(format!(
                "need 0 < eq_eps ({}) < eig_cluster_eps ({}) < 1",
                self.eq_eps, self.eig_cluster_eps
            )))
        }
    }

    /// Same policy with a different entrywise epsilon, keeping the invariant.
    pub fn with_eq_eps(&self, eq_eps: f64) -> Result<Self> {
        let cluster = if eq_eps < self.eig_cluster_eps { self.eig_cluster_eps } else { eq_eps * 100.0 };
        Tolerance::new(eq_eps, cluster)
    }
}

/// A square complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}[", self.dim())?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim() {
                let z = self.0[(i, j)];
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.4}{:+.4}i", z.re, z.im)?;
            }
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for ComplexMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::MalformedMatrix("matrix has no rows".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedMatrix(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            entries.extend(row.iter().map(|[re, im]| C64::new(*re, *im)));
        }
        ComplexMatrix::from_row_major(n, entries)
    }
}

impl From<ComplexMatrix> for Vec<Vec<[f64; 2]>> {
    fn from(m: ComplexMatrix) -> Self {
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| [m.0[(i, j)].re, m.0[(i, j)].im]).collect()).collect()
    }
}

impl ComplexMatrix {
    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::MalformedMatrix(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::MalformedMatrix("non-finite entry".into()));
        }
        Ok(ComplexMatrix(DMatrix::from_row_slice(dim, dim, &entries)))
    }

    /// Real matrix from rows; panics on ragged input, meant for literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let entries = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n, "ragged real matrix literal");
                r.iter().map(|x| C64::new(*x, 0.0))
            })
            .collect();
        ComplexMatrix::from_row_major(n, entries).expect("finite literal")
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        ComplexMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        ComplexMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(dim, dim))
    }

    /// `|v><v|` for a (not necessarily normalized) vector.
    pub fn outer(v: &DVector<C64>) -> Self {
        ComplexMatrix(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        ComplexMatrix(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexMatrix(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &ComplexMatrix, eps: f64) -> bool {
        self.dim() == other.dim() && self.max_abs_diff(other) <= eps
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, eps: f64) -> bool {
        self.hermiticity_error() <= eps
    }

    pub fn unitarity_error(&self) -> f64 {
        (&self.adjoint() * self).max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }

    /// `U M U^†`.
    pub fn conjugated_by(&self, u: &ComplexMatrix) -> Self {
        ComplexMatrix(&u.0 * &self.0 * u.0.adjoint())
    }

    pub fn commutator_norm(&self, other: &ComplexMatrix) -> f64 {
        (&(self * other) - &(other * self)).max_abs()
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.0 * v
    }

    /// `<v|M|v>`, real part.
    pub fn expectation(&self, v: &DVector<C64>) -> f64 {
        v.dotc(&(&self.0 * v)).re
    }

    /// Entries rounded to [`HASH_GRID`], row-major. For hashing and ordering only.
    pub fn hash_key(&self) -> Vec<(i64, i64)> {
        self.0
            .transpose()
            .iter()
            .map(|z| ((z.re / HASH_GRID).round() as i64, (z.im / HASH_GRID).round() as i64))
            .collect()
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a, right: b })
    }
}

/// An orthogonal projection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projector {
    matrix: ComplexMatrix,
    rank: usize,
}

impl Projector {
    pub fn new(matrix: ComplexMatrix, tol: &Tolerance) -> Result<Self> {
        let herm = matrix.hermiticity_error();
        if herm > tol.eq_eps {
            return Err(Error::NotProjector { reason: format!("not hermitian ({herm:.3e})") });
        }
        let idem = (&matrix * &matrix).max_abs_diff(&matrix);
        if idem > tol.eq_eps {
            return Err(Error::NotProjector { reason: format!("not idempotent ({idem:.3e})") });
        }
        let rank = matrix.trace().re.round().max(0.0) as usize;
        if rank > matrix.dim() {
            return Err(Error::NotProjector { reason: format!("rank {rank} exceeds dim") });
        }
        Ok(Projector { matrix, rank })
    }

    /// Wraps a matrix already known to be a projector (sums of orthogonal atoms,
    /// conjugates of projectors).
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        let rank = matrix.trace().re.round().max(0.0) as usize;
        Projector { matrix, rank }
    }

    pub fn zero(dim: usize) -> Self {
        Projector { matrix: ComplexMatrix::zeros(dim), rank: 0 }
    }

    pub fn identity(dim: usize) -> Self {
        Projector { matrix: ComplexMatrix::identity(dim), rank: dim }
    }

    /// Rank-one projector onto the line through `v`.
    pub fn onto_ray(v: &DVector<C64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n <= 1e-12 {
            return Err(Error::InvalidState("zero or non-finite ray".into()));
        }
        Ok(Projector::new_unchecked(ComplexMatrix::outer(&(v / C64::new(n, 0.0)))))
    }

    /// Sum of pairwise-orthogonal projectors.
    pub fn sum<'a>(dim: usize, parts: impl IntoIterator<Item = &'a Projector>) -> Self {
        let mut acc = ComplexMatrix::zeros(dim);
        for p in parts {
            acc = &acc + &p.matrix;
        }
        Projector::new_unchecked(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_zero(&self, tol: &Tolerance) -> bool {
        self.matrix.max_abs() <= tol.eq_eps
    }

    pub fn approx_eq(&self, other: &Projector, tol: &Tolerance) -> bool {
        self.matrix.approx_eq(&other.matrix, tol.eq_eps)
    }

    pub fn conjugated_by(&self, u: &ComplexMatrix) -> Projector {
        Projector { matrix: self.matrix.conjugated_by(u), rank: self.rank }
    }

    /// `P Q = 0` within tolerance.
    pub fn orthogonal_to(&self, other: &Projector, tol: &Tolerance) -> bool {
        (&self.matrix * &other.matrix).max_abs() <= tol.eq_eps
    }

    /// `I - P`.
    pub fn complement(&self) -> Projector {
        Projector { matrix: &ComplexMatrix::identity(self.dim()) - &self.matrix, rank: self.dim() - self.rank }
    }
}

/// `P <= Q`, decided as `Q P = P`.
pub fn projector_leq(p: &Projector, q: &Projector, tol: &Tolerance) -> Result<bool> {
    same_dim(p.dim(), q.dim())?;
    Ok((&q.matrix * &p.matrix).approx_eq(&p.matrix, tol.eq_eps))
}

/// A hermitian matrix together with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct SelfAdjoint {
    matrix: ComplexMatrix,
    spectrum: Vec<f64>,
    eigenprojectors: Vec<Projector>,
}

impl SelfAdjoint {
    /// Operator `sum_i values[i] * projectors[i]` for mutually orthogonal
    /// projectors summing to identity. Equal values are merged.
    pub fn from_spectral_parts(dim: usize, parts: Vec<(f64, Projector)>, tol: &Tolerance) -> Result<Self> {
        let mut parts = parts;
        parts.retain(|(_, p)| !p.is_zero(tol));
        parts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut spectrum: Vec<f64> = Vec::new();
        let mut groups: Vec<Vec<Projector>> = Vec::new();
        for (v, p) in parts {
            same_dim(dim, p.dim())?;
            match spectrum.last() {
                Some(last) if (v - last).abs() <= tol.eig_cluster_eps => {
                    groups.last_mut().expect("parallel vecs").push(p)
                }
                _ => {
                    spectrum.push(v);
                    groups.push(vec![p]);
                }
            }
        }
        let eigenprojectors: Vec<Projector> = groups.iter().map(|g| Projector::sum(dim, g.iter())).collect();
        let mut matrix = ComplexMatrix::zeros(dim);
        for (v, p) in spectrum.iter().zip(&eigenprojectors) {
            matrix = &matrix + &p.matrix.scale(*v);
        }
        let total = Projector::sum(dim, eigenprojectors.iter());
        if !total.matrix.approx_eq(&ComplexMatrix::identity(dim), 10.0 * tol.eq_eps) {
            return Err(Error::NotProjector { reason: "spectral projectors do not sum to identity".into() });
        }
        Ok(SelfAdjoint { matrix, spectrum, eigenprojectors })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn eigenprojectors(&self) -> &[Projector] {
        &self.eigenprojectors
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `U A U^†` with conjugated eigenprojectors (no re-diagonalization).
    pub fn conjugated_by(&self, u: &ComplexMatrix) -> SelfAdjoint {
        SelfAdjoint {
            matrix: self.matrix.conjugated_by(u),
            spectrum: self.spectrum.clone(),
            eigenprojectors: self.eigenprojectors.iter().map(|p| p.conjugated_by(u)).collect(),
        }
    }

    pub fn reconstruction_error(&self) -> f64 {
        let mut acc = ComplexMatrix::zeros(self.dim());
        for (v, p) in self.spectrum.iter().zip(&self.eigenprojectors) {
            acc = &acc + &p.matrix.scale(*v);
        }
        acc.max_abs_diff(&self.matrix)
    }
}

/// Hermitian eigendecomposition with eigenvalue clustering.
pub fn eigendecompose(a: &ComplexMatrix, tol: &Tolerance) -> Result<SelfAdjoint> {
    let deviation = a.hermiticity_error();
    if deviation > tol.eq_eps {
        return Err(Error::NotHermitian { deviation });
    }
    let n = a.dim();
    // Symmetrize so the solver sees an exactly hermitian input.
    let sym = (a.inner() + a.inner().adjoint()).map(|z| z * 0.5);
    let eig = sym.symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<C64>)> =
        (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned())).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut spectrum: Vec<f64> = Vec::new();
    let mut clusters: Vec<Vec<(f64, DVector<C64>)>> = Vec::new();
    for (value, vec) in pairs {
        let start_new = match clusters.last() {
            Some(c) => value - c.last().expect("non-empty cluster").0 > tol.eig_cluster_eps,
            None => true,
        };
        if start_new {
            clusters.push(vec![(value, vec)]);
        } else {
            clusters.last_mut().expect("cluster").push((value, vec));
        }
    }
    let mut eigenprojectors = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let mean = cluster.iter().map(|(v, _)| v).sum::<f64>() / cluster.len() as f64;
        spectrum.push(mean);
        let mut m = DMatrix::<C64>::zeros(n, n);
        for (_, v) in cluster {
            m += v * v.adjoint();
        }
        eigenprojectors.push(Projector::new_unchecked(ComplexMatrix(m)));
    }
    Ok(SelfAdjoint { matrix: a.clone(), spectrum, eigenprojectors })
}

/// Right-continuous spectral family `r -> E_r` stored as a step function.
#[derive(Clone, Debug)]
pub struct SpectralFamily {
    thresholds: Vec<f64>,
    cumulative: Vec<Projector>,
}

impl SpectralFamily {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn cumulative(&self) -> &[Projector] {
        &self.cumulative
    }

    pub fn dim(&self) -> usize {
        self.cumulative.last().map(Projector::dim).unwrap_or(0)
    }

    /// `E_r`: cumulative projector of the largest threshold `<= r`, or zero.
    pub fn at(&self, r: f64) -> Projector {
        self.at_with_slack(r, 0.0)
    }

    /// Like [`at`](Self::at) but thresholds within `slack` above `r` count as reached.
    pub fn at_with_slack(&self, r: f64, slack: f64) -> Projector {
        match self.thresholds.iter().rposition(|t| *t <= r + slack) {
            Some(k) => self.cumulative[k].clone(),
            None => Projector::zero(self.dim()),
        }
    }
}

pub fn spectral_family(a: &SelfAdjoint) -> SpectralFamily {
    let n = a.dim();
    let mut cumulative = Vec::with_capacity(a.spectrum.len());
    for k in 0..a.spectrum.len() {
        cumulative.push(Projector::sum(n, a.eigenprojectors[..=k].iter()));
    }
    SpectralFamily { thresholds: a.spectrum.clone(), cumulative }
}

/// `A <=_s B` iff `E^A_r >= E^B_r` for every `r`.
pub fn spectral_leq(a: &SelfAdjoint, b: &SelfAdjoint, tol: &Tolerance) -> Result<bool> {
    same_dim(a.dim(), b.dim())?;
    let fa = spectral_family(a);
    let fb = spectral_family(b);
    let mut points: Vec<f64> = fa.thresholds.iter().chain(&fb.thresholds).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|x, y| (*x - *y).abs() <= tol.eig_cluster_eps);
    for r in points {
        let ea = fa.at_with_slack(r, tol.eig_cluster_eps);
        let eb = fb.at_with_slack(r, tol.eig_cluster_eps);
        if !projector_leq(&eb, &ea, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Seeded random helpers used by scenarios and randomized suites.
pub mod random {
    use super::*;

    pub fn unit_vector<R: Rng>(dim: usize, rng: &mut R) -> DVector<C64> {
        loop {
            let v = DVector::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let n = v.norm();
            if n > 1e-3 {
                return v / C64::new(n, 0.0);
            }
        }
    }

    pub fn hermitian<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
        let x = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        ComplexMatrix((&x + x.adjoint()).map(|z| z * 0.5))
    }

    /// Hermitian with a prescribed spectrum in a random orthonormal basis.
    pub fn hermitian_with_spectrum<R: Rng>(values: &[f64], rng: &mut R) -> ComplexMatrix {
        let dim = values.len();
        let basis = orthonormal_basis(dim, rng);
        let mut m = ComplexMatrix::zeros(dim);
        for (v, b) in values.iter().zip(&basis) {
            m = &m + &ComplexMatrix::outer(b).scale(*v);
        }
        m
    }

    /// Gram-Schmidt on random vectors.
    pub fn orthonormal_basis<R: Rng>(dim: usize, rng: &mut R) -> Vec<DVector<C64>> {
        let mut basis: Vec<DVector<C64>> = Vec::with_capacity(dim);
        while basis.len() < dim {
            let mut v = unit_vector(dim, rng);
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
            let n = v.norm();
            if n > 1e-3 {
                basis.push(v / C64::new(n, 0.0));
            }
        }
        basis
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn hadamard() -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real_rows(&[&[s, s], &[s, -s]])
    }

    fn sa(values: &[f64]) -> SelfAdjoint {
        eigendecompose(&ComplexMatrix::diag(values), &tol()).unwrap()
    }

    #[test]
    fn tolerance_invariants() {
        assert!(Tolerance::new(1e-9, 1e-7).is_ok());
        assert!(Tolerance::new(1e-7, 1e-9).is_err());
        assert!(Tolerance::new(0.0, 1e-7).is_err());
        assert!(Tolerance::new(1e-9, 1.5).is_err());
    }

    #[test]
    fn matrix_json_shape() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[-1.0,0.0]]]");
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let ragged: std::result::Result<ComplexMatrix, _> = serde_json::from_str("[[[1,0],[0,0]],[[0,0]]]");
        assert!(ragged.is_err());
    }

    #[test]
    fn eigen_identity_single_projector() {
        let a = sa(&[1.0, 1.0]);
        assert_eq!(a.spectrum().len(), 1);
        assert!((a.spectrum()[0] - 1.0).abs() < 1e-12);
        assert!(a.eigenprojectors()[0].approx_eq(&Projector::identity(2), &tol()));
    }

    #[test]
    fn eigen_diagonal_ranks() {
        let a = sa(&[0.0, 1.0, 1.0]);
        assert_eq!(a.spectrum().len(), 2);
        assert_eq!(a.eigenprojectors()[0].rank(), 1);
        assert_eq!(a.eigenprojectors()[1].rank(), 2);
        assert!(a.reconstruction_error() <= 10.0 * tol().eq_eps);
    }

    #[test]
    fn eigen_hadamard_conjugate() {
        // H diag(0,1) H = [[1/2, -1/2], [-1/2, 1/2]]... eigenvalue 0 on |+>, 1 on |->.
        let m = ComplexMatrix::diag(&[0.0, 1.0]).conjugated_by(&hadamard());
        let expected = ComplexMatrix::from_real_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]);
        assert!(m.approx_eq(&expected, 1e-12));
        let a = eigendecompose(&m, &tol()).unwrap();
        let plus = ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let minus = ComplexMatrix::from_real_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]);
        assert_eq!(a.spectrum().len(), 2);
        assert!(a.spectrum()[0].abs() < 1e-12 && (a.spectrum()[1] - 1.0).abs() < 1e-12);
        assert!(a.eigenprojectors()[0].matrix().approx_eq(&plus, 1e-12));
        assert!(a.eigenprojectors()[1].matrix().approx_eq(&minus, 1e-12));
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(eigendecompose(&m, &tol()), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn spectral_family_two_level() {
        let f = spectral_family(&sa(&[0.0, 1.0]));
        let p0 = ComplexMatrix::diag(&[1.0, 0.0]);
        assert!(f.at(-0.5).is_zero(&tol()));
        assert!(f.at(0.0).matrix().approx_eq(&p0, 1e-12));
        assert!(f.at(0.99).matrix().approx_eq(&p0, 1e-12));
        assert!(f.at(1.0).approx_eq(&Projector::identity(2), &tol()));
        assert!(f.at(7.0).approx_eq(&Projector::identity(2), &tol()));
    }

    #[test]
    fn spectral_family_identity_single_step() {
        let f = spectral_family(&sa(&[1.0, 1.0]));
        assert_eq!(f.thresholds(), &[1.0]);
        assert!(f.at(0.999).is_zero(&tol()));
        assert!(f.at(1.0).approx_eq(&Projector::identity(2), &tol()));
    }

    #[test]
    fn spectral_family_three_steps() {
        let f = spectral_family(&sa(&[-1.0, 0.0, 2.0]));
        // Oracle: explicit partial sums of diagonal eigenprojectors.
        let steps = [
            ComplexMatrix::diag(&[1.0, 0.0, 0.0]),
            ComplexMatrix::diag(&[1.0, 1.0, 0.0]),
            ComplexMatrix::diag(&[1.0, 1.0, 1.0]),
        ];
        let ranks: Vec<usize> = f.cumulative().iter().map(Projector::rank).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
        for (p, s) in f.cumulative().iter().zip(&steps) {
            assert!(p.matrix().approx_eq(s, 1e-12));
        }
    }

    #[test]
    fn spectral_order_examples() {
        let a = sa(&[0.0, 1.0]);
        let b = sa(&[1.0, 1.0]);
        assert!(spectral_leq(&a, &a, &tol()).unwrap());
        // r = 0: E^a = |0><0| >= E^b = 0; r = 1: both identity.
        assert!(spectral_leq(&a, &b, &tol()).unwrap());
        // r = 0: E^b = 0 is not >= E^a = |0><0|.
        assert!(!spectral_leq(&b, &a, &tol()).unwrap());
        assert!(matches!(spectral_leq(&a, &sa(&[0.0, 1.0, 2.0]), &tol()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn projector_order_examples() {
        let t = tol();
        let q = Projector::new(ComplexMatrix::diag(&[1.0, 0.0]), &t).unwrap();
        assert!(projector_leq(&Projector::zero(2), &q, &t).unwrap());
        assert!(projector_leq(&q, &Projector::identity(2), &t).unwrap());
        let plus = Projector::new(ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]), &t).unwrap();
        // |+><+| |0><0| = [[1/2, 0], [1/2, 0]] != |0><0|.
        assert!(!projector_leq(&q, &plus, &t).unwrap());
    }

    #[test]
    fn projector_validation() {
        let t = tol();
        assert!(Projector::new(ComplexMatrix::diag(&[2.0, 0.0]), &t).is_err());
        let p = Projector::new(ComplexMatrix::diag(&[1.0, 1.0, 0.0]), &t).unwrap();
        assert_eq!(p.rank(), 2);
        assert_eq!(p.complement().rank(), 1);
    }

    #[test]
    fn from_spectral_parts_merges_values() {
        let t = tol();
        let p0 = Projector::new(ComplexMatrix::diag(&[1.0, 0.0, 0.0]), &t).unwrap();
        let p1 = Projector::new(ComplexMatrix::diag(&[0.0, 1.0, 0.0]), &t).unwrap();
        let p2 = Projector::new(ComplexMatrix::diag(&[0.0, 0.0, 1.0]), &t).unwrap();
        let a = SelfAdjoint::from_spectral_parts(3, vec![(2.0, p2), (1.0, p0), (2.0, p1)], &t).unwrap();
        assert_eq!(a.spectrum(), &[1.0, 2.0]);
        assert!(a.matrix().approx_eq(&ComplexMatrix::diag(&[1.0, 2.0, 2.0]), 1e-12));
    }
}
