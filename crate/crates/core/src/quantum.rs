//! Spectral presheaf, daseinisation, physical-quantity arrows, truth values,
//! the breve objects obtained through `F`, the Ω isomorphisms and the
//! covariance checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use nalgebra::DVector;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::contexts::{build_poset, ClosureOptions, Context, ContextPoset};
use crate::error::{Error, Result};
use crate::lambda_site::{CaseOutcome, FunctorF, FunctorI, FunctorPShriek, LambdaPoset, PresheafFunctor};
use crate::numerics::{
    eigendecompose, projector_leq, spectral_family, spectral_leq, ComplexMatrix, Projector, SelfAdjoint, Tolerance, C64,
};
use crate::presheaf::{matching_families, product, FinitePoset, Omega, Presheaf, PresheafMorphism, Sieve, SubObject};
use crate::symmetry::{FiniteUnitaryGroup, GroupAction};

/// A character of a context, identified with the atom it picks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SpectralElement {
    pub context: usize,
    pub atom: usize,
}

impl SpectralElement {
    /// `λ(A) = tr(A Q) / rank Q`, exact for `A` in the context.
    pub fn eval(&self, p: &ContextPoset, a: &ComplexMatrix) -> f64 {
        atom_value(a, &p.context(self.context).atoms()[self.atom])
    }
}

fn atom_value(a: &ComplexMatrix, q: &Projector) -> f64 {
    (a * q.matrix()).trace().re / q.rank() as f64
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a, right: b })
    }
}

/// `Σ`: atoms as stalks, restriction to the coarser atom containing each.
pub fn spectral_presheaf(p: &ContextPoset) -> Presheaf {
    let tol = p.tolerance();
    let stalks = p
        .contexts()
        .iter()
        .map(|c| c.atoms().iter().enumerate().map(|(i, a)| format!("Q{i}/{}", a.rank())).collect())
        .collect();
    Presheaf::from_fn(p.base().clone(), stalks, |lo, hi, x| {
        p.context(lo).atom_containing(&p.context(hi).atoms()[x], tol).expect("atoms refine coarse-grainings")
    })
}

fn overlaps(q: &Projector, pr: &Projector, tol: &Tolerance) -> bool {
    (q.matrix() * pr.matrix()).max_abs() > 10.0 * tol.eq_eps
}

/// `δ^o(P)_V`: sum of the atoms not orthogonal to `P`.
pub fn daseinise_projection(pr: &Projector, v: &Context, tol: &Tolerance) -> Result<Projector> {
    check_dims(pr.dim(), v.dim())?;
    Ok(Projector::sum(v.dim(), v.atoms().iter().filter(|q| overlaps(q, pr, tol))))
}

/// `δ^i(P)_V`: sum of the atoms below `P`.
pub fn daseinise_projection_inner(pr: &Projector, v: &Context, tol: &Tolerance) -> Result<Projector> {
    check_dims(pr.dim(), v.dim())?;
    let mut parts = Vec::new();
    for q in v.atoms() {
        if projector_leq(q, pr, tol)? {
            parts.push(q);
        }
    }
    Ok(Projector::sum(v.dim(), parts))
}

fn all_projections(v: &Context) -> Vec<Projector> {
    let n = v.num_atoms();
    (0..1u32 << n).map(|m| v.projection(&(0..n).map(|i| m >> i & 1 == 1).collect::<Vec<_>>())).collect()
}

/// Meet of every projection of `V` dominating `P`, by enumeration.
pub fn daseinise_projection_brute(pr: &Projector, v: &Context, tol: &Tolerance) -> Result<Projector> {
    check_dims(pr.dim(), v.dim())?;
    let mut above = Vec::new();
    for c in all_projections(v) {
        if projector_leq(pr, &c, tol)? {
            above.push(c);
        }
    }
    for c in &above {
        let mut least = true;
        for d in &above {
            if !projector_leq(c, d, tol)? {
                least = false;
                break;
            }
        }
        if least {
            return Ok(c.clone());
        }
    }
    Err(Error::Validation("dominating projections have no least element".into()))
}

/// Join of every projection of `V` below `P`, by enumeration.
pub fn daseinise_projection_inner_brute(pr: &Projector, v: &Context, tol: &Tolerance) -> Result<Projector> {
    check_dims(pr.dim(), v.dim())?;
    let mut below = Vec::new();
    for c in all_projections(v) {
        if projector_leq(&c, pr, tol)? {
            below.push(c);
        }
    }
    for c in &below {
        let mut greatest = true;
        for d in &below {
            if !projector_leq(d, c, tol)? {
                greatest = false;
                break;
            }
        }
        if greatest {
            return Ok(c.clone());
        }
    }
    Err(Error::Validation("projections below have no greatest element".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outer,
    Inner,
}

/// Daseinisation of a self-adjoint operator through its spectral family:
/// outer uses `δ^i(E^A_r)_V`, inner uses `δ^o(E^A_r)_V` (for a step family
/// the meet over `s > r` is the value at `r`).
pub fn daseinise_sa(a: &SelfAdjoint, v: &Context, dir: Direction, tol: &Tolerance) -> Result<SelfAdjoint> {
    check_dims(a.dim(), v.dim())?;
    let fam = spectral_family(a);
    let steps: Vec<Projector> = fam
        .cumulative()
        .iter()
        .map(|e| match dir {
            Direction::Outer => daseinise_projection_inner(e, v, tol),
            Direction::Inner => daseinise_projection(e, v, tol),
        })
        .collect::<Result<_>>()?;
    let mut parts = Vec::with_capacity(v.num_atoms());
    for q in v.atoms() {
        let mut k = steps.len() - 1;
        for (i, e) in steps.iter().enumerate() {
            if projector_leq(q, e, tol)? {
                k = i;
                break;
            }
        }
        parts.push((fam.thresholds()[k], q.clone()));
    }
    SelfAdjoint::from_spectral_parts(a.dim(), parts, tol)
}

/// Spectral-order meet (outer) or join (inner) over all operators of `V`
/// with eigenvalues drawn from `sp(A)`.
pub fn daseinise_sa_brute(a: &SelfAdjoint, v: &Context, dir: Direction, tol: &Tolerance) -> Result<SelfAdjoint> {
    check_dims(a.dim(), v.dim())?;
    let sp = a.spectrum();
    let n = v.num_atoms();
    let total = sp.len().pow(n as u32);
    let mut cands = Vec::new();
    for code in 0..total {
        let mut c = code;
        let parts = v
            .atoms()
            .iter()
            .map(|q| {
                let val = sp[c % sp.len()];
                c /= sp.len();
                (val, q.clone())
            })
            .collect();
        let b = SelfAdjoint::from_spectral_parts(a.dim(), parts, tol)?;
        let keep = match dir {
            Direction::Outer => spectral_leq(a, &b, tol)?,
            Direction::Inner => spectral_leq(&b, a, tol)?,
        };
        if keep {
            cands.push(b);
        }
    }
    for c in &cands {
        let mut extremal = true;
        for d in &cands {
            let ok = match dir {
                Direction::Outer => spectral_leq(c, d, tol)?,
                Direction::Inner => spectral_leq(d, c, tol)?,
            };
            if !ok {
                extremal = false;
                break;
            }
        }
        if extremal {
            return Ok(c.clone());
        }
    }
    Err(Error::Validation("no spectral extremum among candidates".into()))
}

/// An element of `R↔_V`: values of `μ` and `ν` on `↓V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderPair {
    pub context: usize,
    pub mu: BTreeMap<usize, f64>,
    pub nu: BTreeMap<usize, f64>,
}

impl OrderPair {
    pub fn restrict(&self, to: usize, base: &FinitePoset) -> OrderPair {
        let keep =
            |m: &BTreeMap<usize, f64>| m.iter().filter(|(k, _)| base.leq(**k, to)).map(|(k, v)| (*k, *v)).collect();
        OrderPair { context: to, mu: keep(&self.mu), nu: keep(&self.nu) }
    }

    /// `μ <= ν`, `μ` order-preserving, `ν` order-reversing.
    pub fn failures(&self, base: &FinitePoset, eps: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (&a, &m) in &self.mu {
            if m > self.nu[&a] + eps {
                out.push(format!("mu > nu at V{a}"));
            }
            for &b in base.down(a) {
                if self.mu[&b] > m + eps {
                    out.push(format!("mu not order-preserving on V{b} <= V{a}"));
                }
                if self.nu[&b] < self.nu[&a] - eps {
                    out.push(format!("nu not order-reversing on V{b} <= V{a}"));
                }
            }
        }
        out
    }

    pub fn approx_eq(&self, other: &OrderPair, eps: f64) -> bool {
        let close = |x: &BTreeMap<usize, f64>, y: &BTreeMap<usize, f64>| {
            x.len() == y.len() && x.iter().zip(y).all(|((a, u), (b, v))| a == b && (u - v).abs() <= eps)
        };
        self.context == other.context && close(&self.mu, &other.mu) && close(&self.nu, &other.nu)
    }
}

/// `δ̆(A): Σ -> R↔`, stored as the inner and outer daseinisations at
/// every context; order pairs are built on demand.
#[derive(Clone, Debug)]
pub struct QuantityArrow {
    pub inner: Vec<SelfAdjoint>,
    pub outer: Vec<SelfAdjoint>,
}

pub fn physical_quantity_arrow(a: &SelfAdjoint, p: &ContextPoset) -> Result<QuantityArrow> {
    check_dims(a.dim(), p.dim())?;
    let tol = p.tolerance();
    let inner = p.contexts().iter().map(|v| daseinise_sa(a, v, Direction::Inner, tol)).collect::<Result<_>>()?;
    let outer = p.contexts().iter().map(|v| daseinise_sa(a, v, Direction::Outer, tol)).collect::<Result<_>>()?;
    Ok(QuantityArrow { inner, outer })
}

impl QuantityArrow {
    /// `λ ↦ (μ_λ, ν_λ)` at `V` for the atom `atom` of `V`.
    pub fn value(&self, p: &ContextPoset, sigma: &Presheaf, v: usize, atom: usize) -> OrderPair {
        let mut mu = BTreeMap::new();
        let mut nu = BTreeMap::new();
        for &w in p.base().down(v) {
            let q = &p.context(w).atoms()[sigma.restrict(w, v, atom)];
            mu.insert(w, atom_value(self.inner[w].matrix(), q));
            nu.insert(w, atom_value(self.outer[w].matrix(), q));
        }
        OrderPair { context: v, mu, nu }
    }

    /// Order-pair laws at every element and naturality along restriction.
    pub fn failures(&self, p: &ContextPoset, sigma: &Presheaf) -> Vec<String> {
        let eps = 10.0 * p.tolerance().eq_eps;
        let mut out = Vec::new();
        for v in 0..p.len() {
            for x in 0..sigma.stalk_size(v) {
                let pair = self.value(p, sigma, v, x);
                out.extend(pair.failures(p.base(), eps));
                for &w in p.base().down(v) {
                    if !pair.restrict(w, p.base()).approx_eq(&self.value(p, sigma, w, sigma.restrict(w, v, x)), eps) {
                        out.push(format!("arrow not natural on V{w} <= V{v}"));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PureState {
    vector: DVector<C64>,
}

impl PureState {
    pub fn new(vector: DVector<C64>, tol: &Tolerance) -> Result<Self> {
        if (vector.norm() - 1.0).abs() > 10.0 * tol.eq_eps {
            return Err(Error::InvalidState(format!("norm {} is not 1", vector.norm())));
        }
        Ok(PureState { vector })
    }

    pub fn normalized(vector: DVector<C64>) -> Result<Self> {
        let n = vector.norm();
        if !n.is_finite() || n <= 1e-12 {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Ok(PureState { vector: vector / C64::new(n, 0.0) })
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn transformed(&self, u: &ComplexMatrix) -> PureState {
        PureState { vector: u.apply(&self.vector) }
    }

    pub fn expectation(&self, p: &Projector) -> f64 {
        p.matrix().expectation(&self.vector)
    }
}

#[derive(Clone, Debug)]
pub struct MixedState {
    rho: ComplexMatrix,
}

impl MixedState {
    pub fn new(rho: ComplexMatrix, tol: &Tolerance) -> Result<Self> {
        let dec =
            eigendecompose(&rho, tol).map_err(|_| Error::InvalidState("density matrix is not hermitian".into()))?;
        if (rho.trace().re - 1.0).abs() > 10.0 * tol.eq_eps || rho.trace().im.abs() > 10.0 * tol.eq_eps {
            return Err(Error::InvalidState("trace is not 1".into()));
        }
        if dec.spectrum().first().is_some_and(|&e| e < -10.0 * tol.eq_eps) {
            return Err(Error::InvalidState("density matrix is not positive".into()));
        }
        Ok(MixedState { rho })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        MixedState { rho: ComplexMatrix::outer(psi.vector()) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        MixedState { rho: ComplexMatrix::identity(dim).scale(1.0 / dim as f64) }
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn transformed(&self, u: &ComplexMatrix) -> MixedState {
        MixedState { rho: self.rho.conjugated_by(u) }
    }

    /// `tr(ρ P)`.
    pub fn expectation(&self, p: &Projector) -> f64 {
        (&self.rho * p.matrix()).trace().re
    }
}

/// Finite stand-in for `(0,1)_L`: strictly increasing rationals in `(0,1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RGrid {
    values: Vec<Ratio<i64>>,
}

impl Default for RGrid {
    fn default() -> Self {
        RGrid { values: (1..=9).map(|k| Ratio::new(k, 10)).collect() }
    }
}

impl RGrid {
    pub fn new(values: Vec<Ratio<i64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        if values.iter().any(|v| *v <= zero || *v > one) {
            return Err(Error::InvalidGrid("grid values must lie in (0,1]".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(RGrid { values })
    }

    /// Comma-separated rationals such as `"1/10,1/2,1"`.
    pub fn parse(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|t| Ratio::<i64>::from_str(t.trim()).map_err(|e| Error::InvalidGrid(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        RGrid::new(values)
    }

    pub fn values(&self) -> &[Ratio<i64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        *self.values[k].numer() as f64 / *self.values[k].denom() as f64
    }

    pub fn index_of(&self, r: Ratio<i64>) -> Result<usize> {
        self.values.iter().position(|v| *v == r).ok_or_else(|| Error::GridMismatch(r.to_string()))
    }

    pub fn labels(&self) -> Vec<String> {
        self.values.iter().map(|v| v.to_string()).collect()
    }
}

impl TryFrom<Vec<String>> for RGrid {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        RGrid::parse(&v.join(","))
    }
}

impl From<RGrid> for Vec<String> {
    fn from(g: RGrid) -> Self {
        g.labels()
    }
}

const CERTAINTY_EPS: f64 = 1e-9;

/// Contexts `V` with `<ψ|δ^o(P)_V|ψ> = 1`.
pub fn certainty_profile(p: &ContextPoset, pr: &Projector, psi: &PureState) -> Result<Vec<bool>> {
    check_dims(pr.dim(), p.dim())?;
    check_dims(psi.dim(), p.dim())?;
    p.contexts()
        .iter()
        .map(|v| Ok(psi.expectation(&daseinise_projection(pr, v, p.tolerance())?) >= 1.0 - CERTAINTY_EPS))
        .collect()
}

fn sieve_from_profile(p: &ContextPoset, certain: &[bool], v: usize) -> Result<Sieve> {
    let members: BTreeSet<usize> = p.base().down(v).iter().copied().filter(|&w| certain[w]).collect();
    p.base().check_lower_set(&members)?;
    Ok(Sieve { at: v, members })
}

/// `{V' <= V : <ψ|δ^o(P)_{V'}|ψ> = 1}`.
pub fn truth_value_pure(p: &ContextPoset, pr: &Projector, psi: &PureState, v: usize) -> Result<Sieve> {
    sieve_from_profile(p, &certainty_profile(p, pr, psi)?, v)
}

/// `tr(ρ δ^o(P)_V)` at every context.
pub fn mixed_profile(p: &ContextPoset, pr: &Projector, rho: &MixedState) -> Result<Vec<f64>> {
    check_dims(pr.dim(), p.dim())?;
    check_dims(rho.rho().dim(), p.dim())?;
    p.contexts().iter().map(|v| Ok(rho.expectation(&daseinise_projection(pr, v, p.tolerance())?))).collect()
}

fn mixed_set(p: &ContextPoset, traces: &[f64], v: usize, r: usize, grid: &RGrid) -> BTreeSet<(usize, usize)> {
    let eps = 10.0 * p.tolerance().eq_eps;
    p.base()
        .down(v)
        .iter()
        .flat_map(|&w| (0..=r).filter(move |&k| traces[w] >= grid.value(k) - eps).map(move |k| (w, k)))
        .collect()
}

fn mixed_from_profile(
    p: &ContextPoset,
    traces: &[f64],
    v: usize,
    r: usize,
    grid: &RGrid,
) -> Result<BTreeSet<(usize, usize)>> {
    let out = mixed_set(p, traces, v, r, grid);
    for &(w, k) in &out {
        let closed = p.base().down(w).iter().all(|&u| (0..=k).all(|j| out.contains(&(u, j))));
        if !closed {
            return Err(Error::Validation("mixed truth value is not downward closed".into()));
        }
    }
    Ok(out)
}

/// Mixed truth value as `(context, grid index)` pairs.
pub type MixedValue = BTreeSet<(usize, usize)>;

/// `{(V', r') <= (V, r) : tr(ρ δ^o(P)_{V'}) >= r'}` as `(context, grid index)`.
pub fn truth_value_mixed(
    p: &ContextPoset,
    pr: &Projector,
    rho: &MixedState,
    v: usize,
    r: Ratio<i64>,
    grid: &RGrid,
) -> Result<BTreeSet<(usize, usize)>> {
    let k = grid.index_of(r)?;
    mixed_from_profile(p, &mixed_profile(p, pr, rho)?, v, k, grid)
}

/// `atoms[g][v][x]`: index of `U_g Q_x U_g^†` among the atoms of `l_g V`.
pub fn atom_action(action: &GroupAction) -> Result<Vec<Vec<Vec<usize>>>> {
    let p = &action.poset;
    let tol = p.tolerance();
    (0..action.group.order())
        .map(|g| {
            let u = action.group.element(g);
            (0..p.len())
                .map(|v| {
                    let target = p.context(action.act(g, v));
                    p.context(v)
                        .atoms()
                        .iter()
                        .map(|q| {
                            target
                                .atom_index(&q.conjugated_by(u), tol)
                                .ok_or_else(|| Error::Validation("conjugated atom missing".into()))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Inputs to [`covariance_suite`].
pub struct CovarianceInputs<'a> {
    pub projectors: &'a [Projector],
    pub states: &'a [PureState],
    pub mixed: &'a [MixedState],
    pub observables: &'a [SelfAdjoint],
    pub grid: &'a RGrid,
}

/// Checks, for every group element, generated projector and context:
/// (a) `U δ^o(P)_V U^† = δ^o(U P U^†)_{l_g V}`; (b) pure truth values
/// transform as sieves; (c) the mixed analogue on the grid; (d) the
/// transform of physical-quantity arrows. Also reports the twisted
/// spectral presheaf `Σ^U` as a reference.
pub fn covariance_suite(action: &GroupAction, inputs: &CovarianceInputs<'_>) -> Result<Vec<CaseOutcome>> {
    let p = &action.poset;
    let g = &action.group;
    let tol = p.tolerance();
    let atoms = atom_action(action)?;
    let sigma = spectral_presheaf(p);
    let matrix_eps = tol.eq_eps;

    let mut a_checked = 0usize;
    let mut a_fail = Vec::new();
    let mut a_max = 0.0f64;
    let mut b_checked = 0usize;
    let mut b_fail = Vec::new();
    let mut c_checked = 0usize;
    let mut c_fail = Vec::new();

    let dase: Vec<Vec<Projector>> = inputs
        .projectors
        .iter()
        .map(|pr| p.contexts().iter().map(|v| daseinise_projection(pr, v, tol)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let pure_orig: Vec<Vec<Vec<bool>>> = inputs
        .projectors
        .iter()
        .map(|pr| inputs.states.iter().map(|psi| certainty_profile(p, pr, psi)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mixed_orig: Vec<Vec<Vec<f64>>> = inputs
        .projectors
        .iter()
        .map(|pr| inputs.mixed.iter().map(|rho| mixed_profile(p, pr, rho)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    // tv(V, r) = tv(V, top) ∩ {k <= r}, so comparing at the top grid value
    // covers every r.
    let top = inputs.grid.len().saturating_sub(1);
    let pure_sets: Vec<Vec<Vec<BTreeSet<usize>>>> = pure_orig
        .iter()
        .map(|per| {
            per.iter()
                .map(|prof| (0..p.len()).map(|v| Ok(sieve_from_profile(p, prof, v)?.members)).collect::<Result<_>>())
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mixed_sets: Vec<Vec<Vec<MixedValue>>> = mixed_orig
        .iter()
        .map(|per| {
            per.iter()
                .map(|prof| {
                    (0..p.len()).map(|v| mixed_from_profile(p, prof, v, top, inputs.grid)).collect::<Result<_>>()
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    for e in 0..g.order() {
        let u = g.element(e);
        for (i, pr) in inputs.projectors.iter().enumerate() {
            let moved = pr.conjugated_by(u);
            for v in 0..p.len() {
                let lhs = dase[i][v].conjugated_by(u);
                let rhs = daseinise_projection(&moved, p.context(action.act(e, v)), tol)?;
                let d = lhs.matrix().max_abs_diff(rhs.matrix());
                a_max = a_max.max(d);
                a_checked += 1;
                if d > matrix_eps {
                    a_fail.push(serde_json::json!({"g": g.name(e), "projector": i, "context": v, "deviation": d}));
                }
            }
            for (s, psi) in inputs.states.iter().enumerate() {
                let profile = certainty_profile(p, &moved, &psi.transformed(u))?;
                for v in 0..p.len() {
                    let lhs: BTreeSet<usize> = pure_sets[i][s][v].iter().map(|&w| action.act(e, w)).collect();
                    let rhs = sieve_from_profile(p, &profile, action.act(e, v))?;
                    b_checked += 1;
                    if lhs != rhs.members {
                        b_fail.push(serde_json::json!({"g": g.name(e), "projector": i, "state": s, "context": v}));
                    }
                }
            }
            for (s, rho) in inputs.mixed.iter().enumerate() {
                let profile = mixed_profile(p, &moved, &rho.transformed(u))?;
                for v in 0..p.len() {
                    let lhs: BTreeSet<(usize, usize)> =
                        mixed_sets[i][s][v].iter().map(|&(w, k)| (action.act(e, w), k)).collect();
                    let rhs = mixed_set(p, &profile, action.act(e, v), top, inputs.grid);
                    c_checked += 1;
                    if lhs != rhs {
                        c_fail.push(serde_json::json!({"g": g.name(e), "projector": i, "state": s, "context": v}));
                    }
                }
            }
        }
    }

    let mut d_checked = 0usize;
    let mut d_fail = Vec::new();
    let eps = 10.0 * tol.eq_eps;
    for (k, a) in inputs.observables.iter().enumerate() {
        let arrow = physical_quantity_arrow(a, p)?;
        for e in 0..g.order() {
            let moved = physical_quantity_arrow(&a.conjugated_by(g.element(e)), p)?;
            for v in 0..p.len() {
                for x in 0..sigma.stalk_size(v) {
                    let before = arrow.value(p, &sigma, v, x);
                    let after = moved.value(p, &sigma, action.act(e, v), atoms[e][v][x]);
                    let ok = before.mu.iter().all(|(&w, &m)| {
                        let w2 = action.act(e, w);
                        (after.mu[&w2] - m).abs() <= eps && (after.nu[&w2] - before.nu[&w]).abs() <= eps
                    }) && before.mu.len() == after.mu.len();
                    d_checked += 1;
                    if !ok {
                        d_fail.push(serde_json::json!({"g": g.name(e), "observable": k, "context": v, "atom": x}));
                    }
                }
            }
        }
    }

    // Σ^U(V) = Σ(l_U V); λ ↦ l_U λ is a natural isomorphism Σ -> Σ^U.
    let mut twisted_fail = Vec::new();
    let mut moved_contexts = 0usize;
    for e in 0..g.order() {
        let map: Vec<usize> = (0..p.len()).map(|v| action.act(e, v)).collect();
        moved_contexts += map.iter().enumerate().filter(|(v, w)| v != *w).count();
        let twisted = sigma.pullback(p.base().clone(), &map)?;
        let iota = PresheafMorphism::new(atoms[e].clone());
        if !iota.is_iso(&sigma, &twisted) {
            twisted_fail.push(g.name(e).to_string());
        }
    }

    let limit = |v: Vec<serde_json::Value>| v.into_iter().take(20).collect::<Vec<_>>();
    Ok(vec![
        CaseOutcome::new(
            "daseinisation covariance",
            a_fail.is_empty(),
            serde_json::json!({"checked": a_checked, "max_deviation": a_max, "tolerance": matrix_eps, "violations": limit(a_fail)}),
        ),
        CaseOutcome::new(
            "pure truth value covariance",
            b_fail.is_empty(),
            serde_json::json!({"checked": b_checked, "violations": limit(b_fail)}),
        ),
        CaseOutcome::new(
            "mixed truth value covariance",
            c_fail.is_empty(),
            serde_json::json!({
                "checked": c_checked,
                "grid": inputs.grid.labels(),
                "grid_relative": true,
                "compared_at": inputs.grid.labels()[top],
                "violations": limit(c_fail),
            }),
        ),
        CaseOutcome::new(
            "physical quantity covariance",
            d_fail.is_empty(),
            serde_json::json!({"checked": d_checked, "violations": limit(d_fail)}),
        ),
        CaseOutcome::new(
            "twisted spectral presheaf reference",
            twisted_fail.is_empty(),
            serde_json::json!({
                "group_order": g.order(),
                "moved_contexts": moved_contexts,
                "non_iso": twisted_fail,
            }),
        ),
    ])
}

/// `F(Σ)` with its stalkwise group action.
pub struct BreveSigma<'a> {
    pub lambda: &'a LambdaPoset,
    pub sigma: Presheaf,
    pub presheaf: Presheaf,
    atoms: Vec<Vec<Vec<usize>>>,
    elements: Vec<Vec<(usize, usize)>>,
    /// Offset of the summand of each Λ point inside its stalk.
    offset: Vec<usize>,
}

pub fn breve_sigma(lambda: &LambdaPoset) -> Result<BreveSigma<'_>> {
    let sigma = spectral_presheaf(&lambda.action.poset);
    let presheaf = FunctorF(lambda).obj(&sigma)?;
    let atoms = atom_action(&lambda.action)?;
    let pulled = FunctorI(lambda).obj(&sigma)?;
    let shriek = FunctorPShriek(lambda);
    let elements = (0..sigma.base().len()).map(|v| shriek.elements(&pulled, v)).collect();
    let mut offset = vec![0; lambda.len()];
    for v in 0..sigma.base().len() {
        let mut acc = 0;
        for &w in lambda.fibre(v) {
            offset[w] = acc;
            acc += sigma.stalk_size(lambda.twist(w));
        }
    }
    Ok(BreveSigma { lambda, sigma, presheaf, atoms, elements, offset })
}

impl BreveSigma<'_> {
    /// `(w, λ)` pairs of the stalk at `v`; `λ` indexes atoms of `q(w)`.
    pub fn elements(&self, v: usize) -> &[(usize, usize)] {
        &self.elements[v]
    }

    /// `k · (w^g, λ) = (w^{kg}, l_k λ)`.
    pub fn act(&self, k: usize, v: usize, idx: usize) -> usize {
        let (w, x) = self.elements[v][idx];
        self.offset[self.lambda.act(k, w)] + self.atoms[k][self.lambda.twist(w)][x]
    }

    /// Setwise invariance of `F(S)` for a sub-object `S` of `Σ`.
    pub fn lifted_invariant(&self, s: &SubObject) -> bool {
        let g = &self.lambda.action.group;
        (0..self.presheaf.base().len()).all(|v| {
            let elems = self.elements(v);
            elems.iter().enumerate().all(|(i, &(w, x))| {
                !s.contains(self.lambda.twist(w), x)
                    || (0..g.order()).all(|k| {
                        let (w2, x2) = elems[self.act(k, v, i)];
                        s.contains(self.lambda.twist(w2), x2)
                    })
            })
        })
    }

    /// Invariance of `S` under `(V, λ) ↦ (l_g V, l_g λ)`.
    pub fn g_invariant(&self, s: &SubObject) -> bool {
        let a = &self.lambda.action;
        (0..a.group.order()).all(|g| {
            (0..a.poset.len()).all(|v| {
                (0..self.sigma.stalk_size(v)).all(|x| !s.contains(v, x) || s.contains(a.act(g, v), self.atoms[g][v][x]))
            })
        })
    }

    /// Orbits of the stalk action at `v`.
    pub fn orbits(&self, v: usize) -> Vec<Vec<usize>> {
        let n = self.presheaf.stalk_size(v);
        let g = self.lambda.action.group.order();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let orbit: BTreeSet<usize> = (0..g).map(|k| self.act(k, v, start)).collect();
            for &i in &orbit {
                seen[i] = true;
            }
            out.push(orbit.into_iter().collect());
        }
        out
    }

    /// Action law, stalk preservation, compatibility with restriction, and
    /// orbit data.
    pub fn action_checks(&self) -> CaseOutcome {
        let grp = &self.lambda.action.group;
        let base = self.presheaf.base().clone();
        let mut failures = Vec::new();
        let mut transitive = Vec::new();
        for v in 0..base.len() {
            let n = self.presheaf.stalk_size(v);
            for i in 0..n {
                if self.act(grp.identity(), v, i) != i {
                    failures.push(format!("identity moves element {i} at V{v}"));
                }
                for a in 0..grp.order() {
                    let ai = self.act(a, v, i);
                    if ai >= n {
                        failures.push(format!("action leaves the stalk at V{v}"));
                        continue;
                    }
                    for b in 0..grp.order() {
                        if self.act(grp.mul(a, b), v, i) != self.act(a, v, self.act(b, v, i)) {
                            failures.push(format!("action law fails at V{v}"));
                        }
                    }
                    for &lo in base.down(v) {
                        if self.presheaf.restrict(lo, v, ai) != self.act(a, lo, self.presheaf.restrict(lo, v, i)) {
                            failures.push(format!("action does not commute with restriction V{lo} <= V{v}"));
                        }
                    }
                }
            }
            let orbits = self.orbits(v);
            for o in &orbits {
                let inv = o.iter().all(|&i| (0..grp.order()).all(|a| o.contains(&self.act(a, v, i))));
                if !inv {
                    failures.push(format!("orbit at V{v} is not invariant"));
                }
            }
            transitive.push(
                serde_json::json!({"context": v, "stalk": n, "orbits": orbits.len(), "transitive": orbits.len() == 1}),
            );
        }
        failures.sort();
        failures.dedup();
        CaseOutcome::new(
            "breve spectral action",
            failures.is_empty(),
            serde_json::json!({"failures": failures, "stalks": transitive}),
        )
    }
}

/// Pure truth object `T^ψ`: at `V`, the projections of `V` (as atom masks)
/// with `<ψ|P|ψ> = 1`; restriction is outer daseinisation.
pub fn truth_object_pure(p: &ContextPoset, psi: &PureState) -> Result<(Presheaf, Vec<Vec<u32>>)> {
    check_dims(psi.dim(), p.dim())?;
    let sigma = spectral_presheaf(p);
    let masks: Vec<Vec<u32>> = (0..p.len())
        .map(|v| {
            let c = p.context(v);
            let n = c.num_atoms();
            (0..1u32 << n)
                .filter(|m| {
                    let proj = c.projection(&(0..n).map(|i| m >> i & 1 == 1).collect::<Vec<_>>());
                    psi.expectation(&proj) >= 1.0 - CERTAINTY_EPS
                })
                .collect()
        })
        .collect();
    let pos: Vec<HashMap<u32, usize>> =
        masks.iter().map(|ms| ms.iter().enumerate().map(|(i, m)| (*m, i)).collect()).collect();
    let stalks = masks.iter().map(|ms| ms.iter().map(|m| format!("{m:b}")).collect()).collect();
    let f = Presheaf::from_fn(p.base().clone(), stalks, |lo, hi, x| {
        let m = masks[hi][x];
        let image = (0..p.context(hi).num_atoms())
            .filter(|i| m >> i & 1 == 1)
            .fold(0u32, |acc, i| acc | 1 << sigma.restrict(lo, hi, i));
        pos[lo][&image]
    });
    Ok((f, masks))
}

/// `F(T^ψ)`, plus the check that `l_g` carries each stalk of `F(T^ψ)`
/// into the same stalk of `F(T^{U_g ψ})`.
pub fn breve_truth_check(lambda: &LambdaPoset, psi: &PureState) -> Result<CaseOutcome> {
    let a = &lambda.action;
    let p = &a.poset;
    let atoms = atom_action(a)?;
    let (t, masks) = truth_object_pure(p, psi)?;
    let breve = FunctorF(lambda).obj(&t)?;
    let mut failures = Vec::new();
    for v in 0..p.len() {
        let expected: usize = lambda.fibre(v).iter().map(|&w| t.stalk_size(lambda.twist(w))).sum();
        if breve.stalk_size(v) != expected {
            failures.push(format!("stalk size at V{v}"));
        }
    }
    for g in 0..a.group.order() {
        let moved = psi.transformed(a.group.element(g));
        let (_, masks2) = truth_object_pure(p, &moved)?;
        for w in 0..lambda.len() {
            let src = lambda.twist(w);
            let dst = lambda.twist(lambda.act(g, w));
            if lambda.proj(lambda.act(g, w)) != lambda.proj(w) {
                failures.push("action leaves the stalk".into());
            }
            for &m in &masks[src] {
                let image = (0..p.context(src).num_atoms())
                    .filter(|i| m >> i & 1 == 1)
                    .fold(0u32, |acc, i| acc | 1 << atoms[g][src][i]);
                if !masks2[dst].contains(&image) {
                    failures.push(format!("l_{} S not in the image truth object", a.group.name(g)));
                }
            }
        }
    }
    failures.sort();
    failures.dedup();
    Ok(CaseOutcome::new(
        "breve truth object",
        failures.is_empty() && breve.check_functoriality().is_empty(),
        serde_json::json!({"stalk_sizes": breve.stalk_sizes(), "failures": failures}),
    ))
}

/// Checks `F(Ω) ≅ G/G_F × Ω` via `i_V(w^g, S) = (w^g, l_{g^{-1}} S)` and its
/// inverse, and `Ω ≅ F(Ω)/G` via `β(S) = [(w^e, S)]` and `γ`.
pub fn omega_iso_checks(lambda: &LambdaPoset, cap: usize) -> Result<Vec<CaseOutcome>> {
    let a = &lambda.action;
    let grp = &a.group;
    let base = lambda.context_base().clone();
    let omega = Omega::new(base.clone(), cap)?;
    let om = &omega.presheaf;
    let f_omega = FunctorF(lambda).obj(om)?;
    let cosets = a.presheaf_g_over_gf();
    let (prod, _, _) = product(&cosets, om)?;
    let shriek = FunctorPShriek(lambda);
    let i_om = FunctorI(lambda).obj(om)?;

    // l_g on sieves: S at V ↦ l_g S at l_g V.
    let act_sieve = |g: usize, v: usize, s: usize| -> usize {
        let mut m: Vec<usize> = omega.sieves[v][s].iter().map(|&x| a.act(g, x)).collect();
        m.sort_unstable();
        omega.sieve_index(a.act(g, v), &m).expect("image of a sieve is a sieve")
    };

    let i_map = PresheafMorphism::new(
        (0..base.len())
            .map(|v| {
                shriek
                    .elements(&i_om, v)
                    .into_iter()
                    .map(|(w, s)| {
                        let g = lambda.representative(w);
                        let (_, c) = lambda.point(w);
                        c * om.stalk_size(v) + act_sieve(grp.inv(g), lambda.twist(w), s)
                    })
                    .collect()
            })
            .collect(),
    );
    let j_map = PresheafMorphism::new(
        (0..base.len())
            .map(|v| {
                let n = om.stalk_size(v);
                (0..prod.stalk_size(v))
                    .map(|k| {
                        let (c, s) = (k / n, k % n);
                        let w = lambda.point_at(v, c);
                        shriek.index(&i_om, w, act_sieve(lambda.representative(w), v, s))
                    })
                    .collect()
            })
            .collect(),
    );
    let i_ok = i_map.is_natural(&f_omega, &prod) && i_map.is_iso(&f_omega, &prod);
    let j_ok = j_map.is_natural(&prod, &f_omega);
    let round = i_map.then(&j_map) == PresheafMorphism::identity(&f_omega)
        && j_map.then(&i_map) == PresheafMorphism::identity(&prod);
    let mut cases = vec![CaseOutcome::new(
        "F(Omega) iso G/G_F x Omega",
        i_ok && j_ok && round,
        serde_json::json!({
            "i_natural_bijection": i_ok,
            "j_natural": j_ok,
            "round_trips": round,
            "f_omega_sizes": f_omega.stalk_sizes(),
            "product_sizes": prod.stalk_sizes(),
            "naturality_squares": base.labels().len(),
        }),
    )];

    // k · (w^g, S) = (w^{kg}, l_k S) on F(Ω)(V).
    let act_f = |k: usize, v: usize, idx: usize| -> usize {
        let (w, s) = shriek.elements(&i_om, v)[idx];
        shriek.index(&i_om, lambda.act(k, w), act_sieve(k, lambda.twist(w), s))
    };
    let classes: Vec<Vec<usize>> = (0..base.len())
        .map(|v| {
            (0..f_omega.stalk_size(v)).map(|x| (0..grp.order()).map(|k| act_f(k, v, x)).min().expect("e")).collect()
        })
        .collect();
    let (quot, qmap) = f_omega.quotient(&classes)?;
    let beta = PresheafMorphism::new(
        (0..base.len())
            .map(|v| {
                let w = lambda.identity_point(v);
                (0..om.stalk_size(v)).map(|s| qmap.apply(v, shriek.index(&i_om, w, s))).collect()
            })
            .collect(),
    );
    let mut unique = true;
    let gamma = PresheafMorphism::new(
        (0..base.len())
            .map(|v| {
                let e_point = lambda.identity_point(v);
                let mut comp = vec![usize::MAX; quot.stalk_size(v)];
                for (idx, (w, s)) in shriek.elements(&i_om, v).into_iter().enumerate() {
                    if w == e_point {
                        let cls = qmap.apply(v, idx);
                        if comp[cls] != usize::MAX {
                            unique = false;
                        }
                        comp[cls] = s;
                    }
                }
                if comp.contains(&usize::MAX) {
                    unique = false;
                }
                comp
            })
            .collect(),
    );
    let ok_maps = unique && beta.is_natural(om, &quot) && gamma.is_natural(&quot, om);
    let round2 = ok_maps
        && beta.then(&gamma) == PresheafMorphism::identity(om)
        && gamma.then(&beta) == PresheafMorphism::identity(&quot);
    cases.push(CaseOutcome::new(
        "Omega of V_f iso F(Omega)/G",
        ok_maps && round2,
        serde_json::json!({
            "gamma_well_defined": unique,
            "natural": ok_maps,
            "round_trips": round2,
            "omega_sizes": om.stalk_sizes(),
            "quotient_sizes": quot.stalk_sizes(),
        }),
    ));
    Ok(cases)
}

/// Outcome of a Kochen–Specker search on `Σ`.
#[derive(Clone, Debug, Serialize)]
pub struct KsReport {
    pub dim: usize,
    pub bases: usize,
    pub contexts: usize,
    pub global_sections: usize,
    pub search_nodes: usize,
    /// Deepest consistent partial assignment, as `(context, atom)` labels.
    pub obstruction: Vec<serde_json::Value>,
}

/// Builds one maximal context per basis, closes downward and under meets,
/// and counts global sections of the spectral presheaf.
pub fn kochen_specker_certificate(
    bases: &[Vec<DVector<C64>>],
    dim: usize,
    tol: &Tolerance,
    poset_cap: usize,
    search_cap: usize,
) -> Result<KsReport> {
    let mut seeds = Vec::with_capacity(bases.len());
    for (b, rays) in bases.iter().enumerate() {
        let normed: Vec<DVector<C64>> = rays
            .iter()
            .map(|r| {
                check_dims(r.len(), dim)?;
                let n = r.norm();
                if !n.is_finite() || n <= 1e-12 {
                    return Err(Error::BadRays(format!("zero ray in basis {b}")));
                }
                Ok(r / C64::new(n, 0.0))
            })
            .collect::<Result<_>>()?;
        for i in 0..normed.len() {
            for j in i + 1..normed.len() {
                if normed[i].dotc(&normed[j]).norm() > 10.0 * tol.eq_eps {
                    return Err(Error::BadRays(format!("rays {i} and {j} of basis {b} are not orthogonal")));
                }
            }
        }
        seeds.push(Context::from_basis(&normed, tol).map_err(|e| Error::BadRays(format!("basis {b}: {e}")))?);
    }
    let group = FiniteUnitaryGroup::trivial(dim);
    let opts = ClosureOptions { group: false, meets: true, downward: true };
    let p = build_poset(&seeds, &group, opts, poset_cap, tol)?;
    let sigma = spectral_presheaf(&p);
    let all: Vec<usize> = (0..p.len()).collect();
    let (families, stats) = matching_families(&sigma, &all, search_cap)?;
    let seed_index: Vec<Option<usize>> = seeds.iter().map(|s| p.index_of(s)).collect();
    let obstruction = stats
        .deepest
        .iter()
        .filter_map(|&(v, x)| {
            let b = seed_index.iter().position(|&i| i == Some(v))?;
            let q = &p.context(v).atoms()[x];
            let ray = bases[b].iter().find(|r| Projector::onto_ray(r).map(|pr| pr.approx_eq(q, tol)).unwrap_or(false));
            Some(serde_json::json!({
                "basis": b,
                "atom": x,
                "ray": ray.map(|r| r.iter().map(|z| z.re).collect::<Vec<_>>()),
            }))
        })
        .collect();
    Ok(KsReport {
        dim,
        bases: bases.len(),
        contexts: p.len(),
        global_sections: families.len(),
        search_nodes: stats.nodes,
        obstruction,
    })
}

fn spectral_projector_at(a: &SelfAdjoint, r: f64, slack: f64) -> Projector {
    Projector::sum(
        a.dim(),
        a.spectrum().iter().zip(a.eigenprojectors()).filter(|(v, _)| **v <= r + slack).map(|(_, q)| q),
    )
}

/// Independent check of `A <=_s B`: at every threshold, midpoint and below
/// all thresholds, `E^B_r <= E^A_r` via `tr(E^B E^A) = rank E^B`.
pub fn spectral_leq_oracle(a: &SelfAdjoint, b: &SelfAdjoint, tol: &Tolerance) -> bool {
    let mut pts: Vec<f64> = a.spectrum().iter().chain(b.spectrum()).copied().collect();
    pts.sort_by(f64::total_cmp);
    let mut probes = vec![pts[0] - 1.0];
    for w in pts.windows(2) {
        probes.push((w[0] + w[1]) / 2.0);
    }
    probes.extend(&pts);
    probes.iter().all(|&r| {
        let ea = spectral_projector_at(a, r, tol.eig_cluster_eps);
        let eb = spectral_projector_at(b, r, tol.eig_cluster_eps);
        let overlap = (eb.matrix() * ea.matrix()).trace().re;
        overlap >= eb.matrix().trace().re - 1e-6
    })
}

/// Spectral-order checks over `observables` and all their daseinisations.
pub fn spectral_order_suite(p: &ContextPoset, observables: &[SelfAdjoint]) -> Result<Vec<CaseOutcome>> {
    let tol = p.tolerance();
    let eps = tol.eig_cluster_eps;
    let mut ops: Vec<SelfAdjoint> = observables.to_vec();
    let mut sandwich = Vec::new();
    let mut spectra = Vec::new();
    let mut brute = Vec::new();
    let mut monotone = Vec::new();
    let mut checked = 0usize;
    for (k, a) in observables.iter().enumerate() {
        let arrow = physical_quantity_arrow(a, p)?;
        for v in 0..p.len() {
            let (inner, outer) = (&arrow.inner[v], &arrow.outer[v]);
            checked += 1;
            if !(spectral_leq(inner, a, tol)? && spectral_leq(a, outer, tol)? && spectral_leq(inner, outer, tol)?) {
                sandwich.push(serde_json::json!({"observable": k, "context": v}));
            }
            for d in [inner, outer] {
                if !d.spectrum().iter().all(|x| a.spectrum().iter().any(|y| (x - y).abs() <= eps)) {
                    spectra.push(serde_json::json!({"observable": k, "context": v}));
                }
            }
            for (dir, d) in [(Direction::Inner, inner), (Direction::Outer, outer)] {
                let b = daseinise_sa_brute(a, p.context(v), dir, tol)?;
                if !b.matrix().approx_eq(d.matrix(), 10.0 * tol.eq_eps) {
                    brute.push(serde_json::json!({"observable": k, "context": v, "direction": dir}));
                }
            }
            for &w in p.base().down(v) {
                if !(spectral_leq(&arrow.inner[w], inner, tol)? && spectral_leq(outer, &arrow.outer[w], tol)?) {
                    monotone.push(serde_json::json!({"observable": k, "lower": w, "upper": v}));
                }
            }
            ops.push(inner.clone());
            ops.push(outer.clone());
        }
    }
    let mut pairs = 0usize;
    let mut mismatch = Vec::new();
    let mut usual = Vec::new();
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            pairs += 1;
            let fast = spectral_leq(a, b, tol)?;
            if fast != spectral_leq_oracle(a, b, tol) {
                mismatch.push(serde_json::json!([i, j]));
            }
            if fast {
                let diff = eigendecompose(&(b.matrix() - a.matrix()), &tol.with_eq_eps(1e-7)?)?;
                if diff.spectrum()[0] < -1e-7 {
                    usual.push(serde_json::json!([i, j]));
                }
            }
        }
    }
    let take = |v: Vec<serde_json::Value>| v.into_iter().take(20).collect::<Vec<_>>();
    Ok(vec![
        CaseOutcome::new(
            "spectral_leq matches threshold oracle",
            mismatch.is_empty(),
            serde_json::json!({"operators": ops.len(), "pairs": pairs, "mismatches": take(mismatch)}),
        ),
        CaseOutcome::new(
            "inner <=_s A <=_s outer",
            sandwich.is_empty(),
            serde_json::json!({"checked": checked, "violations": take(sandwich)}),
        ),
        CaseOutcome::new(
            "daseinised spectra within sp(A)",
            spectra.is_empty(),
            serde_json::json!({"checked": 2 * checked, "violations": take(spectra)}),
        ),
        CaseOutcome::new(
            "daseinisation matches brute-force extremum",
            brute.is_empty(),
            serde_json::json!({"checked": 2 * checked, "violations": take(brute)}),
        ),
        CaseOutcome::new(
            "inner monotone, outer antitone",
            monotone.is_empty(),
            serde_json::json!({"violations": take(monotone)}),
        ),
        CaseOutcome::new(
            "spectral order implies operator order",
            usual.is_empty(),
            serde_json::json!({"violations": take(usual)}),
        ),
    ])
}

/// `δ^o(P)_V` versus brute force for every projector and context.
pub fn daseinisation_brute_suite(p: &ContextPoset, projectors: &[Projector]) -> Result<CaseOutcome> {
    let tol = p.tolerance();
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    let mut antitone = Vec::new();
    for (i, pr) in projectors.iter().enumerate() {
        let outer: Vec<Projector> =
            p.contexts().iter().map(|v| daseinise_projection(pr, v, tol)).collect::<Result<_>>()?;
        for v in 0..p.len() {
            checked += 1;
            let b = daseinise_projection_brute(pr, p.context(v), tol)?;
            let inner = daseinise_projection_inner(pr, p.context(v), tol)?;
            let bi = daseinise_projection_inner_brute(pr, p.context(v), tol)?;
            if !b.approx_eq(&outer[v], tol) || !bi.approx_eq(&inner, tol) || !projector_leq(pr, &outer[v], tol)? {
                mismatches.push(serde_json::json!({"projector": i, "context": v}));
            }
            for &w in p.base().down(v) {
                if !projector_leq(&outer[v], &outer[w], tol)? {
                    antitone.push(serde_json::json!({"projector": i, "lower": w, "upper": v}));
                }
            }
        }
    }
    Ok(CaseOutcome::new(
        "daseinisation equals brute-force meet",
        mismatches.is_empty() && antitone.is_empty(),
        serde_json::json!({
            "checked": checked,
            "mismatches": mismatches.into_iter().take(20).collect::<Vec<_>>(),
            "antitone_violations": antitone.into_iter().take(20).collect::<Vec<_>>(),
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda_site::build_lambda;
    use crate::presheaf::{global_sections, SubobjectLattice, DEFAULT_CAP};
    use std::sync::Arc;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn ket(v: &[f64]) -> DVector<C64> {
        DVector::from_iterator(v.len(), v.iter().map(|x| C64::new(*x, 0.0)))
    }

    fn qubit_action() -> Arc<GroupAction> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = ComplexMatrix::from_real_rows(&[&[s, s], &[s, -s]]);
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[h], 10, &tol()).unwrap());
        let v = Context::from_operators(&[ComplexMatrix::diag(&[1.0, -1.0])], &tol()).unwrap();
        let p = Arc::new(build_poset(&[v], &g, ClosureOptions::default(), 100, &tol()).unwrap());
        Arc::new(GroupAction::new(p, g).unwrap())
    }

    fn cyclic_action() -> Arc<GroupAction> {
        let (sn, cs) = std::f64::consts::FRAC_PI_4.sin_cos();
        let r = ComplexMatrix::from_real_rows(&[&[cs, -sn, 0.0], &[sn, cs, 0.0], &[0.0, 0.0, 1.0]]);
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[r], 100, &tol()).unwrap());
        let v = Context::from_operators(&[ComplexMatrix::diag(&[0.0, 1.0, 2.0])], &tol()).unwrap();
        let p = Arc::new(build_poset(&[v], &g, ClosureOptions::default(), 100, &tol()).unwrap());
        Arc::new(GroupAction::new(p, g).unwrap())
    }

    fn diag_context(n: usize) -> Context {
        Context::from_operators(&[ComplexMatrix::diag(&(0..n).map(|i| i as f64).collect::<Vec<_>>())], &tol()).unwrap()
    }

    fn coarse() -> Context {
        Context::from_operators(&[ComplexMatrix::diag(&[0.0, 0.0, 1.0])], &tol()).unwrap()
    }

    fn e(i: usize, n: usize) -> Projector {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Projector::onto_ray(&ket(&v)).unwrap()
    }

    #[test]
    fn spectral_restriction_follows_containment() {
        let p = ContextPoset::from_contexts(vec![diag_context(3), coarse()], &tol()).unwrap();
        let s = spectral_presheaf(&p);
        let (hi, lo) = (p.index_of(&diag_context(3)).unwrap(), p.index_of(&coarse()).unwrap());
        assert_eq!(s.stalk_size(hi), 3);
        assert_eq!(s.stalk_size(lo), 2);
        for x in 0..3 {
            let q = &p.context(hi).atoms()[x];
            let y = s.restrict(lo, hi, x);
            assert!(projector_leq(q, &p.context(lo).atoms()[y], &tol()).unwrap());
        }
        assert!(s.check_functoriality().is_empty());
    }

    #[test]
    fn outer_daseinisation_examples() {
        let t = tol();
        let v = coarse();
        let p1 = e(0, 3);
        let d = daseinise_projection(&p1, &v, &t).unwrap();
        let expected = Projector::sum(3, [&e(0, 3), &e(1, 3)]);
        assert!(d.approx_eq(&expected, &t));
        assert!(d.approx_eq(&daseinise_projection_brute(&p1, &v, &t).unwrap(), &t));
        let full = diag_context(3);
        assert!(daseinise_projection(&p1, &full, &t).unwrap().approx_eq(&p1, &t));
        assert!(daseinise_projection(&Projector::zero(3), &v, &t).unwrap().is_zero(&t));
        assert!(daseinise_projection(&Projector::identity(3), &v, &t).unwrap().approx_eq(&Projector::identity(3), &t));
        assert!(matches!(daseinise_projection(&e(0, 2), &v, &t), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sa_daseinisation_in_context_is_identity() {
        let t = tol();
        let a = eigendecompose(&ComplexMatrix::diag(&[3.0, -1.0, 2.0]), &t).unwrap();
        for dir in [Direction::Inner, Direction::Outer] {
            let d = daseinise_sa(&a, &diag_context(3), dir, &t).unwrap();
            assert!(d.matrix().approx_eq(a.matrix(), 1e-9));
        }
    }

    #[test]
    fn sa_daseinisation_on_coarse_context() {
        let t = tol();
        // Eigenvalues 0, 1 on the merged block and 2 on the last atom.
        let a = eigendecompose(&ComplexMatrix::diag(&[0.0, 1.0, 2.0]), &t).unwrap();
        let v = coarse();
        let outer = daseinise_sa(&a, &v, Direction::Outer, &t).unwrap();
        let inner = daseinise_sa(&a, &v, Direction::Inner, &t).unwrap();
        assert!(outer.matrix().approx_eq(&ComplexMatrix::diag(&[1.0, 1.0, 2.0]), 1e-9));
        assert!(inner.matrix().approx_eq(&ComplexMatrix::diag(&[0.0, 0.0, 2.0]), 1e-9));
        for dir in [Direction::Inner, Direction::Outer] {
            let b = daseinise_sa_brute(&a, &v, dir, &t).unwrap();
            let d = daseinise_sa(&a, &v, dir, &t).unwrap();
            assert!(b.matrix().approx_eq(d.matrix(), 1e-9));
        }
    }

    #[test]
    fn arrow_exact_in_own_context() {
        let act = cyclic_action();
        let p = &act.poset;
        let sigma = spectral_presheaf(p);
        let a = eigendecompose(&ComplexMatrix::diag(&[0.0, 1.0, 2.0]), &tol()).unwrap();
        let arrow = physical_quantity_arrow(&a, p).unwrap();
        let v = p.index_of(&diag_context(3)).unwrap();
        for x in 0..3 {
            let pair = arrow.value(p, &sigma, v, x);
            let lam = SpectralElement { context: v, atom: x }.eval(p, a.matrix());
            assert!((pair.mu[&v] - lam).abs() < 1e-9);
            assert!((pair.nu[&v] - lam).abs() < 1e-9);
        }
        assert!(arrow.failures(p, &sigma).is_empty());
    }

    #[test]
    fn pure_truth_values() {
        let act = qubit_action();
        let p = &act.poset;
        let z = p.index_of(&Context::from_operators(&[ComplexMatrix::diag(&[1.0, -1.0])], &tol()).unwrap()).unwrap();
        let x = 1 - z;
        let psi = PureState::new(ket(&[1.0, 0.0]), &tol()).unwrap();
        let p0 = e(0, 2);
        assert_eq!(truth_value_pure(p, &p0, &psi, z).unwrap().members, BTreeSet::from([z]));
        assert_eq!(truth_value_pure(p, &p0, &psi, x).unwrap().members, BTreeSet::from([x]));
        assert!(truth_value_pure(p, &e(1, 2), &psi, z).unwrap().members.is_empty());
    }

    #[test]
    fn mixed_truth_values() {
        let act = qubit_action();
        let p = &act.poset;
        let z = p.index_of(&Context::from_operators(&[ComplexMatrix::diag(&[1.0, -1.0])], &tol()).unwrap()).unwrap();
        let grid = RGrid::default();
        let rho = MixedState::maximally_mixed(2);
        let top = Ratio::new(9, 10);
        let tv = truth_value_mixed(p, &e(0, 2), &rho, z, top, &grid).unwrap();
        let expected: BTreeSet<(usize, usize)> = (0..5).map(|k| (z, k)).collect();
        assert_eq!(tv, expected);
        let full = truth_value_mixed(p, &Projector::identity(2), &rho, z, top, &grid).unwrap();
        assert_eq!(full.len(), 9);
        assert!(matches!(
            truth_value_mixed(p, &e(0, 2), &rho, z, Ratio::new(1, 3), &grid),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn grid_parsing() {
        let g = RGrid::parse("1/4, 1/2, 1").unwrap();
        assert_eq!(g.len(), 3);
        assert!(RGrid::parse("1/2,1/4").is_err());
        assert!(RGrid::parse("0,1/2").is_err());
        assert!(RGrid::parse("x").is_err());
        let json = serde_json::to_string(&RGrid::default()).unwrap();
        let back: RGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RGrid::default());
    }

    #[test]
    fn state_validation() {
        assert!(PureState::new(ket(&[1.0, 1.0]), &tol()).is_err());
        assert!(MixedState::new(ComplexMatrix::diag(&[0.5, 0.6]), &tol()).is_err());
        assert!(MixedState::new(ComplexMatrix::diag(&[1.5, -0.5]), &tol()).is_err());
        assert!(MixedState::new(ComplexMatrix::diag(&[0.25, 0.75]), &tol()).is_ok());
    }

    #[test]
    fn covariance_on_cyclic_scenario() {
        let act = cyclic_action();
        let projectors = vec![e(0, 3), e(2, 3), Projector::onto_ray(&ket(&[1.0, 1.0, 1.0])).unwrap()];
        let states = vec![
            PureState::normalized(ket(&[1.0, 0.0, 0.0])).unwrap(),
            PureState::normalized(ket(&[1.0, 2.0, 0.5])).unwrap(),
        ];
        let mixed: Vec<MixedState> = states.iter().map(MixedState::from_pure).collect();
        let observables = vec![eigendecompose(&ComplexMatrix::diag(&[0.0, 1.0, 2.0]), &tol()).unwrap()];
        let grid = RGrid::default();
        let inputs = CovarianceInputs {
            projectors: &projectors,
            states: &states,
            mixed: &mixed,
            observables: &observables,
            grid: &grid,
        };
        for c in covariance_suite(&act, &inputs).unwrap() {
            assert!(c.pass, "{} {}", c.name, c.details);
        }
    }

    #[test]
    fn breve_sigma_qubit() {
        let l = build_lambda(qubit_action()).unwrap();
        let b = breve_sigma(&l).unwrap();
        for v in 0..2 {
            assert_eq!(b.presheaf.stalk_size(v), 4);
        }
        assert!(b.action_checks().pass);
        let lattice = SubobjectLattice::new(&b.sigma);
        for s in lattice.enumerate(DEFAULT_CAP).unwrap() {
            assert_eq!(b.lifted_invariant(&s), b.g_invariant(&s));
        }
    }

    #[test]
    fn omega_isos() {
        for act in [qubit_action(), cyclic_action()] {
            let l = build_lambda(act).unwrap();
            for c in omega_iso_checks(&l, DEFAULT_CAP).unwrap() {
                assert!(c.pass, "{} {}", c.name, c.details);
            }
        }
    }

    #[test]
    fn breve_truth_objects() {
        let l = build_lambda(cyclic_action()).unwrap();
        let psi = PureState::normalized(ket(&[1.0, 0.0, 0.0])).unwrap();
        assert!(breve_truth_check(&l, &psi).unwrap().pass);
    }

    #[test]
    fn ks_controls() {
        let t = tol();
        let basis = vec![ket(&[1.0, 0.0, 0.0]), ket(&[0.0, 1.0, 0.0]), ket(&[0.0, 0.0, 1.0])];
        let r = kochen_specker_certificate(std::slice::from_ref(&basis), 3, &t, 1000, DEFAULT_CAP).unwrap();
        assert_eq!(r.global_sections, 3);
        let bad = vec![ket(&[1.0, 0.0, 0.0]), ket(&[1.0, 1.0, 0.0])];
        assert!(matches!(kochen_specker_certificate(&[bad], 3, &t, 1000, DEFAULT_CAP), Err(Error::BadRays(_))));
    }

    #[test]
    fn ks_antichain_product() {
        let t = tol();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = vec![ket(&[1.0, 0.0]), ket(&[0.0, 1.0])];
        let x = vec![ket(&[s, s]), ket(&[s, -s])];
        let r = kochen_specker_certificate(&[z, x], 2, &t, 100, DEFAULT_CAP).unwrap();
        assert_eq!(r.global_sections, 4);
    }

    #[test]
    fn spectral_suite_cyclic() {
        let act = cyclic_action();
        let obs = vec![
            eigendecompose(&ComplexMatrix::diag(&[0.0, 1.0, 2.0]), &tol()).unwrap(),
            eigendecompose(
                &ComplexMatrix::from_real_rows(&[&[1.0, 0.5, 0.0], &[0.5, 0.0, 0.3], &[0.0, 0.3, -1.0]]),
                &tol(),
            )
            .unwrap(),
        ];
        for c in spectral_order_suite(&act.poset, &obs).unwrap() {
            assert!(c.pass, "{} {}", c.name, c.details);
        }
        let projectors: Vec<Projector> = act.poset.contexts().iter().flat_map(|c| c.atoms().to_vec()).collect();
        assert!(daseinisation_brute_suite(&act.poset, &projectors).unwrap().pass);
    }

    #[test]
    fn global_sections_of_single_context() {
        let p = ContextPoset::from_contexts(vec![diag_context(3)], &tol()).unwrap();
        assert_eq!(global_sections(&spectral_presheaf(&p), DEFAULT_CAP).unwrap().len(), 3);
    }
}
