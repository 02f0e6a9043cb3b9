//! Abelian contexts as atomic partitions of identity, and finite posets of them.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{eigendecompose, projector_leq, ComplexMatrix, Projector, Tolerance, C64};
use crate::presheaf::FinitePoset;
use crate::symmetry::FiniteUnitaryGroup;

use nalgebra::DVector;

/// An abelian subalgebra stored as its minimal projections.
///
/// The trivial algebra `C1` is not representable: every context has at least
/// two atoms.
#[derive(Clone, Debug, Serialize)]
pub struct Context {
    dim: usize,
    atoms: Vec<Projector>,
}

type AtomKey = Vec<(i64, i64)>;

fn canonical_order(atoms: &mut [Projector]) {
    atoms.sort_by(|a, b| b.rank().cmp(&a.rank()).then_with(|| a.matrix().hash_key().cmp(&b.matrix().hash_key())));
}

impl Context {
    /// Validates orthogonality, completeness and the two-atom minimum.
    pub fn from_atoms(atoms: Vec<Projector>, tol: &Tolerance) -> Result<Self> {
        let dim = atoms.first().map(Projector::dim).ok_or(Error::TrivialAlgebra)?;
        for a in &atoms {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: a.dim() });
            }
            if a.is_zero(tol) {
                return Err(Error::InvalidContext("zero atom".into()));
            }
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if !atoms[i].orthogonal_to(&atoms[j], tol) {
                    return Err(Error::InvalidContext(format!("atoms {i} and {j} overlap")));
                }
            }
        }
        let total = Projector::sum(dim, atoms.iter());
        if !total.matrix().approx_eq(&ComplexMatrix::identity(dim), 10.0 * tol.eq_eps) {
            return Err(Error::InvalidContext("atoms do not sum to identity".into()));
        }
        if atoms.len() < 2 {
            return Err(Error::TrivialAlgebra);
        }
        Ok(Context::from_atoms_unchecked(atoms))
    }

    fn from_atoms_unchecked(mut atoms: Vec<Projector>) -> Self {
        canonical_order(&mut atoms);
        Context { dim: atoms[0].dim(), atoms }
    }

    /// Maximal context of an orthonormal family. A partial family gets the
    /// projector onto the orthogonal complement as one more atom.
    pub fn from_basis(vectors: &[DVector<C64>], tol: &Tolerance) -> Result<Self> {
        let dim = vectors.first().map(|v| v.len()).ok_or(Error::TrivialAlgebra)?;
        let mut atoms = Vec::with_capacity(vectors.len() + 1);
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: v.len() });
            }
            atoms.push(Projector::onto_ray(v)?);
        }
        let covered = Projector::sum(dim, atoms.iter());
        if covered.rank() < dim {
            atoms.push(covered.complement());
        }
        Context::from_atoms(atoms, tol)
    }

    /// The algebra generated by pairwise commuting hermitian operators.
    pub fn from_operators(ops: &[ComplexMatrix], tol: &Tolerance) -> Result<Self> {
        let dim = ops.first().map(ComplexMatrix::dim).ok_or(Error::TrivialAlgebra)?;
        for (i, a) in ops.iter().enumerate() {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: a.dim() });
            }
            for b in &ops[i + 1..] {
                let norm = a.commutator_norm(b);
                if norm > tol.eq_eps {
                    return Err(Error::NonCommuting { norm });
                }
            }
        }
        // Refine the partition {1} by each operator's eigenprojectors.
        let mut blocks = vec![Projector::identity(dim)];
        for a in ops {
            let sa = eigendecompose(a, tol)?;
            let mut next = Vec::new();
            for b in &blocks {
                for e in sa.eigenprojectors() {
                    let prod = b.matrix() * e.matrix();
                    if prod.max_abs() > tol.eq_eps.sqrt() {
                        next.push(Projector::new_unchecked(prod));
                    }
                }
            }
            blocks = next;
        }
        if blocks.len() < 2 {
            return Err(Error::TrivialAlgebra);
        }
        Context::from_atoms(blocks, tol)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Projector] {
        &self.atoms
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Atom ranks in canonical order.
    pub fn signature(&self) -> Vec<usize> {
        self.atoms.iter().map(Projector::rank).collect()
    }

    pub(crate) fn key(&self) -> Vec<AtomKey> {
        self.atoms.iter().map(|a| a.matrix().hash_key()).collect()
    }

    /// Equality of atom sets within tolerance.
    pub fn approx_eq(&self, other: &Context, tol: &Tolerance) -> bool {
        self.dim == other.dim
            && self.atoms.len() == other.atoms.len()
            && self.atoms.iter().all(|a| other.atoms.iter().any(|b| a.approx_eq(b, tol)))
    }

    /// Index of the atom containing `p`, if any.
    pub fn atom_containing(&self, p: &Projector, tol: &Tolerance) -> Option<usize> {
        self.atoms.iter().position(|q| projector_leq(p, q, tol).unwrap_or(false))
    }

    pub fn atom_index(&self, p: &Projector, tol: &Tolerance) -> Option<usize> {
        self.atoms.iter().position(|q| q.approx_eq(p, tol))
    }

    /// `U V U^†`, canonicalized.
    pub fn conjugated_by(&self, u: &ComplexMatrix) -> Context {
        Context::from_atoms_unchecked(self.atoms.iter().map(|a| a.conjugated_by(u)).collect())
    }

    /// Projector `sum_{i in mask} atoms[i]`.
    pub fn projection(&self, mask: &[bool]) -> Projector {
        Projector::sum(self.dim, self.atoms.iter().zip(mask).filter(|(_, m)| **m).map(|(a, _)| a))
    }

    /// Whether a projector lies in this algebra.
    pub fn contains_projector(&self, p: &Projector, tol: &Tolerance) -> bool {
        let mask: Vec<bool> = self.atoms.iter().map(|q| projector_leq(q, p, tol).unwrap_or(false)).collect();
        self.projection(&mask).approx_eq(p, tol)
    }

    fn check_dim(&self, other: &Context) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { left: self.dim, right: other.dim })
        }
    }
}

/// `V1 <= V2`: every atom of `V1` is a sum of atoms of `V2`.
pub fn leq(v1: &Context, v2: &Context, tol: &Tolerance) -> Result<bool> {
    v1.check_dim(v2)?;
    Ok(v1.atoms.iter().all(|p| v2.contains_projector(p, tol)))
}

/// The largest common subalgebra, or `None` when it is `C1`.
///
/// Atoms of the meet are the sums over connected components of the graph
/// joining non-orthogonal atoms of the two contexts.
pub fn meet(v1: &Context, v2: &Context, tol: &Tolerance) -> Result<Option<Context>> {
    v1.check_dim(v2)?;
    let n1 = v1.atoms.len();
    let n2 = v2.atoms.len();
    let mut comp: Vec<Option<usize>> = vec![None; n1 + n2];
    let mut next = 0;
    for start in 0..n1 {
        if comp[start].is_some() {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        comp[start] = Some(next);
        while let Some(u) = queue.pop_front() {
            let neighbours: Vec<usize> = if u < n1 {
                (0..n2).filter(|&j| !v1.atoms[u].orthogonal_to(&v2.atoms[j], tol)).map(|j| n1 + j).collect()
            } else {
                (0..n1).filter(|&i| !v2.atoms[u - n1].orthogonal_to(&v1.atoms[i], tol)).collect()
            };
            for w in neighbours {
                if comp[w].is_none() {
                    comp[w] = Some(next);
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    if next < 2 {
        return Ok(None);
    }
    let atoms = (0..next)
        .map(|c| {
            Projector::sum(v1.dim, v1.atoms.iter().enumerate().filter(|(i, _)| comp[*i] == Some(c)).map(|(_, a)| a))
        })
        .collect();
    Ok(Some(Context::from_atoms_unchecked(atoms)))
}

/// All set partitions of `0..n`, each as a block label per element.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, blocks: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks {
            cur.push(b);
            go(i + 1, n, blocks.max(b + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Proper coarsenings with at least two atoms.
pub fn coarse_grainings(v: &Context) -> Vec<Context> {
    let n = v.atoms.len();
    set_partitions(n)
        .into_iter()
        .filter_map(|labels| {
            let blocks = labels.iter().max().map_or(0, |m| m + 1);
            if blocks < 2 || blocks == n {
                return None;
            }
            let atoms = (0..blocks)
                .map(|b| Projector::sum(v.dim, v.atoms.iter().zip(&labels).filter(|(_, l)| **l == b).map(|(a, _)| a)))
                .collect();
            Some(Context::from_atoms_unchecked(atoms))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosureOptions {
    pub group: bool,
    pub meets: bool,
    pub downward: bool,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        ClosureOptions { group: true, meets: true, downward: true }
    }
}

impl ClosureOptions {
    pub const NONE: ClosureOptions = ClosureOptions { group: false, meets: false, downward: false };
}

/// A finite, explicitly enumerated poset of contexts.
#[derive(Clone, Debug)]
pub struct ContextPoset {
    contexts: Vec<Context>,
    index: HashMap<Vec<AtomKey>, usize>,
    base: Arc<FinitePoset>,
    covers: Vec<(usize, usize)>,
    tol: Tolerance,
    frozen: bool,
}

impl ContextPoset {
    /// Poset on exactly the given contexts (duplicates merged).
    pub fn from_contexts(contexts: Vec<Context>, tol: &Tolerance) -> Result<Self> {
        let mut builder = Builder::new(*tol);
        for c in contexts {
            builder.insert(c);
        }
        builder.finish()
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.contexts.first().map_or(0, Context::dim)
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn context(&self, i: usize) -> &Context {
        &self.contexts[i]
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    /// Underlying abstract poset, shared with every presheaf built over it.
    pub fn base(&self) -> &Arc<FinitePoset> {
        &self.base
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.base.leq(a, b)
    }

    /// Hasse covers `(lower, upper)`.
    pub fn covers(&self) -> &[(usize, usize)] {
        &self.covers
    }

    pub fn index_of(&self, v: &Context) -> Option<usize> {
        if let Some(&i) = self.index.get(&v.key()) {
            if self.contexts[i].approx_eq(v, &self.tol) {
                return Some(i);
            }
        }
        self.contexts.iter().position(|c| c.approx_eq(v, &self.tol))
    }

    pub fn require(&self, v: &Context) -> Result<usize> {
        self.index_of(v).ok_or(Error::UnknownContext)
    }

    /// Same contexts with action-dependent operations disabled.
    pub fn frozen(&self) -> ContextPoset {
        let mut p = self.clone();
        p.frozen = true;
        p
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Index of `meet(a, b)` in the poset, if the meet exists and is present.
    pub fn meet_index(&self, a: usize, b: usize) -> Result<Option<usize>> {
        Ok(meet(&self.contexts[a], &self.contexts[b], &self.tol)?.and_then(|m| self.index_of(&m)))
    }

    /// `↓V`.
    pub fn lower_set(&self, v: usize) -> LowerSet {
        LowerSet { members: self.base.down(v).iter().copied().collect() }
    }

    pub fn alexandroff_basis(&self) -> Vec<LowerSet> {
        (0..self.len()).map(|v| self.lower_set(v)).collect()
    }

    /// Pairs `(a, b)` for which `↓a ∩ ↓b` is neither empty nor `↓meet(a, b)`.
    pub fn basis_intersection_failures(&self) -> Result<Vec<(usize, usize)>> {
        let mut bad = Vec::new();
        for a in 0..self.len() {
            for b in a..self.len() {
                let inter: BTreeSet<usize> =
                    self.lower_set(a).members.intersection(&self.lower_set(b).members).copied().collect();
                let ok = match meet(&self.contexts[a], &self.contexts[b], &self.tol)? {
                    Some(m) => match self.index_of(&m) {
                        Some(mi) => inter == self.lower_set(mi).members,
                        None => inter.is_empty(),
                    },
                    None => inter.is_empty(),
                };
                if !ok {
                    bad.push((a, b));
                }
            }
        }
        Ok(bad)
    }

    /// Image of context `v` under conjugation by `u`, as an index.
    pub fn act_index(&self, u: &ComplexMatrix, v: usize) -> Result<usize> {
        self.index_of(&self.contexts[v].conjugated_by(u))
            .ok_or(Error::NotClosedUnderAction { element: usize::MAX, context: v })
    }

    /// DOT rendering of the Hasse diagram.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph contexts {\n  rankdir=BT;\n");
        for (i, c) in self.contexts.iter().enumerate() {
            let sig: Vec<String> = c.signature().iter().map(|r| r.to_string()).collect();
            s.push_str(&format!("  c{i} [label=\"V{i} ({})\"];\n", sig.join("+")));
        }
        for (lo, hi) in &self.covers {
            s.push_str(&format!("  c{lo} -> c{hi};\n"));
        }
        s.push_str("}\n");
        s
    }
}

/// A downward-closed set of context indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LowerSet {
    pub members: BTreeSet<usize>,
}

struct Builder {
    tol: Tolerance,
    contexts: Vec<Context>,
    index: HashMap<Vec<AtomKey>, usize>,
}

impl Builder {
    fn new(tol: Tolerance) -> Self {
        Builder { tol, contexts: Vec::new(), index: HashMap::new() }
    }

    fn find(&self, c: &Context) -> Option<usize> {
        if let Some(&i) = self.index.get(&c.key()) {
            if self.contexts[i].approx_eq(c, &self.tol) {
                return Some(i);
            }
        }
        self.contexts.iter().position(|d| d.approx_eq(c, &self.tol))
    }

    /// Returns the index and whether the context was new.
    fn insert(&mut self, c: Context) -> (usize, bool) {
        if let Some(i) = self.find(&c) {
            return (i, false);
        }
        let i = self.contexts.len();
        self.index.insert(c.key(), i);
        self.contexts.push(c);
        (i, true)
    }

    fn finish(self) -> Result<ContextPoset> {
        let n = self.contexts.len();
        let mut rel = vec![vec![false; n]; n];
        for a in 0..n {
            for b in 0..n {
                rel[a][b] = a == b || leq(&self.contexts[a], &self.contexts[b], &self.tol)?;
            }
        }
        let labels = (0..n).map(|i| format!("V{i}")).collect();
        let base = Arc::new(FinitePoset::from_relation(labels, rel)?);
        let covers = base.covers();
        Ok(ContextPoset { contexts: self.contexts, index: self.index, base, covers, tol: self.tol, frozen: false })
    }
}

/// Closes `seeds` under the requested operations.
pub fn build_poset(
    seeds: &[Context],
    group: &FiniteUnitaryGroup,
    opts: ClosureOptions,
    cap: usize,
    tol: &Tolerance,
) -> Result<ContextPoset> {
    let mut b = Builder::new(*tol);
    let mut queue = VecDeque::new();
    for s in seeds {
        if s.dim() != group.dim() {
            return Err(Error::DimensionMismatch { left: group.dim(), right: s.dim() });
        }
        let (i, new) = b.insert(s.clone());
        if new {
            queue.push_back(i);
        }
    }
    let push = |b: &mut Builder, queue: &mut VecDeque<usize>, c: Context| -> Result<()> {
        let (i, new) = b.insert(c);
        if new {
            if b.contexts.len() > cap {
                return Err(Error::CapExceeded { what: "contexts", cap });
            }
            queue.push_back(i);
        }
        Ok(())
    };
    while let Some(i) = queue.pop_front() {
        let c = b.contexts[i].clone();
        if opts.group {
            for g in group.elements() {
                push(&mut b, &mut queue, c.conjugated_by(g))?;
            }
        }
        if opts.downward {
            for d in coarse_grainings(&c) {
                push(&mut b, &mut queue, d)?;
            }
        }
        if opts.meets {
            for j in 0..b.contexts.len() {
                if j == i {
                    continue;
                }
                if let Some(m) = meet(&c, &b.contexts[j], tol)? {
                    push(&mut b, &mut queue, m)?;
                }
            }
        }
    }
    b.finish()
}
