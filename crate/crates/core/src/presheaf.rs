//! Presheaves of finite sets on finite posets.
//!
//! A presheaf stores one labelled stalk per poset element and a restriction
//! table for every comparable pair. Sections over lower sets, sub-objects,
//! the sieve classifier, hom-sets and pointwise (co)limits are derived from
//! that data on demand.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default cap on candidate assignments for enumerative operations.
pub const DEFAULT_CAP: usize = 1_000_000;

/// A partial order on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinitePoset {
    labels: Vec<String>,
    rel: Vec<Vec<bool>>,
    down: Vec<Vec<usize>>,
    up: Vec<Vec<usize>>,
    linear: Vec<usize>,
}

impl FinitePoset {
    /// From a full order relation; `rel[a][b]` means `a <= b`.
    pub fn from_relation(labels: Vec<String>, mut rel: Vec<Vec<bool>>) -> Result<Self> {
        let n = labels.len();
        if rel.len() != n || rel.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("relation shape does not match labels".into()));
        }
        for (i, row) in rel.iter_mut().enumerate() {
            row[i] = true;
        }
        for a in 0..n {
            for b in 0..n {
                if a != b && rel[a][b] && rel[b][a] {
                    return Err(Error::Validation(format!("{} and {} are equivalent", labels[a], labels[b])));
                }
                if rel[a][b] {
                    for c in 0..n {
                        if rel[b][c] && !rel[a][c] {
                            return Err(Error::Validation(format!(
                                "relation not transitive at {} <= {} <= {}",
                                labels[a], labels[b], labels[c]
                            )));
                        }
                    }
                }
            }
        }
        let down: Vec<Vec<usize>> = (0..n).map(|p| (0..n).filter(|&q| rel[q][p]).collect()).collect();
        let up: Vec<Vec<usize>> = (0..n).map(|p| (0..n).filter(|&q| rel[p][q]).collect()).collect();
        // Sorting by down-set size yields a linear extension.
        let mut linear: Vec<usize> = (0..n).collect();
        linear.sort_by_key(|&p| (down[p].len(), p));
        Ok(FinitePoset { labels, rel, down, up, linear })
    }

    /// Transitive closure of the given `(lower, upper)` pairs.
    pub fn from_pairs(labels: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut rel = vec![vec![false; n]; n];
        for i in 0..n {
            rel[i][i] = true;
        }
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::Validation(format!("pair ({a}, {b}) out of range")));
            }
            rel[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if rel[i][k] {
                    for j in 0..n {
                        if rel[k][j] {
                            rel[i][j] = true;
                        }
                    }
                }
            }
        }
        FinitePoset::from_relation(labels, rel)
    }

    pub fn chain(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        FinitePoset::from_pairs((0..n).map(|i| format!("c{i}")).collect(), &pairs).expect("chain")
    }

    pub fn antichain(n: usize) -> Self {
        FinitePoset::from_pairs((0..n).map(|i| format!("a{i}")).collect(), &[]).expect("antichain")
    }

    /// Product order; element `(a, b)` has index `a * right.len() + b`.
    pub fn product(left: &FinitePoset, right: &FinitePoset) -> Self {
        let (n, m) = (left.len(), right.len());
        let mut labels = Vec::with_capacity(n * m);
        let mut rel = vec![vec![false; n * m]; n * m];
        for a in 0..n {
            for b in 0..m {
                labels.push(format!("({},{})", left.labels[a], right.labels[b]));
                for c in 0..n {
                    for d in 0..m {
                        rel[a * m + b][c * m + d] = left.rel[a][c] && right.rel[b][d];
                    }
                }
            }
        }
        FinitePoset::from_relation(labels, rel).expect("product of posets")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, p: usize) -> &str {
        &self.labels[p]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.rel[a][b]
    }

    /// `↓p`, ascending indices, including `p`.
    pub fn down(&self, p: usize) -> &[usize] {
        &self.down[p]
    }

    /// `↑p`, ascending indices, including `p`.
    pub fn up(&self, p: usize) -> &[usize] {
        &self.up[p]
    }

    /// Linear extension, minimal elements first.
    pub fn linear_extension(&self) -> &[usize] {
        &self.linear
    }

    /// Hasse covers `(lower, upper)`.
    pub fn covers(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for &b in &self.up[a] {
                if a != b && !(0..n).any(|c| c != a && c != b && self.rel[a][c] && self.rel[c][b]) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn maximal(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.up[p].len() == 1).collect()
    }

    /// Validates downward closure.
    pub fn check_lower_set(&self, set: &BTreeSet<usize>) -> Result<()> {
        for &p in set {
            if p >= self.len() {
                return Err(Error::Validation(format!("element {p} out of range")));
            }
            if let Some(&q) = self.down[p].iter().find(|q| !set.contains(q)) {
                return Err(Error::NotDownwardClosed { element: q, above: p });
            }
        }
        Ok(())
    }

    /// All lower sets of `↓p` (the sieves on `p`), each ascending.
    pub fn sieves(&self, p: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
        let order: Vec<usize> = self.linear.iter().copied().filter(|&q| self.rel[q][p]).collect();
        let mut out = Vec::new();
        let mut chosen = vec![false; self.len()];
        fn go(
            poset: &FinitePoset,
            order: &[usize],
            k: usize,
            chosen: &mut Vec<bool>,
            out: &mut Vec<Vec<usize>>,
            cap: usize,
        ) -> Result<()> {
            if out.len() > cap {
                return Err(Error::TooLarge { cap });
            }
            if k == order.len() {
                let mut s: Vec<usize> = order.iter().copied().filter(|&q| chosen[q]).collect();
                s.sort_unstable();
                out.push(s);
                return Ok(());
            }
            let q = order[k];
            go(poset, order, k + 1, chosen, out, cap)?;
            if poset.down[q].iter().all(|&r| r == q || chosen[r]) {
                chosen[q] = true;
                go(poset, order, k + 1, chosen, out, cap)?;
                chosen[q] = false;
            }
            Ok(())
        }
        go(self, &order, 0, &mut chosen, &mut out, cap)?;
        out.sort();
        Ok(out)
    }

    /// Connected components of the comparability graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            comp[s] = id;
            while let Some(u) = stack.pop() {
                members.push(u);
                for v in self.down[u].iter().chain(&self.up[u]) {
                    if comp[*v] == usize::MAX {
                        comp[*v] = id;
                        stack.push(*v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Whether `f` (indexed by elements of `self`) is monotone into `target`.
    pub fn is_monotone(&self, f: &[usize], target: &FinitePoset) -> bool {
        (0..self.len()).all(|a| self.up[a].iter().all(|&b| target.leq(f[a], f[b])))
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph {name} {{\n  rankdir=BT;\n");
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(&format!("  n{i} [label=\"{l}\"];\n"));
        }
        for (a, b) in self.covers() {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        s.push_str("}\n");
        s
    }
}

/// Sieve on `at`: a downward-closed subset of `↓at`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Sieve {
    pub at: usize,
    pub members: BTreeSet<usize>,
}

impl Sieve {
    /// `L_S = ∪_{q in S} ↓q`.
    pub fn to_lower_set(&self, poset: &FinitePoset) -> BTreeSet<usize> {
        self.members.iter().flat_map(|&q| poset.down(q).iter().copied()).collect()
    }

    /// `S_L = {q <= p | ↓q ⊆ L}`.
    pub fn from_lower_set(at: usize, lower: &BTreeSet<usize>, poset: &FinitePoset) -> Sieve {
        let members =
            poset.down(at).iter().copied().filter(|&q| poset.down(q).iter().all(|r| lower.contains(r))).collect();
        Sieve { at, members }
    }
}

/// A restriction-law violation found by [`Presheaf::check_functoriality`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FunctorialityViolation {
    Identity { at: usize, element: usize },
    Composition { lo: usize, mid: usize, hi: usize, element: usize },
    OutOfRange { lo: usize, hi: usize, element: usize },
}

/// Presheaf of finite sets.
#[derive(Clone, Debug)]
pub struct Presheaf {
    base: Arc<FinitePoset>,
    stalks: Vec<Vec<String>>,
    restrict: HashMap<(usize, usize), Vec<usize>>,
}

impl Presheaf {
    /// Builds restriction tables from `f(lo, hi, x)` for `lo < hi`; identities
    /// are filled in. No laws are checked.
    pub fn from_fn(
        base: Arc<FinitePoset>,
        stalks: Vec<Vec<String>>,
        mut f: impl FnMut(usize, usize, usize) -> usize,
    ) -> Self {
        assert_eq!(base.len(), stalks.len(), "one stalk per base element");
        let mut restrict = HashMap::new();
        for hi in 0..base.len() {
            for &lo in base.down(hi) {
                let table = if lo == hi {
                    (0..stalks[hi].len()).collect()
                } else {
                    (0..stalks[hi].len()).map(|x| f(lo, hi, x)).collect()
                };
                restrict.insert((lo, hi), table);
            }
        }
        Presheaf { base, stalks, restrict }
    }

    /// Singleton stalks.
    pub fn terminal(base: Arc<FinitePoset>) -> Self {
        let stalks = vec![vec!["*".to_string()]; base.len()];
        Presheaf::from_fn(base, stalks, |_, _, _| 0)
    }

    /// Empty stalks.
    pub fn initial(base: Arc<FinitePoset>) -> Self {
        let stalks = vec![Vec::new(); base.len()];
        Presheaf::from_fn(base, stalks, |_, _, _| 0)
    }

    /// The same set at every element, identity restrictions.
    pub fn constant(base: Arc<FinitePoset>, labels: Vec<String>) -> Self {
        let stalks = vec![labels; base.len()];
        Presheaf::from_fn(base, stalks, |_, _, x| x)
    }

    /// Overwrites one restriction entry. Meant for building negative cases.
    pub fn set_restriction(&mut self, lo: usize, hi: usize, x: usize, y: usize) {
        if let Some(t) = self.restrict.get_mut(&(lo, hi)) {
            t[x] = y;
        }
    }

    pub fn base(&self) -> &Arc<FinitePoset> {
        &self.base
    }

    pub fn stalk_size(&self, p: usize) -> usize {
        self.stalks[p].len()
    }

    pub fn stalk_sizes(&self) -> Vec<usize> {
        self.stalks.iter().map(Vec::len).collect()
    }

    pub fn labels(&self, p: usize) -> &[String] {
        &self.stalks[p]
    }

    pub fn total_size(&self) -> usize {
        self.stalks.iter().map(Vec::len).sum()
    }

    /// `x|_{lo}` for `x` in the stalk at `hi`.
    pub fn restrict(&self, lo: usize, hi: usize, x: usize) -> usize {
        self.restrict[&(lo, hi)][x]
    }

    pub fn restriction(&self, lo: usize, hi: usize) -> &[usize] {
        &self.restrict[&(lo, hi)]
    }

    pub fn same_base(&self, other: &Presheaf) -> bool {
        Arc::ptr_eq(&self.base, &other.base) || *self.base == *other.base
    }

    /// Every violated identity or composition law.
    pub fn check_functoriality(&self) -> Vec<FunctorialityViolation> {
        let mut out = Vec::new();
        let b = &self.base;
        for hi in 0..b.len() {
            for &lo in b.down(hi) {
                for (x, &y) in self.restriction(lo, hi).iter().enumerate() {
                    if y >= self.stalk_size(lo) {
                        out.push(FunctorialityViolation::OutOfRange { lo, hi, element: x });
                    }
                }
            }
            for x in 0..self.stalk_size(hi) {
                if self.restrict(hi, hi, x) != x {
                    out.push(FunctorialityViolation::Identity { at: hi, element: x });
                }
            }
        }
        if !out.is_empty() {
            return out;
        }
        for hi in 0..b.len() {
            for &mid in b.down(hi) {
                if mid == hi {
                    continue;
                }
                for &lo in b.down(mid) {
                    if lo == mid {
                        continue;
                    }
                    for x in 0..self.stalk_size(hi) {
                        let direct = self.restrict(lo, hi, x);
                        let step = self.restrict(lo, mid, self.restrict(mid, hi, x));
                        if direct != step {
                            out.push(FunctorialityViolation::Composition { lo, mid, hi, element: x });
                        }
                    }
                }
            }
        }
        out
    }

    /// Pullback along a monotone map `f: new_base -> self.base`.
    pub fn pullback(&self, new_base: Arc<FinitePoset>, f: &[usize]) -> Result<Presheaf> {
        if f.len() != new_base.len() || !new_base.is_monotone(f, &self.base) {
            return Err(Error::Validation("pullback map is not monotone".into()));
        }
        let stalks = f.iter().map(|&p| self.stalks[p].clone()).collect();
        Ok(Presheaf::from_fn(new_base, stalks, |lo, hi, x| self.restrict(f[lo], f[hi], x)))
    }

    /// Pointwise quotient by per-stalk class labels `class[p][x]`, which must
    /// be compatible with restriction. Classes are numbered densely.
    pub fn quotient(&self, class: &[Vec<usize>]) -> Result<(Presheaf, PresheafMorphism)> {
        let b = &self.base;
        let mut dense: Vec<Vec<usize>> = Vec::with_capacity(b.len());
        let mut stalks = Vec::with_capacity(b.len());
        let mut reps: Vec<Vec<usize>> = Vec::with_capacity(b.len());
        for p in 0..b.len() {
            let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
            let mut r = Vec::new();
            let d: Vec<usize> = class[p]
                .iter()
                .enumerate()
                .map(|(x, c)| {
                    let next = ids.len();
                    *ids.entry(*c).or_insert_with(|| {
                        r.push(x);
                        next
                    })
                })
                .collect();
            stalks.push(r.iter().map(|&x| format!("[{}]", self.stalks[p][x])).collect());
            reps.push(r);
            dense.push(d);
        }
        for hi in 0..b.len() {
            for &lo in b.down(hi) {
                for x in 0..self.stalk_size(hi) {
                    for y in 0..self.stalk_size(hi) {
                        if dense[hi][x] == dense[hi][y]
                            && dense[lo][self.restrict(lo, hi, x)] != dense[lo][self.restrict(lo, hi, y)]
                        {
                            return Err(Error::Validation(format!(
                                "classes not stable under restriction {lo} <= {hi}"
                            )));
                        }
                    }
                }
            }
        }
        let q = Presheaf::from_fn(self.base.clone(), stalks, |lo, hi, c| dense[lo][self.restrict(lo, hi, reps[hi][c])]);
        Ok((q, PresheafMorphism::new(dense)))
    }

    /// JSON export: stalk labels and restriction tables along covers.
    pub fn to_json(&self) -> serde_json::Value {
        let restrictions: Vec<serde_json::Value> = self
            .base
            .covers()
            .into_iter()
            .map(|(lo, hi)| serde_json::json!({ "lower": lo, "upper": hi, "map": self.restriction(lo, hi) }))
            .collect();
        serde_json::json!({
            "base": self.base.labels(),
            "stalks": self.stalks,
            "restrictions": restrictions,
        })
    }
}

/// Components of a natural transformation; `components[p][x]` is the image
/// of `x` in the target stalk at `p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PresheafMorphism {
    pub components: Vec<Vec<usize>>,
}

impl PresheafMorphism {
    pub fn new(components: Vec<Vec<usize>>) -> Self {
        PresheafMorphism { components }
    }

    pub fn identity(f: &Presheaf) -> Self {
        PresheafMorphism::new((0..f.base.len()).map(|p| (0..f.stalk_size(p)).collect()).collect())
    }

    pub fn apply(&self, p: usize, x: usize) -> usize {
        self.components[p][x]
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &PresheafMorphism) -> PresheafMorphism {
        PresheafMorphism::new(
            self.components.iter().zip(&other.components).map(|(a, b)| a.iter().map(|&y| b[y]).collect()).collect(),
        )
    }

    /// Pairs `(p, lo)` with a failing naturality square, or a shape error.
    pub fn naturality_failures(&self, src: &Presheaf, tgt: &Presheaf) -> Vec<(usize, usize)> {
        let b = &src.base;
        let mut out = Vec::new();
        if self.components.len() != b.len() || !src.same_base(tgt) {
            out.push((usize::MAX, usize::MAX));
            return out;
        }
        for p in 0..b.len() {
            if self.components[p].len() != src.stalk_size(p)
                || self.components[p].iter().any(|&y| y >= tgt.stalk_size(p))
            {
                out.push((p, p));
                continue;
            }
        }
        if !out.is_empty() {
            return out;
        }
        for p in 0..b.len() {
            for &lo in b.down(p) {
                let ok = (0..src.stalk_size(p))
                    .all(|x| tgt.restrict(lo, p, self.components[p][x]) == self.components[lo][src.restrict(lo, p, x)]);
                if !ok {
                    out.push((p, lo));
                }
            }
        }
        out
    }

    pub fn is_natural(&self, src: &Presheaf, tgt: &Presheaf) -> bool {
        self.naturality_failures(src, tgt).is_empty()
    }

    pub fn is_monic(&self, tgt: &Presheaf) -> bool {
        self.components.iter().enumerate().all(|(p, c)| {
            let set: BTreeSet<usize> = c.iter().copied().collect();
            set.len() == c.len() && c.len() <= tgt.stalk_size(p)
        })
    }

    pub fn is_epic(&self, tgt: &Presheaf) -> bool {
        self.components
            .iter()
            .enumerate()
            .all(|(p, c)| c.iter().copied().collect::<BTreeSet<usize>>().len() == tgt.stalk_size(p))
    }

    pub fn is_iso(&self, src: &Presheaf, tgt: &Presheaf) -> bool {
        self.is_natural(src, tgt) && self.is_monic(tgt) && self.is_epic(tgt)
    }
}

fn check_same_base(a: &Presheaf, b: &Presheaf) -> Result<()> {
    if a.same_base(b) {
        Ok(())
    } else {
        Err(Error::BaseMismatch)
    }
}

/// Pointwise product with its projections.
pub fn product(a: &Presheaf, b: &Presheaf) -> Result<(Presheaf, PresheafMorphism, PresheafMorphism)> {
    check_same_base(a, b)?;
    let n = a.base.len();
    let mut stalks = Vec::with_capacity(n);
    let mut p1 = Vec::with_capacity(n);
    let mut p2 = Vec::with_capacity(n);
    for p in 0..n {
        let (sa, sb) = (a.stalk_size(p), b.stalk_size(p));
        let mut labels = Vec::with_capacity(sa * sb);
        for x in 0..sa {
            for y in 0..sb {
                labels.push(format!("({},{})", a.stalks[p][x], b.stalks[p][y]));
            }
        }
        stalks.push(labels);
        p1.push((0..sa * sb).map(|k| k / sb.max(1)).collect());
        p2.push((0..sa * sb).map(|k| k % sb.max(1)).collect());
    }
    let f = Presheaf::from_fn(a.base.clone(), stalks, |lo, hi, k| {
        let sb_hi = b.stalk_size(hi);
        let (x, y) = (k / sb_hi, k % sb_hi);
        a.restrict(lo, hi, x) * b.stalk_size(lo) + b.restrict(lo, hi, y)
    });
    Ok((f, PresheafMorphism::new(p1), PresheafMorphism::new(p2)))
}

/// `<f, g>: X -> A x B` for the product built by [`product`].
pub fn pair(f: &PresheafMorphism, g: &PresheafMorphism, b: &Presheaf) -> PresheafMorphism {
    PresheafMorphism::new(
        f.components
            .iter()
            .zip(&g.components)
            .enumerate()
            .map(|(p, (fc, gc))| fc.iter().zip(gc).map(|(x, y)| x * b.stalk_size(p) + y).collect())
            .collect(),
    )
}

/// Pointwise disjoint union with its injections.
pub fn coproduct(a: &Presheaf, b: &Presheaf) -> Result<(Presheaf, PresheafMorphism, PresheafMorphism)> {
    check_same_base(a, b)?;
    let n = a.base.len();
    let stalks: Vec<Vec<String>> = (0..n)
        .map(|p| {
            a.stalks[p].iter().map(|l| format!("L{l}")).chain(b.stalks[p].iter().map(|l| format!("R{l}"))).collect()
        })
        .collect();
    let i1 = PresheafMorphism::new((0..n).map(|p| (0..a.stalk_size(p)).collect()).collect());
    let i2 =
        PresheafMorphism::new((0..n).map(|p| (0..b.stalk_size(p)).map(|y| a.stalk_size(p) + y).collect()).collect());
    let f = Presheaf::from_fn(a.base.clone(), stalks, |lo, hi, k| {
        let sa = a.stalk_size(hi);
        if k < sa {
            a.restrict(lo, hi, k)
        } else {
            a.stalk_size(lo) + b.restrict(lo, hi, k - sa)
        }
    });
    Ok((f, i1, i2))
}

/// `[f, g]: A + B -> X` for the coproduct built by [`coproduct`].
pub fn copair(f: &PresheafMorphism, g: &PresheafMorphism) -> PresheafMorphism {
    PresheafMorphism::new(
        f.components.iter().zip(&g.components).map(|(fc, gc)| fc.iter().chain(gc).copied().collect()).collect(),
    )
}

/// Equalizer of `f, g: A -> B` as a sub-presheaf of `A`.
pub fn equalizer(a: &Presheaf, f: &PresheafMorphism, g: &PresheafMorphism) -> (Presheaf, PresheafMorphism) {
    let n = a.base.len();
    let keep: Vec<Vec<usize>> =
        (0..n).map(|p| (0..a.stalk_size(p)).filter(|&x| f.apply(p, x) == g.apply(p, x)).collect()).collect();
    let pos: Vec<HashMap<usize, usize>> =
        keep.iter().map(|k| k.iter().enumerate().map(|(i, &x)| (x, i)).collect()).collect();
    let stalks = keep.iter().enumerate().map(|(p, k)| k.iter().map(|&x| a.stalks[p][x].clone()).collect()).collect();
    let e = Presheaf::from_fn(a.base.clone(), stalks, |lo, hi, i| pos[lo][&a.restrict(lo, hi, keep[hi][i])]);
    (e, PresheafMorphism::new(keep))
}

/// Coequalizer of `f, g: A -> B`: pointwise quotient of `B` by the
/// equivalence generated by `f(a) ~ g(a)`.
pub fn coequalizer(
    a: &Presheaf,
    b: &Presheaf,
    f: &PresheafMorphism,
    g: &PresheafMorphism,
) -> Result<(Presheaf, PresheafMorphism)> {
    let classes: Vec<Vec<usize>> = (0..b.base.len())
        .map(|p| {
            let mut uf: Vec<usize> = (0..b.stalk_size(p)).collect();
            fn find(uf: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while uf[r] != r {
                    r = uf[r];
                }
                uf[x] = r;
                r
            }
            for x in 0..a.stalk_size(p) {
                let (u, v) = (find(&mut uf, f.apply(p, x)), find(&mut uf, g.apply(p, x)));
                if u != v {
                    uf[u.max(v)] = u.min(v);
                }
            }
            (0..b.stalk_size(p)).map(|y| find(&mut uf, y)).collect()
        })
        .collect();
    b.quotient(&classes)
}

/// Search statistics for section and hom enumeration.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SearchStats {
    pub nodes: usize,
    /// Longest partial assignment reached, as `(element, value)` pairs.
    pub deepest: Vec<(usize, usize)>,
}

/// Matching families over `elements` (which must be a lower set for the
/// result to be the inverse limit). Each family lists values in the order
/// of `elements`.
pub fn matching_families(f: &Presheaf, elements: &[usize], cap: usize) -> Result<(Vec<Vec<usize>>, SearchStats)> {
    let base = &f.base;
    let set: BTreeSet<usize> = elements.iter().copied().collect();
    // Each maximal element is followed by its unplaced down-set, so values
    // below are forced early and conflicts surface near the root.
    let mut order: Vec<usize> = Vec::with_capacity(set.len());
    let mut placed = vec![false; base.len()];
    let rank: Vec<usize> = {
        let mut r = vec![0; base.len()];
        for (i, &p) in base.linear_extension().iter().enumerate() {
            r[p] = i;
        }
        r
    };
    for &p in base.linear_extension().iter().rev() {
        if !set.contains(&p) || placed[p] {
            continue;
        }
        let mut below: Vec<usize> = base.down(p).iter().copied().filter(|q| set.contains(q) && !placed[*q]).collect();
        below.sort_by_key(|&q| std::cmp::Reverse(rank[q]));
        for q in below {
            placed[q] = true;
            order.push(q);
        }
    }
    let mut value: Vec<Option<usize>> = vec![None; base.len()];
    let mut out = Vec::new();
    let mut stats = SearchStats::default();
    let mut trail: Vec<(usize, usize)> = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn go(
        f: &Presheaf,
        order: &[usize],
        k: usize,
        value: &mut Vec<Option<usize>>,
        trail: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<usize>>,
        stats: &mut SearchStats,
        cap: usize,
    ) -> Result<()> {
        stats.nodes += 1;
        if stats.nodes > cap {
            return Err(Error::TooLarge { cap });
        }
        if trail.len() > stats.deepest.len() {
            stats.deepest = trail.clone();
        }
        if k == order.len() {
            out.push(order.iter().map(|&p| value[p].expect("assigned")).collect());
            return Ok(());
        }
        let p = order[k];
        let above: Vec<usize> = f.base.up(p).iter().copied().filter(|&q| q != p && value[q].is_some()).collect();
        let candidates: Vec<usize> = match above.first() {
            Some(&q) => vec![f.restrict(p, q, value[q].expect("assigned"))],
            None => (0..f.stalk_size(p)).collect(),
        };
        let below: Vec<usize> = f.base.down(p).iter().copied().filter(|&q| q != p && value[q].is_some()).collect();
        for x in candidates {
            if above.iter().all(|&q| f.restrict(p, q, value[q].expect("assigned")) == x)
                && below.iter().all(|&q| f.restrict(q, p, x) == value[q].expect("assigned"))
            {
                value[p] = Some(x);
                trail.push((p, x));
                go(f, order, k + 1, value, trail, out, stats, cap)?;
                trail.pop();
                value[p] = None;
            }
        }
        Ok(())
    }
    go(f, &order, 0, &mut value, &mut trail, &mut out, &mut stats, cap)?;
    // Report families in the caller's element order.
    let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let out = out.into_iter().map(|fam| elements.iter().map(|p| fam[pos[p]]).collect()).collect();
    Ok((out, stats))
}

/// Global sections, each as one value per base element.
pub fn global_sections(f: &Presheaf, cap: usize) -> Result<Vec<Vec<usize>>> {
    let all: Vec<usize> = (0..f.base.len()).collect();
    Ok(matching_families(f, &all, cap)?.0)
}

/// Matching families over a lower set `o`, listed over ascending elements.
pub fn sections_over(f: &Presheaf, o: &BTreeSet<usize>, cap: usize) -> Result<Vec<Vec<usize>>> {
    f.base.check_lower_set(o)?;
    let elements: Vec<usize> = o.iter().copied().collect();
    Ok(matching_families(f, &elements, cap)?.0)
}

/// Étalé space: points `(p, x)`, ordered by `p' <= p` and `x|_{p'} = x'`.
pub struct EtaleSpace {
    pub poset: Arc<FinitePoset>,
    pub points: Vec<(usize, usize)>,
    pub projection: Vec<usize>,
}

pub fn etale_space(f: &Presheaf) -> EtaleSpace {
    let b = &f.base;
    let points: Vec<(usize, usize)> = (0..b.len()).flat_map(|p| (0..f.stalk_size(p)).map(move |x| (p, x))).collect();
    let labels = points.iter().map(|&(p, x)| format!("{}:{}", b.label(p), f.stalks[p][x])).collect();
    let n = points.len();
    let mut rel = vec![vec![false; n]; n];
    for (i, &(p, x)) in points.iter().enumerate() {
        for (j, &(q, y)) in points.iter().enumerate() {
            rel[j][i] = b.leq(q, p) && f.restrict(q, p, x) == y;
        }
    }
    let poset = FinitePoset::from_relation(labels, rel).expect("étalé order of a presheaf");
    let projection = points.iter().map(|&(p, _)| p).collect();
    EtaleSpace { poset: Arc::new(poset), points, projection }
}

/// The sub-object classifier with sieve payloads.
#[derive(Clone, Debug)]
pub struct Omega {
    pub presheaf: Presheaf,
    /// `sieves[p][s]` lists the members of sieve `s` at `p`, ascending.
    pub sieves: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
}

impl Omega {
    pub fn new(base: Arc<FinitePoset>, cap: usize) -> Result<Self> {
        let mut sieves = Vec::with_capacity(base.len());
        for p in 0..base.len() {
            sieves.push(base.sieves(p, cap)?);
        }
        let index: Vec<HashMap<Vec<usize>, usize>> =
            sieves.iter().map(|ss| ss.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()).collect();
        let stalks = sieves
            .iter()
            .map(|ss| {
                ss.iter()
                    .map(|s| {
                        let names: Vec<&str> = s.iter().map(|&q| base.label(q)).collect();
                        format!("{{{}}}", names.join(","))
                    })
                    .collect()
            })
            .collect();
        let presheaf = Presheaf::from_fn(base.clone(), stalks, |lo, hi, s| {
            let cut: Vec<usize> = sieves[hi][s].iter().copied().filter(|&q| base.leq(q, lo)).collect();
            index[lo][&cut]
        });
        Ok(Omega { presheaf, sieves, index })
    }

    pub fn sieve_index(&self, p: usize, members: &[usize]) -> Option<usize> {
        self.index[p].get(members).copied()
    }

    /// Index of the maximal sieve `↓p`.
    pub fn top(&self, p: usize) -> usize {
        self.index[p][self.presheaf.base().down(p)]
    }

    pub fn bottom(&self, p: usize) -> usize {
        self.index[p][&Vec::new()]
    }
}

/// A sub-object as per-stalk membership flags.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SubObject {
    pub selection: Vec<Vec<bool>>,
}

impl SubObject {
    pub fn contains(&self, p: usize, x: usize) -> bool {
        self.selection[p][x]
    }

    pub fn size(&self) -> usize {
        self.selection.iter().map(|s| s.iter().filter(|b| **b).count()).sum()
    }
}

/// Heyting algebra of sub-objects of a fixed presheaf.
pub struct SubobjectLattice<'a> {
    pub parent: &'a Presheaf,
}

impl<'a> SubobjectLattice<'a> {
    pub fn new(parent: &'a Presheaf) -> Self {
        SubobjectLattice { parent }
    }

    fn map(&self, f: impl Fn(usize, usize) -> bool) -> SubObject {
        SubObject {
            selection: (0..self.parent.base.len())
                .map(|p| (0..self.parent.stalk_size(p)).map(|x| f(p, x)).collect())
                .collect(),
        }
    }

    pub fn top(&self) -> SubObject {
        self.map(|_, _| true)
    }

    pub fn bottom(&self) -> SubObject {
        self.map(|_, _| false)
    }

    pub fn is_subobject(&self, s: &SubObject) -> bool {
        let f = self.parent;
        (0..f.base.len()).all(|p| {
            f.base
                .down(p)
                .iter()
                .all(|&lo| (0..f.stalk_size(p)).all(|x| !s.contains(p, x) || s.contains(lo, f.restrict(lo, p, x))))
        })
    }

    pub fn meet(&self, a: &SubObject, b: &SubObject) -> SubObject {
        self.map(|p, x| a.contains(p, x) && b.contains(p, x))
    }

    pub fn join(&self, a: &SubObject, b: &SubObject) -> SubObject {
        self.map(|p, x| a.contains(p, x) || b.contains(p, x))
    }

    pub fn leq(&self, a: &SubObject, b: &SubObject) -> bool {
        a.selection.iter().zip(&b.selection).all(|(sa, sb)| sa.iter().zip(sb).all(|(x, y)| !*x || *y))
    }

    /// `(A ⇒ B)(p) = {x | for all p' <= p: x|p' in A implies x|p' in B}`.
    pub fn implies(&self, a: &SubObject, b: &SubObject) -> SubObject {
        let f = self.parent;
        self.map(|p, x| {
            f.base.down(p).iter().all(|&lo| {
                let y = f.restrict(lo, p, x);
                !a.contains(lo, y) || b.contains(lo, y)
            })
        })
    }

    pub fn not(&self, a: &SubObject) -> SubObject {
        self.implies(a, &self.bottom())
    }

    /// All sub-objects, by filtering every per-element subset.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<SubObject>> {
        let f = self.parent;
        let total = f.total_size();
        if total >= usize::BITS as usize - 1 || (1usize << total) > cap {
            return Err(Error::TooLarge { cap });
        }
        let points: Vec<(usize, usize)> =
            (0..f.base.len()).flat_map(|p| (0..f.stalk_size(p)).map(move |x| (p, x))).collect();
        let mut out = Vec::new();
        for mask in 0..(1usize << total) {
            let mut s = self.bottom();
            for (i, &(p, x)) in points.iter().enumerate() {
                s.selection[p][x] = mask >> i & 1 == 1;
            }
            if self.is_subobject(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Characteristic morphism into `omega`.
    pub fn characteristic(&self, s: &SubObject, omega: &Omega) -> PresheafMorphism {
        let f = self.parent;
        PresheafMorphism::new(
            (0..f.base.len())
                .map(|p| {
                    (0..f.stalk_size(p))
                        .map(|x| {
                            let members: Vec<usize> = f
                                .base
                                .down(p)
                                .iter()
                                .copied()
                                .filter(|&lo| s.contains(lo, f.restrict(lo, p, x)))
                                .collect();
                            omega.sieve_index(p, &members).expect("characteristic set is a sieve")
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Pullback of the top sieve along `chi`.
    pub fn from_characteristic(&self, chi: &PresheafMorphism, omega: &Omega) -> SubObject {
        self.map(|p, x| chi.apply(p, x) == omega.top(p))
    }
}

/// Per-element stalk maps allowed for a morphism search.
fn hom_search<R: Rng>(
    src: &Presheaf,
    tgt: &Presheaf,
    elements: &[usize],
    cap: usize,
    first_only: bool,
    mut rng: Option<&mut R>,
    mut visit: impl FnMut(&[Vec<usize>]),
) -> Result<usize> {
    let b = &src.base;
    let set: BTreeSet<usize> = elements.iter().copied().collect();
    let slots: Vec<(usize, usize)> = b
        .linear_extension()
        .iter()
        .copied()
        .filter(|p| set.contains(p))
        .flat_map(|p| (0..src.stalk_size(p)).map(move |x| (p, x)))
        .collect();
    let mut comp: Vec<Vec<usize>> = (0..b.len()).map(|p| vec![usize::MAX; src.stalk_size(p)]).collect();
    let mut nodes = 0usize;
    let mut found = 0usize;

    #[allow(clippy::too_many_arguments)]
    fn go<R: Rng>(
        src: &Presheaf,
        tgt: &Presheaf,
        slots: &[(usize, usize)],
        k: usize,
        comp: &mut Vec<Vec<usize>>,
        nodes: &mut usize,
        found: &mut usize,
        cap: usize,
        first_only: bool,
        rng: &mut Option<&mut R>,
        visit: &mut dyn FnMut(&[Vec<usize>]),
    ) -> Result<bool> {
        *nodes += 1;
        if *nodes > cap {
            return Err(Error::TooLarge { cap });
        }
        if k == slots.len() {
            *found += 1;
            visit(comp);
            return Ok(first_only);
        }
        let (p, x) = slots[k];
        let mut candidates: Vec<usize> = (0..tgt.stalk_size(p))
            .filter(|&y| {
                src.base.down(p).iter().all(|&lo| lo == p || tgt.restrict(lo, p, y) == comp[lo][src.restrict(lo, p, x)])
            })
            .collect();
        if let Some(r) = rng.as_deref_mut() {
            candidates.shuffle(r);
        }
        for y in candidates {
            comp[p][x] = y;
            if go(src, tgt, slots, k + 1, comp, nodes, found, cap, first_only, rng, visit)? {
                return Ok(true);
            }
        }
        comp[p][x] = usize::MAX;
        Ok(false)
    }
    go(src, tgt, &slots, 0, &mut comp, &mut nodes, &mut found, cap, first_only, &mut rng, &mut visit)?;
    Ok(found)
}

/// Every natural transformation `src -> tgt`, in lexicographic search order.
pub fn hom_set(src: &Presheaf, tgt: &Presheaf, cap: usize) -> Result<Vec<PresheafMorphism>> {
    check_same_base(src, tgt)?;
    let all: Vec<usize> = (0..src.base.len()).collect();
    let mut out = Vec::new();
    hom_search::<rand::rngs::ThreadRng>(src, tgt, &all, cap, false, None, |c| {
        out.push(PresheafMorphism::new(c.to_vec()))
    })?;
    Ok(out)
}

/// `|Hom(src, tgt)|`, factorized over connected components of the base.
pub fn count_homs(src: &Presheaf, tgt: &Presheaf, cap: usize) -> Result<u128> {
    check_same_base(src, tgt)?;
    let mut total: u128 = 1;
    for comp in src.base.components() {
        let n = hom_search::<rand::rngs::ThreadRng>(src, tgt, &comp, cap, false, None, |_| {})?;
        total = total.saturating_mul(n as u128);
        if total == 0 {
            break;
        }
    }
    Ok(total)
}

/// A uniformly shuffled search's first morphism, if any exists.
pub fn random_morphism<R: Rng>(
    src: &Presheaf,
    tgt: &Presheaf,
    rng: &mut R,
    cap: usize,
) -> Result<Option<PresheafMorphism>> {
    check_same_base(src, tgt)?;
    let all: Vec<usize> = (0..src.base.len()).collect();
    let mut out = None;
    hom_search(src, tgt, &all, cap, true, Some(rng), |c| out = Some(PresheafMorphism::new(c.to_vec())))?;
    Ok(out)
}

/// Random presheaf generated by `k` random global token assignments: the
/// stalk at `p` holds the distinct restrictions of those assignments to `↓p`.
pub fn random_presheaf<R: Rng>(base: Arc<FinitePoset>, k: usize, tokens: usize, rng: &mut R) -> Presheaf {
    let n = base.len();
    let globals: Vec<Vec<usize>> =
        (0..k.max(1)).map(|_| (0..n).map(|_| rng.random_range(0..tokens.max(1))).collect()).collect();
    let germ = |g: &Vec<usize>, p: usize| -> Vec<usize> { base.down(p).iter().map(|&q| g[q]).collect() };
    let mut stalks: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n);
    for p in 0..n {
        let mut s: Vec<Vec<usize>> = globals.iter().map(|g| germ(g, p)).collect();
        s.sort();
        s.dedup();
        stalks.push(s);
    }
    let labels = stalks
        .iter()
        .map(|s| s.iter().map(|t| t.iter().map(|d| d.to_string()).collect::<String>()).collect())
        .collect();
    let b2 = base.clone();
    Presheaf::from_fn(base, labels, |lo, hi, x| {
        let t = &stalks[hi][x];
        let cut: Vec<usize> = b2.down(hi).iter().zip(t).filter(|(q, _)| b2.leq(**q, lo)).map(|(_, v)| *v).collect();
        stalks[lo].iter().position(|s| *s == cut).expect("germ restricts to a germ")
    })
}
