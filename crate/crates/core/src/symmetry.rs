//! Finite unitary groups acting on context posets by conjugation.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::contexts::{Context, ContextPoset};
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, Tolerance};
use crate::presheaf::{Presheaf, PresheafMorphism};

/// A finite group of unitaries closed under products and inverses.
#[derive(Clone, Debug)]
pub struct FiniteUnitaryGroup {
    dim: usize,
    elements: Vec<ComplexMatrix>,
    names: Vec<String>,
    mul: Vec<Vec<usize>>,
    inv: Vec<usize>,
    generators: Vec<usize>,
}

struct ElementIndex {
    by_key: HashMap<Vec<(i64, i64)>, usize>,
}

impl ElementIndex {
    fn find(&self, m: &ComplexMatrix, elements: &[ComplexMatrix], eps: f64) -> Option<usize> {
        if let Some(&i) = self.by_key.get(&m.hash_key()) {
            if elements[i].approx_eq(m, eps) {
                return Some(i);
            }
        }
        elements.iter().position(|e| e.approx_eq(m, eps))
    }
}

impl FiniteUnitaryGroup {
    pub fn trivial(dim: usize) -> Self {
        FiniteUnitaryGroup {
            dim,
            elements: vec![ComplexMatrix::identity(dim)],
            names: vec!["e".into()],
            mul: vec![vec![0]],
            inv: vec![0],
            generators: Vec::new(),
        }
    }

    /// Breadth-first closure of `gens` under multiplication.
    pub fn close_generators(gens: &[ComplexMatrix], cap: usize, tol: &Tolerance) -> Result<Self> {
        let names: Vec<String> = (0..gens.len()).map(|i| format!("g{i}")).collect();
        Self::close_named(gens, &names, cap, tol)
    }

    /// As [`close_generators`](Self::close_generators); elements are named by
    /// the shortest word reaching them.
    pub fn close_named(gens: &[ComplexMatrix], gen_names: &[String], cap: usize, tol: &Tolerance) -> Result<Self> {
        let dim = gens.first().map_or(1, ComplexMatrix::dim);
        // Products of unitaries accumulate rounding; compare at a looser scale.
        let eps = tol.eq_eps * 100.0;
        for g in gens {
            if g.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: g.dim() });
            }
            let deviation = g.unitarity_error();
            if deviation > tol.eq_eps {
                return Err(Error::NotUnitary { deviation });
            }
        }
        let mut elements = vec![ComplexMatrix::identity(dim)];
        let mut names = vec!["e".to_string()];
        let mut index = ElementIndex { by_key: HashMap::from([(elements[0].hash_key(), 0)]) };
        let mut k = 0;
        while k < elements.len() {
            for (gi, g) in gens.iter().enumerate() {
                let prod = g * &elements[k];
                if index.find(&prod, &elements, eps).is_none() {
                    if elements.len() >= cap {
                        return Err(Error::CapExceeded { what: "group elements", cap });
                    }
                    let name = if k == 0 { gen_names[gi].clone() } else { format!("{}*{}", gen_names[gi], names[k]) };
                    index.by_key.insert(prod.hash_key(), elements.len());
                    elements.push(prod);
                    names.push(name);
                }
            }
            k += 1;
        }
        let n = elements.len();
        let mut mul = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let prod = &elements[a] * &elements[b];
                mul[a][b] = index
                    .find(&prod, &elements, eps)
                    .ok_or_else(|| Error::Validation("group closure produced a product outside the set".into()))?;
            }
        }
        let inv = (0..n).map(|a| (0..n).find(|&b| mul[a][b] == 0).expect("finite group has inverses")).collect();
        let generators = gens.iter().map(|g| index.find(g, &elements, eps).expect("generator is an element")).collect();
        Ok(FiniteUnitaryGroup { dim, elements, names, mul, inv, generators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, g: usize) -> &ComplexMatrix {
        &self.elements[g]
    }

    pub fn name(&self, g: usize) -> &str {
        &self.names[g]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    /// Index of a matrix in the group, if present.
    pub fn find(&self, m: &ComplexMatrix, tol: &Tolerance) -> Option<usize> {
        self.elements.iter().position(|e| e.approx_eq(m, tol.eq_eps * 100.0))
    }

    /// Associativity of the table; `O(n^3)`.
    pub fn is_associative(&self) -> bool {
        let n = self.order();
        (0..n).all(|a| (0..n).all(|b| (0..n).all(|c| self.mul[self.mul[a][b]][c] == self.mul[a][self.mul[b][c]])))
    }

    /// `l_g(V) = U_g V U_g^†`.
    pub fn act(&self, g: usize, v: &Context) -> Context {
        v.conjugated_by(&self.elements[g])
    }
}

/// A subgroup as a sorted list of element indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Subgroup {
    pub members: Vec<usize>,
}

impl Subgroup {
    pub fn contains(&self, g: usize) -> bool {
        self.members.binary_search(&g).is_ok()
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn is_subgroup_of(&self, group: &FiniteUnitaryGroup) -> bool {
        self.contains(group.identity())
            && self
                .members
                .iter()
                .all(|&a| self.contains(group.inv(a)) && self.members.iter().all(|&b| self.contains(group.mul(a, b))))
    }

    pub fn is_subset_of(&self, other: &Subgroup) -> bool {
        self.members.iter().all(|&g| other.contains(g))
    }
}

/// `G_V = {g | l_g V = V}`.
pub fn stabilizer(group: &FiniteUnitaryGroup, v: &Context, tol: &Tolerance) -> Result<Subgroup> {
    check_dim(group, v)?;
    Ok(Subgroup { members: (0..group.order()).filter(|&g| group.act(g, v).approx_eq(v, tol)).collect() })
}

/// `G_FV = {g | U_g P U_g^† = P for every atom P of V}`.
pub fn fixed_point_group(group: &FiniteUnitaryGroup, v: &Context, tol: &Tolerance) -> Result<Subgroup> {
    check_dim(group, v)?;
    Ok(Subgroup {
        members: (0..group.order())
            .filter(|&g| v.atoms().iter().all(|p| p.conjugated_by(group.element(g)).approx_eq(p, tol)))
            .collect(),
    })
}

fn check_dim(group: &FiniteUnitaryGroup, v: &Context) -> Result<()> {
    if group.dim() == v.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: group.dim(), right: v.dim() })
    }
}

/// Left cosets `g H`, ordered by smallest member; each is sorted.
pub fn left_cosets(group: &FiniteUnitaryGroup, h: &Subgroup) -> Vec<Vec<usize>> {
    let mut seen = vec![false; group.order()];
    let mut out = Vec::new();
    for g in 0..group.order() {
        if seen[g] {
            continue;
        }
        let mut c: Vec<usize> = h.members.iter().map(|&x| group.mul(g, x)).collect();
        c.sort_unstable();
        for &x in &c {
            seen[x] = true;
        }
        out.push(c);
    }
    out
}

/// `w^g_V = g G_FV` at a context of a poset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CosetPoint {
    pub context: usize,
    pub representative: usize,
    pub members: Vec<usize>,
}

/// A group acting on a context poset that is closed under the action, with
/// all per-context subgroup and coset data precomputed.
#[derive(Clone, Debug)]
pub struct GroupAction {
    pub group: Arc<FiniteUnitaryGroup>,
    pub poset: Arc<ContextPoset>,
    /// `act[g][v]` is the index of `l_g V`.
    act: Vec<Vec<usize>>,
    stabilizers: Vec<Subgroup>,
    fixed: Vec<Subgroup>,
    cosets: Vec<Vec<CosetPoint>>,
    coset_of: Vec<Vec<usize>>,
}

impl GroupAction {
    pub fn new(poset: Arc<ContextPoset>, group: Arc<FiniteUnitaryGroup>) -> Result<Self> {
        let tol = *poset.tolerance();
        if !poset.is_empty() && poset.dim() != group.dim() {
            return Err(Error::DimensionMismatch { left: group.dim(), right: poset.dim() });
        }
        let mut act = Vec::with_capacity(group.order());
        for g in 0..group.order() {
            let row = (0..poset.len())
                .map(|v| {
                    poset
                        .index_of(&group.act(g, poset.context(v)))
                        .ok_or(Error::NotClosedUnderAction { element: g, context: v })
                })
                .collect::<Result<Vec<usize>>>()?;
            act.push(row);
        }
        let mut stabilizers = Vec::with_capacity(poset.len());
        let mut fixed = Vec::with_capacity(poset.len());
        let mut cosets = Vec::with_capacity(poset.len());
        let mut coset_of = Vec::with_capacity(poset.len());
        for v in 0..poset.len() {
            let ctx = poset.context(v);
            stabilizers.push(Subgroup { members: (0..group.order()).filter(|&g| act[g][v] == v).collect() });
            let f = fixed_point_group(&group, ctx, &tol)?;
            let cs = left_cosets(&group, &f);
            let mut of = vec![0; group.order()];
            for (i, c) in cs.iter().enumerate() {
                for &g in c {
                    of[g] = i;
                }
            }
            cosets.push(
                cs.into_iter().map(|members| CosetPoint { context: v, representative: members[0], members }).collect(),
            );
            coset_of.push(of);
            fixed.push(f);
        }
        Ok(GroupAction { group, poset, act, stabilizers, fixed, cosets, coset_of })
    }

    pub fn act(&self, g: usize, v: usize) -> usize {
        self.act[g][v]
    }

    pub fn stabilizer(&self, v: usize) -> &Subgroup {
        &self.stabilizers[v]
    }

    pub fn fixed(&self, v: usize) -> &Subgroup {
        &self.fixed[v]
    }

    pub fn cosets(&self, v: usize) -> &[CosetPoint] {
        &self.cosets[v]
    }

    /// Index of `g G_FV` among the cosets at `v`.
    pub fn coset_of(&self, v: usize, g: usize) -> usize {
        self.coset_of[v][g]
    }

    /// `π_{V'V}: g G_FV ↦ g G_FV'`.
    pub fn project_coset(&self, lo: usize, hi: usize, c: usize) -> usize {
        self.coset_of[lo][self.cosets[hi][c].representative]
    }

    /// `g · (g1 G_FV) = (g g1) G_FV`.
    pub fn act_on_coset(&self, g: usize, v: usize, c: usize) -> usize {
        self.coset_of[v][self.group.mul(g, self.cosets[v][c].representative)]
    }

    /// Presheaf `V ↦ G_FV` with inclusions as restrictions.
    pub fn presheaf_gf(&self) -> Presheaf {
        let stalks =
            self.fixed.iter().map(|f| f.members.iter().map(|&g| self.group.name(g).to_string()).collect()).collect();
        Presheaf::from_fn(self.poset.base().clone(), stalks, |lo, hi, x| {
            let g = self.fixed[hi].members[x];
            self.fixed[lo].members.binary_search(&g).expect("G_FV ⊆ G_FV' for V' ⊆ V")
        })
    }

    /// Presheaf `V ↦ G/G_FV` with coset projections as restrictions.
    pub fn presheaf_g_over_gf(&self) -> Presheaf {
        let stalks = self
            .cosets
            .iter()
            .map(|cs| cs.iter().map(|c| format!("{}G_F", self.group.name(c.representative))).collect())
            .collect();
        Presheaf::from_fn(self.poset.base().clone(), stalks, |lo, hi, c| self.project_coset(lo, hi, c))
    }

    /// Constant presheaf on the whole group.
    pub fn constant_g(&self) -> Presheaf {
        Presheaf::constant(
            self.poset.base().clone(),
            (0..self.group.order()).map(|g| self.group.name(g).to_string()).collect(),
        )
    }

    /// Builds the quotient of the constant presheaf `G` by `G_F` directly from
    /// the relation `g ~ g'` iff `g^{-1} g' in G_FV`, and checks that the
    /// contextwise map `[g] ↦ g G_FV` is a natural bijection onto the coset
    /// presheaf. Returns the failures.
    pub fn quotient_iso_check(&self) -> Result<Vec<String>> {
        let g = &self.group;
        let classes: Vec<Vec<usize>> = (0..self.poset.len())
            .map(|v| {
                (0..g.order())
                    .map(|a| {
                        (0..g.order()).filter(|&b| self.fixed[v].contains(g.mul(g.inv(a), b))).min().expect("a ~ a")
                    })
                    .collect()
            })
            .collect();
        let (quotient, qmap) = self.constant_g().quotient(&classes)?;
        let cosets = self.presheaf_g_over_gf();
        let mut failures = Vec::new();
        let mut k = Vec::with_capacity(self.poset.len());
        for v in 0..self.poset.len() {
            let mut comp = vec![usize::MAX; quotient.stalk_size(v)];
            for a in 0..g.order() {
                comp[qmap.apply(v, a)] = self.coset_of[v][a];
            }
            k.push(comp);
        }
        let k = PresheafMorphism::new(k);
        if !k.is_natural(&quotient, &cosets) {
            failures.push("k is not natural".to_string());
        }
        if !(k.is_monic(&cosets) && k.is_epic(&cosets)) {
            failures.push("k is not bijective".to_string());
        }
        Ok(failures)
    }

    /// Number of distinct poset maps `V' ↦ l_g V'` on `↓V` as `g` ranges over
    /// the group; equals the number of cosets of `G_FV`.
    pub fn faithful_map_count(&self, v: usize) -> usize {
        let down = self.poset.base().down(v);
        let maps: BTreeSet<Vec<usize>> =
            (0..self.group.order()).map(|g| down.iter().map(|&w| self.act[g][w]).collect()).collect();
        maps.len()
    }

    /// Exhaustive structural checks; every returned string is a failure.
    pub fn structural_failures(&self) -> Vec<String> {
        let g = &self.group;
        let n = self.poset.len();
        let mut out = Vec::new();
        for v in 0..n {
            let (gv, gf) = (&self.stabilizers[v], &self.fixed[v]);
            if !gv.is_subgroup_of(g) || !gf.is_subgroup_of(g) {
                out.push(format!("V{v}: stabilizer data is not a subgroup"));
            }
            if !gf.is_subset_of(gv) {
                out.push(format!("V{v}: G_F not inside G_V"));
            }
            for &h in &gv.members {
                for &f in &gf.members {
                    if !gf.contains(g.mul(g.mul(h, f), g.inv(h))) {
                        out.push(format!("V{v}: G_F not normal ({h}, {f})"));
                    }
                }
            }
            if self.faithful_map_count(v) != self.cosets[v].len() {
                out.push(format!("V{v}: faithful maps do not match cosets"));
            }
            let total: usize = self.cosets[v].iter().map(|c| c.members.len()).sum();
            if total != g.order() || self.cosets[v].len() * gf.order() != g.order() {
                out.push(format!("V{v}: coset counting fails"));
            }
            for &lo in self.poset.base().down(v) {
                if !gf.is_subset_of(&self.fixed[lo]) {
                    out.push(format!("V{lo} <= V{v}: G_F not anti-monotone"));
                }
                for a in 0..g.order() {
                    if !self.poset.leq(self.act[a][lo], self.act[a][v]) {
                        out.push(format!("g{a}: action not monotone on V{lo} <= V{v}"));
                    }
                }
            }
            for a in 0..g.order() {
                for b in 0..g.order() {
                    if self.act[g.mul(a, b)][v] != self.act[a][self.act[b][v]] {
                        out.push(format!("V{v}: action law fails for ({a}, {b})"));
                    }
                }
            }
            // The constant group acts on each coset stalk transitively and
            // equivariantly with respect to restriction.
            let orbit: BTreeSet<usize> = (0..g.order()).map(|a| self.act_on_coset(a, v, 0)).collect();
            if orbit.len() != self.cosets[v].len() {
                out.push(format!("V{v}: action on cosets not transitive"));
            }
            for &lo in self.poset.base().down(v) {
                for c in 0..self.cosets[v].len() {
                    for a in 0..g.order() {
                        let left = self.project_coset(lo, v, self.act_on_coset(a, v, c));
                        let right = self.act_on_coset(a, lo, self.project_coset(lo, v, c));
                        if left != right {
                            out.push(format!("V{lo} <= V{v}: coset action not equivariant"));
                        }
                    }
                }
            }
        }
        out
    }

    /// CSV rows `context,|G_V|,|G_FV|,cosets`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("context,stabilizer,fixed_point_group,cosets\n");
        for v in 0..self.poset.len() {
            s.push_str(&format!(
                "V{v},{},{},{}\n",
                self.stabilizers[v].order(),
                self.fixed[v].order(),
                self.cosets[v].len()
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contexts::{build_poset, ClosureOptions};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn hadamard() -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real_rows(&[&[s, s], &[s, -s]])
    }

    fn rz(theta: f64) -> ComplexMatrix {
        let (s, c) = theta.sin_cos();
        ComplexMatrix::from_real_rows(&[&[c, -s, 0.0], &[s, c, 0.0], &[0.0, 0.0, 1.0]])
    }

    fn ctx(values: &[f64]) -> Context {
        Context::from_operators(&[ComplexMatrix::diag(values)], &tol()).unwrap()
    }

    #[test]
    fn closure_orders() {
        let t = tol();
        let g = FiniteUnitaryGroup::close_generators(&[ComplexMatrix::identity(2)], 10, &t).unwrap();
        assert_eq!(g.order(), 1);
        let g = FiniteUnitaryGroup::close_generators(&[hadamard()], 10, &t).unwrap();
        assert_eq!(g.order(), 2);
        // Oracle: H * H computed entrywise is the identity.
        assert!((&hadamard() * &hadamard()).approx_eq(&ComplexMatrix::identity(2), 1e-12));
        let g = FiniteUnitaryGroup::close_generators(&[rz(std::f64::consts::FRAC_PI_4)], 100, &t).unwrap();
        assert_eq!(g.order(), 8);
        assert!(g.is_associative());
    }

    #[test]
    fn closure_rejects_bad_input() {
        let t = tol();
        let not_unitary = ComplexMatrix::diag(&[2.0, 1.0]);
        assert!(matches!(FiniteUnitaryGroup::close_generators(&[not_unitary], 10, &t), Err(Error::NotUnitary { .. })));
        // An irrational rotation never closes.
        let r = rz(1.0);
        assert!(matches!(FiniteUnitaryGroup::close_generators(&[r], 50, &t), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn act_examples() {
        let t = tol();
        let g = FiniteUnitaryGroup::close_generators(&[hadamard()], 10, &t).unwrap();
        let vz = ctx(&[1.0, -1.0]);
        assert!(g.act(0, &vz).approx_eq(&vz, &t));
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let vx = Context::from_operators(&[x], &t).unwrap();
        assert!(g.act(1, &vz).approx_eq(&vx, &t));

        let v = ctx(&[0.0, 1.0, 2.0]);
        let rv = v.conjugated_by(&rz(std::f64::consts::FRAC_PI_4));
        let shared: Vec<_> = v.atoms().iter().filter(|a| rv.atom_index(a, &t).is_some()).collect();
        assert_eq!(shared.len(), 1);
        assert!(shared[0].matrix().approx_eq(&ComplexMatrix::diag(&[0.0, 0.0, 1.0]), 1e-12));
    }

    #[test]
    fn stabilizers_qubit() {
        let t = tol();
        let g = FiniteUnitaryGroup::close_generators(&[hadamard()], 10, &t).unwrap();
        let vz = ctx(&[1.0, -1.0]);
        assert_eq!(stabilizer(&g, &vz, &t).unwrap().members, vec![0]);
        assert_eq!(fixed_point_group(&g, &vz, &t).unwrap().members, vec![0]);
        let triv = FiniteUnitaryGroup::trivial(2);
        assert_eq!(stabilizer(&triv, &vz, &t).unwrap().members, vec![0]);
        assert_eq!(left_cosets(&triv, &fixed_point_group(&triv, &vz, &t).unwrap()).len(), 1);
        assert_eq!(left_cosets(&g, &fixed_point_group(&g, &vz, &t).unwrap()).len(), 2);
    }

    #[test]
    fn stabilizers_cyclic_rotation() {
        let t = tol();
        let r = rz(std::f64::consts::FRAC_PI_4);
        let g = FiniteUnitaryGroup::close_generators(&[r], 100, &t).unwrap();
        let v = ctx(&[0.0, 1.0, 2.0]);
        // Oracle: conjugate each atom by every power of the rotation.
        let mut expected_stab = Vec::new();
        let mut expected_fix = Vec::new();
        for k in 0..8 {
            let u = g.element(k);
            let images: Vec<_> = v.atoms().iter().map(|a| a.conjugated_by(u)).collect();
            if images.iter().all(|p| v.atom_index(p, &t).is_some()) {
                expected_stab.push(k);
            }
            if images.iter().zip(v.atoms()).all(|(p, a)| p.approx_eq(a, &t)) {
                expected_fix.push(k);
            }
        }
        let stab = stabilizer(&g, &v, &t).unwrap();
        let fix = fixed_point_group(&g, &v, &t).unwrap();
        assert_eq!(stab.members, expected_stab);
        assert_eq!(fix.members, expected_fix);
        // Rotations by multiples of π/2 keep the frame, by π also each line.
        assert_eq!(stab.order(), 4);
        assert_eq!(fix.order(), 2);
        assert!(fix.is_subset_of(&stab));
    }

    #[test]
    fn coset_presheaves_qubit() {
        let t = tol();
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[hadamard()], 10, &t).unwrap());
        let p = Arc::new(build_poset(&[ctx(&[1.0, -1.0])], &g, ClosureOptions::default(), 100, &t).unwrap());
        let a = GroupAction::new(p, g).unwrap();
        let gg = a.presheaf_g_over_gf();
        assert_eq!(gg.stalk_sizes(), vec![2, 2]);
        assert!(gg.check_functoriality().is_empty());
        assert!(a.presheaf_gf().check_functoriality().is_empty());
        assert!(a.quotient_iso_check().unwrap().is_empty());
        assert!(a.structural_failures().is_empty());
    }

    #[test]
    fn coset_presheaf_trivial_group_is_terminal() {
        let t = tol();
        let g = Arc::new(FiniteUnitaryGroup::trivial(3));
        let p = Arc::new(build_poset(&[ctx(&[0.0, 1.0, 2.0])], &g, ClosureOptions::default(), 100, &t).unwrap());
        let a = GroupAction::new(p, g).unwrap();
        assert!(a.presheaf_g_over_gf().stalk_sizes().iter().all(|&s| s == 1));
        assert!(a.quotient_iso_check().unwrap().is_empty());
    }

    #[test]
    fn coset_projection_fibres() {
        let t = tol();
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[rz(std::f64::consts::FRAC_PI_4)], 100, &t).unwrap());
        let p = Arc::new(build_poset(&[ctx(&[0.0, 1.0, 2.0])], &g, ClosureOptions::default(), 1000, &t).unwrap());
        let a = GroupAction::new(p.clone(), g).unwrap();
        for hi in 0..p.len() {
            for &lo in p.base().down(hi) {
                let mut fibre = vec![0usize; a.cosets(lo).len()];
                for c in 0..a.cosets(hi).len() {
                    fibre[a.project_coset(lo, hi, c)] += 1;
                }
                let expected = a.fixed(lo).order() / a.fixed(hi).order();
                assert!(fibre.iter().all(|&f| f == expected));
            }
        }
        assert!(a.quotient_iso_check().unwrap().is_empty());
        assert!(a.structural_failures().is_empty());
    }

    #[test]
    fn unclosed_poset_rejected() {
        let t = tol();
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[hadamard()], 10, &t).unwrap());
        let p = Arc::new(ContextPoset::from_contexts(vec![ctx(&[1.0, -1.0])], &t).unwrap());
        assert!(matches!(GroupAction::new(p, g), Err(Error::NotClosedUnderAction { .. })));
    }
}
