//! The étalé poset of the coset presheaf, its group action, bucket opens, and
//! the functors `I`, `p*`, `p_!` and `F = p_! ∘ I`.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::presheaf::{
    coequalizer, copair, coproduct, count_homs, equalizer, etale_space, hom_set, pair, product, random_morphism,
    random_presheaf, sections_over, FinitePoset, Presheaf, PresheafMorphism,
};
use crate::symmetry::GroupAction;

/// Points `w^g_V` ordered by `w' <= w` iff `V' <= V` and `π_{V'V}(w) = w'`.
#[derive(Clone, Debug)]
pub struct LambdaPoset {
    pub action: Arc<GroupAction>,
    /// `(context, coset index)` per point.
    points: Vec<(usize, usize)>,
    point_index: Vec<Vec<usize>>,
    base: Arc<FinitePoset>,
}

pub fn build_lambda(action: Arc<GroupAction>) -> Result<LambdaPoset> {
    let p = action.poset.clone();
    let mut points = Vec::new();
    let mut point_index = Vec::with_capacity(p.len());
    for v in 0..p.len() {
        let mut row = Vec::new();
        for c in 0..action.cosets(v).len() {
            row.push(points.len());
            points.push((v, c));
        }
        point_index.push(row);
    }
    let n = points.len();
    let mut rel = vec![vec![false; n]; n];
    for (i, &(v, c)) in points.iter().enumerate() {
        for &lo in p.base().down(v) {
            rel[point_index[lo][action.project_coset(lo, v, c)]][i] = true;
        }
    }
    let labels = points
        .iter()
        .map(|&(v, c)| format!("V{v}.{}", action.group.name(action.cosets(v)[c].representative)))
        .collect();
    let base = Arc::new(FinitePoset::from_relation(labels, rel)?);
    Ok(LambdaPoset { action, points, point_index, base })
}

impl LambdaPoset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn base(&self) -> &Arc<FinitePoset> {
        &self.base
    }

    /// Base of the context side (shared by `P` and its frozen copy).
    pub fn context_base(&self) -> &Arc<FinitePoset> {
        self.action.poset.base()
    }

    pub fn point(&self, w: usize) -> (usize, usize) {
        self.points[w]
    }

    pub fn point_at(&self, v: usize, c: usize) -> usize {
        self.point_index[v][c]
    }

    /// Points lying over `v`, in coset order.
    pub fn fibre(&self, v: usize) -> &[usize] {
        &self.point_index[v]
    }

    /// `p_J(w^g_V) = V`.
    pub fn proj(&self, w: usize) -> usize {
        self.points[w].0
    }

    pub fn representative(&self, w: usize) -> usize {
        let (v, c) = self.points[w];
        self.action.cosets(v)[c].representative
    }

    /// `q(w^g_V) = l_g V`, the map along which `I` pulls back.
    pub fn twist(&self, w: usize) -> usize {
        self.action.act(self.representative(w), self.proj(w))
    }

    /// Point over `v` in the identity coset.
    pub fn identity_point(&self, v: usize) -> usize {
        self.point_at(v, self.action.coset_of(v, self.action.group.identity()))
    }

    /// `w^{g1}_V ↦ w^{g g1}_V`.
    pub fn act(&self, g: usize, w: usize) -> usize {
        let (v, c) = self.points[w];
        self.point_at(v, self.action.act_on_coset(g, v, c))
    }

    pub fn projection_map(&self) -> Vec<usize> {
        (0..self.len()).map(|w| self.proj(w)).collect()
    }

    pub fn twist_map(&self) -> Vec<usize> {
        (0..self.len()).map(|w| self.twist(w)).collect()
    }

    /// Re-derives reflexivity, antisymmetry and transitivity from the
    /// defining condition, plus monotonicity of `proj` and `q`.
    pub fn order_axiom_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ctx = self.context_base();
        let def = |a: usize, b: usize| {
            let ((va, ca), (vb, cb)) = (self.points[a], self.points[b]);
            ctx.leq(va, vb) && self.action.project_coset(va, vb, cb) == ca
        };
        for a in 0..self.len() {
            if !def(a, a) {
                out.push(format!("w{a} not reflexive"));
            }
            for &b in self.base.up(a) {
                if !def(a, b) {
                    out.push(format!("stored order disagrees with definition at w{a} <= w{b}"));
                }
                if a != b && def(b, a) {
                    out.push(format!("w{a}, w{b} violate antisymmetry"));
                }
                for &c in self.base.up(b) {
                    if !def(a, c) {
                        out.push(format!("w{a} <= w{b} <= w{c} not transitive"));
                    }
                }
            }
        }
        let all: usize = (0..self.len()).map(|a| (0..self.len()).filter(|&b| def(a, b)).count()).sum();
        let stored: usize = (0..self.len()).map(|a| self.base.up(a).len()).sum();
        if all != stored {
            out.push("stored order misses related pairs".into());
        }
        if !self.base.is_monotone(&self.projection_map(), ctx) {
            out.push("proj is not monotone".into());
        }
        if !self.base.is_monotone(&self.twist_map(), ctx) {
            out.push("q is not monotone".into());
        }
        out
    }

    /// Compares with the étalé space of the coset presheaf under the
    /// canonical labelling `(V, c) ↦ (V, c)`.
    pub fn etale_iso_failures(&self) -> Vec<String> {
        let e = etale_space(&self.action.presheaf_g_over_gf());
        let mut out = Vec::new();
        if e.points != self.points {
            out.push("point sets differ".into());
            return out;
        }
        for a in 0..self.len() {
            for b in 0..self.len() {
                if e.poset.leq(a, b) != self.base.leq(a, b) {
                    out.push(format!("order differs at ({a}, {b})"));
                }
            }
        }
        out
    }

    /// Order preservation of the action; stabilizers are `G_F` of the twisted context.
    pub fn action_failures(&self) -> Vec<String> {
        let g = &self.action.group;
        let mut out = Vec::new();
        for w in 0..self.len() {
            let v = self.proj(w);
            let stab: Vec<usize> = (0..g.order()).filter(|&a| self.act(a, w) == w).collect();
            // Stabilizer of g G_FV is g G_FV g^{-1} = G_F of l_g V.
            if stab != self.action.fixed(self.twist(w)).members {
                out.push(format!("stabilizer of w{w} differs from G_F of its twist"));
            }
            let orbit: BTreeSet<usize> = (0..g.order()).map(|a| self.act(a, w)).collect();
            if orbit.iter().copied().collect::<Vec<_>>() != self.fibre(v) {
                out.push(format!("orbit of w{w} is not its fibre"));
            }
            for &lo in self.base.down(w) {
                for a in 0..g.order() {
                    if !self.base.leq(self.act(a, lo), self.act(a, w)) {
                        out.push(format!("action not monotone on w{lo} <= w{w}"));
                    }
                }
            }
        }
        out
    }

    /// DOT rendering with one cluster per context.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph lambda {\n  rankdir=BT;\n");
        for v in 0..self.action.poset.len() {
            s.push_str(&format!("  subgraph cluster_V{v} {{\n    label=\"V{v}\";\n"));
            for &w in self.fibre(v) {
                s.push_str(&format!("    w{w} [label=\"{}\"];\n", self.base.label(w)));
            }
            s.push_str("  }\n");
        }
        for (a, b) in self.base.covers() {
            s.push_str(&format!("  w{a} -> w{b};\n"));
        }
        s.push_str("}\n");
        s
    }
}

/// `∪_{g in N} ↓(g · anchor)` in `Λ`.
#[derive(Clone, Debug, Serialize)]
pub struct BucketOpen {
    pub anchor: usize,
    pub n: Vec<usize>,
    pub members: BTreeSet<usize>,
}

pub fn bucket_open(lambda: &LambdaPoset, anchor: usize, n: &[usize]) -> Result<BucketOpen> {
    if !n.contains(&lambda.action.group.identity()) {
        return Err(Error::Validation("bucket set must contain the identity".into()));
    }
    let members: BTreeSet<usize> =
        n.iter().flat_map(|&g| lambda.base.down(lambda.act(g, anchor)).iter().copied()).collect();
    lambda.base.check_lower_set(&members)?;
    Ok(BucketOpen { anchor, n: n.to_vec(), members })
}

/// Sections of a presheaf on the context poset over the transported bucket.
#[derive(Clone, Debug, Serialize)]
pub struct BucketSections {
    /// Distinct contexts `l_{g·rep(w)} V`, `g in N`.
    pub contexts: Vec<usize>,
    /// Pairs with a non-trivial meet present in the poset.
    pub constrained_pairs: Vec<(usize, usize, usize)>,
    pub product_size: usize,
    pub families: Vec<Vec<usize>>,
}

pub fn bucket_sections(lambda: &LambdaPoset, f: &Presheaf, w: usize, n: &[usize]) -> Result<BucketSections> {
    let a = &lambda.action;
    let rep = lambda.representative(w);
    let v = lambda.proj(w);
    let mut contexts: Vec<usize> = Vec::new();
    for &g in n {
        let c = a.act(a.group.mul(g, rep), v);
        if !contexts.contains(&c) {
            contexts.push(c);
        }
    }
    let mut constrained_pairs = Vec::new();
    for i in 0..contexts.len() {
        for j in i + 1..contexts.len() {
            match crate::contexts::meet(
                a.poset.context(contexts[i]),
                a.poset.context(contexts[j]),
                a.poset.tolerance(),
            )? {
                None => {}
                Some(m) => {
                    let mi = a
                        .poset
                        .index_of(&m)
                        .ok_or_else(|| Error::Validation("meet of bucket contexts missing from poset".into()))?;
                    constrained_pairs.push((i, j, mi));
                }
            }
        }
    }
    let sizes: Vec<usize> = contexts.iter().map(|&c| f.stalk_size(c)).collect();
    let product_size = sizes.iter().product();
    let mut families = Vec::new();
    let mut cur = vec![0usize; contexts.len()];
    if sizes.iter().all(|&s| s > 0) {
        'outer: loop {
            let ok = constrained_pairs
                .iter()
                .all(|&(i, j, m)| f.restrict(m, contexts[i], cur[i]) == f.restrict(m, contexts[j], cur[j]));
            if ok {
                families.push(cur.clone());
            }
            for k in (0..cur.len()).rev() {
                cur[k] += 1;
                if cur[k] < sizes[k] {
                    continue 'outer;
                }
                cur[k] = 0;
            }
            break;
        }
    }
    Ok(BucketSections { contexts, constrained_pairs, product_size, families })
}

/// Oracle for [`bucket_sections`]: matching families over `∪ ↓V_i`.
pub fn bucket_sections_oracle(lambda: &LambdaPoset, f: &Presheaf, contexts: &[usize], cap: usize) -> Result<usize> {
    let base = lambda.context_base();
    let union: BTreeSet<usize> = contexts.iter().flat_map(|&c| base.down(c).iter().copied()).collect();
    Ok(sections_over(f, &union, cap)?.len())
}

/// A functor between presheaf categories, on objects and morphisms.
pub trait PresheafFunctor {
    fn name(&self) -> &'static str;
    fn obj(&self, f: &Presheaf) -> Result<Presheaf>;
    fn mor(&self, src: &Presheaf, tgt: &Presheaf, m: &PresheafMorphism) -> PresheafMorphism;
}

/// `I(A)_{w^g_V} = A_{l_g V}`.
pub struct FunctorI<'a>(pub &'a LambdaPoset);

/// `p*(B)_w = B_{proj w}`.
pub struct FunctorPStar<'a>(pub &'a LambdaPoset);

/// `p_!(A)_V = ⊔_{w over V} A_w`.
pub struct FunctorPShriek<'a>(pub &'a LambdaPoset);

/// `F = p_! ∘ I`.
pub struct FunctorF<'a>(pub &'a LambdaPoset);

impl PresheafFunctor for FunctorI<'_> {
    fn name(&self) -> &'static str {
        "I"
    }

    fn obj(&self, f: &Presheaf) -> Result<Presheaf> {
        f.pullback(self.0.base.clone(), &self.0.twist_map())
    }

    fn mor(&self, _: &Presheaf, _: &Presheaf, m: &PresheafMorphism) -> PresheafMorphism {
        PresheafMorphism::new((0..self.0.len()).map(|w| m.components[self.0.twist(w)].clone()).collect())
    }
}

impl PresheafFunctor for FunctorPStar<'_> {
    fn name(&self) -> &'static str {
        "p*"
    }

    fn obj(&self, f: &Presheaf) -> Result<Presheaf> {
        f.pullback(self.0.base.clone(), &self.0.projection_map())
    }

    fn mor(&self, _: &Presheaf, _: &Presheaf, m: &PresheafMorphism) -> PresheafMorphism {
        PresheafMorphism::new((0..self.0.len()).map(|w| m.components[self.0.proj(w)].clone()).collect())
    }
}

impl FunctorPShriek<'_> {
    /// `(w, a)` pairs listed in the stalk of `p_!A` at `v`.
    pub fn elements(&self, a: &Presheaf, v: usize) -> Vec<(usize, usize)> {
        self.0.fibre(v).iter().flat_map(|&w| (0..a.stalk_size(w)).map(move |x| (w, x))).collect()
    }

    /// Position of `(w, x)` in the stalk of `p_!A` over `proj w`.
    pub fn index(&self, a: &Presheaf, w: usize, x: usize) -> usize {
        let v = self.0.proj(w);
        self.0.fibre(v).iter().take_while(|&&u| u != w).map(|&u| a.stalk_size(u)).sum::<usize>() + x
    }
}

impl PresheafFunctor for FunctorPShriek<'_> {
    fn name(&self) -> &'static str {
        "p_!"
    }

    fn obj(&self, a: &Presheaf) -> Result<Presheaf> {
        if a.base().len() != self.0.len() {
            return Err(Error::BaseMismatch);
        }
        let ctx = self.0.context_base().clone();
        let elems: Vec<Vec<(usize, usize)>> = (0..ctx.len()).map(|v| self.elements(a, v)).collect();
        let stalks = elems
            .iter()
            .map(|es| es.iter().map(|&(w, x)| format!("{}:{}", self.0.base.label(w), a.labels(w)[x])).collect())
            .collect();
        let lam = self.0;
        Ok(Presheaf::from_fn(ctx, stalks, |lo, hi, k| {
            let (w, x) = elems[hi][k];
            let (_, c) = lam.point(w);
            let w_lo = lam.point_at(lo, lam.action.project_coset(lo, hi, c));
            self.index(a, w_lo, a.restrict(w_lo, w, x))
        }))
    }

    fn mor(&self, src: &Presheaf, tgt: &Presheaf, m: &PresheafMorphism) -> PresheafMorphism {
        let ctx = self.0.context_base();
        PresheafMorphism::new(
            (0..ctx.len())
                .map(|v| self.elements(src, v).into_iter().map(|(w, x)| self.index(tgt, w, m.apply(w, x))).collect())
                .collect(),
        )
    }
}

impl PresheafFunctor for FunctorF<'_> {
    fn name(&self) -> &'static str {
        "F"
    }

    fn obj(&self, f: &Presheaf) -> Result<Presheaf> {
        FunctorPShriek(self.0).obj(&FunctorI(self.0).obj(f)?)
    }

    fn mor(&self, src: &Presheaf, tgt: &Presheaf, m: &PresheafMorphism) -> PresheafMorphism {
        let i = FunctorI(self.0);
        let (is, it) = (i.obj(src).expect("I(src)"), i.obj(tgt).expect("I(tgt)"));
        FunctorPShriek(self.0).mor(&is, &it, &i.mor(src, tgt, m))
    }
}

/// One named case of a check suite.
#[derive(Clone, Debug, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

impl CaseOutcome {
    pub fn new(name: impl Into<String>, pass: bool, details: serde_json::Value) -> Self {
        CaseOutcome { name: name.into(), pass, details }
    }
}

/// `φ ↦ φ♭` with `φ♭_w(a) = φ_{proj w}((w, a))`.
pub fn adjunction_flat(lambda: &LambdaPoset, a: &Presheaf, phi: &PresheafMorphism) -> PresheafMorphism {
    let sh = FunctorPShriek(lambda);
    PresheafMorphism::new(
        (0..lambda.len())
            .map(|w| (0..a.stalk_size(w)).map(|x| phi.apply(lambda.proj(w), sh.index(a, w, x))).collect())
            .collect(),
    )
}

/// `ψ ↦ ψ♯` with `ψ♯_V((w, a)) = ψ_w(a)`.
pub fn adjunction_sharp(lambda: &LambdaPoset, a: &Presheaf, psi: &PresheafMorphism) -> PresheafMorphism {
    let sh = FunctorPShriek(lambda);
    PresheafMorphism::new(
        (0..lambda.context_base().len())
            .map(|v| sh.elements(a, v).into_iter().map(|(w, x)| psi.apply(w, x)).collect())
            .collect(),
    )
}

/// Checks `p_! ⊣ p*` on one pair `(A on Λ, B on P)`: equal hom counts, the
/// flat/sharp round trips, naturality of the transposes, and naturality of
/// the bijection along sample morphisms `k: A' -> A`, `l: B -> B'`.
#[allow(clippy::too_many_arguments)]
pub fn adjunction_case<R: Rng>(
    lambda: &LambdaPoset,
    a: &Presheaf,
    b: &Presheaf,
    a2: &Presheaf,
    b2: &Presheaf,
    enumerate_limit: u128,
    cap: usize,
    rng: &mut R,
) -> Result<CaseOutcome> {
    let sh = FunctorPShriek(lambda);
    let ps = FunctorPStar(lambda);
    let pa = sh.obj(a)?;
    let pb = ps.obj(b)?;
    let left = count_homs(&pa, b, cap)?;
    let right = count_homs(a, &pb, cap)?;
    let mut failures: Vec<String> = Vec::new();
    if left != right {
        failures.push(format!("hom counts differ: {left} vs {right}"));
    }
    let phis: Vec<PresheafMorphism> = if left <= enumerate_limit {
        hom_set(&pa, b, cap)?
    } else {
        (0..32).filter_map(|_| random_morphism(&pa, b, rng, cap).ok().flatten()).collect()
    };
    for phi in &phis {
        let flat = adjunction_flat(lambda, a, phi);
        if !flat.is_natural(a, &pb) {
            failures.push("transpose not natural".into());
        }
        if adjunction_sharp(lambda, a, &flat) != *phi {
            failures.push("sharp ∘ flat ≠ id".into());
        }
    }
    if left <= enumerate_limit {
        let psis = hom_set(a, &pb, cap)?;
        let flats: BTreeSet<PresheafMorphism> = phis.iter().map(|p| adjunction_flat(lambda, a, p)).collect();
        if flats != psis.iter().cloned().collect() {
            failures.push("flat is not onto".into());
        }
        for psi in &psis {
            if adjunction_flat(lambda, a, &adjunction_sharp(lambda, a, psi)) != *psi {
                failures.push("flat ∘ sharp ≠ id".into());
            }
        }
    }
    // Naturality of the bijection in both variables.
    let k = random_morphism(a2, a, rng, cap)?;
    let l = random_morphism(b, b2, rng, cap)?;
    let mut naturality_checked = 0;
    if let (Some(k), Some(l)) = (k, l) {
        let pk = sh.mor(a2, a, &k);
        let pl = ps.mor(b, b2, &l);
        let pb2 = ps.obj(b2)?;
        for phi in phis.iter().take(64) {
            let lhs = adjunction_flat(lambda, a2, &pk.then(phi).then(&l));
            let rhs = k.then(&adjunction_flat(lambda, a, phi)).then(&pl);
            if lhs != rhs || !lhs.is_natural(a2, &pb2) {
                failures.push("bijection not natural".into());
            }
            naturality_checked += 1;
        }
    }
    failures.dedup();
    Ok(CaseOutcome::new(
        "p_! ⊣ p*",
        failures.is_empty(),
        serde_json::json!({
            "hom_left": left.to_string(),
            "hom_right": right.to_string(),
            "morphisms_checked": phis.len(),
            "enumerated": left <= enumerate_limit,
            "naturality_checked": naturality_checked,
            "failures": failures,
        }),
    ))
}

/// Outcome of the constructed `i`, `j` maps between `Hom(I Y, X)` and
/// `Hom(Y, J X)`.
#[derive(Clone, Debug, Serialize)]
pub struct IjReport {
    pub hom_iy_x: String,
    pub hom_y_jx: String,
    pub i_natural: bool,
    pub j_natural: bool,
    pub ij_failures: usize,
    pub ji_failures: usize,
    pub checked: usize,
    pub witness: Option<serde_json::Value>,
}

/// `i(f)_V(y) = (w^e_V, f_{w^e_V}(y))` and
/// `j(h)_{w^k_V}(y) = pr_2 h_V(τ_{k^{-1}} y)`, where `τ_k` transports
/// `Y(V) -> Y(l_k V)`. `x_base` is a presheaf on contexts and `X = p* x_base`.
pub fn ij_check(
    lambda: &LambdaPoset,
    y: &Presheaf,
    transport: &dyn Fn(usize, usize, usize) -> usize,
    x_base: &Presheaf,
    cap: usize,
) -> Result<IjReport> {
    let i_f = FunctorI(lambda);
    let sh = FunctorPShriek(lambda);
    let iy = i_f.obj(y)?;
    let x = FunctorPStar(lambda).obj(x_base)?;
    let jx = sh.obj(&x)?;
    let g = &lambda.action.group;
    let ctx_len = lambda.context_base().len();

    let map_i = |f: &PresheafMorphism| -> PresheafMorphism {
        PresheafMorphism::new(
            (0..ctx_len)
                .map(|v| {
                    let w = lambda.identity_point(v);
                    (0..y.stalk_size(v)).map(|s| sh.index(&x, w, f.apply(w, s))).collect()
                })
                .collect(),
        )
    };
    let map_j = |h: &PresheafMorphism| -> PresheafMorphism {
        PresheafMorphism::new(
            (0..lambda.len())
                .map(|w| {
                    let v = lambda.proj(w);
                    let k = lambda.representative(w);
                    let target = lambda.twist(w);
                    (0..y.stalk_size(target))
                        .map(|s| {
                            let back = transport(g.inv(k), target, s);
                            sh.elements(&x, v)[h.apply(v, back)].1
                        })
                        .collect()
                })
                .collect(),
        )
    };

    let left = count_homs(&iy, &x, cap)?;
    let right = count_homs(y, &jx, cap)?;
    let fs = hom_set(&iy, &x, cap)?;
    let hs = hom_set(y, &jx, cap)?;
    let i_natural = fs.iter().all(|f| map_i(f).is_natural(y, &jx));
    let j_natural = hs.iter().all(|h| map_j(h).is_natural(&iy, &x));
    let mut ij_failures = 0;
    let mut witness = None;
    for h in &hs {
        let back = map_i(&map_j(h));
        if back != *h {
            ij_failures += 1;
            if witness.is_none() {
                if let Some((v, s)) = (0..ctx_len)
                    .flat_map(|v| (0..y.stalk_size(v)).map(move |s| (v, s)))
                    .find(|&(v, s)| back.apply(v, s) != h.apply(v, s))
                {
                    let (w_h, x_h) = sh.elements(&x, v)[h.apply(v, s)];
                    let (w_b, x_b) = sh.elements(&x, v)[back.apply(v, s)];
                    witness = Some(serde_json::json!({
                        "context": v,
                        "element": y.labels(v)[s],
                        "h": { "point": lambda.base.label(w_h), "value": x.labels(w_h)[x_h] },
                        "i_of_j_of_h": { "point": lambda.base.label(w_b), "value": x.labels(w_b)[x_b] },
                    }));
                }
            }
        }
    }
    let ji_failures = fs.iter().filter(|f| map_j(&map_i(f)) != **f).count();
    Ok(IjReport {
        hom_iy_x: left.to_string(),
        hom_y_jx: right.to_string(),
        i_natural,
        j_natural,
        ij_failures,
        ji_failures,
        checked: hs.len(),
        witness,
    })
}

/// Random sample presheaf on `base` with stalks of size 1 to 3.
pub fn sample_presheaf<R: Rng>(base: Arc<FinitePoset>, rng: &mut R) -> Presheaf {
    let k = rng.random_range(1..=3);
    random_presheaf(base, k, 3, rng)
}

/// Samples `(A, B, f, g)` with `f, g: A -> B`.
fn sample_parallel_pair<R: Rng>(
    base: &Arc<FinitePoset>,
    rng: &mut R,
    cap: usize,
) -> Result<(Presheaf, Presheaf, PresheafMorphism, PresheafMorphism)> {
    // Searches that exhaust the cap are resampled rather than reported.
    let found = |r: Result<Option<PresheafMorphism>>| match r {
        Err(Error::TooLarge { .. }) => Ok(None),
        other => other,
    };
    for _ in 0..SAMPLE_ATTEMPTS {
        let a = sample_presheaf(base.clone(), rng);
        let b = sample_presheaf(base.clone(), rng);
        let Some(f) = found(random_morphism(&a, &b, rng, cap))? else { continue };
        let Some(g) = found(random_morphism(&a, &b, rng, cap))? else { continue };
        return Ok((a, b, f, g));
    }
    Err(Error::Validation(format!("no parallel pair found in {SAMPLE_ATTEMPTS} samples")))
}

const SAMPLE_ATTEMPTS: usize = 1000;

/// Which constructions a functor is expected to preserve.
#[derive(Clone, Copy, Debug)]
pub struct Expectations {
    pub terminal: bool,
    pub limits: bool,
}

/// Runs the preservation checks for `functor` on `samples` random
/// parallel pairs over `base`.
pub fn preservation_suite<R: Rng>(
    functor: &dyn PresheafFunctor,
    base: &Arc<FinitePoset>,
    expect: Expectations,
    samples: usize,
    rng: &mut R,
    cap: usize,
) -> Result<Vec<CaseOutcome>> {
    let name = functor.name();
    let mut cases = Vec::new();

    let ft = functor.obj(&Presheaf::terminal(base.clone()))?;
    let terminal_kept = ft.stalk_sizes().iter().all(|&s| s == 1);
    cases.push(CaseOutcome::new(
        format!("{name} terminal"),
        terminal_kept == expect.terminal,
        serde_json::json!({ "preserved": terminal_kept, "expected": expect.terminal, "stalk_sizes": ft.stalk_sizes() }),
    ));
    let fi = functor.obj(&Presheaf::initial(base.clone()))?;
    let initial_kept = fi.stalk_sizes().iter().all(|&s| s == 0);
    cases.push(CaseOutcome::new(
        format!("{name} initial"),
        initial_kept,
        serde_json::json!({ "preserved": initial_kept }),
    ));

    let mut tallies: Vec<(&str, usize, usize)> = Vec::new();
    let mut record = |label: &'static str, ok: bool| {
        if let Some(t) = tallies.iter_mut().find(|t| t.0 == label) {
            t.1 += 1;
            t.2 += ok as usize;
        } else {
            tallies.push((label, 1, ok as usize));
        }
    };
    for _ in 0..samples {
        let (a, b, f, g) = sample_parallel_pair(base, rng, cap)?;
        let (fa, fb) = (functor.obj(&a)?, functor.obj(&b)?);
        let (ff, fg) = (functor.mor(&a, &b, &f), functor.mor(&a, &b, &g));
        record("functoriality", fa.check_functoriality().is_empty() && ff.is_natural(&fa, &fb));

        // Coproducts: [Φ ι1, Φ ι2]: Φ A + Φ B -> Φ(A + B).
        let (s, i1, i2) = coproduct(&a, &b)?;
        let fs = functor.obj(&s)?;
        let (cs, _, _) = coproduct(&fa, &fb)?;
        let cmp = copair(&functor.mor(&a, &s, &i1), &functor.mor(&b, &s, &i2));
        record("coproduct", cmp.is_iso(&cs, &fs));

        // Coequalizers and epics.
        let (c, q) = coequalizer(&a, &b, &f, &g)?;
        let fc = functor.obj(&c)?;
        let fq = functor.mor(&b, &c, &q);
        let (c2, q2) = coequalizer(&fa, &fb, &ff, &fg)?;
        let mut med: Vec<Vec<usize>> = (0..c2.base().len()).map(|p| vec![usize::MAX; c2.stalk_size(p)]).collect();
        let mut well_defined = true;
        for (p, row) in med.iter_mut().enumerate() {
            for y in 0..fb.stalk_size(p) {
                let slot = &mut row[q2.apply(p, y)];
                let val = fq.apply(p, y);
                if *slot != usize::MAX && *slot != val {
                    well_defined = false;
                }
                *slot = val;
            }
        }
        record("coequalizer", well_defined && PresheafMorphism::new(med).is_iso(&c2, &fc));
        record("epic", fq.is_epic(&fc));

        // Monics: the equalizer inclusion is monic.
        let (e, em) = equalizer(&a, &f, &g);
        let fe = functor.obj(&e)?;
        let fem = functor.mor(&e, &a, &em);
        record("monic", fem.is_monic(&fa));
        if expect.limits {
            let (p, p1, p2) = product(&a, &b)?;
            let fp = functor.obj(&p)?;
            let (pp, _, _) = product(&fa, &fb)?;
            let cmp = pair(&functor.mor(&p, &a, &p1), &functor.mor(&p, &b, &p2), &fb);
            record("product", cmp.is_iso(&fp, &pp));

            let (e2, em2) = equalizer(&fa, &ff, &fg);
            let med: Vec<Vec<usize>> = (0..fe.base().len())
                .map(|p| {
                    (0..fe.stalk_size(p))
                        .map(|x| em2.components[p].iter().position(|&y| y == fem.apply(p, x)).unwrap_or(usize::MAX))
                        .collect()
                })
                .collect();
            let ok = med.iter().all(|r| r.iter().all(|&y| y != usize::MAX));
            record("equalizer", ok && PresheafMorphism::new(med).is_iso(&fe, &e2));
        }
    }
    for (label, total, passed) in tallies {
        cases.push(CaseOutcome::new(
            format!("{name} {label}"),
            passed == total,
            serde_json::json!({ "samples": total, "passed": passed }),
        ));
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contexts::{build_poset, ClosureOptions, Context};
    use crate::numerics::{ComplexMatrix, Tolerance};
    use crate::presheaf::DEFAULT_CAP;
    use crate::symmetry::FiniteUnitaryGroup;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn qubit() -> LambdaPoset {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = ComplexMatrix::from_real_rows(&[&[s, s], &[s, -s]]);
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[h], 10, &tol()).unwrap());
        let v = Context::from_operators(&[ComplexMatrix::diag(&[1.0, -1.0])], &tol()).unwrap();
        let p = Arc::new(build_poset(&[v], &g, ClosureOptions::default(), 100, &tol()).unwrap());
        build_lambda(Arc::new(GroupAction::new(p, g).unwrap())).unwrap()
    }

    fn cyclic_qutrit() -> LambdaPoset {
        let (sn, cs) = std::f64::consts::FRAC_PI_4.sin_cos();
        let r = ComplexMatrix::from_real_rows(&[&[cs, -sn, 0.0], &[sn, cs, 0.0], &[0.0, 0.0, 1.0]]);
        let g = Arc::new(FiniteUnitaryGroup::close_generators(&[r], 100, &tol()).unwrap());
        let v = Context::from_operators(&[ComplexMatrix::diag(&[0.0, 1.0, 2.0])], &tol()).unwrap();
        let p = Arc::new(build_poset(&[v], &g, ClosureOptions::default(), 100, &tol()).unwrap());
        build_lambda(Arc::new(GroupAction::new(p, g).unwrap())).unwrap()
    }

    fn trivial() -> LambdaPoset {
        let g = Arc::new(FiniteUnitaryGroup::trivial(3));
        let v = Context::from_operators(&[ComplexMatrix::diag(&[0.0, 1.0, 2.0])], &tol()).unwrap();
        let p = Arc::new(build_poset(&[v], &g, ClosureOptions::default(), 100, &tol()).unwrap());
        build_lambda(Arc::new(GroupAction::new(p, g).unwrap())).unwrap()
    }

    #[test]
    fn lambda_qubit_is_four_point_antichain() {
        let l = qubit();
        assert_eq!(l.len(), 4);
        for a in 0..4 {
            assert_eq!(l.base().up(a), &[a]);
        }
        assert!(l.order_axiom_failures().is_empty());
        assert!(l.etale_iso_failures().is_empty());
        assert!(l.action_failures().is_empty());
    }

    #[test]
    fn lambda_trivial_group_is_base() {
        let l = trivial();
        assert_eq!(l.len(), l.context_base().len());
        for a in 0..l.len() {
            for b in 0..l.len() {
                assert_eq!(l.base().leq(a, b), l.context_base().leq(l.proj(a), l.proj(b)));
            }
        }
    }

    #[test]
    fn lambda_counting_cyclic() {
        let l = cyclic_qutrit();
        let a = &l.action;
        let expected: usize = (0..a.poset.len()).map(|v| a.group.order() / a.fixed(v).order()).sum();
        assert_eq!(l.len(), expected);
        assert!(l.order_axiom_failures().is_empty());
        assert!(l.etale_iso_failures().is_empty());
        assert!(l.action_failures().is_empty());
    }

    #[test]
    fn functors_on_trivial_group_are_identities() {
        let l = trivial();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = sample_presheaf(l.context_base().clone(), &mut rng);
        let ff = FunctorF(&l).obj(&f).unwrap();
        assert_eq!(ff.stalk_sizes(), f.stalk_sizes());
        for hi in 0..l.len() {
            for &lo in l.context_base().down(hi) {
                assert_eq!(ff.restriction(lo, hi), f.restriction(lo, hi));
            }
        }
    }

    #[test]
    fn shriek_of_terminal_is_coset_presheaf() {
        let l = cyclic_qutrit();
        let t = Presheaf::terminal(l.base().clone());
        let s = FunctorPShriek(&l).obj(&t).unwrap();
        let gg = l.action.presheaf_g_over_gf();
        assert_eq!(s.stalk_sizes(), gg.stalk_sizes());
        for hi in 0..gg.base().len() {
            for &lo in gg.base().down(hi) {
                assert_eq!(s.restriction(lo, hi), gg.restriction(lo, hi));
            }
        }
        let f_t = FunctorF(&l).obj(&Presheaf::terminal(l.context_base().clone())).unwrap();
        assert_eq!(f_t.stalk_sizes(), gg.stalk_sizes());
    }

    #[test]
    fn shriek_counts() {
        let l = cyclic_qutrit();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = sample_presheaf(l.base().clone(), &mut rng);
        let s = FunctorPShriek(&l).obj(&a).unwrap();
        assert!(s.check_functoriality().is_empty());
        for v in 0..l.context_base().len() {
            let expected: usize = l.fibre(v).iter().map(|&w| a.stalk_size(w)).sum();
            assert_eq!(s.stalk_size(v), expected);
        }
    }

    #[test]
    fn adjunction_on_qubit_scenario() {
        let l = qubit();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = sample_presheaf(l.base().clone(), &mut rng);
            let a2 = sample_presheaf(l.base().clone(), &mut rng);
            let b = sample_presheaf(l.context_base().clone(), &mut rng);
            let b2 = sample_presheaf(l.context_base().clone(), &mut rng);
            let out = adjunction_case(&l, &a, &b, &a2, &b2, 2000, DEFAULT_CAP, &mut rng).unwrap();
            assert!(out.pass, "{}", out.details);
        }
    }

    #[test]
    fn preservation_of_i_on_cyclic_scenario() {
        let l = cyclic_qutrit();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cases = preservation_suite(
            &FunctorI(&l),
            l.context_base(),
            Expectations { terminal: true, limits: true },
            5,
            &mut rng,
            DEFAULT_CAP,
        )
        .unwrap();
        for c in cases {
            assert!(c.pass, "{} {}", c.name, c.details);
        }
    }

    #[test]
    fn bucket_identity_only() {
        let l = cyclic_qutrit();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = sample_presheaf(l.context_base().clone(), &mut rng);
        let w = l.identity_point(0);
        let b = bucket_sections(&l, &f, w, &[0]).unwrap();
        assert_eq!(b.families.len(), f.stalk_size(0));
        assert!(bucket_open(&l, w, &[1]).is_err());
        assert!(bucket_open(&l, w, &[0, 1]).is_ok());
    }
}
