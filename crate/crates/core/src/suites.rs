//! One function per experiment; each returns a [`Report`].

use std::collections::BTreeSet;
use std::sync::Arc;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contexts::{meet, ContextPoset};
use crate::error::{Error, Result};
use crate::lambda_site::{
    adjunction_case, bucket_sections, bucket_sections_oracle, build_lambda, ij_check, preservation_suite,
    sample_presheaf, CaseOutcome, Expectations, FunctorF, FunctorI, FunctorPShriek, LambdaPoset, PresheafFunctor,
};
use crate::numerics::Projector;
use crate::presheaf::{sections_over, FinitePoset, Omega, Presheaf, Sieve, SubobjectLattice};
use crate::quantum::{
    atom_action, breve_sigma, breve_truth_check, covariance_suite, daseinisation_brute_suite, daseinise_projection,
    kochen_specker_certificate, mixed_profile, omega_iso_checks, physical_quantity_arrow, spectral_order_suite,
    spectral_presheaf, truth_value_mixed, truth_value_pure, CovarianceInputs, MixedState, PureState, RGrid,
};
use crate::report::{Report, ReportBuilder};
use crate::scenario::Scenario;
use crate::symmetry::GroupAction;

fn builder(suite: &str, s: &Scenario) -> ReportBuilder {
    ReportBuilder::new(suite, &s.name, &s.digest())
}

fn failures_case(name: &str, failures: Vec<String>) -> CaseOutcome {
    let n = failures.len();
    CaseOutcome::new(
        name,
        failures.is_empty(),
        serde_json::json!({"failures": n, "examples": failures.into_iter().take(20).collect::<Vec<_>>()}),
    )
}

/// Context poset and group structure.
pub fn poset_report(s: &Scenario) -> Result<(Report, Arc<GroupAction>)> {
    let action = s.action()?;
    let p = &action.poset;
    let mut r = builder("build-poset", s);
    let bad_meets = p.basis_intersection_failures()?;
    r.push(CaseOutcome::new(
        "poset closure",
        bad_meets.is_empty(),
        serde_json::json!({
            "contexts": p.len(),
            "covers": p.covers().len(),
            "group_order": action.group.order(),
            "signatures": p.contexts().iter().map(|c| c.signature()).collect::<Vec<_>>(),
            "basis_intersection_failures": bad_meets,
        }),
    ));
    r.push(failures_case("group action structure", action.structural_failures()));
    r.push(failures_case("G/G_F iso faithful maps", action.quotient_iso_check()?));
    Ok((r.finish(), action))
}

/// Λ order axioms, étalé comparison and the lifted group action.
pub fn lambda_report(s: &Scenario) -> Result<(Report, LambdaPoset)> {
    let lambda = s.lambda()?;
    let mut r = builder("build-lambda", s);
    r.push(CaseOutcome::new(
        "lambda size",
        true,
        serde_json::json!({"points": lambda.len(), "contexts": lambda.context_base().len()}),
    ));
    r.push(failures_case("lambda order axioms", lambda.order_axiom_failures()));
    r.push(failures_case("etale space iso", lambda.etale_iso_failures()));
    r.push(failures_case("lambda group action", lambda.action_failures()));
    r.push(breve_sigma(&lambda)?.action_checks());
    Ok((r.finish(), lambda))
}

/// Sieve round trip, Heyting law, local sections and Λ structure.
pub fn structural_report(s: &Scenario) -> Result<Report> {
    let lambda = s.lambda()?;
    let action = lambda.action.clone();
    let base = action.poset.base().clone();
    let cap = s.caps.enumeration;
    let mut r = builder("structural", s);

    let mut sieve_fail = Vec::new();
    let mut sieves_checked = 0usize;
    for p in 0..base.len() {
        for members in base.sieves(p, cap)? {
            let sieve = Sieve { at: p, members: members.into_iter().collect() };
            let lower = sieve.to_lower_set(&base);
            sieves_checked += 1;
            if base.check_lower_set(&lower).is_err() || Sieve::from_lower_set(p, &lower, &base) != sieve {
                sieve_fail.push(format!("sieve round trip fails at {p}"));
            }
        }
    }
    let mut c = failures_case("sieve lower-set round trip", sieve_fail);
    c.details["checked"] = sieves_checked.into();
    r.push(c);

    // Heyting law on the sub-object lattice of each representable, whose
    // sub-objects are the sieves on that context.
    let mut heyting_fail = Vec::new();
    let mut triples = 0usize;
    let omega = Omega::new(base.clone(), cap)?;
    for v in 0..base.len() {
        let stalks = (0..base.len()).map(|u| if base.leq(u, v) { vec!["*".to_string()] } else { vec![] }).collect();
        let y = Presheaf::from_fn(base.clone(), stalks, |_, _, _| 0);
        triples += heyting_failures(&y, &omega, cap, &mut heyting_fail)?;
    }
    let sigma = spectral_presheaf(&action.poset);
    if SubobjectLattice::new(&sigma).enumerate(64).is_ok() {
        triples += heyting_failures(&sigma, &omega, 64, &mut heyting_fail)?;
    }
    let mut c = failures_case("Heyting adjunction on sub-object lattices", heyting_fail);
    c.details["triples"] = triples.into();
    r.push(c);

    let mut local_fail = Vec::new();
    for f in [&sigma, &action.presheaf_g_over_gf()] {
        for p in 0..base.len() {
            let down: BTreeSet<usize> = base.down(p).iter().copied().collect();
            let pos = down.iter().position(|&q| q == p).expect("p in its down-set");
            let fams = sections_over(f, &down, cap)?;
            let at_p: BTreeSet<usize> = fams.iter().map(|fam| fam[pos]).collect();
            if fams.len() != f.stalk_size(p) || at_p.len() != fams.len() {
                local_fail.push(format!("sections over the down-set of {p} differ from the stalk"));
            }
        }
    }
    r.push(failures_case("sections over down-sets equal stalks", local_fail));
    r.push(failures_case("etale space iso", lambda.etale_iso_failures()));
    r.push(failures_case("lambda order axioms", lambda.order_axiom_failures()));
    let normal: Vec<String> =
        action.structural_failures().into_iter().filter(|m| m.contains("normal") || m.contains("G_F")).collect();
    r.push(failures_case("G_F normal in G_V", normal));
    Ok(r.finish())
}

fn heyting_failures(f: &Presheaf, omega: &Omega, cap: usize, out: &mut Vec<String>) -> Result<usize> {
    let lat = SubobjectLattice::new(f);
    let subs = lat.enumerate(cap)?;
    let mut n = 0;
    for a in &subs {
        let chi = lat.characteristic(a, omega);
        if lat.from_characteristic(&chi, omega) != *a {
            out.push("characteristic map round trip fails".into());
        }
        for b in &subs {
            let ab = lat.meet(a, b);
            for c in &subs {
                n += 1;
                if lat.leq(&ab, c) != lat.leq(a, &lat.implies(b, c)) {
                    out.push("meet/implication adjunction fails".into());
                }
            }
        }
    }
    Ok(n)
}

/// Daseinisation against brute force, arrows and the spectral order.
pub fn daseinise_report(s: &Scenario) -> Result<Report> {
    let action = s.action()?;
    let p = &action.poset;
    let inputs = s.inputs(p)?;
    let mut r = builder("daseinise", s);
    r.push(daseinisation_brute_suite(p, &inputs.projectors)?);
    let sigma = spectral_presheaf(p);
    let mut arrow_fail = Vec::new();
    for a in &inputs.observables {
        arrow_fail.extend(physical_quantity_arrow(a, p)?.failures(p, &sigma));
    }
    r.push(failures_case("physical quantity arrows", arrow_fail));
    r.extend(spectral_order_suite(p, &inputs.observables)?);
    Ok(r.finish())
}

/// Selection of a truth-value computation.
#[derive(Clone, Debug)]
pub struct TruthQuery {
    pub projector: usize,
    pub state: usize,
    pub mixed: bool,
    pub r: Option<Ratio<i64>>,
}

/// Truth values at every context, with a CSV table.
pub fn truth_value_report(s: &Scenario, q: &TruthQuery) -> Result<(Report, String)> {
    let action = s.action()?;
    let p = &action.poset;
    let inputs = s.inputs(p)?;
    let pr = inputs
        .projectors
        .get(q.projector)
        .ok_or_else(|| Error::Validation(format!("projector index {} out of range", q.projector)))?;
    let psi =
        inputs.states.get(q.state).ok_or_else(|| Error::Validation(format!("state index {} out of range", q.state)))?;
    let grid = &s.r_grid;
    let mut r = builder(if q.mixed { "truth-value-mixed" } else { "truth-value-pure" }, s);
    let table = if q.mixed {
        let rho = MixedState::from_pure(psi);
        let top = q.r.unwrap_or(*grid.values().last().expect("grid non-empty"));
        let mut rows = Vec::new();
        for v in 0..p.len() {
            let tv = truth_value_mixed(p, pr, &rho, v, top, grid)?;
            rows.push(serde_json::json!({
                "context": v,
                "members": tv.iter().map(|&(w, k)| (w, grid.labels()[k].clone())).collect::<Vec<_>>(),
            }));
        }
        // With a pure density matrix at threshold 1 the context part is the pure sieve.
        let mut agree = true;
        if let Ok(k1) = grid.index_of(Ratio::from_integer(1)) {
            for v in 0..p.len() {
                let tv = truth_value_mixed(p, pr, &rho, v, grid.values()[k1], grid)?;
                let ctx: BTreeSet<usize> = tv.iter().filter(|&&(_, k)| k == k1).map(|&(w, _)| w).collect();
                agree &= ctx == truth_value_pure(p, pr, psi, v)?.members;
            }
        }
        r.push(CaseOutcome::new(
            "mixed truth values",
            agree,
            serde_json::json!({"r": top.to_string(), "grid": grid.labels(), "grid_relative": true, "values": rows}),
        ));
        mixed_truth_table_csv(p, pr, &rho, grid)?
    } else {
        let rows = (0..p.len())
            .map(|v| Ok(serde_json::json!({"context": v, "sieve": truth_value_pure(p, pr, psi, v)?.members})))
            .collect::<Result<Vec<_>>>()?;
        r.push(CaseOutcome::new("pure truth values", true, serde_json::json!({"values": rows})));
        pure_truth_table_csv(p, pr, psi)?
    };
    Ok((r.finish(), table))
}

/// Rows `context,expectation,in_sieve`; `in_sieve` is membership in the
/// truth value at any context above.
pub fn pure_truth_table_csv(p: &ContextPoset, pr: &Projector, psi: &PureState) -> Result<String> {
    let mut out = String::from("context,signature,expectation,in_sieve\n");
    let top: BTreeSet<usize> = (0..p.len())
        .map(|v| truth_value_pure(p, pr, psi, v))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|s| s.members)
        .collect();
    for (v, c) in p.contexts().iter().enumerate() {
        let e = psi.expectation(&daseinise_projection(pr, c, p.tolerance())?);
        let sig = c.signature().iter().map(|k| k.to_string()).collect::<Vec<_>>().join("+");
        out.push_str(&format!("{v},{sig},{e:.12},{}\n", top.contains(&v)));
    }
    Ok(out)
}

/// Rows `context,r,trace,in`.
pub fn mixed_truth_table_csv(p: &ContextPoset, pr: &Projector, rho: &MixedState, grid: &RGrid) -> Result<String> {
    let traces = mixed_profile(p, pr, rho)?;
    let eps = 10.0 * p.tolerance().eq_eps;
    let mut out = String::from("context,r,trace,in\n");
    for (v, t) in traces.iter().enumerate() {
        for (k, label) in grid.labels().iter().enumerate() {
            out.push_str(&format!("{v},{label},{t:.12},{}\n", *t >= grid.value(k) - eps));
        }
    }
    Ok(out)
}

/// Covariance equalities, breve truth objects and invariance of `F(S)`.
pub fn covariance_report(s: &Scenario) -> Result<Report> {
    let lambda = s.lambda()?;
    let action = lambda.action.clone();
    let inputs = s.inputs(&action.poset)?;
    let mut r = builder("covariance", s);
    let ci = CovarianceInputs {
        projectors: &inputs.projectors,
        states: &inputs.states,
        mixed: &inputs.mixed,
        observables: &inputs.observables,
        grid: &s.r_grid,
    };
    r.extend(covariance_suite(&action, &ci)?);
    for (i, psi) in inputs.states.iter().enumerate() {
        let mut c = breve_truth_check(&lambda, psi)?;
        c.name = format!("{} (state {i})", c.name);
        r.push(c);
    }
    let breve = breve_sigma(&lambda)?;
    let lattice = SubobjectLattice::new(&breve.sigma);
    match lattice.enumerate(4096) {
        Ok(subs) => {
            let mut invariant_lifts = 0usize;
            let mut mismatches = 0usize;
            for sub in &subs {
                let lifted = breve.lifted_invariant(sub);
                invariant_lifts += lifted as usize;
                mismatches += (lifted != breve.g_invariant(sub)) as usize;
            }
            r.push(CaseOutcome::new(
                "lifted sub-objects invariant iff G-invariant",
                mismatches == 0,
                serde_json::json!({"subobjects": subs.len(), "invariant_lifts": invariant_lifts, "mismatches": mismatches}),
            ));
        }
        Err(Error::TooLarge { cap }) => r.push(CaseOutcome::new(
            "lifted sub-objects invariant iff G-invariant",
            true,
            serde_json::json!({"skipped": format!("more than {cap} sub-objects")}),
        )),
        Err(e) => return Err(e),
    }
    Ok(r.finish())
}

/// `p_! ⊣ p*` on `samples` random small presheaves over Λ and the base.
pub fn adjunction_samples_case(lambda: &LambdaPoset, samples: usize, seed: u64, cap: usize) -> Result<CaseOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0usize;
    let mut first_failure = None;
    for i in 0..samples {
        let a = sample_presheaf(lambda.base().clone(), &mut rng);
        let a2 = sample_presheaf(lambda.base().clone(), &mut rng);
        let b = sample_presheaf(lambda.context_base().clone(), &mut rng);
        let b2 = sample_presheaf(lambda.context_base().clone(), &mut rng);
        let out = adjunction_case(lambda, &a, &b, &a2, &b2, 2000, cap, &mut rng)?;
        if out.pass {
            passed += 1;
        } else if first_failure.is_none() {
            first_failure = Some(serde_json::json!({"sample": i, "details": out.details}));
        }
    }
    Ok(CaseOutcome::new(
        "p_! left adjoint to p*",
        passed == samples,
        serde_json::json!({"samples": samples, "passed": passed, "first_failure": first_failure}),
    ))
}

/// The constructed `i`, `j` for `Y = Σ`, `X = p* Σ`; passes when `i ∘ j`
/// differs from the identity and a witness is found.
pub fn ij_case(lambda: &LambdaPoset, cap: usize) -> Result<CaseOutcome> {
    let sigma = spectral_presheaf(&lambda.action.poset);
    let atoms = atom_action(&lambda.action)?;
    let transport = |g: usize, v: usize, x: usize| atoms[g][v][x];
    let ij = ij_check(lambda, &sigma, &transport, &sigma, cap)?;
    Ok(CaseOutcome::new(
        "J is not right adjoint to I",
        ij.ij_failures > 0 && ij.witness.is_some(),
        serde_json::to_value(&ij).expect("serializable"),
    ))
}

pub fn adjunction_report(s: &Scenario, samples: usize) -> Result<Report> {
    let lambda = s.lambda()?;
    let mut r = builder("adjunction", s);
    r.push(adjunction_samples_case(&lambda, samples, s.random_seed, s.caps.enumeration)?);
    r.push(ij_case(&lambda, s.caps.enumeration)?);
    Ok(r.finish())
}

/// Preservation by `I` and `F`, and `F(1) = G/G_F`.
pub fn preservation_report(s: &Scenario, samples: usize) -> Result<Report> {
    let lambda = s.lambda()?;
    let cap = s.caps.enumeration;
    let base = lambda.context_base().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(s.random_seed);
    let mut r = builder("preservation", s);
    r.extend(preservation_suite(
        &FunctorI(&lambda),
        &base,
        Expectations { terminal: true, limits: true },
        samples,
        &mut rng,
        cap,
    )?);
    r.extend(preservation_suite(
        &FunctorF(&lambda),
        &base,
        Expectations { terminal: false, limits: false },
        samples,
        &mut rng,
        cap,
    )?);
    let ft = FunctorF(&lambda).obj(&Presheaf::terminal(base.clone()))?;
    let gg = lambda.action.presheaf_g_over_gf();
    r.push(CaseOutcome::new(
        "F terminal is G/G_F",
        same_presheaf(&ft, &gg),
        serde_json::json!({"f_terminal": ft.stalk_sizes(), "g_over_gf": gg.stalk_sizes()}),
    ));
    let shriek_t = FunctorPShriek(&lambda).obj(&Presheaf::terminal(lambda.base().clone()))?;
    r.push(CaseOutcome::new(
        "p_! terminal is G/G_F",
        same_presheaf(&shriek_t, &gg),
        serde_json::json!({"stalk_sizes": shriek_t.stalk_sizes()}),
    ));
    Ok(r.finish())
}

fn same_presheaf(a: &Presheaf, b: &Presheaf) -> bool {
    let base: &FinitePoset = a.base();
    a.stalk_sizes() == b.stalk_sizes()
        && (0..base.len()).all(|hi| base.down(hi).iter().all(|&lo| a.restriction(lo, hi) == b.restriction(lo, hi)))
}

/// `F(Ω) ≅ G/G_F × Ω` and `Ω ≅ F(Ω)/G`.
pub fn omega_iso_report(s: &Scenario) -> Result<Report> {
    let lambda = s.lambda()?;
    let mut r = builder("omega-iso", s);
    r.extend(omega_iso_checks(&lambda, s.caps.enumeration)?);
    Ok(r.finish())
}

/// Global sections of `Σ` over the bases of the scenario, plus the
/// single-context control on the first basis.
pub fn ks_report(s: &Scenario) -> Result<Report> {
    let bases = s.bases()?;
    let tol = &s.tolerance;
    let mut r = builder("ks", s);
    let cert = kochen_specker_certificate(&bases, s.dim, tol, s.caps.poset, s.caps.search)?;
    r.push(CaseOutcome::new(
        "no global sections",
        cert.global_sections == 0,
        serde_json::to_value(&cert).expect("serializable"),
    ));
    let control = kochen_specker_certificate(&bases[..1], s.dim, tol, s.caps.poset, s.caps.search)?;
    r.push(CaseOutcome::new(
        "single-context control",
        control.global_sections == bases[0].len(),
        serde_json::json!({"global_sections": control.global_sections, "atoms": bases[0].len()}),
    ));
    Ok(r.finish())
}

/// Sections of `Σ` over each configured bucket, against the oracle.
pub fn bucket_report(s: &Scenario) -> Result<Report> {
    let lambda = build_lambda(s.action()?)?;
    let a = &lambda.action;
    let sigma = spectral_presheaf(&a.poset);
    let seeds = s.seed_contexts()?;
    let mut r = builder("bucket-triviality", s);
    if s.buckets.is_empty() {
        return Err(Error::Validation("buckets: scenario defines no buckets".into()));
    }
    for b in &s.buckets {
        let v = a.poset.require(&seeds[b.seed])?;
        let g = s.element(&a.group, &b.element)?;
        let w = lambda.point_at(v, a.coset_of(v, g));
        let n = b.n.iter().map(|name| s.element(&a.group, name)).collect::<Result<Vec<_>>>()?;
        let out = bucket_sections(&lambda, &sigma, w, &n)?;
        let oracle = bucket_sections_oracle(&lambda, &sigma, &out.contexts, s.caps.search)?;
        let unconstrained = out.constrained_pairs.is_empty();
        let meets = out
            .contexts
            .iter()
            .enumerate()
            .flat_map(|(i, &x)| out.contexts[i + 1..].iter().map(move |&y| (x, y)))
            .map(|(x, y)| Ok(meet(a.poset.context(x), a.poset.context(y), &s.tolerance)?.map(|m| m.signature())))
            .collect::<Result<Vec<_>>>()?;
        let consistent = out.families.len() == oracle
            && (unconstrained == (out.families.len() == out.product_size) || !unconstrained);
        r.push(CaseOutcome::new(
            format!("bucket {}", b.label),
            consistent,
            serde_json::json!({
                "contexts": out.contexts,
                "meets": meets,
                "constrained_pairs": out.constrained_pairs,
                "product_size": out.product_size,
                "sections": out.families.len(),
                "oracle": oracle,
                "trivial": unconstrained,
            }),
        ));
    }
    Ok(r.finish())
}
