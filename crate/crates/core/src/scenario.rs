//! Scenario files: JSON descriptions of a Hilbert-space dimension, seed
//! contexts, group generators and the knobs for the suites.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contexts::{build_poset, ClosureOptions, Context, ContextPoset};
use crate::error::{Error, Result};
use crate::lambda_site::{build_lambda, LambdaPoset};
use crate::numerics::{eigendecompose, random, ComplexMatrix, Projector, SelfAdjoint, Tolerance, C64};
use crate::presheaf::DEFAULT_CAP;
use crate::quantum::{MixedState, PureState, RGrid};
use crate::symmetry::{FiniteUnitaryGroup, GroupAction};

/// Vectors are lists of `[re, im]` pairs.
pub type RawVector = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Seed {
    /// Orthonormal basis; one atom per vector.
    Basis(Vec<RawVector>),
    /// Commuting hermitian generators.
    Operators(Vec<ComplexMatrix>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGenerator {
    pub name: String,
    pub matrix: ComplexMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub group: usize,
    pub poset: usize,
    pub enumeration: usize,
    pub search: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { group: 1024, poset: 4096, enumeration: DEFAULT_CAP, search: DEFAULT_CAP }
    }
}

impl Caps {
    /// Overrides every cap with `n`.
    pub fn uniform(n: usize) -> Self {
        Caps { group: n, poset: n, enumeration: n, search: n }
    }
}

/// A bucket `N·w`: the anchor is `w^g_V` with `V` the given seed and `g`
/// named; `n` lists group element names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSpec {
    pub label: String,
    pub seed: usize,
    pub element: String,
    pub n: Vec<String>,
}

/// A scenario as it appears on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub seeds: Vec<Seed>,
    #[serde(default)]
    pub group_generators: Vec<NamedGenerator>,
    #[serde(default)]
    pub closure: ClosureOptions,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default)]
    pub r_grid: RGrid,
    #[serde(default)]
    pub caps: Caps,
    /// Extra pure states; `|0>` and one random state are always added.
    #[serde(default)]
    pub states: Vec<RawVector>,
    #[serde(default = "default_random_seed")]
    pub random_seed: u64,
    /// Number of random rank-1 projectors added to the generated set.
    #[serde(default = "default_random_projectors")]
    pub random_projectors: usize,
    #[serde(default)]
    pub buckets: Vec<BucketSpec>,
}

fn default_random_seed() -> u64 {
    7
}

fn default_random_projectors() -> usize {
    2
}

/// Projectors, states and observables the suites quantify over.
#[derive(Clone, Debug)]
pub struct GeneratedInputs {
    pub projectors: Vec<Projector>,
    pub states: Vec<PureState>,
    pub mixed: Vec<MixedState>,
    pub observables: Vec<SelfAdjoint>,
}

fn to_vector(raw: &RawVector) -> DVector<C64> {
    DVector::from_iterator(raw.len(), raw.iter().map(|[re, im]| C64::new(*re, *im)))
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{field}: {msg}"))
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.tolerance.validate()?;
        if self.dim < 2 {
            return Err(invalid("dim", "must be at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let c = self.caps;
        if c.group == 0 || c.poset == 0 || c.enumeration == 0 || c.search == 0 {
            return Err(invalid("caps", "caps must be positive"));
        }
        for (i, seed) in self.seeds.iter().enumerate() {
            match seed {
                Seed::Basis(vs) => {
                    if let Some(v) = vs.iter().find(|v| v.len() != self.dim) {
                        return Err(invalid(
                            &format!("seeds[{i}]"),
                            format!("vector of length {} in dim {}", v.len(), self.dim),
                        ));
                    }
                }
                Seed::Operators(ms) => {
                    if let Some(m) = ms.iter().find(|m| m.dim() != self.dim) {
                        return Err(invalid(
                            &format!("seeds[{i}]"),
                            format!("matrix of dim {} in dim {}", m.dim(), self.dim),
                        ));
                    }
                }
            }
        }
        for (i, g) in self.group_generators.iter().enumerate() {
            if g.matrix.dim() != self.dim {
                return Err(invalid(&format!("group_generators[{i}]"), "dimension mismatch"));
            }
            if g.name.is_empty() || g.name == "e" || g.name.contains('*') {
                return Err(invalid(
                    &format!("group_generators[{i}]"),
                    "names must be non-empty, not 'e', without '*'",
                ));
            }
        }
        if let Some((i, _)) = self.states.iter().enumerate().find(|(_, v)| v.len() != self.dim) {
            return Err(invalid(&format!("states[{i}]"), "dimension mismatch"));
        }
        for (i, b) in self.buckets.iter().enumerate() {
            if b.seed >= self.seeds.len() {
                return Err(invalid(&format!("buckets[{i}].seed"), "no such seed"));
            }
        }
        self.seed_contexts()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn seed_contexts(&self) -> Result<Vec<Context>> {
        self.seeds
            .iter()
            .enumerate()
            .map(|(i, s)| {
                match s {
                    Seed::Basis(vs) => {
                        Context::from_basis(&vs.iter().map(to_vector).collect::<Vec<_>>(), &self.tolerance)
                    }
                    Seed::Operators(ms) => Context::from_operators(ms, &self.tolerance),
                }
                .map_err(|e| invalid(&format!("seeds[{i}]"), e))
            })
            .collect()
    }

    /// Seeds given as bases, as raw vectors.
    pub fn bases(&self) -> Result<Vec<Vec<DVector<C64>>>> {
        self.seeds
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Seed::Basis(vs) => Ok(vs.iter().map(to_vector).collect()),
                Seed::Operators(_) => Err(invalid(&format!("seeds[{i}]"), "expected a basis")),
            })
            .collect()
    }

    pub fn group(&self) -> Result<FiniteUnitaryGroup> {
        if self.group_generators.is_empty() {
            return Ok(FiniteUnitaryGroup::trivial(self.dim));
        }
        let mats: Vec<ComplexMatrix> = self.group_generators.iter().map(|g| g.matrix.clone()).collect();
        let names: Vec<String> = self.group_generators.iter().map(|g| g.name.clone()).collect();
        FiniteUnitaryGroup::close_named(&mats, &names, self.caps.group, &self.tolerance)
    }

    pub fn poset(&self, group: &FiniteUnitaryGroup) -> Result<ContextPoset> {
        build_poset(&self.seed_contexts()?, group, self.closure, self.caps.poset, &self.tolerance)
    }

    /// Group, poset and action together; requires the poset to be closed.
    pub fn action(&self) -> Result<Arc<GroupAction>> {
        let group = Arc::new(self.group()?);
        let poset = Arc::new(self.poset(&group)?);
        Ok(Arc::new(GroupAction::new(poset, group)?))
    }

    pub fn lambda(&self) -> Result<LambdaPoset> {
        build_lambda(self.action()?)
    }

    /// Group element by name.
    pub fn element(&self, group: &FiniteUnitaryGroup, name: &str) -> Result<usize> {
        (0..group.order())
            .find(|&g| group.name(g) == name)
            .ok_or_else(|| invalid("buckets", format!("unknown group element {name:?}")))
    }

    /// Every atom of the poset, the rank-1 projectors onto the states, and
    /// seeded random rank-1 projectors; `|0>`, the listed states and one
    /// random state; `diag(0..n-1)` and a random hermitian observable.
    pub fn inputs(&self, poset: &ContextPoset) -> Result<GeneratedInputs> {
        let tol = &self.tolerance;
        let mut rng = ChaCha8Rng::seed_from_u64(self.random_seed);
        let mut zero = DVector::from_element(self.dim, C64::new(0.0, 0.0));
        zero[0] = C64::new(1.0, 0.0);
        let mut states = vec![PureState::normalized(zero)?];
        for (i, v) in self.states.iter().enumerate() {
            states.push(PureState::normalized(to_vector(v)).map_err(|e| invalid(&format!("states[{i}]"), e))?);
        }
        states.push(PureState::normalized(random::unit_vector(self.dim, &mut rng))?);

        let mut projectors: Vec<Projector> = Vec::new();
        let push = |p: Projector, out: &mut Vec<Projector>| {
            if !out.iter().any(|q| q.approx_eq(&p, tol)) {
                out.push(p);
            }
        };
        for c in poset.contexts() {
            for a in c.atoms() {
                push(a.clone(), &mut projectors);
            }
        }
        for s in &states {
            push(Projector::onto_ray(s.vector())?, &mut projectors);
        }
        for _ in 0..self.random_projectors {
            push(Projector::onto_ray(&random::unit_vector(self.dim, &mut rng))?, &mut projectors);
        }

        let diag: Vec<f64> = (0..self.dim).map(|i| i as f64).collect();
        let observables = vec![
            eigendecompose(&ComplexMatrix::diag(&diag), tol)?,
            eigendecompose(&random::hermitian(self.dim, &mut rng), tol)?,
        ];
        let mixed = states.iter().map(MixedState::from_pure).chain([MixedState::maximally_mixed(self.dim)]).collect();
        Ok(GeneratedInputs { projectors, states, mixed, observables })
    }
}
