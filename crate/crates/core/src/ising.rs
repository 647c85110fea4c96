//! Ising problem instances, energies and exhaustive exact diagnostics.
//!
//! Energy convention: `H(s) = -Σ_{(i,j)∈E} J_ij s_i s_j`, so a positive
//! coupling favours aligned spins.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, CimError, Result};

/// Largest vertex count accepted by [`brute_force_spectrum`].
pub const MAX_BRUTE_FORCE_VERTICES: usize = 24;

/// Names accepted by [`make_named_instance`], sorted.
pub const NAMED_INSTANCES: [&str; 4] = ["antiferro-ring-16", "cubic-16", "cubic-4", "ferro-ring-16"];

/// Undirected weighted edge with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// An Ising problem graph `J_ij`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct IsingInstance {
    name: String,
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl PartialEq for IsingInstance {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.same_graph(other)
    }
}

impl IsingInstance {
    /// Builds an instance, validating `0 <= i < j < n`, finiteness and
    /// non-zero weights, and uniqueness of `(i, j)`. Edges are stored sorted.
    pub fn new(name: impl Into<String>, n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("instance must have at least one vertex"));
        }
        let mut list = Vec::new();
        for (k, (i, j, weight)) in edges.into_iter().enumerate() {
            if i == j {
                return Err(invalid(format!("edge {k}: self-loop ({i}, {j})")));
            }
            if i > j {
                return Err(invalid(format!("edge {k}: indices must satisfy i < j, got ({i}, {j})")));
            }
            if j >= n {
                return Err(invalid(format!("edge {k}: index {j} out of range for n = {n}")));
            }
            if !weight.is_finite() || weight == 0.0 {
                return Err(invalid(format!("edge {k}: weight must be finite and nonzero, got {weight}")));
            }
            list.push(Edge { i, j, weight });
        }
        list.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = list.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(invalid(format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for e in &list {
            neighbors[e.i].push((e.j, e.weight));
            neighbors[e.j].push((e.i, e.weight));
        }
        Ok(Self {
            name: name.into(),
            n,
            edges: list,
            neighbors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of vertex `i` with the coupling weight.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when every vertex has degree two.
    pub fn is_ring(&self) -> bool {
        self.neighbors.iter().all(|nb| nb.len() == 2)
    }

    /// Same vertex count and edge set, ignoring the name.
    pub fn same_graph(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges
    }

    /// Vertex-disjoint union; vertices of `other` are shifted by `self.n()`.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let shift = self.n;
        let edges = self
            .edges
            .iter()
            .map(|e| (e.i, e.j, e.weight))
            .chain(other.edges.iter().map(|e| (e.i + shift, e.j + shift, e.weight)));
        Self::new(format!("{}+{}", self.name, other.name), self.n + other.n, edges)
            .expect("union of valid instances is valid")
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(invalid("permutation length differs from vertex count"));
        }
        let edges = self.edges.iter().map(|e| {
            let (a, b) = (perm[e.i], perm[e.j]);
            (a.min(b), a.max(b), e.weight)
        });
        Self::new(self.name.clone(), self.n, edges)
    }
}

/// A ±1 spin assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(invalid(format!("spin values must be +1 or -1, got {bad}")));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Bit `i` set means spin `i` is -1.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Self((0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    /// Sign readout of a real amplitude vector. Zero reads as +1; the second
    /// value reports whether any entry was exactly zero.
    pub fn from_signs(values: impl IntoIterator<Item = f64>) -> (Self, bool) {
        let mut degenerate = false;
        let spins = values
            .into_iter()
            .map(|v| {
                if v == 0.0 {
                    degenerate = true;
                }
                if v < 0.0 {
                    -1
                } else {
                    1
                }
            })
            .collect();
        (Self(spins), degenerate)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            f.write_str(if s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SpinConfig {
    type Err = CimError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(k, c)| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(CimError::Parse {
                    location: format!("character {k}"),
                    message: format!("expected '+' or '-', got {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for SpinConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpinConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `-Σ J_ij s_i s_j`.
pub fn ising_energy(instance: &IsingInstance, config: &SpinConfig) -> Result<f64> {
    if config.len() != instance.n() {
        return Err(invalid(format!(
            "config has {} spins but instance has {} vertices",
            config.len(),
            instance.n()
        )));
    }
    Ok(energy_unchecked(instance, config.spins()))
}

pub(crate) fn energy_unchecked(instance: &IsingInstance, spins: &[i8]) -> f64 {
    -instance
        .edges()
        .iter()
        .map(|e| e.weight * f64::from(spins[e.i] * spins[e.j]))
        .sum::<f64>()
}

/// Number of edges whose endpoints violate the preferred alignment.
pub fn frustrated_edge_count(instance: &IsingInstance, config: &SpinConfig) -> Result<usize> {
    if config.len() != instance.n() {
        return Err(invalid("config length differs from vertex count"));
    }
    let s = config.spins();
    Ok(instance
        .edges()
        .iter()
        .filter(|e| e.weight * f64::from(s[e.i] * s[e.j]) < 0.0)
        .count())
}

/// Domain walls on a ring instance (every vertex of degree two).
pub fn domain_wall_count(instance: &IsingInstance, config: &SpinConfig) -> Result<usize> {
    if !instance.is_ring() {
        return Err(invalid(format!("instance `{}` is not a ring", instance.name())));
    }
    frustrated_edge_count(instance, config)
}

/// Canonical benchmark instances on 16 (or 4) vertices.
pub fn make_named_instance(name: &str) -> Result<IsingInstance> {
    let ring = |w: f64| (0..16).map(move |i| (i.min((i + 1) % 16), i.max((i + 1) % 16), w));
    match name {
        "ferro-ring-16" => IsingInstance::new(name, 16, ring(1.0)),
        "antiferro-ring-16" => IsingInstance::new(name, 16, ring(-1.0)),
        "cubic-16" => {
            let chords = (0..8).map(|i| (i, i + 8, -1.0));
            IsingInstance::new(name, 16, ring(-1.0).chain(chords))
        }
        "cubic-4" => {
            let k4 = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j, -1.0)));
            IsingInstance::new(name, 4, k4)
        }
        other => Err(CimError::NotFound {
            kind: "instance",
            name: other.to_string(),
            valid: NAMED_INSTANCES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    name: String,
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

/// Parses the instance JSON document `{"name", "n", "edges": [[i, j, J], ...]}`.
pub fn parse_instance(text: &str) -> Result<IsingInstance> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: InstanceDoc = serde_path_to_error::deserialize(de).map_err(|e| CimError::Parse {
        location: format!("{} (line {}, column {})", display_path(e.path()), e.inner().line(), e.inner().column()),
        message: e.inner().to_string(),
    })?;
    for (k, &(i, j, w)) in doc.edges.iter().enumerate() {
        let problem = if i == j {
            Some(format!("self-loop ({i}, {i})"))
        } else if i > j {
            Some(format!("indices must satisfy i < j, got ({i}, {j})"))
        } else if j >= doc.n {
            Some(format!("index {j} out of range for n = {}", doc.n))
        } else if !w.is_finite() || w == 0.0 {
            Some(format!("weight must be finite and nonzero, got {w}"))
        } else if doc.edges[..k].iter().any(|&(a, b, _)| (a, b) == (i, j)) {
            Some(format!("duplicate edge ({i}, {j})"))
        } else {
            None
        };
        if let Some(message) = problem {
            return Err(CimError::Parse {
                location: format!("/edges/{k}"),
                message,
            });
        }
    }
    IsingInstance::new(doc.name, doc.n, doc.edges).map_err(|e| CimError::Parse {
        location: "/".into(),
        message: e.to_string(),
    })
}

pub fn serialize_instance(instance: &IsingInstance) -> String {
    serde_json::to_string_pretty(instance).expect("instance serializes")
}

impl From<IsingInstance> for InstanceDoc {
    fn from(instance: IsingInstance) -> Self {
        InstanceDoc {
            edges: instance.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            name: instance.name,
            n: instance.n,
        }
    }
}

impl TryFrom<InstanceDoc> for IsingInstance {
    type Error = CimError;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        IsingInstance::new(doc.name, doc.n, doc.edges)
    }
}

pub(crate) fn display_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." || s == "?" {
        "/".to_string()
    } else {
        format!("/{}", s.replace('.', "/"))
    }
}

/// One energy level of the exhaustive census.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramBin {
    pub energy: f64,
    pub count: u64,
}

/// Exhaustive energy census of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSummary {
    pub instance: String,
    pub n: usize,
    pub ground_energy: f64,
    pub ground_states: Vec<SpinConfig>,
    /// Ascending by energy; counts sum to `2^n`.
    pub energy_histogram: Vec<HistogramBin>,
    /// Every single-spin flip strictly raises the energy.
    pub local_minima_strict: Vec<SpinConfig>,
    /// No single-spin flip strictly lowers the energy.
    pub local_minima_nonstrict: Vec<SpinConfig>,
}

/// Local-minimum counts under each single-flip convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalMinimaCensus {
    pub strict: usize,
    pub nonstrict: usize,
    pub strict_excluding_ground: usize,
    pub nonstrict_excluding_ground: usize,
    /// Same four counts with each global-flip pair counted once.
    pub strict_pairs: usize,
    pub nonstrict_pairs: usize,
    pub strict_excluding_ground_pairs: usize,
    pub nonstrict_excluding_ground_pairs: usize,
}

impl LocalMinimaCensus {
    /// `(convention name, count)` for every convention, in a fixed order.
    pub fn conventions(&self) -> [(&'static str, usize); 8] {
        [
            ("strict", self.strict),
            ("nonstrict", self.nonstrict),
            ("strict_excluding_ground", self.strict_excluding_ground),
            ("nonstrict_excluding_ground", self.nonstrict_excluding_ground),
            ("strict_pairs", self.strict_pairs),
            ("nonstrict_pairs", self.nonstrict_pairs),
            ("strict_excluding_ground_pairs", self.strict_excluding_ground_pairs),
            ("nonstrict_excluding_ground_pairs", self.nonstrict_excluding_ground_pairs),
        ]
    }
}

impl SpectrumSummary {
    pub fn degeneracy(&self) -> usize {
        self.ground_states.len()
    }

    /// Energy tolerance used for level comparisons.
    pub fn tolerance(&self) -> f64 {
        energy_tolerance(self.ground_energy)
    }

    pub fn is_ground_energy(&self, energy: f64) -> bool {
        (energy - self.ground_energy).abs() <= self.tolerance()
    }

    /// Lowest level strictly above the ground energy, if any.
    pub fn first_excited_energy(&self) -> Option<f64> {
        self.energy_histogram.get(1).map(|b| b.energy)
    }

    pub fn local_minima_census(&self) -> LocalMinimaCensus {
        let excl = |list: &[SpinConfig]| list.len() - list.iter().filter(|c| self.ground_states.contains(c)).count();
        let strict = self.local_minima_strict.len();
        let nonstrict = self.local_minima_nonstrict.len();
        let strict_ex = excl(&self.local_minima_strict);
        let nonstrict_ex = excl(&self.local_minima_nonstrict);
        LocalMinimaCensus {
            strict,
            nonstrict,
            strict_excluding_ground: strict_ex,
            nonstrict_excluding_ground: nonstrict_ex,
            strict_pairs: strict / 2,
            nonstrict_pairs: nonstrict / 2,
            strict_excluding_ground_pairs: strict_ex / 2,
            nonstrict_excluding_ground_pairs: nonstrict_ex / 2,
        }
    }
}

fn energy_tolerance(scale: f64) -> f64 {
    1e-9 * scale.abs().max(1.0)
}

/// Enumerates all `2^n` configurations of `instance`.
pub fn brute_force_spectrum(instance: &IsingInstance) -> Result<SpectrumSummary> {
    let n = instance.n();
    if n > MAX_BRUTE_FORCE_VERTICES {
        return Err(CimError::ResourceLimit(format!(
            "exhaustive enumeration refused for n = {n} (limit {MAX_BRUTE_FORCE_VERTICES})"
        )));
    }
    let scale = instance.edges().iter().map(|e| e.weight.abs()).sum::<f64>();
    let tol = energy_tolerance(scale);

    // Energy levels keyed on a fixed grid so equal levels merge exactly.
    let key = |e: f64| (e / tol).round() as i64;
    let mut histogram: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    let mut strict = Vec::new();
    let mut nonstrict = Vec::new();
    let mut spins = vec![1i8; n];

    for bits in 0..(1u64 << n) {
        for (i, s) in spins.iter_mut().enumerate() {
            *s = if bits >> i & 1 == 1 { -1 } else { 1 };
        }
        let energy = energy_unchecked(instance, &spins);
        histogram.entry(key(energy)).or_insert((energy, 0)).1 += 1;

        // Flipping spin i changes the energy by 2 s_i Σ_j J_ij s_j.
        let mut all_positive = true;
        let mut none_negative = true;
        for (i, &s) in spins.iter().enumerate() {
            let field: f64 = instance.neighbors(i).iter().map(|&(j, w)| w * f64::from(spins[j])).sum();
            let delta = 2.0 * f64::from(s) * field;
            if delta <= tol {
                all_positive = false;
            }
            if delta < -tol {
                none_negative = false;
                break;
            }
        }
        if none_negative {
            let config = SpinConfig(spins.clone());
            if all_positive {
                strict.push(config.clone());
            }
            nonstrict.push(config);
        }
    }

    let (&ground_key, &(ground_energy, _)) = histogram.iter().next().expect("at least one configuration");
    let ground_states = nonstrict
        .iter()
        .filter(|c| key(energy_unchecked(instance, c.spins())) == ground_key)
        .cloned()
        .collect();
    Ok(SpectrumSummary {
        instance: instance.name().to_string(),
        n,
        ground_energy,
        ground_states,
        energy_histogram: histogram
            .into_values()
            .map(|(energy, count)| HistogramBin { energy, count })
            .collect(),
        local_minima_strict: strict,
        local_minima_nonstrict: nonstrict,
    })
}
