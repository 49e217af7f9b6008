//! Deterministic synthetic targets.
//!
//! A [`TargetSpec`] maps input bytes to the same measurements an instrumented
//! binary would report: the edges it covered (with hit multiplicity), a
//! virtual execution cost, peak stack consumption and the number of
//! comparison bytes that matched. Execution is a pure function of
//! `(spec, input)`.
//!
//! Comparison sites use prefix-match semantics: every leading byte that
//! equals the expected operand counts toward `cmp_matched`, and the guarded
//! edges only fire once the whole operand matches.

pub mod adapter;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapter::{AdapterConfig, AdapterConnection};

/// Logical edge map size; edge ids must be below it.
pub const MAP_SIZE: u32 = 1 << 16;

const BUILTINS: [(&str, &str); 3] = [
    ("shallow-magic", include_str!("../../targets/shallow-magic.json")),
    (
        "nested-magic-deep-stack",
        include_str!("../../targets/nested-magic-deep-stack.json"),
    ),
    ("cmp-heavy", include_str!("../../targets/cmp-heavy.json")),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSite {
    pub offset: usize,
    #[serde(with = "hex_bytes")]
    pub expected: Vec<u8>,
    pub guarded_edges: Vec<u32>,
    /// Index of a site that must fully match before this one is evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires: Option<usize>,
    /// How many times each guarded edge fires on a full match.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub hits: u32,
}

/// An edge that fires once per input byte in `byte..=byte_max` (just
/// `byte` when `byte_max` is absent), or once per input byte when `byte` is
/// absent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopEdge {
    pub edge: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_max: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackEntry {
    pub edge: u32,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub entry_edges: Vec<u32>,
    pub comparison_sites: Vec<ComparisonSite>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopEdge>,
    pub base_cost_us: u64,
    pub per_edge_cost_us: u64,
    #[serde(default)]
    pub stack_model: Vec<StackEntry>,
    pub max_depth: u64,
    /// Default initial corpus for campaigns against this target.
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "hex_list")]
    pub seeds: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    /// Fired edge ids, with multiplicity, in firing order.
    pub edges: Vec<u32>,
    pub exec_cost_us: u64,
    pub stack_bytes: u64,
    pub cmp_matched: u64,
}

/// Anything that can run one input and report an [`ExecutionRecord`].
pub trait Executor {
    fn execute(&mut self, input: &[u8]) -> Result<ExecutionRecord>;
}

impl Executor for TargetSpec {
    fn execute(&mut self, input: &[u8]) -> Result<ExecutionRecord> {
        Ok(execute(self, input))
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&mut self, input: &[u8]) -> Result<ExecutionRecord> {
        (**self).execute(input)
    }
}

fn matched_prefix(input: &[u8], offset: usize, expected: &[u8]) -> usize {
    input
        .get(offset..)
        .unwrap_or(&[])
        .iter()
        .zip(expected)
        .take_while(|(a, b)| a == b)
        .count()
}

pub fn execute(spec: &TargetSpec, input: &[u8]) -> ExecutionRecord {
    let mut edges = spec.entry_edges.clone();
    let mut cmp_matched = 0u64;
    let mut satisfied = vec![false; spec.comparison_sites.len()];

    for (idx, site) in spec.comparison_sites.iter().enumerate() {
        if let Some(req) = site.requires {
            if !satisfied[req] {
                continue;
            }
        }
        let m = matched_prefix(input, site.offset, &site.expected);
        cmp_matched += m as u64;
        if m == site.expected.len() {
            satisfied[idx] = true;
            for _ in 0..site.hits {
                edges.extend_from_slice(&site.guarded_edges);
            }
        }
    }

    for lp in &spec.loops {
        if lp.requires.is_some_and(|r| !satisfied[r]) {
            continue;
        }
        let count = match lp.byte {
            Some(lo) => {
                let hi = lp.byte_max.unwrap_or(lo);
                input.iter().filter(|&&x| (lo..=hi).contains(&x)).count()
            }
            None => input.len(),
        };
        edges.extend(std::iter::repeat_n(lp.edge, count));
    }

    let exec_cost_us = spec.base_cost_us + spec.per_edge_cost_us * edges.len() as u64;
    let stack: u64 = edges
        .iter()
        .filter_map(|e| spec.stack_bytes_for(*e))
        .sum();

    ExecutionRecord {
        edges,
        exec_cost_us,
        stack_bytes: stack.min(spec.max_depth),
        cmp_matched,
    }
}

impl TargetSpec {
    pub fn builtin(name: &str) -> Option<TargetSpec> {
        BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, json)| TargetSpec::from_json(json).expect("built-in target spec is valid"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    /// Resolves a built-in name first, then a path on disk.
    pub fn resolve(name_or_path: &str) -> Result<TargetSpec> {
        match Self::builtin(name_or_path) {
            Some(spec) => Ok(spec),
            None => load_target_spec(name_or_path),
        }
    }

    pub fn from_json(text: &str) -> Result<TargetSpec> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: TargetSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Spec {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("target spec serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn total_comparison_bytes(&self) -> u64 {
        self.comparison_sites
            .iter()
            .map(|s| s.expected.len() as u64)
            .sum()
    }

    pub fn guarded_edges(&self) -> impl Iterator<Item = u32> + '_ {
        self.comparison_sites
            .iter()
            .flat_map(|s| s.guarded_edges.iter().copied())
    }

    fn stack_bytes_for(&self, edge: u32) -> Option<u64> {
        self.stack_model
            .iter()
            .find(|s| s.edge == edge)
            .map(|s| s.bytes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: String, message: String| Err(Error::Spec { path, message });

        if self.base_cost_us == 0 {
            return bad("base_cost_us".into(), "must be > 0".into());
        }
        if self.per_edge_cost_us == 0 {
            return bad("per_edge_cost_us".into(), "must be > 0".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth".into(), "must be > 0".into());
        }

        let mut seen = BTreeSet::new();
        let mut declare = |edge: u32, path: String| -> Result<()> {
            if edge >= MAP_SIZE {
                return bad(path, format!("edge id {edge} exceeds map size {MAP_SIZE}"));
            }
            if !seen.insert(edge) {
                return bad(path, format!("duplicate edge id {edge}"));
            }
            Ok(())
        };
        for (i, e) in self.entry_edges.iter().enumerate() {
            declare(*e, format!("entry_edges[{i}]"))?;
        }
        for (i, site) in self.comparison_sites.iter().enumerate() {
            if site.expected.is_empty() {
                return bad(
                    format!("comparison_sites[{i}].expected"),
                    "expected bytes must be non-empty".into(),
                );
            }
            if site.requires.is_some_and(|r| r >= i) {
                return bad(
                    format!("comparison_sites[{i}].requires"),
                    "must reference an earlier site".into(),
                );
            }
            for (j, e) in site.guarded_edges.iter().enumerate() {
                declare(*e, format!("comparison_sites[{i}].guarded_edges[{j}]"))?;
            }
        }
        for (i, lp) in self.loops.iter().enumerate() {
            declare(lp.edge, format!("loops[{i}].edge"))?;
            match (lp.byte, lp.byte_max) {
                (None, Some(_)) => {
                    return bad(format!("loops[{i}].byte_max"), "requires `byte`".into())
                }
                (Some(lo), Some(hi)) if hi < lo => {
                    return bad(format!("loops[{i}].byte_max"), "must be >= `byte`".into())
                }
                _ => {}
            }
            if lp
                .requires
                .is_some_and(|r| r >= self.comparison_sites.len())
            {
                return bad(
                    format!("loops[{i}].requires"),
                    "references a missing comparison site".into(),
                );
            }
        }
        let mut stacked = BTreeSet::new();
        for (i, s) in self.stack_model.iter().enumerate() {
            if !seen.contains(&s.edge) {
                return bad(
                    format!("stack_model[{i}].edge"),
                    format!("unknown edge id {}", s.edge),
                );
            }
            if !stacked.insert(s.edge) {
                return bad(
                    format!("stack_model[{i}].edge"),
                    format!("duplicate edge id {}", s.edge),
                );
            }
        }
        for (i, seed) in self.seeds.iter().enumerate() {
            if seed.is_empty() {
                return bad(format!("seeds[{i}]"), "seeds must be non-empty".into());
            }
        }
        Ok(())
    }
}

pub fn load_target_spec(path: impl AsRef<Path>) -> Result<TargetSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TargetSpec::from_json(&text)
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

/// Lowercase hex, two digits per byte.
pub fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn decode_hex(s: &str) -> std::result::Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err(format!("hex string `{s}` has odd length"));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("invalid hex in `{s}`"))
        })
        .collect()
}

mod hex_bytes {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::encode_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::decode_hex(&s).map_err(D::Error::custom)
    }
}

mod hex_list {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(list: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(list.len()))?;
        for item in list {
            seq.serialize_element(&super::encode_hex(item))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| super::decode_hex(s).map_err(D::Error::custom))
            .collect()
    }
}
