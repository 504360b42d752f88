//! Behavioral dedup of generated programs.
//!
//! Instead of comparing every pair of programs on every input (`O(n² · m)`
//! executions), each program runs once per shared input and its outputs are
//! hashed into a signature (`O(n · m)`); equal signatures are then grouped in
//! a single pass. Signatures only distinguish programs up to the chosen
//! inputs: two programs that agree on all of them land in one class even if
//! some other input would tell them apart.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{relative_improvement, ProgramPair, Provenance, Split};
use crate::harness::{normalize_output, CompileError, Harness, TestCase};
use crate::metrics::BOUNDARY_EPS;
use crate::perf::{PerfError, PerfMeasurement};
use crate::util::parallel_map;

pub const DEFAULT_INPUT_BUDGET: usize = 50;
pub const DEFAULT_MIN_SPEEDUP: f64 = 5.0;
pub const DEFAULT_MAX_PER_CLASS: usize = 3;

/// Sampling defaults for generating new programs.
pub const SELFPLAY_TEMPERATURE: f64 = 1.0;
pub const SELFPLAY_TOP_P: f64 = 0.9;
pub const SELFPLAY_SAMPLES: usize = 5;

/// One coordinate of a signature. Serialized as base64 text, or `null` for
/// [`SigOutput::Fail`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SigOutput {
    /// Normalized stdout.
    Output(Vec<u8>),
    /// Crash, timeout or compile failure. Two failures compare equal.
    Fail,
}

impl Serialize for SigOutput {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SigOutput::Output(b) => s.serialize_some(&B64.encode(b)),
            SigOutput::Fail => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for SigOutput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Option::<String>::deserialize(d)? {
            Some(text) => B64
                .decode(text)
                .map(SigOutput::Output)
                .map_err(serde::de::Error::custom),
            None => Ok(SigOutput::Fail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSignature {
    pub program_id: String,
    pub outputs: Vec<SigOutput>,
    pub hash: String,
    /// Digest of the ordered input set the outputs were computed on.
    pub inputs_digest: String,
}

impl OutputSignature {
    pub fn new(program_id: impl Into<String>, outputs: Vec<SigOutput>, inputs_digest: String) -> Self {
        Self {
            program_id: program_id.into(),
            hash: outputs_hash(&outputs),
            outputs,
            inputs_digest,
        }
    }

    /// Hash and full output list both match.
    pub fn same_behavior(&self, other: &OutputSignature) -> bool {
        self.hash == other.hash && self.outputs == other.outputs
    }
}

fn outputs_hash(outputs: &[SigOutput]) -> String {
    let mut h = Sha256::new();
    for o in outputs {
        match o {
            SigOutput::Fail => h.update([0u8]),
            SigOutput::Output(b) => {
                h.update([1u8]);
                h.update((b.len() as u64).to_le_bytes());
                h.update(b);
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn inputs_digest(inputs: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    h.update((inputs.len() as u64).to_le_bytes());
    for i in inputs {
        h.update((i.len() as u64).to_le_bytes());
        h.update(i);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub class_id: String,
    pub members: Vec<String>,
    /// Lexicographically smallest member.
    pub representative: String,
}

#[derive(Debug, Error)]
pub enum SelfPlayError {
    #[error("the shared input set is empty")]
    NoInputs,
    #[error("signatures were computed on different input sets ({0} vs {1})")]
    InputSetMismatch(String, String),
    #[error("pair {pair}: {source}")]
    Perf {
        pair: String,
        #[source]
        source: PerfError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Union of the suites' inputs in order, byte-identical repeats removed,
/// truncated to `budget`.
pub fn shared_input_set(suites: &[Vec<TestCase>], budget: usize) -> Vec<Vec<u8>> {
    let mut seen = BTreeSet::new();
    suites
        .iter()
        .flatten()
        .filter(|t| seen.insert(t.input.clone()))
        .map(|t| t.input.clone())
        .take(budget)
        .collect()
}

/// Compiles `source` and runs it on every input. Crashes and timeouts
/// record [`SigOutput::Fail`]; a compile failure gives an all-`Fail`
/// signature.
pub fn output_signature(
    program_id: &str,
    source: &str,
    inputs: &[Vec<u8>],
    harness: &Harness,
    workdir: &Path,
) -> Result<OutputSignature, SelfPlayError> {
    if inputs.is_empty() {
        return Err(SelfPlayError::NoInputs);
    }
    let digest = inputs_digest(inputs);
    let artifact = match harness.compile(program_id, source, workdir) {
        Ok(a) => a,
        Err(CompileError::Io(e)) => return Err(e.into()),
        Err(e) => {
            log::debug!("{program_id}: compile failed: {}", e.stderr());
            return Ok(OutputSignature::new(program_id, vec![SigOutput::Fail; inputs.len()], digest));
        }
    };
    let mut outputs = Vec::with_capacity(inputs.len());
    for input in inputs {
        let outcome = harness.execute(&artifact, input)?;
        outputs.push(if outcome.exit.success() {
            SigOutput::Output(normalize_output(&outcome.stdout))
        } else {
            SigOutput::Fail
        });
    }
    Ok(OutputSignature::new(program_id, outputs, digest))
}

/// Signatures for `(program_id, source)` pairs, computed on `workers`
/// threads; output order follows `programs`.
pub fn compute_signatures(
    programs: &[(String, String)],
    inputs: &[Vec<u8>],
    harness: &Harness,
    workdir: &Path,
    workers: usize,
) -> Result<Vec<OutputSignature>, SelfPlayError> {
    if inputs.is_empty() {
        return Err(SelfPlayError::NoInputs);
    }
    parallel_map(programs, workers, |(id, src)| {
        output_signature(id, src, inputs, harness, workdir)
    })
    .into_iter()
    .collect()
}

/// Partitions programs by identical behavior. Classes are ordered by
/// representative and numbered `class-0000`, `class-0001`, ...
pub fn group_equivalence(signatures: &[OutputSignature]) -> Vec<EquivalenceClass> {
    let mut by_hash: HashMap<&str, Vec<Vec<&OutputSignature>>> = HashMap::new();
    for sig in signatures {
        let buckets = by_hash.entry(sig.hash.as_str()).or_default();
        // Same hash but different outputs means a collision: keep them apart.
        match buckets.iter_mut().find(|b| b[0].outputs == sig.outputs) {
            Some(b) => b.push(sig),
            None => buckets.push(vec![sig]),
        }
    }
    let mut groups: Vec<Vec<String>> = by_hash
        .into_values()
        .flatten()
        .map(|b| {
            b.iter()
                .map(|s| s.program_id.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    groups.sort();
    groups
        .into_iter()
        .enumerate()
        .map(|(i, members)| EquivalenceClass {
            class_id: format!("class-{i:04}"),
            representative: members[0].clone(),
            members,
        })
        .collect()
}

/// Keeps the generated programs whose behavior matches no known program.
pub fn novelty_filter(
    generated: &[OutputSignature],
    known: &[OutputSignature],
) -> Result<Vec<OutputSignature>, SelfPlayError> {
    let mut all = generated.iter().chain(known);
    if let Some(first) = all.next() {
        if let Some(other) = all.find(|s| s.inputs_digest != first.inputs_digest) {
            return Err(SelfPlayError::InputSetMismatch(
                first.inputs_digest.clone(),
                other.inputs_digest.clone(),
            ));
        }
    }
    let mut known_by_hash: HashMap<&str, Vec<&OutputSignature>> = HashMap::new();
    for k in known {
        known_by_hash.entry(&k.hash).or_default().push(k);
    }
    Ok(generated
        .iter()
        .filter(|g| {
            !known_by_hash
                .get(g.hash.as_str())
                .is_some_and(|ks| ks.iter().any(|k| k.same_behavior(g)))
        })
        .cloned()
        .collect())
}

/// A slow generated program and a model-optimized version of it, already
/// judged correct against the slow program's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCandidate {
    pub problem_id: String,
    pub slow_id: String,
    pub fast_id: String,
    pub slow_src: String,
    pub fast_src: String,
    pub slow_runtime: PerfMeasurement,
    pub fast_runtime: PerfMeasurement,
}

/// Keeps candidates at least `min_speedup` times faster (inclusive), then at
/// most `max_per_class` per equivalence class of the slow program, highest
/// speedup first, ties by pair id. Slow programs outside every class are
/// capped on their own.
pub fn assemble_synthetic_pairs(
    candidates: &[SyntheticCandidate],
    classes: &[EquivalenceClass],
    min_speedup: f64,
    max_per_class: usize,
) -> Result<Vec<ProgramPair>, SelfPlayError> {
    let class_of: HashMap<&str, &str> = classes
        .iter()
        .flat_map(|c| c.members.iter().map(|m| (m.as_str(), c.class_id.as_str())))
        .collect();

    // Key: (has no class, class id or slow id).
    let mut grouped: BTreeMap<(bool, String), Vec<(f64, ProgramPair)>> = BTreeMap::new();
    for c in candidates {
        let pair_id = format!("{}->{}", c.slow_id, c.fast_id);
        c.slow_runtime
            .check_unit(&c.fast_runtime)
            .map_err(|source| SelfPlayError::Perf {
                pair: pair_id.clone(),
                source,
            })?;
        let speedup = c.slow_runtime.value() / c.fast_runtime.value();
        if speedup < min_speedup - BOUNDARY_EPS {
            continue;
        }
        let class_id = class_of.get(c.slow_id.as_str()).map(|s| s.to_string());
        let key = match &class_id {
            Some(id) => (false, id.clone()),
            None => (true, c.slow_id.clone()),
        };
        let pair = ProgramPair {
            pair_id,
            problem_id: c.problem_id.clone(),
            user_id: None,
            src_id: c.slow_id.clone(),
            tgt_id: c.fast_id.clone(),
            src: c.slow_src.clone(),
            tgt: c.fast_src.clone(),
            src_runtime: c.slow_runtime,
            tgt_runtime: c.fast_runtime,
            relative_improvement: relative_improvement(c.slow_runtime.value(), c.fast_runtime.value()),
            split: Split::Train,
            provenance: Provenance::SelfPlay,
            class_id,
        };
        grouped.entry(key).or_default().push((speedup, pair));
    }

    let mut out = Vec::new();
    for (_, mut pairs) in grouped {
        pairs.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.pair_id.cmp(&b.pair_id)));
        out.extend(pairs.into_iter().take(max_per_class).map(|(_, p)| p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CompileConfig;
    use crate::perf::Unit;
    use crate::process::Limits;
    use proptest::prelude::*;

    fn sig(id: &str, outs: &[Option<&str>]) -> OutputSignature {
        let outputs = outs
            .iter()
            .map(|o| match o {
                Some(s) => SigOutput::Output(s.as_bytes().to_vec()),
                None => SigOutput::Fail,
            })
            .collect();
        OutputSignature::new(id, outputs, "inputs".into())
    }

    fn script_harness() -> Harness {
        Harness::new(CompileConfig::script("prog.sh"), Limits::default().with_wall_timeout(5.0))
    }

    fn inputs(items: &[&str]) -> Vec<Vec<u8>> {
        items.iter().map(|s| s.as_bytes().to_vec()).collect()
    }

    #[test]
    fn echo_program_signature() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let s = output_signature("echo", "#!/bin/sh\ncat\n", &inputs(&["a", "b"]), &h, dir.path()).unwrap();
        assert_eq!(s.outputs, vec![SigOutput::Output(b"a".to_vec()), SigOutput::Output(b"b".to_vec())]);
    }

    #[test]
    fn identical_programs_identical_signatures() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let src = "#!/bin/sh\nread x; echo $((x * 2))\n";
        let ins = inputs(&["1", "5"]);
        let a = output_signature("a", src, &ins, &h, dir.path()).unwrap();
        let b = output_signature("b", src, &ins, &h, dir.path()).unwrap();
        assert!(a.same_behavior(&b));
        assert_eq!(a.inputs_digest, b.inputs_digest);
    }

    #[test]
    fn crash_on_one_input_is_fail() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let src = "#!/bin/sh\nread x\n[ \"$x\" = 2 ] && exit 3\necho $x\n";
        let s = output_signature("c", src, &inputs(&["1", "2", "3"]), &h, dir.path()).unwrap();
        assert_eq!(
            s.outputs,
            vec![SigOutput::Output(b"1".to_vec()), SigOutput::Fail, SigOutput::Output(b"3".to_vec())]
        );
    }

    #[test]
    fn compile_failure_is_all_fail() {
        let dir = tempfile::tempdir().unwrap();
        let h = Harness::new(
            CompileConfig {
                compiler_command: "false".into(),
                ..CompileConfig::default()
            },
            Limits::default(),
        );
        let s = output_signature("x", "junk", &inputs(&["1", "2"]), &h, dir.path()).unwrap();
        assert_eq!(s.outputs, vec![SigOutput::Fail, SigOutput::Fail]);
        assert!(matches!(
            output_signature("x", "junk", &[], &h, dir.path()),
            Err(SelfPlayError::NoInputs)
        ));
    }

    #[test]
    fn grouping_examples() {
        let classes = group_equivalence(&[
            sig("P3", &[Some("1"), Some("3")]),
            sig("P1", &[Some("1"), Some("2")]),
            sig("P2", &[Some("1"), Some("2")]),
        ]);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[0].members, vec!["P1", "P2"]);
        assert_eq!(classes[0].representative, "P1");
        assert_eq!(classes[0].class_id, "class-0000");
        assert_eq!(classes[1].members, vec!["P3"]);
        assert!(group_equivalence(&[]).is_empty());
    }

    #[test]
    fn hash_collision_is_split_by_full_outputs() {
        let a = sig("a", &[Some("x")]);
        let mut b = sig("b", &[Some("y")]);
        b.hash = a.hash.clone();
        assert_eq!(group_equivalence(&[a, b]).len(), 2);
    }

    #[test]
    fn signature_json_roundtrip() {
        let s = sig("p", &[Some("out\n"), None]);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("null"));
        assert_eq!(serde_json::from_str::<OutputSignature>(&text).unwrap(), s);
    }

    #[test]
    fn novelty_examples() {
        let known = vec![sig("k1", &[Some("1"), Some("2")]), sig("k2", &[None, Some("2")])];
        let gen = vec![
            sig("g_same", &[Some("1"), Some("2")]),
            sig("g_diff", &[Some("1"), Some("3")]),
            sig("g_fail", &[None, Some("2")]),
        ];
        let kept = novelty_filter(&gen, &known).unwrap();
        assert_eq!(kept.iter().map(|s| s.program_id.as_str()).collect::<Vec<_>>(), vec!["g_diff"]);
        assert!(novelty_filter(&gen[..1], &known).unwrap().is_empty());

        let mut other = sig("o", &[Some("1")]);
        other.inputs_digest = "elsewhere".into();
        assert!(matches!(
            novelty_filter(&[other], &known),
            Err(SelfPlayError::InputSetMismatch(..))
        ));
    }

    #[test]
    fn shared_inputs_dedupe_and_cap() {
        let suites = vec![
            vec![TestCase::new(0, "a", ""), TestCase::new(1, "b", "")],
            vec![TestCase::new(0, "b", ""), TestCase::new(1, "c", "")],
        ];
        assert_eq!(shared_input_set(&suites, 50), inputs(&["a", "b", "c"]));
        assert_eq!(shared_input_set(&suites, 2), inputs(&["a", "b"]));
    }

    fn cand(slow: &str, fast: &str, slow_rt: f64, fast_rt: f64) -> SyntheticCandidate {
        let m = |v| PerfMeasurement::new(v, Unit::CostUnits).unwrap();
        SyntheticCandidate {
            problem_id: "p".into(),
            slow_id: slow.into(),
            fast_id: fast.into(),
            slow_src: format!("src {slow}"),
            fast_src: format!("src {fast}"),
            slow_runtime: m(slow_rt),
            fast_runtime: m(fast_rt),
        }
    }

    #[test]
    fn assemble_caps_and_thresholds() {
        let classes = vec![EquivalenceClass {
            class_id: "class-0000".into(),
            members: vec!["s1".into(), "s2".into()],
            representative: "s1".into(),
        }];
        let cands = vec![
            cand("s1", "f1", 9.0, 1.0),
            cand("s1", "f2", 8.0, 1.0),
            cand("s2", "f3", 7.0, 1.0),
            cand("s2", "f4", 6.0, 1.0),
            cand("s2", "f5", 5.5, 1.0),
            cand("lone", "f6", 10.0, 2.0),
            cand("lone", "f7", 4.9, 1.0),
        ];
        let pairs = assemble_synthetic_pairs(&cands, &classes, DEFAULT_MIN_SPEEDUP, DEFAULT_MAX_PER_CLASS).unwrap();
        let ids: Vec<_> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        assert_eq!(ids, vec!["s1->f1", "s1->f2", "s2->f3", "lone->f6"]);
        assert!(pairs.iter().all(|p| p.provenance == Provenance::SelfPlay));
        assert_eq!(pairs[0].class_id.as_deref(), Some("class-0000"));
        assert_eq!(pairs[3].class_id, None);
        assert!((pairs[3].relative_improvement - 0.8).abs() < 1e-12);
    }

    fn arb_sigs() -> impl Strategy<Value = Vec<OutputSignature>> {
        prop::collection::vec(prop::collection::vec(prop::option::of(0u8..3), 3), 0..25).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, row)| {
                    let outputs = row
                        .into_iter()
                        .map(|o| o.map_or(SigOutput::Fail, |v| SigOutput::Output(vec![v])))
                        .collect();
                    OutputSignature::new(format!("g{i:02}"), outputs, "in".into())
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn grouping_is_a_partition(sigs in arb_sigs()) {
            let classes = group_equivalence(&sigs);
            let by_id: HashMap<_, _> = sigs.iter().map(|s| (s.program_id.clone(), s)).collect();
            let mut seen = BTreeSet::new();
            for c in &classes {
                prop_assert!(!c.members.is_empty());
                prop_assert_eq!(&c.representative, c.members.iter().min().unwrap());
                for m in &c.members {
                    prop_assert!(seen.insert(m.clone()), "{} in two classes", m);
                    prop_assert!(by_id[m].same_behavior(by_id[&c.representative]));
                }
            }
            prop_assert_eq!(seen.len(), sigs.len());
            // Programs in different classes behave differently.
            for a in &classes {
                for b in &classes {
                    if a.class_id != b.class_id {
                        prop_assert!(!by_id[&a.representative].same_behavior(by_id[&b.representative]));
                    }
                }
            }
        }

        #[test]
        fn novel_programs_match_nothing_known(gen in arb_sigs(), known in arb_sigs()) {
            for g in novelty_filter(&gen, &known).unwrap() {
                prop_assert!(known.iter().all(|k| !k.same_behavior(&g)));
            }
        }
    }
}
