//! Decile performance tags, `1/10` (slowest) to `10/10` (fastest), assigned
//! per problem.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PerfTag(u8);

impl PerfTag {
    pub const TOP: PerfTag = PerfTag(10);

    pub fn new(v: u8) -> Option<Self> {
        (1..=10).contains(&v).then_some(PerfTag(v))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for PerfTag {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        PerfTag::new(v).ok_or_else(|| format!("perf tag must be in 1..=10, got {v}"))
    }
}

impl From<PerfTag> for u8 {
    fn from(t: PerfTag) -> u8 {
        t.0
    }
}

impl fmt::Display for PerfTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/10", self.0)
    }
}

/// For each problem, ranks solutions by runtime and buckets them into
/// deciles: `tag = 10 - floor(10 (r - 1) / m)` where `m` is the number of
/// solutions and `r` is 1 + the number of strictly faster solutions, so
/// equal runtimes share a tag.
pub fn assign_perf_tags(solutions: &BTreeMap<String, Vec<(String, f64)>>) -> BTreeMap<String, PerfTag> {
    let mut out = BTreeMap::new();
    for group in solutions.values() {
        let m = group.len();
        let mut runtimes: Vec<f64> = group.iter().map(|(_, r)| *r).collect();
        runtimes.sort_by(f64::total_cmp);
        for (id, rt) in group {
            let faster = runtimes.partition_point(|x| x.total_cmp(rt).is_lt());
            let bucket = (10 * faster) / m;
            out.insert(id.clone(), PerfTag((10 - bucket) as u8));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_problem(runtimes: &[f64]) -> BTreeMap<String, Vec<(String, f64)>> {
        let sols = runtimes
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("s{i:02}"), *r))
            .collect();
        [("p".to_string(), sols)].into()
    }

    fn tags_in_order(runtimes: &[f64]) -> Vec<u8> {
        let tags = assign_perf_tags(&one_problem(runtimes));
        (0..runtimes.len()).map(|i| tags[&format!("s{i:02}")].get()).collect()
    }

    #[test]
    fn ten_distinct() {
        let rt: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(tags_in_order(&rt), vec![10, 9, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn twenty_distinct_two_per_tag() {
        let rt: Vec<f64> = (1..=20).map(f64::from).collect();
        let tags = tags_in_order(&rt);
        assert_eq!(&tags[..4], &[10, 10, 9, 9]);
        for t in 1..=10u8 {
            assert_eq!(tags.iter().filter(|x| **x == t).count(), 2);
        }
    }

    #[test]
    fn single_solution_is_top() {
        assert_eq!(tags_in_order(&[3.0]), vec![10]);
    }

    #[test]
    fn ties_share_a_tag() {
        assert_eq!(tags_in_order(&[5.0, 1.0, 5.0, 5.0]), vec![8, 10, 8, 8]);
    }

    #[test]
    fn tags_serialize_as_integers() {
        assert_eq!(serde_json::to_string(&PerfTag::TOP).unwrap(), "10");
        assert!(serde_json::from_str::<PerfTag>("11").is_err());
        assert_eq!(PerfTag::TOP.to_string(), "10/10");
    }

    proptest! {
        #[test]
        fn faster_never_gets_a_lower_tag(rt in prop::collection::vec(1u32..50, 1..40)) {
            let rt: Vec<f64> = rt.into_iter().map(f64::from).collect();
            let tags = tags_in_order(&rt);
            for i in 0..rt.len() {
                for j in 0..rt.len() {
                    if rt[i] < rt[j] { prop_assert!(tags[i] >= tags[j]); }
                    if rt[i] == rt[j] { prop_assert_eq!(tags[i], tags[j]); }
                }
                prop_assert!((1..=10).contains(&tags[i]));
            }
            prop_assert!(tags.contains(&10));
        }
    }
}
