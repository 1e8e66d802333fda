//! Hard-negative selection inside a clustered candidate pool.

use serde::{Deserialize, Serialize};

use super::retrieve::by_score_then_id;

/// How the two similarities of a candidate combine into its hardness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardnessRule {
    /// `(sim_query + sim_positive) / 2`
    #[default]
    Mean,
    /// `min(sim_query, sim_positive)`
    Min,
}

impl HardnessRule {
    pub fn combine(self, sim_query: f64, sim_positive: f64) -> f64 {
        match self {
            HardnessRule::Mean => (sim_query + sim_positive) / 2.0,
            HardnessRule::Min => sim_query.min(sim_positive),
        }
    }
}

/// One pool member as seen by the selector.
#[derive(Debug, Clone, PartialEq)]
pub struct HardCandidate {
    pub doc_id: String,
    /// ensemble similarity to the query
    pub sim_query: f64,
    /// ensemble similarity to the labeled positive
    pub sim_positive: f64,
    pub cluster: usize,
    pub word_count: usize,
}

/// The labeled positive's side of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveRef<'a> {
    pub doc_id: &'a str,
    pub cluster: usize,
    pub word_count: usize,
}

/// Which eligibility rule produced the selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    SameClusterInBand,
    PoolInBand,
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSelection {
    /// `(doc_id, hardness)`, hardest first
    pub negatives: Vec<(String, f64)>,
    pub eligibility: Eligibility,
}

impl HardSelection {
    pub fn ids(&self) -> Vec<String> {
        self.negatives.iter().map(|(id, _)| id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LengthBand {
    pub low: f64,
    pub high: f64,
}

impl Default for LengthBand {
    fn default() -> Self {
        LengthBand { low: 0.5, high: 2.0 }
    }
}

impl LengthBand {
    /// Whether `word_count / positive_words` lies in `[low, high]`. A
    /// positive without words imposes no length constraint.
    pub fn admits(&self, word_count: usize, positive_words: usize) -> bool {
        if positive_words == 0 {
            return true;
        }
        let ratio = word_count as f64 / positive_words as f64;
        ratio >= self.low && ratio <= self.high
    }
}

/// Picks the `m` hardest negatives.
///
/// Candidates are tried in three widening eligibility sets: same cluster as
/// the positive within the length band, the whole pool within the band, and
/// finally the whole pool. The first set holding at least `m` candidates
/// wins; when none does, the whole pool is used.
pub fn select_hard_negatives(
    candidates: &[HardCandidate],
    positive: &PositiveRef<'_>,
    m: usize,
    band: LengthBand,
    rule: HardnessRule,
) -> HardSelection {
    let pool: Vec<&HardCandidate> = candidates.iter().filter(|c| c.doc_id != positive.doc_id).collect();
    if pool.is_empty() {
        log::warn!(
            "candidate pool holds only the positive `{}`; no hard negatives",
            positive.doc_id
        );
        return HardSelection {
            negatives: Vec::new(),
            eligibility: Eligibility::Pool,
        };
    }
    let in_band = |c: &&&HardCandidate| band.admits(c.word_count, positive.word_count);
    let stages: [(Eligibility, Vec<&HardCandidate>); 2] = [
        (
            Eligibility::SameClusterInBand,
            pool.iter()
                .filter(|c| c.cluster == positive.cluster)
                .filter(in_band)
                .copied()
                .collect(),
        ),
        (Eligibility::PoolInBand, pool.iter().filter(in_band).copied().collect()),
    ];
    let (eligibility, eligible) = stages
        .into_iter()
        .find(|(_, set)| set.len() >= m)
        .unwrap_or((Eligibility::Pool, pool));

    let mut scored: Vec<(String, f64)> = eligible
        .iter()
        .map(|c| (c.doc_id.clone(), rule.combine(c.sim_query, c.sim_positive)))
        .collect();
    scored.sort_by(by_score_then_id);
    scored.truncate(m);
    HardSelection {
        negatives: scored,
        eligibility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(id: &str, q: f64, p: f64) -> HardCandidate {
        HardCandidate {
            doc_id: id.into(),
            sim_query: q,
            sim_positive: p,
            cluster: 0,
            word_count: 100,
        }
    }

    fn pos() -> PositiveRef<'static> {
        PositiveRef {
            doc_id: "d1",
            cluster: 0,
            word_count: 100,
        }
    }

    #[test]
    fn hardness_sort_example() {
        let c = vec![
            cand("d1", 1.0, 1.0),
            cand("d2", 0.90, 0.85),
            cand("d3", 0.40, 0.30),
            cand("d4", 0.88, 0.90),
        ];
        let sel = select_hard_negatives(&c, &pos(), 2, LengthBand::default(), HardnessRule::Mean);
        assert_eq!(sel.ids(), vec!["d4", "d2"]);
        assert!((sel.negatives[0].1 - 0.89).abs() < 1e-12);
        assert!((sel.negatives[1].1 - 0.875).abs() < 1e-12);
        assert_eq!(sel.eligibility, Eligibility::SameClusterInBand);
    }

    #[test]
    fn single_candidate() {
        let sel = select_hard_negatives(
            &[cand("d9", 0.1, 0.1)],
            &pos(),
            1,
            LengthBand::default(),
            HardnessRule::Mean,
        );
        assert_eq!(sel.ids(), vec!["d9"]);
    }

    #[test]
    fn only_positive_gives_empty() {
        let sel = select_hard_negatives(
            &[cand("d1", 1.0, 1.0)],
            &pos(),
            2,
            LengthBand::default(),
            HardnessRule::Mean,
        );
        assert!(sel.negatives.is_empty());
    }

    #[test]
    fn relaxes_cluster_then_band() {
        let mut other_cluster = cand("x", 0.9, 0.9);
        other_cluster.cluster = 3;
        let mut too_long = cand("y", 0.95, 0.95);
        too_long.word_count = 1000;
        let same = cand("z", 0.2, 0.2);
        let c = vec![other_cluster, too_long, same];
        let s1 = select_hard_negatives(&c, &pos(), 1, LengthBand::default(), HardnessRule::Mean);
        assert_eq!(
            (s1.ids(), s1.eligibility),
            (vec!["z".to_string()], Eligibility::SameClusterInBand)
        );
        let s2 = select_hard_negatives(&c, &pos(), 2, LengthBand::default(), HardnessRule::Mean);
        assert_eq!(
            (s2.ids(), s2.eligibility),
            (vec!["x".to_string(), "z".to_string()], Eligibility::PoolInBand)
        );
        let s3 = select_hard_negatives(&c, &pos(), 3, LengthBand::default(), HardnessRule::Mean);
        assert_eq!(s3.eligibility, Eligibility::Pool);
        assert_eq!(s3.ids(), vec!["y", "x", "z"]);
    }

    #[test]
    fn min_rule() {
        assert_eq!(HardnessRule::Min.combine(0.3, 0.8), 0.3);
    }

    #[test]
    fn band_edges_inclusive() {
        let b = LengthBand::default();
        assert!(b.admits(50, 100) && b.admits(200, 100));
        assert!(!b.admits(49, 100) && !b.admits(201, 100));
        assert!(b.admits(7, 0));
    }

    fn arb_candidates() -> impl Strategy<Value = Vec<HardCandidate>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0usize..3, 10usize..400), 0..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (q, p, cl, wc))| HardCandidate {
                    doc_id: format!("d{i}"),
                    sim_query: q,
                    sim_positive: p,
                    cluster: cl,
                    word_count: wc,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn contract_holds(cands in arb_candidates(), m in 1usize..6, pcl in 0usize..3, pwc in 20usize..200) {
            let positive = PositiveRef { doc_id: "d0", cluster: pcl, word_count: pwc };
            let band = LengthBand::default();
            let sel = select_hard_negatives(&cands, &positive, m, band, HardnessRule::Mean);
            let ids = sel.ids();
            prop_assert!(!ids.iter().any(|i| i == "d0"));
            prop_assert!(ids.len() <= m);
            let pool: Vec<&HardCandidate> = cands.iter().filter(|c| c.doc_id != "d0").collect();
            prop_assert!(ids.iter().all(|i| pool.iter().any(|c| &c.doc_id == i)));
            let in_band: Vec<&&HardCandidate> = pool.iter().filter(|c| band.admits(c.word_count, pwc)).collect();
            if in_band.len() >= m {
                for id in &ids {
                    let c = pool.iter().find(|c| &c.doc_id == id).unwrap();
                    prop_assert!(band.admits(c.word_count, pwc));
                }
            }
            // brute-force dominance over the eligible set actually used
            let eligible: Vec<&&HardCandidate> = pool.iter().filter(|c| match sel.eligibility {
                Eligibility::SameClusterInBand => c.cluster == pcl && band.admits(c.word_count, pwc),
                Eligibility::PoolInBand => band.admits(c.word_count, pwc),
                Eligibility::Pool => true,
            }).collect();
            let hardness = |c: &HardCandidate| (c.sim_query + c.sim_positive) / 2.0;
            let min_selected = sel.negatives.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            for c in eligible.iter().filter(|c| !ids.contains(&c.doc_id)) {
                prop_assert!(hardness(c) <= min_selected);
            }
            prop_assert_eq!(ids.len(), m.min(pool.len()));
        }
    }
}
