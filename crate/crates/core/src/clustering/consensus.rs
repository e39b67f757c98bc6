//! CSPA consensus: binary membership matrix, co-association similarity, and
//! partitioning of the similarity graph.

use super::linkage::linkage_cut;
use super::silhouette::silhouette_from_distances;
use super::Labeling;
use crate::error::{Error, Result};

/// Consensus over a set of base labelings.
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    /// Binary membership matrix, samples x (total clusters over all base
    /// labelings).
    pub membership: Vec<Vec<f64>>,
    /// Co-association matrix `S = H H^T`; `S[i][j]` counts base labelings
    /// that put `i` and `j` in the same cluster.
    pub co_association: Vec<Vec<f64>>,
    /// The base labelings the consensus was built from.
    pub base: Vec<Labeling>,
    pub final_labeling: Labeling,
    /// Silhouette of the final labels. Built on co-association distances
    /// here; pipeline callers overwrite it with the feature-space value.
    pub s_score: f64,
}

/// Stack the base labelings into the binary membership matrix `H`.
pub fn membership_matrix(labelings: &[Labeling]) -> Result<Vec<Vec<f64>>> {
    let n = labelings
        .first()
        .map(|l| l.labels.len())
        .ok_or_else(|| Error::invalid("need at least one base labeling"))?;
    if labelings.iter().any(|l| l.labels.len() != n) {
        return Err(Error::invalid(
            "base labelings cover different sample counts",
        ));
    }
    let total_clusters: usize = labelings.iter().map(|l| l.k).sum();
    let mut h = vec![vec![0.0; total_clusters]; n];
    let mut offset = 0;
    for labeling in labelings {
        for (i, &c) in labeling.labels.iter().enumerate() {
            h[i][offset + c] = 1.0;
        }
        offset += labeling.k;
    }
    Ok(h)
}

fn co_association(h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = h.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = h[i].iter().zip(&h[j]).map(|(a, b)| a * b).sum();
            s[i][j] = dot;
            s[j][i] = dot;
        }
    }
    s
}

/// Partition the co-association similarity graph into `k` clusters by
/// average-linkage merging on the dissimilarity `1 - S[i][j] / r`, where `r`
/// is the number of base labelings (the diagonal of `S`).
pub fn partition_similarity_graph(s: &[Vec<f64>], k: usize) -> Result<Labeling> {
    let n = s.len();
    if n == 0 {
        return Err(Error::invalid("empty co-association matrix"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "cannot cut {n} samples into {k} clusters"
        )));
    }
    let r = s[0][0];
    if r <= 0.0 {
        return Err(Error::invalid("co-association diagonal must be positive"));
    }
    let dist: Vec<Vec<f64>> = s
        .iter()
        .map(|row| row.iter().map(|v| 1.0 - v / r).collect())
        .collect();
    let labels = linkage_cut(&dist, k)?;
    Labeling::from_labels(labels, "cspa", 0, true)
}

/// Build `H` and `S` from the base labelings and partition into `k_final`
/// consensus clusters.
pub fn cspa_consensus(labelings: &[Labeling], k_final: usize) -> Result<ConsensusResult> {
    let membership = membership_matrix(labelings)?;
    let co = co_association(&membership);
    let final_labeling = partition_similarity_graph(&co, k_final)?;
    let s_score = if final_labeling.k >= 2 {
        let r = co[0][0];
        let dist: Vec<Vec<f64>> = co
            .iter()
            .map(|row| row.iter().map(|v| 1.0 - v / r).collect())
            .collect();
        silhouette_from_distances(&dist, &final_labeling.labels)?
    } else {
        0.0
    };
    Ok(ConsensusResult {
        membership,
        co_association: co,
        base: labelings.to_vec(),
        final_labeling,
        s_score,
    })
}

/// True when two labelings induce the same partition (equal up to a
/// permutation of cluster ids).
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = std::collections::HashMap::new();
    let mut bwd = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeling(labels: Vec<usize>) -> Labeling {
        Labeling::from_labels(labels, "test", 0, true).unwrap()
    }

    #[test]
    fn worked_three_sample_co_association() {
        // Base partitions {1,2},{3} and {1},{2,3}.
        let l1 = labeling(vec![0, 0, 1]);
        let l2 = labeling(vec![0, 1, 1]);
        let result = cspa_consensus(&[l1, l2], 2).unwrap();
        let expect = [[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(result.co_association[i][j], expect[i][j]);
            }
        }
        // Tie between merging (0,1) and (1,2) resolves to (0,1).
        assert_eq!(result.final_labeling.labels, vec![0, 0, 1]);
    }

    #[test]
    fn h_row_sums_equal_labeling_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let n = rng.random_range(3..12);
            let labelings: Vec<Labeling> = (0..rng.random_range(1..5))
                .map(|_| {
                    let k = rng.random_range(1..=n);
                    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
                    // Make every cluster id in 0..k appear at least once.
                    for c in 0..k {
                        labels[c % n] = c;
                    }
                    labeling(labels)
                })
                .collect();
            let h = membership_matrix(&labelings).unwrap();
            for row in &h {
                let sum: f64 = row.iter().sum();
                assert_eq!(sum as usize, labelings.len());
            }
            let s = co_association(&h);
            for i in 0..n {
                assert_eq!(s[i][i] as usize, labelings.len());
                for j in 0..n {
                    assert_eq!(s[i][j], s[j][i]);
                    assert!(s[i][j] >= 0.0 && s[i][j] <= s[i][i]);
                }
            }
        }
    }

    #[test]
    fn unanimity_recovers_common_partition() {
        let base = labeling(vec![0, 1, 0, 2, 1, 2, 0]);
        let copies = vec![base.clone(), base.clone(), base.clone()];
        let result = cspa_consensus(&copies, 3).unwrap();
        assert!(same_partition(
            &result.final_labeling.labels,
            &base.labels
        ));
    }

    #[test]
    fn single_labeling_is_its_own_consensus() {
        let base = labeling(vec![1, 0, 1, 0, 2]);
        let result = cspa_consensus(std::slice::from_ref(&base), 3).unwrap();
        assert!(same_partition(&result.final_labeling.labels, &base.labels));
    }

    #[test]
    fn consensus_invariant_to_label_permutation() {
        let a = labeling(vec![0, 0, 1, 1, 2]);
        let a_permuted = labeling(vec![2, 2, 0, 0, 1]);
        let b = labeling(vec![0, 1, 1, 0, 0]);
        let r1 = cspa_consensus(&[a, b.clone()], 2).unwrap();
        let r2 = cspa_consensus(&[a_permuted, b], 2).unwrap();
        assert_eq!(r1.co_association, r2.co_association);
        assert!(same_partition(
            &r1.final_labeling.labels,
            &r2.final_labeling.labels
        ));
    }

    #[test]
    fn block_structured_similarity_partitions_cleanly() {
        let r = 3.0;
        let s = vec![
            vec![r, r, 0.0],
            vec![r, r, 0.0],
            vec![0.0, 0.0, r],
        ];
        let labeling = partition_similarity_graph(&s, 2).unwrap();
        assert_eq!(labeling.labels, vec![0, 0, 1]);
        let singletons = partition_similarity_graph(&s, 3).unwrap();
        assert_eq!(singletons.labels, vec![0, 1, 2]);
        assert!(partition_similarity_graph(&s, 4).is_err());
    }

    #[test]
    fn mismatched_sample_counts_rejected() {
        let a = labeling(vec![0, 1]);
        let b = labeling(vec![0, 1, 1]);
        assert!(cspa_consensus(&[a, b], 2).is_err());
    }
}
