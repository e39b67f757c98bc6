//! Base clusterers, CSPA consensus over the co-association matrix,
//! silhouette scoring, and few-shot query assignment.

mod affinity;
mod consensus;
mod gmm;
mod kmeans;
mod linkage;
mod silhouette;

pub use affinity::affinity_propagation;
pub use consensus::{
    cspa_consensus, membership_matrix, partition_similarity_graph, same_partition,
    ConsensusResult,
};
pub use gmm::{gmm_em, gmm_fit, GaussianMixture};
pub use kmeans::kmeans;
pub use linkage::{distance_matrix, linkage_cut};
pub use silhouette::{silhouette, silhouette_from_distances};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{assemble_matrix, extract_features, FeatureConfig, FeatureVector};
use crate::seed;
use crate::series::{slice_window, Series};

/// One clustering of a sample set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    /// Per-sample cluster index in `[0, k)`.
    pub labels: Vec<usize>,
    /// Number of clusters; every cluster is non-empty.
    pub k: usize,
    pub algorithm: String,
    pub seed: u64,
    /// False when the algorithm hit its iteration cap without stabilizing.
    pub converged: bool,
}

impl Labeling {
    /// Normalize raw labels: clusters are renumbered by their smallest
    /// member index, which also validates non-emptiness.
    pub fn from_labels(
        raw: Vec<usize>,
        algorithm: &str,
        seed: u64,
        converged: bool,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::invalid("labeling covers zero samples"));
        }
        let mut remap: Vec<Option<usize>> = vec![None; raw.iter().max().unwrap() + 1];
        let mut next = 0usize;
        let mut labels = Vec::with_capacity(raw.len());
        for &l in &raw {
            let id = match remap[l] {
                Some(id) => id,
                None => {
                    remap[l] = Some(next);
                    next += 1;
                    next - 1
                }
            };
            labels.push(id);
        }
        Ok(Labeling {
            labels,
            k: next,
            algorithm: algorithm.to_string(),
            seed,
            converged,
        })
    }
}

/// Average-linkage hierarchical clustering on Euclidean distances, cut at
/// `k` clusters.
pub fn agglomerative(x: &[Vec<f64>], k: usize) -> Result<Labeling> {
    if x.is_empty() {
        return Err(Error::invalid("cannot cluster zero samples"));
    }
    let labels = linkage_cut(&distance_matrix(x), k)?;
    Labeling::from_labels(labels, "agglomerative", 0, true)
}

/// Base clusterers available to the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseAlgorithm {
    KMeans,
    GmmEm,
    Agglomerative,
    AffinityPropagation,
}

impl BaseAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            BaseAlgorithm::KMeans => "kmeans",
            BaseAlgorithm::GmmEm => "gmm_em",
            BaseAlgorithm::Agglomerative => "agglomerative",
            BaseAlgorithm::AffinityPropagation => "affinity_propagation",
        }
    }
}

/// Ensemble-clustering configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub features: FeatureConfig,
    /// Ensemble composition; each algorithm contributes `restarts` base
    /// labelings (affinity propagation is deterministic and contributes one).
    pub algorithms: Vec<BaseAlgorithm>,
    pub restarts: usize,
    /// Candidate consensus sizes swept by silhouette.
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            features: FeatureConfig::default(),
            algorithms: vec![
                BaseAlgorithm::KMeans,
                BaseAlgorithm::GmmEm,
                BaseAlgorithm::Agglomerative,
                BaseAlgorithm::AffinityPropagation,
            ],
            restarts: 1,
            k_min: 2,
            k_max: 8,
            seed: 0,
        }
    }
}

/// Everything produced by clustering a population around a query window.
#[derive(Debug, Clone)]
pub struct PopulationClustering {
    pub consensus: ConsensusResult,
    /// Cluster assigned to the query (the last sample).
    pub query_cluster: usize,
    /// Feature matrix rows, one per sample (historical order, then query).
    pub matrix: Vec<Vec<f64>>,
    pub features: Vec<FeatureVector>,
    /// Consensus size selected by the silhouette sweep.
    pub chosen_k: usize,
}

/// Base labelings for one candidate `k`: seeded clusterers run per restart
/// with a shared per-restart seed; affinity propagation contributes its
/// emergent clustering once.
fn base_labelings(
    x: &[Vec<f64>],
    k: usize,
    config: &ClusterConfig,
    ap: &Labeling,
) -> Result<Vec<Labeling>> {
    let mut labelings = Vec::new();
    for restart in 0..config.restarts.max(1) {
        let restart_seed = seed::derive(config.seed, "cluster-restart", restart as u64);
        for algo in &config.algorithms {
            let labeling = match algo {
                BaseAlgorithm::KMeans => kmeans(x, k, restart_seed)?,
                BaseAlgorithm::GmmEm => gmm_em(x, k, restart_seed)?,
                BaseAlgorithm::Agglomerative => {
                    if restart == 0 {
                        agglomerative(x, k)?
                    } else {
                        continue; // deterministic; one copy is enough
                    }
                }
                BaseAlgorithm::AffinityPropagation => {
                    if restart == 0 {
                        ap.clone()
                    } else {
                        continue;
                    }
                }
            };
            labelings.push(labeling);
        }
    }
    if labelings.is_empty() {
        return Err(Error::invalid("ensemble has no base algorithms"));
    }
    Ok(labelings)
}

/// Consensus-cluster a feature matrix, selecting the final cluster count by
/// maximizing the feature-space silhouette over the configured sweep.
pub fn consensus_over_matrix(
    x: &[Vec<f64>],
    config: &ClusterConfig,
) -> Result<(ConsensusResult, usize)> {
    let n = x.len();
    // A valid silhouette needs 2 <= k <= n-1; with fewer than 3 samples the
    // sweep is empty and everything lands in one cluster.
    let k_lo = config.k_min.max(2);
    let k_hi = config.k_max.min(n.saturating_sub(1));
    if n == 0 {
        return Err(Error::invalid("cannot cluster zero samples"));
    }
    if k_lo > k_hi {
        let labeling = Labeling::from_labels(vec![0; n], "cspa", config.seed, true)?;
        let consensus = ConsensusResult {
            membership: vec![vec![1.0]; n],
            co_association: vec![vec![1.0; n]; n],
            base: vec![labeling.clone()],
            final_labeling: labeling,
            s_score: 0.0,
        };
        return Ok((consensus, 1));
    }
    let ap = affinity_propagation(x)?;
    let mut best: Option<(f64, usize, ConsensusResult)> = None;
    for k in k_lo..=k_hi {
        let labelings = base_labelings(x, k, config, &ap)?;
        let mut consensus = cspa_consensus(&labelings, k)?;
        let score = if consensus.final_labeling.k >= 2 {
            silhouette(x, &consensus.final_labeling.labels)?
        } else {
            // Consensus collapsed below 2 clusters; score it poorly.
            -1.0
        };
        consensus.s_score = score;
        let replace = match &best {
            None => true,
            Some((best_score, _, _)) => score > *best_score,
        };
        if replace {
            best = Some((score, k, consensus));
        }
    }
    let (_, chosen_k, consensus) = best.ok_or_else(|| Error::Internal("empty sweep".into()))?;
    Ok((consensus, chosen_k))
}

/// Cluster a query's few-shot window together with the matching windows of
/// the historical population and report which consensus cluster the query
/// landed in.
///
/// Every historical series must cover the query's index window; each is
/// sliced to that window, features are extracted for all samples (query
/// last), and the 4-algorithm ensemble plus CSPA consensus runs over the
/// silhouette-swept candidate cluster counts.
pub fn cluster_population(
    historical: &[Series],
    query: &Series,
    config: &ClusterConfig,
) -> Result<PopulationClustering> {
    if historical.is_empty() {
        return Err(Error::invalid("need at least one historical series"));
    }
    let window_len = query.len();
    let mut windows: Vec<Series> = Vec::with_capacity(historical.len() + 1);
    for h in historical {
        let offset = query.start_index - h.start_index;
        if offset < 0 {
            return Err(Error::invalid(format!(
                "historical series {} starts after the query window",
                h.user_id
            )));
        }
        windows.push(slice_window(h, offset as usize, window_len)?);
    }
    windows.push(query.clone());

    let mut features: Vec<FeatureVector> = Vec::with_capacity(windows.len());
    for w in &windows {
        features.push(extract_features(w, &config.features)?);
    }
    let (matrix, _) = assemble_matrix(&mut features, &config.features)?;
    let (consensus, chosen_k) = consensus_over_matrix(&matrix, config)?;
    let query_cluster = *consensus.final_labeling.labels.last().unwrap();
    Ok(PopulationClustering {
        consensus,
        query_cluster,
        matrix,
        features,
        chosen_k,
    })
}

/// Write consensus labels as CSV (`sample_id,final_label`).
pub fn write_labels_csv<W: std::io::Write>(
    writer: W,
    ids: &[String],
    labeling: &Labeling,
) -> Result<()> {
    if ids.len() != labeling.labels.len() {
        return Err(Error::invalid("ids and labels differ in length"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_id", "final_label"])
        .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    for (id, label) in ids.iter().zip(&labeling.labels) {
        w.write_record([id.as_str(), &label.to_string()])
            .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON sidecar accompanying the consensus label CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusSidecar {
    pub s_score: f64,
    pub chosen_k: usize,
    pub query_cluster: Option<usize>,
    /// Per-algorithm base labels keyed by algorithm name.
    pub base_labels: Vec<(String, Vec<usize>)>,
}

impl ConsensusSidecar {
    pub fn from_result(result: &PopulationClustering) -> Self {
        ConsensusSidecar {
            s_score: result.consensus.s_score,
            chosen_k: result.chosen_k,
            query_cluster: Some(result.query_cluster),
            base_labels: result
                .consensus
                .base
                .iter()
                .map(|l| (l.algorithm.clone(), l.labels.clone()))
                .collect(),
        }
    }
}
