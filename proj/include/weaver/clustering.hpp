#pragma once

#include <string>
#include <utility>
#include <vector>

#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"

namespace weaver {

// Fraction of correct responses per query, c_i / K. The bounded fraction is
// used instead of the odds c/(K-c), which blows up when every response is
// correct.
std::vector<double> compute_difficulty(const LabelSet& labels, int n, int K);

struct DifficultyPartition {
    int n_clusters = 1;
    std::vector<int> assignment;     // cluster id per query index
    std::vector<double> boundaries;  // highest difficulty inside each cluster but the last
};

// Sorts queries by (difficulty, query order) and cuts into contiguous groups
// whose sizes differ by at most one; any remainder goes to the earliest
// clusters. Cluster 0 holds the lowest difficulties.
DifficultyPartition partition(const std::vector<double>& difficulties, int n_clusters);

enum class ThresholdMode { global, per_cluster, per_model };

const char* to_string(ThresholdMode m);
ThresholdMode threshold_mode_from_string(const std::string& s);

struct ClusterFit {
    int cluster_id = 0;
    std::vector<int> queries;  // original query indices, ascending
    double prior = 0.5;
    WSParams params;
    std::vector<double> thresholds;  // per original verifier; NaN where n/a
    std::vector<int> kept;           // surviving original verifier indices
    std::vector<std::pair<std::string, std::string>> dropped;
    int dev_evaluations = 0;  // threshold-grid accuracy evaluations
};

struct PerClusterResult {
    std::vector<ClusterFit> clusters;
    std::vector<double> posteriors;  // n*K, bundle order
    SelectionResult selection;
};

struct PipelineConfig;

// Shared fit path for both the global pipeline (one cluster spanning all
// queries) and difficulty clustering. Per cluster: binarize with the mode's
// threshold rule (global = configured spec; per_cluster = one shared grid
// threshold maximizing mean dev vote accuracy; per_model = per-verifier grid
// thresholds), filter, estimate the cluster prior from dev, fit accuracies
// with seed = fit seed + cluster id, and fill that cluster's posteriors.
// Normalization cut points come from the full bundle. Every cluster must
// contain at least one dev query.
PerClusterResult fit_per_cluster(const DatasetBundle& bundle, const DifficultyPartition& part,
                                 ThresholdMode mode, const PipelineConfig& cfg);

}  // namespace weaver
