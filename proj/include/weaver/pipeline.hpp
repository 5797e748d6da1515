#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "weaver/clustering.hpp"
#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"
#include "weaver/preprocess.hpp"

namespace weaver {

// Everything the fit pipeline needs; serializable so artifacts can embed the
// exact configuration and its hash. One seed drives the dev split and all
// fit initializations.
struct PipelineConfig {
    NormalizationSpec normalization;
    BinarizationSpec binarization;
    FitConfig fit;
    double dev_fraction = 0.1;
    std::uint64_t seed = 0;
    int n_clusters = 1;
    ThresholdMode threshold_mode = ThresholdMode::global;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& doc);
    std::string config_hash() const;
};

struct FitOutput {
    PerClusterResult run;         // the run selections come from
    PerClusterResult global_ref;  // single-cluster reference; == run when n_clusters == 1
    DifficultyPartition part;
    std::vector<std::pair<double, double>> cutpoints;  // per original verifier
    nlohmann::json artifact;
};

// Dev split (reusing an existing mask if present) -> normalize -> per-cluster
// binarize/filter/fit -> posteriors -> selection, plus the JSON fit artifact.
// Requires labels (the class prior comes from the dev slice).
FitOutput run_fit_pipeline(const DatasetBundle& bundle, const PipelineConfig& cfg);

struct ApplyOutput {
    std::vector<double> posteriors;  // n*K
    SelectionResult selection;
};

// Replays a fit artifact against a dataset with the same verifier layout:
// stored cut points, stored thresholds, stored surviving columns, stored
// accuracies. Clustered artifacts route each query through its assigned
// cluster (every query id must appear in the stored assignment).
ApplyOutput apply_fit_artifact(const DatasetBundle& bundle, const nlohmann::json& artifact);

}  // namespace weaver
