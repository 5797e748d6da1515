#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "weaver/common.hpp"

namespace weaver {

using json = nlohmann::json;

enum class VerifierKind {
    continuous_reward,  // real-valued score, needs normalization + threshold
    binary_judge,       // already a 0/1 verdict, passes through binarization
};

const char* to_string(VerifierKind kind);
VerifierKind verifier_kind_from_string(const std::string& s);

struct VerifierMeta {
    std::string id;
    VerifierKind kind = VerifierKind::continuous_reward;
    std::string notes;
};

// Dense scores s_ijk for n queries x K responses x m verifiers.
struct ScoreTensor {
    int n = 0;
    int K = 0;
    int m = 0;
    std::vector<double> scores;  // flat, index (i*K + j)*m + k
    std::vector<VerifierMeta> verifiers;

    double at(int i, int j, int k) const {
        return scores[(static_cast<std::size_t>(i) * K + j) * m + k];
    }
    double& at(int i, int j, int k) {
        return scores[(static_cast<std::size_t>(i) * K + j) * m + k];
    }
};

struct LabelSet {
    std::vector<std::uint8_t> labels;    // n*K correctness bits, empty when unknown
    std::vector<std::uint8_t> dev_mask;  // per query, empty until split_dev
    std::vector<std::string> answers;    // n*K extracted answers, empty when absent

    bool has_labels() const { return !labels.empty(); }
    bool has_answers() const { return !answers.empty(); }
    std::uint8_t label(int i, int j, int K) const {
        return labels[static_cast<std::size_t>(i) * K + j];
    }
};

struct DatasetBundle {
    std::vector<std::string> query_ids;  // ascending, size n
    ScoreTensor scores;
    LabelSet labels;
    std::string source_path;
    std::string dataset_hash;  // canonical content hash, format-independent
    json provenance;           // generator parameters etc., null when unknown

    int n() const { return scores.n; }
    int K() const { return scores.K; }
    int m() const { return scores.m; }
};

enum class DatasetFormat { jsonl, csv };

// Loads and fully validates a dataset. The manifest sidecar declares verifier
// ids and kinds; every record must carry a finite score for each of them.
// Rows are ordered (query_id asc, response_index asc) regardless of file order.
DatasetBundle load_dataset(const std::string& path, const std::string& manifest_path,
                           DatasetFormat format = DatasetFormat::jsonl);

// Canonical JSONL + manifest. load(save(b)) reproduces scores bit-exactly.
void save_bundle(const DatasetBundle& bundle, const std::string& data_path,
                 const std::string& manifest_path);

// Hash of the canonicalized content (dimensions, verifier metadata, scores as
// IEEE bit patterns, labels, answers). Identical data in JSONL and CSV form
// hashes identically.
std::string canonical_hash(const DatasetBundle& bundle);

struct VerifierColumnStats {
    std::string id;
    double min = 0, max = 0, mean = 0, variance = 0;
    bool degenerate = false;  // constant across all (i, j)
};

struct ValidationReport {
    int n = 0, K = 0, m = 0;
    bool has_labels = false;
    bool has_answers = false;
    std::vector<VerifierColumnStats> per_verifier;
    std::vector<std::string> degenerate_ids;

    json to_json() const;
};

// Report-only; never mutates and never throws on content it can describe.
ValidationReport validate(const DatasetBundle& bundle);

// Marks ceil(fraction * n) queries as dev via seeded sampling without
// replacement. Pure function of (n, fraction, seed).
std::vector<std::uint8_t> make_dev_mask(int n, double fraction, std::uint64_t seed);

// Same, stored into bundle.labels.dev_mask; requires labels to exist since the
// dev slice is what downstream prior/threshold estimation reads labels from.
void split_dev(DatasetBundle& bundle, double fraction, std::uint64_t seed);

// New bundle holding the given queries (original relative order preserved).
// Labels, answers as well as the dev mask are sliced alongside the scores.
DatasetBundle subset_by_queries(const DatasetBundle& bundle, const std::vector<int>& query_idx);

}  // namespace weaver
