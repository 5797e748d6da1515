#include "weaver/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "weaver/pipeline.hpp"
#include "weaver/preprocess.hpp"

namespace weaver {

std::vector<double> compute_difficulty(const LabelSet& labels, int n, int K) {
    if (!labels.has_labels()) fail("difficulty needs labels");
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        int c = 0;
        for (int j = 0; j < K; ++j) c += labels.label(i, j, K);
        out[i] = static_cast<double>(c) / static_cast<double>(K);
    }
    return out;
}

DifficultyPartition partition(const std::vector<double>& difficulties, int n_clusters) {
    const int n = static_cast<int>(difficulties.size());
    if (n_clusters < 1) fail("n_clusters must be >= 1");
    if (n_clusters > n) fail("n_clusters exceeds query count");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return difficulties[a] < difficulties[b];  // ties keep query order
    });

    DifficultyPartition part;
    part.n_clusters = n_clusters;
    part.assignment.assign(n, 0);
    const int base = n / n_clusters;
    const int rem = n % n_clusters;
    int pos = 0;
    for (int c = 0; c < n_clusters; ++c) {
        const int size = base + (c < rem ? 1 : 0);
        for (int s = 0; s < size; ++s) part.assignment[order[pos + s]] = c;
        pos += size;
        if (c + 1 < n_clusters) part.boundaries.push_back(difficulties[order[pos - 1]]);
    }
    return part;
}

const char* to_string(ThresholdMode m) {
    switch (m) {
        case ThresholdMode::global: return "global";
        case ThresholdMode::per_cluster: return "per_cluster";
        default: return "per_model";
    }
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
    if (s == "global") return ThresholdMode::global;
    if (s == "per_cluster") return ThresholdMode::per_cluster;
    if (s == "per_model") return ThresholdMode::per_model;
    fail("unknown threshold mode: " + s);
}

namespace {

struct Slice {
    ScoreTensor scores;
    LabelSet labels;
};

Slice take_queries(const ScoreTensor& t, const LabelSet& labels,
                   const std::vector<int>& queries) {
    Slice s;
    s.scores.n = static_cast<int>(queries.size());
    s.scores.K = t.K;
    s.scores.m = t.m;
    s.scores.verifiers = t.verifiers;
    s.scores.scores.reserve(static_cast<std::size_t>(s.scores.n) * t.K * t.m);
    const std::size_t row = static_cast<std::size_t>(t.K) * t.m;
    for (int q : queries) {
        const double* src = t.scores.data() + static_cast<std::size_t>(q) * row;
        s.scores.scores.insert(s.scores.scores.end(), src, src + row);
    }
    for (int q : queries) {
        for (int j = 0; j < t.K; ++j)
            s.labels.labels.push_back(labels.labels[static_cast<std::size_t>(q) * t.K + j]);
        s.labels.dev_mask.push_back(labels.dev_mask.empty() ? 0 : labels.dev_mask[q]);
        if (labels.has_answers())
            for (int j = 0; j < t.K; ++j)
                s.labels.answers.push_back(labels.answers[static_cast<std::size_t>(q) * t.K + j]);
    }
    return s;
}

}  // namespace

PerClusterResult fit_per_cluster(const DatasetBundle& bundle, const DifficultyPartition& part,
                                 ThresholdMode mode, const PipelineConfig& cfg) {
    if (!bundle.labels.has_labels()) fail("per-cluster fit needs labels");
    if (bundle.labels.dev_mask.empty()) fail("per-cluster fit needs a dev split");
    const int n = bundle.n(), K = bundle.K();
    if (static_cast<int>(part.assignment.size()) != n) fail("partition does not match dataset");

    NormalizeResult normed = normalize(bundle.scores, cfg.normalization);

    PerClusterResult out;
    out.posteriors.assign(static_cast<std::size_t>(n) * K, 0.0);

    for (int c = 0; c < part.n_clusters; ++c) {
        std::vector<int> queries;
        for (int i = 0; i < n; ++i)
            if (part.assignment[i] == c) queries.push_back(i);
        if (queries.empty()) fail("cluster " + std::to_string(c) + " is empty");

        Slice slice = take_queries(normed.tensor, bundle.labels, queries);
        bool any_dev = false;
        for (auto b : slice.labels.dev_mask) any_dev |= (b != 0);
        if (!any_dev) fail("cluster " + std::to_string(c) + " has no dev queries");

        ClusterFit fit;
        fit.cluster_id = c;
        fit.queries = queries;
        fit.prior = estimate_prior(slice.labels, slice.scores.n, K);

        BinarizeResult bin;
        switch (mode) {
            case ThresholdMode::global:
                bin = binarize(slice.scores, cfg.binarization, &slice.labels, fit.prior);
                break;
            case ThresholdMode::per_cluster: {
                // One shared threshold for every continuous verifier, scored
                // by mean dev vote accuracy: one evaluation per grid value.
                std::vector<int> cont;
                for (int k = 0; k < slice.scores.m; ++k)
                    if (slice.scores.verifiers[k].kind == VerifierKind::continuous_reward)
                        cont.push_back(k);
                double best_t = 0.5;
                if (!cont.empty()) {
                    double best_acc = -1.0;
                    for (double t : threshold_grid()) {
                        double acc = 0.0;
                        for (int k : cont)
                            acc += dev_threshold_accuracy(slice.scores, k, t, slice.labels,
                                                          cfg.binarization.balanced_accuracy);
                        acc /= static_cast<double>(cont.size());
                        ++fit.dev_evaluations;
                        if (acc > best_acc) {  // ties keep the smaller threshold
                            best_acc = acc;
                            best_t = t;
                        }
                    }
                }
                BinarizationSpec shared;
                shared.strategy = BinarizationStrategy::fixed_threshold;
                shared.threshold = best_t;
                bin = binarize(slice.scores, shared, &slice.labels, fit.prior);
                break;
            }
            case ThresholdMode::per_model: {
                BinarizationSpec per_model;
                per_model.strategy = BinarizationStrategy::dev_adaptive;
                per_model.balanced_accuracy = cfg.binarization.balanced_accuracy;
                bin = binarize(slice.scores, per_model, &slice.labels, fit.prior);
                fit.dev_evaluations += bin.dev_evaluations;
                break;
            }
        }
        if (mode == ThresholdMode::global) fit.dev_evaluations = bin.dev_evaluations;
        fit.thresholds = bin.thresholds;

        VoteTensor filtered = filter_verifiers(bin.votes, fit.prior, normed.degenerate);
        fit.kept = filtered.kept;
        fit.dropped = filtered.dropped;

        FitConfig fc = cfg.fit;
        fc.seed = cfg.fit.seed + static_cast<std::uint64_t>(c);
        fit.params = fit_accuracies(filtered, fit.prior, fc);

        std::vector<double> post = posterior_matrix(filtered, fit.params);
        for (std::size_t qi = 0; qi < queries.size(); ++qi)
            for (int j = 0; j < K; ++j)
                out.posteriors[static_cast<std::size_t>(queries[qi]) * K + j] =
                    post[qi * K + j];

        out.clusters.push_back(std::move(fit));
    }

    out.selection = select(out.posteriors, n, K);
    return out;
}

}  // namespace weaver
