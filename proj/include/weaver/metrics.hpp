#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"
#include "weaver/preprocess.hpp"

namespace weaver {

// Unbiased estimator: mean over queries of 1 - C(K-c, k)/C(K, k), with the
// combinatorial ratio computed as a running product so large K cannot
// overflow.
double pass_at_k(const LabelSet& labels, int n, int K, int k);

// Restricted variant over a query subset (1 = include). Used by dev-exclusion.
double pass_at_k(const LabelSet& labels, int n, int K, int k,
                 const std::vector<std::uint8_t>& include);

double success_rate(const SelectionResult& sel, const LabelSet& labels, int n, int K);
double success_rate(const SelectionResult& sel, const LabelSet& labels, int n, int K,
                    const std::vector<std::uint8_t>& include);

double generation_verification_gap(double pass_k, double success);

struct VerifierDiagnostics {
    std::string id;
    double selection_accuracy = 0.0;  // label rate of this verifier's own argmax picks
    double mean_vote_accuracy = 0.0;  // share of (i,j) with vote == label
    double fpr = 0.0;                 // Pr(vote = 1 | y = 0)
};

struct DiagnosticsReport {
    std::vector<VerifierDiagnostics> per_verifier;
    double accuracy_range = 0.0;        // max - min selection accuracy
    double mean_pairwise_pearson = 0.0; // over flattened score columns
    std::vector<std::string> notes;
};

// Scores drive the selection-accuracy and correlation parts; votes (optional)
// drive vote accuracy and FPR. Vote columns map onto verifiers via kept.
DiagnosticsReport per_verifier_diagnostics(const ScoreTensor& scores, const VoteTensor* votes,
                                           const LabelSet& labels);

// A selection strategy restricted to per-query candidate subsets. candidates[i]
// holds the response indices available for query i; the result's j_star[i]
// must be one of them.
using SubsetStrategy =
    std::function<SelectionResult(const std::vector<std::vector<int>>& candidates)>;

// Per trial: draw k responses per query without replacement, run the strategy
// on the subsets, score the picks; returns the mean success over trials.
double best_of_k_monte_carlo(const SubsetStrategy& strategy, const LabelSet& labels, int n,
                             int K, int k, int trials, std::uint64_t seed);

struct DiversityCorrelation {
    double pearson = 0.0;
    double spearman = 0.0;
    double kendall = 0.0;
    bool degenerate = false;  // zero variance on a side; values forced to 0
};

// Correlations between per-query unique-answer counts and correct ratios.
DiversityCorrelation answer_diversity_correlation(const std::vector<std::string>& answers,
                                                  const LabelSet& labels, int n, int K);

// 2 * params * tokens per forward pass: generation plus every verifier, k times.
double flops_estimate(double gen_model_params, const std::vector<double>& verifier_params,
                      double tokens_per_response, int k);

// Shared rank statistics (average ranks for ties; tau-b tie correction).
double pearson_corr(const std::vector<double>& x, const std::vector<double>& y);
double spearman_corr(const std::vector<double>& x, const std::vector<double>& y);
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace weaver
