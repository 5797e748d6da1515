#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "weaver/dataset.hpp"

namespace weaver {

struct NormalizationSpec {
    double lo_percentile = 5.0;
    double hi_percentile = 95.0;
    bool clamp = true;  // kept for config round-trips; clamping is always applied
};

// Percentile with linear interpolation between order statistics
// (h = (N-1)*p/100, interpolate between floor(h) and floor(h)+1).
double percentile(std::vector<double> values, double p);

struct NormalizeResult {
    ScoreTensor tensor;
    // Per original verifier: the (p_lo, p_hi) cut points actually applied.
    // Binary judges and degenerate verifiers carry (0, 1) and are untouched.
    std::vector<std::pair<double, double>> cutpoints;
    std::vector<int> degenerate;  // verifier indices with p_hi == p_lo
};

// Maps every continuous verifier into [0,1] via clamp((s-p_lo)/(p_hi-p_lo)).
// Degenerate verifiers (zero percentile range) are flagged and left untouched;
// filtering drops them later.
NormalizeResult normalize(const ScoreTensor& tensor, const NormalizationSpec& spec);

// Applies stored cut points to fresh data (same verifier layout). Used when a
// fit artifact is replayed against a dataset at selection time.
ScoreTensor apply_cutpoints(const ScoreTensor& tensor,
                            const std::vector<std::pair<double, double>>& cutpoints);

enum class BinarizationStrategy { fixed_threshold, dev_adaptive, class_balance, quantile };

const char* to_string(BinarizationStrategy s);
BinarizationStrategy binarization_strategy_from_string(const std::string& s);

struct BinarizationSpec {
    BinarizationStrategy strategy = BinarizationStrategy::fixed_threshold;
    double threshold = 0.5;          // fixed_threshold
    double quantile_q = 0.85;        // quantile strategy
    bool balanced_accuracy = false;  // dev_adaptive objective variant
};

// Threshold grid searched by dev_adaptive and the per-cluster modes:
// 0.05, 0.10, ..., 0.95.
std::vector<double> threshold_grid();

// Accuracy of thresholded votes for one verifier against labels over the dev
// responses. Balanced variant averages the per-class rates and requires both
// classes in dev.
double dev_threshold_accuracy(const ScoreTensor& t, int k, double thr, const LabelSet& labels,
                              bool balanced);

// Binarized votes over a subset of verifiers. `kept` maps the column index
// back to the original verifier index; `dropped` records why columns left.
struct VoteTensor {
    int n = 0;
    int K = 0;
    int m = 0;                    // kept verifier count
    std::vector<std::uint8_t> votes;  // (i*K + j)*m + k
    std::vector<int> kept;
    std::vector<std::string> ids;  // verifier ids, aligned with kept
    std::vector<std::pair<std::string, std::string>> dropped;  // (verifier id, reason)

    std::uint8_t at(int i, int j, int k) const {
        return votes[(static_cast<std::size_t>(i) * K + j) * m + k];
    }
};

struct BinarizeResult {
    VoteTensor votes;                       // all verifiers, kept = identity
    std::vector<double> thresholds;         // per verifier; NaN where not applicable
    int dev_evaluations = 0;                // grid-accuracy evaluations performed
};

// Votes from normalized scores. fixed/dev_adaptive/class_balance vote 1 on
// score >= threshold; the quantile strategy votes 1 on score > cut, per its
// "top share of scores" definition. Binary judges pass through and must hold
// exact 0/1 scores. dev_adaptive needs labels plus a dev mask; class_balance
// needs a prior estimate.
BinarizeResult binarize(const ScoreTensor& normalized, const BinarizationSpec& spec,
                        const LabelSet* labels = nullptr,
                        std::optional<double> prior = std::nullopt);

// Same thresholds applied to fresh normalized data (artifact replay).
VoteTensor apply_thresholds(const ScoreTensor& normalized, const std::vector<double>& thresholds);

// Marginal-rule filtering. With rho_k the positive-vote rate of verifier k:
//   0.2 <= prior <= 0.8  -> drop rho outside [0.2, 0.8] (bounds inclusive)
//   prior < 0.2          -> drop rho > 0.8
//   prior > 0.8          -> drop rho < 0.2
// Constant-output verifiers (vote-level, plus any flagged degenerate upstream)
// are always dropped first. Throws when nothing survives.
VoteTensor filter_verifiers(const VoteTensor& votes, double prior,
                            const std::vector<int>& degenerate = {});

// Inverse of the ridge-regularized sample covariance of the given columns
// (lambda = 1e-6 * trace/m). Diagnostics only. `rows` is nK x m, row-major.
std::vector<double> precision_matrix(const std::vector<double>& rows, int n_rows, int m);

}  // namespace weaver
