#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weaver/dataset.hpp"
#include "weaver/preprocess.hpp"

namespace weaver {

// Latent-variable model parameters: class prior pi plus per-verifier
// tpr_k = Pr(S_k=1 | Y=1) and tnr_k = Pr(S_k=0 | Y=0). All probabilities are
// clamped into [eps, 1-eps] so log-space math stays total.
struct WSParams {
    double prior = 0.5;
    std::vector<double> tpr;
    std::vector<double> tnr;
    bool converged = true;
    double final_loss = 0.0;
    bool flipped = false;  // post-hoc symmetry flip was applied
    std::vector<std::string> warnings;

    int m() const { return static_cast<int>(tpr.size()); }
};

// Empirical second-moment matrix O (2m x 2m). Row/col index (k, a) = 2k + a,
// a meaning the event S_k = a. Diagonal blocks hold diag(Pr(S_k=0), Pr(S_k=1));
// off-diagonal blocks the joint frequency tables for (S_k, S_l).
struct MomentMatrices {
    int m = 0;
    std::vector<double> O;  // (2m)^2, row-major

    double at(int r, int c) const { return O[static_cast<std::size_t>(r) * 2 * m + c]; }
};

struct FitConfig {
    double learning_rate = 0.01;
    int max_iters = 2000;
    double tolerance = 1e-9;  // early stop on loss delta
    enum class Init { heuristic, majority_seeded } init = Init::heuristic;
    std::uint64_t seed = 0;
};

MomentMatrices estimate_moments(const VoteTensor& votes);

// Mean correctness over dev responses (all K responses of dev queries), clamped.
double estimate_prior(const LabelSet& labels, int n, int K);

// Moment-matching objective at the given parameters:
//   sum over off-diagonal blocks of (O - mu P mu^T)^2
// + sum over marginals of (diag(O) - mu P 1)^2.
double moment_loss(const MomentMatrices& O, double prior, const std::vector<double>& tpr,
                   const std::vector<double>& tnr);

// Full-batch gradient descent on moment_loss through a logistic
// reparameterization; heuristic init is tpr=tnr=0.7 plus seeded U(-0.05,0.05)
// noise. After convergence the global better-than-random convention is
// enforced: if mean (tpr+tnr)/2 < 0.5, parameters are flipped class-wise.
// Requires m >= 3 (fewer verifiers underdetermine the off-diagonal moments).
WSParams fit_accuracies(const MomentMatrices& O, double prior, const FitConfig& cfg);

// Same, with access to votes so Init::majority_seeded can seed from agreement
// with the per-row majority.
WSParams fit_accuracies(const VoteTensor& votes, double prior, const FitConfig& cfg);

// Empirical frequencies against known labels.
WSParams fit_supervised(const VoteTensor& votes, const LabelSet& labels);

// Pr(Y=1 | vote row), computed in log space.
double posterior(const std::uint8_t* row, const WSParams& params);
double posterior(const std::vector<std::uint8_t>& row, const WSParams& params);

// n*K posteriors; parallel across queries, deterministic output.
std::vector<double> posterior_matrix(const VoteTensor& votes, const WSParams& params);

struct SelectionResult {
    std::vector<int> j_star;  // chosen response per query
};

// argmax posterior per query; ties go to the smallest index.
SelectionResult select(const std::vector<double>& posteriors, int n, int K);

// JSONL records (query_id, response_index, posterior), sorted by key.
void export_pseudolabels(const std::vector<double>& posteriors, const DatasetBundle& bundle,
                         const std::string& path);

}  // namespace weaver
