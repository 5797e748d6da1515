#include "weaver/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "weaver/baselines.hpp"
#include "weaver/rng.hpp"

namespace weaver {

namespace {

double query_pass_prob(int c, int K, int k) {
    // 1 - C(K-c, k)/C(K, k) as a running product of ratios.
    if (c > 0 && K - c < k) return 1.0;
    double prod = 1.0;
    for (int t = 0; t < k; ++t)
        prod *= static_cast<double>(K - c - t) / static_cast<double>(K - t);
    return 1.0 - prod;
}

}  // namespace

double pass_at_k(const LabelSet& labels, int n, int K, int k,
                 const std::vector<std::uint8_t>& include) {
    if (!labels.has_labels()) fail("pass_at_k: labels required");
    if (k < 1 || k > K) fail("pass_at_k: k out of range");
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (!include.empty() && !include[i]) continue;
        int c = 0;
        for (int j = 0; j < K; ++j) c += labels.label(i, j, K);
        sum += query_pass_prob(c, K, k);
        ++count;
    }
    if (count == 0) fail("pass_at_k: no queries to evaluate");
    return sum / static_cast<double>(count);
}

double pass_at_k(const LabelSet& labels, int n, int K, int k) {
    return pass_at_k(labels, n, K, k, {});
}

double success_rate(const SelectionResult& sel, const LabelSet& labels, int n, int K,
                    const std::vector<std::uint8_t>& include) {
    if (!labels.has_labels()) fail("success_rate: labels required");
    if (static_cast<int>(sel.j_star.size()) != n) fail("success_rate: selection shape mismatch");
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (!include.empty() && !include[i]) continue;
        const int j = sel.j_star[i];
        if (j < 0 || j >= K) fail("success_rate: selection index out of range");
        sum += labels.label(i, j, K);
        ++count;
    }
    if (count == 0) fail("success_rate: no queries to evaluate");
    return sum / static_cast<double>(count);
}

double success_rate(const SelectionResult& sel, const LabelSet& labels, int n, int K) {
    return success_rate(sel, labels, n, K, {});
}

double generation_verification_gap(double pass_k, double success) { return pass_k - success; }

DiagnosticsReport per_verifier_diagnostics(const ScoreTensor& scores, const VoteTensor* votes,
                                           const LabelSet& labels) {
    if (!labels.has_labels()) fail("per_verifier_diagnostics: labels required");
    const int n = scores.n, K = scores.K, m = scores.m;
    const std::size_t rows = static_cast<std::size_t>(n) * K;

    DiagnosticsReport rep;
    rep.per_verifier.resize(m);
    std::size_t negatives = 0;
    for (std::size_t r = 0; r < rows; ++r) negatives += labels.labels[r] == 0;

    for (int v = 0; v < m; ++v) {
        auto& d = rep.per_verifier[v];
        d.id = scores.verifiers[v].id;
        double hits = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_v = scores.at(i, 0, v);
            for (int j = 1; j < K; ++j)
                if (scores.at(i, j, v) > best_v) {
                    best_v = scores.at(i, j, v);
                    best = j;
                }
            hits += labels.label(i, best, K);
        }
        d.selection_accuracy = hits / n;
    }

    if (votes != nullptr) {
        for (int c = 0; c < votes->m; ++c) {
            const int orig = votes->kept[c];
            auto& d = rep.per_verifier[orig];
            std::size_t agree = 0, fp = 0;
            for (std::size_t r = 0; r < rows; ++r) {
                const std::uint8_t vote = votes->votes[r * votes->m + c];
                agree += vote == labels.labels[r];
                fp += vote == 1 && labels.labels[r] == 0;
            }
            d.mean_vote_accuracy = static_cast<double>(agree) / static_cast<double>(rows);
            d.fpr = negatives ? static_cast<double>(fp) / static_cast<double>(negatives) : 0.0;
        }
        if (negatives == 0) rep.notes.push_back("no negative labels; FPR reported as 0");
    }

    double lo = 1.0, hi = 0.0;
    for (const auto& d : rep.per_verifier) {
        lo = std::min(lo, d.selection_accuracy);
        hi = std::max(hi, d.selection_accuracy);
    }
    rep.accuracy_range = m > 0 ? hi - lo : 0.0;

    if (m >= 2) {
        std::vector<double> colv(rows);
        std::vector<std::vector<double>> cols(m, colv);
        for (std::size_t r = 0; r < rows; ++r)
            for (int v = 0; v < m; ++v) cols[v][r] = scores.scores[r * m + v];
        double sum = 0.0;
        int pairs = 0;
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b) {
                sum += pearson_corr(cols[a], cols[b]);
                ++pairs;
            }
        rep.mean_pairwise_pearson = sum / pairs;
    }
    return rep;
}

double best_of_k_monte_carlo(const SubsetStrategy& strategy, const LabelSet& labels, int n,
                             int K, int k, int trials, std::uint64_t seed) {
    if (!labels.has_labels()) fail("best_of_k_monte_carlo: labels required");
    if (k < 1 || k > K) fail("best_of_k_monte_carlo: k out of range");
    if (trials < 1) fail("best_of_k_monte_carlo: trials must be >= 1");

    Rng rng(seed);
    double total = 0.0;
    std::vector<std::vector<int>> candidates(n);
    for (int t = 0; t < trials; ++t) {
        for (int i = 0; i < n; ++i) {
            if (k == K) {
                candidates[i].resize(K);
                std::iota(candidates[i].begin(), candidates[i].end(), 0);
            } else {
                candidates[i] = rng.sample_without_replacement(K, k);
                std::sort(candidates[i].begin(), candidates[i].end());
            }
        }
        SelectionResult sel = strategy(candidates);
        if (static_cast<int>(sel.j_star.size()) != n)
            fail("best_of_k_monte_carlo: strategy returned wrong selection size");
        double hits = 0.0;
        for (int i = 0; i < n; ++i) {
            if (std::find(candidates[i].begin(), candidates[i].end(), sel.j_star[i]) ==
                candidates[i].end())
                fail("best_of_k_monte_carlo: strategy picked outside its candidate set");
            hits += labels.label(i, sel.j_star[i], K);
        }
        total += hits / n;
    }
    return total / trials;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double pearson_corr(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) fail("pearson: need two same-length series");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double spearman_corr(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_corr(average_ranks(x), average_ranks(y));
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) fail("kendall: need two same-length series");
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if ((dx > 0) == (dy > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    const double n0 = concordant + discordant + ties_x + ties_y;
    const double denom = std::sqrt((n0 - ties_x)) * std::sqrt((n0 - ties_y));
    if (denom <= 0.0) return 0.0;
    return (concordant - discordant) / denom;
}

DiversityCorrelation answer_diversity_correlation(const std::vector<std::string>& answers,
                                                  const LabelSet& labels, int n, int K) {
    if (answers.size() != static_cast<std::size_t>(n) * K)
        fail("answer_diversity_correlation: answers missing");
    if (!labels.has_labels()) fail("answer_diversity_correlation: labels required");
    if (n < 3) fail("answer_diversity_correlation: need at least 3 queries");

    std::vector<double> unique_counts(n), correct_ratio(n);
    for (int i = 0; i < n; ++i) {
        std::vector<std::string> seen;
        int correct = 0;
        for (int j = 0; j < K; ++j) {
            const std::string a = trim_answer(answers[static_cast<std::size_t>(i) * K + j]);
            if (std::find(seen.begin(), seen.end(), a) == seen.end()) seen.push_back(a);
            correct += labels.label(i, j, K);
        }
        unique_counts[i] = static_cast<double>(seen.size());
        correct_ratio[i] = static_cast<double>(correct) / K;
    }

    auto variance_zero = [](const std::vector<double>& v) {
        for (const double& e : v)
            if (e != v[0]) return false;
        return true;
    };
    DiversityCorrelation out;
    if (variance_zero(unique_counts) || variance_zero(correct_ratio)) {
        out.degenerate = true;
        return out;
    }
    out.pearson = pearson_corr(unique_counts, correct_ratio);
    out.spearman = spearman_corr(unique_counts, correct_ratio);
    out.kendall = kendall_tau_b(unique_counts, correct_ratio);
    return out;
}

double flops_estimate(double gen_model_params, const std::vector<double>& verifier_params,
                      double tokens_per_response, int k) {
    if (gen_model_params < 0 || tokens_per_response < 0 || k < 0) fail("flops_estimate: negative input");
    double per_response = 2.0 * gen_model_params * tokens_per_response;
    for (double p : verifier_params) {
        if (p < 0) fail("flops_estimate: negative input");
        per_response += 2.0 * p * tokens_per_response;
    }
    return per_response * static_cast<double>(k);
}

}  // namespace weaver
