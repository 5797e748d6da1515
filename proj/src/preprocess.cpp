#include "weaver/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace weaver {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) fail("percentile of empty sample");
    if (p < 0.0 || p > 100.0) fail("percentile out of [0, 100]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

NormalizeResult normalize(const ScoreTensor& tensor, const NormalizationSpec& spec) {
    if (!(spec.lo_percentile >= 0.0 && spec.lo_percentile < spec.hi_percentile &&
          spec.hi_percentile <= 100.0))
        fail("normalization percentiles must satisfy 0 <= lo < hi <= 100");
    NormalizeResult out;
    out.tensor = tensor;
    out.cutpoints.assign(tensor.m, {0.0, 1.0});
    const std::size_t rows = static_cast<std::size_t>(tensor.n) * tensor.K;
    std::vector<double> column(rows);
    for (int k = 0; k < tensor.m; ++k) {
        if (tensor.verifiers[k].kind == VerifierKind::binary_judge) continue;
        for (std::size_t r = 0; r < rows; ++r) column[r] = tensor.scores[r * tensor.m + k];
        const double p_lo = percentile(column, spec.lo_percentile);
        const double p_hi = percentile(column, spec.hi_percentile);
        if (p_hi == p_lo) {
            out.degenerate.push_back(k);
            continue;
        }
        out.cutpoints[k] = {p_lo, p_hi};
        const double inv = 1.0 / (p_hi - p_lo);
        for (std::size_t r = 0; r < rows; ++r) {
            double v = (column[r] - p_lo) * inv;
            out.tensor.scores[r * tensor.m + k] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

ScoreTensor apply_cutpoints(const ScoreTensor& tensor,
                            const std::vector<std::pair<double, double>>& cutpoints) {
    if (static_cast<int>(cutpoints.size()) != tensor.m)
        fail("cutpoint count does not match verifier count");
    ScoreTensor out = tensor;
    const std::size_t rows = static_cast<std::size_t>(tensor.n) * tensor.K;
    for (int k = 0; k < tensor.m; ++k) {
        if (tensor.verifiers[k].kind == VerifierKind::binary_judge) continue;
        auto [lo, hi] = cutpoints[k];
        if (hi == lo) continue;  // degenerate at fit time; column gets dropped anyway
        if (lo == 0.0 && hi == 1.0) continue;
        const double inv = 1.0 / (hi - lo);
        for (std::size_t r = 0; r < rows; ++r)
            out.scores[r * tensor.m + k] =
                std::clamp((tensor.scores[r * tensor.m + k] - lo) * inv, 0.0, 1.0);
    }
    return out;
}

const char* to_string(BinarizationStrategy s) {
    switch (s) {
        case BinarizationStrategy::fixed_threshold: return "fixed_threshold";
        case BinarizationStrategy::dev_adaptive: return "dev_adaptive";
        case BinarizationStrategy::class_balance: return "class_balance";
        case BinarizationStrategy::quantile: return "quantile";
    }
    return "fixed_threshold";
}

BinarizationStrategy binarization_strategy_from_string(const std::string& s) {
    if (s == "fixed_threshold") return BinarizationStrategy::fixed_threshold;
    if (s == "dev_adaptive") return BinarizationStrategy::dev_adaptive;
    if (s == "class_balance") return BinarizationStrategy::class_balance;
    if (s == "quantile") return BinarizationStrategy::quantile;
    fail("unknown binarization strategy: " + s);
}

std::vector<double> threshold_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(static_cast<double>(i) / 20.0);
    return grid;
}

// Accuracy of thresholded votes against labels over the dev responses.
// One call = one "dev evaluation" in the audit counters.
double dev_threshold_accuracy(const ScoreTensor& t, int k, double thr, const LabelSet& labels,
                              bool balanced) {
    const int K = t.K;
    long hit = 0, total = 0;
    long tp = 0, np = 0, tn = 0, nn = 0;
    for (int i = 0; i < t.n; ++i) {
        if (!labels.dev_mask[i]) continue;
        for (int j = 0; j < K; ++j) {
            const int vote = t.at(i, j, k) >= thr ? 1 : 0;
            const int y = labels.label(i, j, K);
            if (balanced) {
                if (y == 1) {
                    ++np;
                    tp += vote;
                } else {
                    ++nn;
                    tn += 1 - vote;
                }
            } else {
                hit += (vote == y);
                ++total;
            }
        }
    }
    if (balanced) {
        if (np == 0 || nn == 0) fail("balanced dev accuracy needs both classes in dev");
        return 0.5 * (static_cast<double>(tp) / np + static_cast<double>(tn) / nn);
    }
    if (total == 0) fail("empty dev");
    return static_cast<double>(hit) / static_cast<double>(total);
}

BinarizeResult binarize(const ScoreTensor& normalized, const BinarizationSpec& spec,
                        const LabelSet* labels, std::optional<double> prior) {
    BinarizeResult out;
    out.thresholds.assign(normalized.m, std::numeric_limits<double>::quiet_NaN());
    const std::size_t rows = static_cast<std::size_t>(normalized.n) * normalized.K;

    if (spec.strategy == BinarizationStrategy::dev_adaptive) {
        if (labels == nullptr || !labels->has_labels() || labels->dev_mask.empty())
            fail("dev_adaptive binarization requires a labeled dev slice");
        bool any_dev = false;
        for (auto b : labels->dev_mask) any_dev |= (b != 0);
        if (!any_dev) fail("empty dev");
    }
    if (spec.strategy == BinarizationStrategy::class_balance) {
        if (!prior.has_value() || !(*prior > 0.0 && *prior < 1.0))
            fail("class_balance binarization requires prior in (0, 1)");
    }

    std::vector<double> column(rows);
    for (int k = 0; k < normalized.m; ++k) {
        if (normalized.verifiers[k].kind == VerifierKind::binary_judge) continue;
        switch (spec.strategy) {
            case BinarizationStrategy::fixed_threshold:
                out.thresholds[k] = spec.threshold;
                break;
            case BinarizationStrategy::dev_adaptive: {
                double best_acc = -1.0, best_t = 0.0;
                for (double t : threshold_grid()) {
                    double acc = dev_threshold_accuracy(normalized, k, t, *labels,
                                                        spec.balanced_accuracy);
                    ++out.dev_evaluations;
                    if (acc > best_acc) {  // ties keep the smaller threshold
                        best_acc = acc;
                        best_t = t;
                    }
                }
                out.thresholds[k] = best_t;
                break;
            }
            case BinarizationStrategy::class_balance: {
                for (std::size_t r = 0; r < rows; ++r)
                    column[r] = normalized.scores[r * normalized.m + k];
                out.thresholds[k] = percentile(column, 100.0 * (1.0 - *prior));
                break;
            }
            case BinarizationStrategy::quantile: {
                if (!(spec.quantile_q >= 0.0 && spec.quantile_q <= 1.0))
                    fail("quantile q must be in [0, 1]");
                for (std::size_t r = 0; r < rows; ++r)
                    column[r] = normalized.scores[r * normalized.m + k];
                out.thresholds[k] = percentile(column, 100.0 * spec.quantile_q);
                break;
            }
        }
    }
    const bool strict = spec.strategy == BinarizationStrategy::quantile;

    VoteTensor& vt = out.votes;
    vt.n = normalized.n;
    vt.K = normalized.K;
    vt.m = normalized.m;
    vt.kept.resize(normalized.m);
    for (int k = 0; k < normalized.m; ++k) vt.kept[k] = k;
    for (const auto& v : normalized.verifiers) vt.ids.push_back(v.id);
    vt.votes.resize(rows * normalized.m);
    for (int k = 0; k < normalized.m; ++k) {
        if (normalized.verifiers[k].kind == VerifierKind::binary_judge) {
            for (std::size_t r = 0; r < rows; ++r) {
                double s = normalized.scores[r * normalized.m + k];
                if (s != 0.0 && s != 1.0)
                    fail("binary judge " + normalized.verifiers[k].id +
                         " emitted a non-binary score");
                vt.votes[r * normalized.m + k] = s == 1.0 ? 1 : 0;
            }
        } else {
            const double t = out.thresholds[k];
            for (std::size_t r = 0; r < rows; ++r) {
                double s = normalized.scores[r * normalized.m + k];
                vt.votes[r * normalized.m + k] = (strict ? s > t : s >= t) ? 1 : 0;
            }
        }
    }
    return out;
}

VoteTensor apply_thresholds(const ScoreTensor& normalized, const std::vector<double>& thresholds) {
    if (static_cast<int>(thresholds.size()) != normalized.m)
        fail("threshold count does not match verifier count");
    VoteTensor vt;
    vt.n = normalized.n;
    vt.K = normalized.K;
    vt.m = normalized.m;
    vt.kept.resize(normalized.m);
    for (int k = 0; k < normalized.m; ++k) vt.kept[k] = k;
    for (const auto& v : normalized.verifiers) vt.ids.push_back(v.id);
    const std::size_t rows = static_cast<std::size_t>(normalized.n) * normalized.K;
    vt.votes.resize(rows * normalized.m);
    for (int k = 0; k < normalized.m; ++k) {
        if (normalized.verifiers[k].kind == VerifierKind::binary_judge) {
            for (std::size_t r = 0; r < rows; ++r) {
                double s = normalized.scores[r * normalized.m + k];
                if (s != 0.0 && s != 1.0)
                    fail("binary judge " + normalized.verifiers[k].id +
                         " emitted a non-binary score");
                vt.votes[r * normalized.m + k] = s == 1.0 ? 1 : 0;
            }
        } else {
            double t = thresholds[k];
            if (std::isnan(t)) t = 0.5;  // dropped-at-fit column; values are never used
            for (std::size_t r = 0; r < rows; ++r)
                vt.votes[r * normalized.m + k] =
                    normalized.scores[r * normalized.m + k] >= t ? 1 : 0;
        }
    }
    return vt;
}

VoteTensor filter_verifiers(const VoteTensor& votes, double prior,
                            const std::vector<int>& degenerate) {
    if (!(prior > 0.0 && prior < 1.0)) fail("filter_verifiers: prior must be in (0, 1)");
    const std::size_t rows = static_cast<std::size_t>(votes.n) * votes.K;
    if (rows == 0) fail("filter_verifiers: empty vote tensor");

    VoteTensor out;
    out.n = votes.n;
    out.K = votes.K;
    out.dropped = votes.dropped;

    std::vector<int> survivors;
    for (int k = 0; k < votes.m; ++k) {
        const int orig = votes.kept[k];
        const std::string& id =
            k < static_cast<int>(votes.ids.size()) ? votes.ids[k] : std::to_string(orig);
        double rho = 0.0;
        for (std::size_t r = 0; r < rows; ++r) rho += votes.votes[r * votes.m + k];
        rho /= static_cast<double>(rows);

        const bool flagged_degenerate =
            std::find(degenerate.begin(), degenerate.end(), orig) != degenerate.end();
        if (flagged_degenerate || rho == 0.0 || rho == 1.0) {
            out.dropped.emplace_back(id, "constant output");
            continue;
        }
        bool drop;
        if (prior >= 0.2 && prior <= 0.8) {
            drop = rho < 0.2 || rho > 0.8;
        } else if (prior < 0.2) {
            drop = rho > 0.8;
        } else {
            drop = rho < 0.2;
        }
        if (drop) {
            out.dropped.emplace_back(id, "skewed marginal");
            continue;
        }
        survivors.push_back(k);
    }
    if (survivors.empty()) fail("no verifiers survive filtering");

    out.m = static_cast<int>(survivors.size());
    out.kept.reserve(survivors.size());
    for (int k : survivors) {
        out.kept.push_back(votes.kept[k]);
        if (k < static_cast<int>(votes.ids.size())) out.ids.push_back(votes.ids[k]);
    }
    out.votes.resize(rows * survivors.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < survivors.size(); ++c)
            out.votes[r * survivors.size() + c] = votes.votes[r * votes.m + survivors[c]];
    return out;
}

std::vector<double> precision_matrix(const std::vector<double>& rows, int n_rows, int m) {
    if (n_rows < m + 1) fail("precision_matrix needs at least m+1 rows");
    if (static_cast<std::size_t>(n_rows) * m != rows.size()) fail("precision_matrix: bad shape");

    std::vector<double> mean(m, 0.0);
    for (int r = 0; r < n_rows; ++r)
        for (int k = 0; k < m; ++k) mean[k] += rows[static_cast<std::size_t>(r) * m + k];
    for (int k = 0; k < m; ++k) mean[k] /= n_rows;

    std::vector<double> cov(static_cast<std::size_t>(m) * m, 0.0);
    for (int r = 0; r < n_rows; ++r)
        for (int a = 0; a < m; ++a) {
            const double da = rows[static_cast<std::size_t>(r) * m + a] - mean[a];
            for (int b = a; b < m; ++b)
                cov[static_cast<std::size_t>(a) * m + b] +=
                    da * (rows[static_cast<std::size_t>(r) * m + b] - mean[b]);
        }
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
            double v = cov[static_cast<std::size_t>(a) * m + b] / (n_rows - 1);
            cov[static_cast<std::size_t>(a) * m + b] = v;
            cov[static_cast<std::size_t>(b) * m + a] = v;
        }

    double trace = 0.0;
    for (int a = 0; a < m; ++a) trace += cov[static_cast<std::size_t>(a) * m + a];
    const double lambda = 1e-6 * trace / m;
    for (int a = 0; a < m; ++a) cov[static_cast<std::size_t>(a) * m + a] += lambda;

    // Gauss-Jordan with partial pivoting; m stays small (verifier count).
    std::vector<double> inv(static_cast<std::size_t>(m) * m, 0.0);
    for (int a = 0; a < m; ++a) inv[static_cast<std::size_t>(a) * m + a] = 1.0;
    for (int col = 0; col < m; ++col) {
        int pivot = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(cov[static_cast<std::size_t>(r) * m + col]) >
                std::abs(cov[static_cast<std::size_t>(pivot) * m + col]))
                pivot = r;
        if (std::abs(cov[static_cast<std::size_t>(pivot) * m + col]) < 1e-300)
            fail("precision_matrix: covariance is singular");
        if (pivot != col)
            for (int c = 0; c < m; ++c) {
                std::swap(cov[static_cast<std::size_t>(pivot) * m + c],
                          cov[static_cast<std::size_t>(col) * m + c]);
                std::swap(inv[static_cast<std::size_t>(pivot) * m + c],
                          inv[static_cast<std::size_t>(col) * m + c]);
            }
        const double d = cov[static_cast<std::size_t>(col) * m + col];
        for (int c = 0; c < m; ++c) {
            cov[static_cast<std::size_t>(col) * m + c] /= d;
            inv[static_cast<std::size_t>(col) * m + c] /= d;
        }
        for (int r = 0; r < m; ++r) {
            if (r == col) continue;
            const double f = cov[static_cast<std::size_t>(r) * m + col];
            if (f == 0.0) continue;
            for (int c = 0; c < m; ++c) {
                cov[static_cast<std::size_t>(r) * m + c] -=
                    f * cov[static_cast<std::size_t>(col) * m + c];
                inv[static_cast<std::size_t>(r) * m + c] -=
                    f * inv[static_cast<std::size_t>(col) * m + c];
            }
        }
    }
    // Symmetrize to kill round-off drift.
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) {
            double v = 0.5 * (inv[static_cast<std::size_t>(a) * m + b] +
                              inv[static_cast<std::size_t>(b) * m + a]);
            inv[static_cast<std::size_t>(a) * m + b] = v;
            inv[static_cast<std::size_t>(b) * m + a] = v;
        }
    return inv;
}

}  // namespace weaver
