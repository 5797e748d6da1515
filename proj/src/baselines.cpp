#include "weaver/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "weaver/rng.hpp"

namespace weaver {

SelectionResult first_sample(int n) {
    SelectionResult res;
    res.j_star.assign(n, 0);
    return res;
}

std::string trim_answer(const std::string& s) {
    const char* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

SelectionResult majority_vote(const std::vector<std::string>& answers, int n, int K) {
    if (answers.size() != static_cast<std::size_t>(n) * K) fail("majority_vote: answers missing");
    SelectionResult res;
    res.j_star.resize(n);
    for (int i = 0; i < n; ++i) {
        std::map<std::string, std::pair<int, int>> groups;  // answer -> (count, first index)
        for (int j = 0; j < K; ++j) {
            const std::string key = trim_answer(answers[static_cast<std::size_t>(i) * K + j]);
            auto [it, inserted] = groups.try_emplace(key, 0, j);
            ++it->second.first;
            (void)inserted;
        }
        int best_count = -1, best_first = 0;
        for (const auto& [key, cf] : groups) {
            (void)key;
            const auto [count, first] = cf;
            if (count > best_count || (count == best_count && first < best_first)) {
                best_count = count;
                best_first = first;
            }
        }
        res.j_star[i] = best_first;
    }
    return res;
}

namespace {

SelectionResult argmax_mean(const ScoreTensor& t, const std::vector<int>& cols) {
    SelectionResult res;
    res.j_star.resize(t.n);
    for (int i = 0; i < t.n; ++i) {
        int best = 0;
        double best_v = -1.0;
        for (int j = 0; j < t.K; ++j) {
            double s = 0.0;
            for (int k : cols) s += t.at(i, j, k);
            s /= static_cast<double>(cols.size());
            if (s > best_v) {
                best_v = s;
                best = j;
            }
        }
        res.j_star[i] = best;
    }
    return res;
}

}  // namespace

SelectionResult naive_ensemble(const ScoreTensor& normalized) {
    if (normalized.m == 0) fail("naive_ensemble: no verifiers");
    std::vector<int> cols(normalized.m);
    for (int k = 0; k < normalized.m; ++k) cols[k] = k;
    return argmax_mean(normalized, cols);
}

SelectionResult top_k_oracle_ensemble(const ScoreTensor& normalized, const LabelSet& labels,
                                      int k) {
    if (k < 1 || k > normalized.m) fail("top_k_oracle_ensemble: k out of range");
    if (!labels.has_labels()) fail("top_k_oracle_ensemble: labels required");

    // Individual selection success per verifier, then a stable ranking so
    // equal scores keep the original verifier order.
    std::vector<double> success(normalized.m);
    for (int v = 0; v < normalized.m; ++v) {
        double hits = 0.0;
        for (int i = 0; i < normalized.n; ++i) {
            int best = 0;
            double best_v = normalized.at(i, 0, v);
            for (int j = 1; j < normalized.K; ++j)
                if (normalized.at(i, j, v) > best_v) {
                    best_v = normalized.at(i, j, v);
                    best = j;
                }
            hits += labels.label(i, best, normalized.K);
        }
        success[v] = hits / normalized.n;
    }
    std::vector<int> order(normalized.m);
    for (int v = 0; v < normalized.m; ++v) order[v] = v;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return success[a] > success[b]; });
    std::vector<int> cols(order.begin(), order.begin() + k);
    std::sort(cols.begin(), cols.end());
    return argmax_mean(normalized, cols);
}

json LogRegModel::to_json() const {
    json doc;
    doc["weights"] = weights;
    doc["bias"] = bias;
    doc["trained_on"] = trained_on;
    return doc;
}

LogRegModel LogRegModel::from_json(const json& doc) {
    LogRegModel m;
    m.weights = doc.at("weights").get<std::vector<double>>();
    m.bias = doc.at("bias").get<double>();
    m.trained_on = doc.value("trained_on", "continuous");
    return m;
}

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

LogRegModel logreg_fit(const std::vector<double>& features, const std::vector<std::uint8_t>& y,
                       int rows, int m, double l2, double train_fraction, std::uint64_t seed) {
    if (features.size() != static_cast<std::size_t>(rows) * m) fail("logreg_fit: bad shape");
    if (y.size() != static_cast<std::size_t>(rows)) fail("logreg_fit: label shape mismatch");
    if (l2 < 0.0) fail("logreg_fit: l2 must be non-negative");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        fail("logreg_fit: train_fraction must be in (0, 1]");

    std::vector<int> train;
    if (train_fraction >= 1.0) {
        train.resize(rows);
        for (int r = 0; r < rows; ++r) train[r] = r;
    } else {
        const int count = std::max(1, static_cast<int>(std::ceil(train_fraction * rows)));
        Rng rng(seed);
        train = rng.sample_without_replacement(rows, std::min(count, rows));
        std::sort(train.begin(), train.end());
    }

    // Fixed step from the logistic-loss Lipschitz bound; deterministic and
    // safe for any feature scale that shows up here.
    double mean_sq = 0.0;
    for (int r : train) {
        double s = 1.0;  // bias column
        for (int k = 0; k < m; ++k) {
            const double v = features[static_cast<std::size_t>(r) * m + k];
            s += v * v;
        }
        mean_sq += s;
    }
    mean_sq /= static_cast<double>(train.size());
    const double lr = 1.0 / (0.25 * mean_sq + l2 + 1e-12);

    LogRegModel model;
    model.weights.assign(m, 0.0);
    std::vector<double> grad(m + 1, 0.0);
    const double inv_n = 1.0 / static_cast<double>(train.size());

    for (int it = 0; it < 10000; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int r : train) {
            const double* x = features.data() + static_cast<std::size_t>(r) * m;
            double z = model.bias;
            for (int k = 0; k < m; ++k) z += model.weights[k] * x[k];
            const double err = stable_sigmoid(z) - static_cast<double>(y[r]);
            for (int k = 0; k < m; ++k) grad[k] += err * x[k];
            grad[m] += err;
        }
        double gnorm_sq = 0.0;
        for (int k = 0; k < m; ++k) {
            grad[k] = grad[k] * inv_n + l2 * model.weights[k];
            gnorm_sq += grad[k] * grad[k];
        }
        grad[m] *= inv_n;
        gnorm_sq += grad[m] * grad[m];
        if (std::sqrt(gnorm_sq) <= 1e-6) break;
        for (int k = 0; k < m; ++k) model.weights[k] -= lr * grad[k];
        model.bias -= lr * grad[m];
    }
    return model;
}

std::vector<double> logreg_predict(const LogRegModel& model, const std::vector<double>& features,
                                   int rows) {
    const int m = static_cast<int>(model.weights.size());
    if (features.size() != static_cast<std::size_t>(rows) * m) fail("logreg_predict: bad shape");
    std::vector<double> out(rows);
    for (int r = 0; r < rows; ++r) {
        double z = model.bias;
        const double* x = features.data() + static_cast<std::size_t>(r) * m;
        for (int k = 0; k < m; ++k) z += model.weights[k] * x[k];
        out[r] = stable_sigmoid(z);
    }
    return out;
}

}  // namespace weaver
