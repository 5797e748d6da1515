#include "weaver/label_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "weaver/rng.hpp"

namespace weaver {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Loss and gradient wrt the raw (pre-sigmoid) parameters, fused so the fit
// loop touches each verifier pair once per iteration.
double loss_and_grad(const MomentMatrices& O, double prior, const std::vector<double>& tpr,
                     const std::vector<double>& tnr, std::vector<double>* grad_a,
                     std::vector<double>* grad_b) {
    const int m = O.m;
    const double pi1 = prior, pi0 = 1.0 - prior;
    // dL/d q1_k(a) and dL/d q0_k(a), a in {0,1}
    std::vector<double> g1(2 * m, 0.0), g0(2 * m, 0.0);
    double loss = 0.0;

    auto q1 = [&](int k, int a) { return a ? tpr[k] : 1.0 - tpr[k]; };
    auto q0 = [&](int k, int a) { return a ? 1.0 - tnr[k] : tnr[k]; };

    for (int k = 0; k < m; ++k) {
        for (int l = k + 1; l < m; ++l) {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    const double model = pi1 * q1(k, a) * q1(l, b) + pi0 * q0(k, a) * q0(l, b);
                    const double r = model - O.at(2 * k + a, 2 * l + b);
                    loss += 2.0 * r * r;  // the (l,k) block mirrors this entry
                    if (grad_a) {
                        g1[2 * k + a] += 4.0 * r * pi1 * q1(l, b);
                        g1[2 * l + b] += 4.0 * r * pi1 * q1(k, a);
                        g0[2 * k + a] += 4.0 * r * pi0 * q0(l, b);
                        g0[2 * l + b] += 4.0 * r * pi0 * q0(k, a);
                    }
                }
            }
        }
        for (int a = 0; a < 2; ++a) {
            const double model = pi1 * q1(k, a) + pi0 * q0(k, a);
            const double r = model - O.at(2 * k + a, 2 * k + a);
            loss += r * r;
            if (grad_a) {
                g1[2 * k + a] += 2.0 * r * pi1;
                g0[2 * k + a] += 2.0 * r * pi0;
            }
        }
    }
    if (grad_a) {
        for (int k = 0; k < m; ++k) {
            const double d_tpr = g1[2 * k + 1] - g1[2 * k + 0];
            const double d_tnr = g0[2 * k + 0] - g0[2 * k + 1];
            (*grad_a)[k] = d_tpr * tpr[k] * (1.0 - tpr[k]);
            (*grad_b)[k] = d_tnr * tnr[k] * (1.0 - tnr[k]);
        }
    }
    return loss;
}

}  // namespace

MomentMatrices estimate_moments(const VoteTensor& votes) {
    const std::size_t rows = static_cast<std::size_t>(votes.n) * votes.K;
    if (rows == 0) fail("estimate_moments: no vote rows");
    const int m = votes.m;
    MomentMatrices out;
    out.m = m;
    out.O.assign(static_cast<std::size_t>(2 * m) * 2 * m, 0.0);

    std::vector<std::size_t> joint(static_cast<std::size_t>(m) * m * 4, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint8_t* row = votes.votes.data() + r * m;
        for (int k = 0; k < m; ++k)
            for (int l = 0; l < m; ++l)
                ++joint[(static_cast<std::size_t>(k) * m + l) * 4 + row[k] * 2 + row[l]];
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (int k = 0; k < m; ++k) {
        for (int l = 0; l < m; ++l) {
            if (k == l) continue;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    out.O[static_cast<std::size_t>(2 * k + a) * 2 * m + 2 * l + b] =
                        joint[(static_cast<std::size_t>(k) * m + l) * 4 + a * 2 + b] * inv;
        }
        // Diagonal block: marginals on the diagonal, zeros off it.
        for (int a = 0; a < 2; ++a)
            out.O[static_cast<std::size_t>(2 * k + a) * 2 * m + 2 * k + a] =
                joint[(static_cast<std::size_t>(k) * m + k) * 4 + a * 2 + a] * inv;
    }
    return out;
}

double estimate_prior(const LabelSet& labels, int n, int K) {
    if (!labels.has_labels()) fail("estimate_prior: no labels");
    if (labels.dev_mask.empty()) fail("estimate_prior: empty dev");
    double sum = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < n; ++i) {
        if (!labels.dev_mask[i]) continue;
        for (int j = 0; j < K; ++j) {
            sum += labels.label(i, j, K);
            ++count;
        }
    }
    if (count == 0) fail("estimate_prior: empty dev");
    return clamp_prob(sum / static_cast<double>(count));
}

double moment_loss(const MomentMatrices& O, double prior, const std::vector<double>& tpr,
                   const std::vector<double>& tnr) {
    return loss_and_grad(O, prior, tpr, tnr, nullptr, nullptr);
}

namespace {

WSParams fit_from_init(const MomentMatrices& O, double prior, const FitConfig& cfg,
                       std::vector<double> init_tpr, std::vector<double> init_tnr) {
    const int m = O.m;
    if (m < 3) fail("fit_accuracies requires at least 3 verifiers after filtering");
    if (!(prior > 0.0 && prior < 1.0)) fail("fit_accuracies: prior must be in (0, 1)");
    if (!(cfg.learning_rate > 0.0) || cfg.max_iters <= 0 || !(cfg.tolerance > 0.0))
        fail("fit config values must be positive");

    std::vector<double> a(m), b(m);
    for (int k = 0; k < m; ++k) {
        a[k] = logit(clamp_prob(init_tpr[k]));
        b[k] = logit(clamp_prob(init_tnr[k]));
    }

    std::vector<double> tpr(m), tnr(m), ga(m), gb(m);
    auto materialize = [&] {
        for (int k = 0; k < m; ++k) {
            tpr[k] = sigmoid(a[k]);
            tnr[k] = sigmoid(b[k]);
        }
    };

    materialize();
    double prev_loss = loss_and_grad(O, prior, tpr, tnr, &ga, &gb);
    double best_loss = prev_loss;
    std::vector<double> best_tpr = tpr, best_tnr = tnr;
    bool converged = false;

    for (int it = 0; it < cfg.max_iters; ++it) {
        for (int k = 0; k < m; ++k) {
            a[k] -= cfg.learning_rate * ga[k];
            b[k] -= cfg.learning_rate * gb[k];
        }
        materialize();
        const double loss = loss_and_grad(O, prior, tpr, tnr, &ga, &gb);
        if (loss < best_loss) {
            best_loss = loss;
            best_tpr = tpr;
            best_tnr = tnr;
        }
        if (std::abs(prev_loss - loss) < cfg.tolerance) {
            converged = true;
            break;
        }
        prev_loss = loss;
    }

    WSParams params;
    params.prior = clamp_prob(prior);
    params.tpr = std::move(best_tpr);
    params.tnr = std::move(best_tnr);
    params.converged = converged;
    if (!converged)
        params.warnings.push_back("max_iters reached before loss delta fell below tolerance");

    double mean_acc = 0.0;
    for (int k = 0; k < m; ++k) mean_acc += 0.5 * (params.tpr[k] + params.tnr[k]);
    mean_acc /= m;
    if (mean_acc < 0.5) {
        // The moment conditions cannot tell the two class-symmetric solutions
        // apart; pick the one where verifiers beat random on average.
        for (int k = 0; k < m; ++k) {
            const double t = params.tpr[k];
            params.tpr[k] = 1.0 - params.tnr[k];
            params.tnr[k] = 1.0 - t;
        }
        params.flipped = true;
    }
    for (int k = 0; k < m; ++k) {
        params.tpr[k] = clamp_prob(params.tpr[k]);
        params.tnr[k] = clamp_prob(params.tnr[k]);
    }
    params.final_loss = moment_loss(O, params.prior, params.tpr, params.tnr);
    return params;
}

}  // namespace

WSParams fit_accuracies(const MomentMatrices& O, double prior, const FitConfig& cfg) {
    const int m = O.m;
    if (m < 3) fail("fit_accuracies requires at least 3 verifiers after filtering");
    Rng rng(cfg.seed);
    std::vector<double> t0(m), n0(m);
    for (int k = 0; k < m; ++k) {
        t0[k] = 0.7 + rng.uniform(-0.05, 0.05);
        n0[k] = 0.7 + rng.uniform(-0.05, 0.05);
    }
    return fit_from_init(O, prior, cfg, std::move(t0), std::move(n0));
}

WSParams fit_accuracies(const VoteTensor& votes, double prior, const FitConfig& cfg) {
    MomentMatrices O = estimate_moments(votes);
    if (cfg.init == FitConfig::Init::heuristic) return fit_accuracies(O, prior, cfg);

    // majority_seeded: rates of agreement with the per-row majority vote.
    const int m = votes.m;
    if (m < 3) fail("fit_accuracies requires at least 3 verifiers after filtering");
    const std::size_t rows = static_cast<std::size_t>(votes.n) * votes.K;
    std::vector<double> t0(m, 0.0), n0(m, 0.0);
    std::size_t pos = 0, neg = 0;
    std::vector<std::size_t> agree1(m, 0), agree0(m, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint8_t* row = votes.votes.data() + r * m;
        int sum = 0;
        for (int k = 0; k < m; ++k) sum += row[k];
        const int pseudo = 2 * sum >= m ? 1 : 0;
        if (pseudo) {
            ++pos;
            for (int k = 0; k < m; ++k) agree1[k] += row[k];
        } else {
            ++neg;
            for (int k = 0; k < m; ++k) agree0[k] += 1 - row[k];
        }
    }
    for (int k = 0; k < m; ++k) {
        t0[k] = pos ? static_cast<double>(agree1[k]) / pos : 0.7;
        n0[k] = neg ? static_cast<double>(agree0[k]) / neg : 0.7;
    }
    return fit_from_init(O, prior, cfg, std::move(t0), std::move(n0));
}

WSParams fit_supervised(const VoteTensor& votes, const LabelSet& labels) {
    if (!labels.has_labels()) fail("fit_supervised: labels required");
    const int m = votes.m, K = votes.K;
    const std::size_t rows = static_cast<std::size_t>(votes.n) * K;
    if (labels.labels.size() != rows) fail("fit_supervised: label shape mismatch");

    std::size_t pos = 0;
    std::vector<std::size_t> tp(m, 0), tn(m, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint8_t y = labels.labels[r];
        const std::uint8_t* row = votes.votes.data() + r * m;
        if (y) {
            ++pos;
            for (int k = 0; k < m; ++k) tp[k] += row[k];
        } else {
            for (int k = 0; k < m; ++k) tn[k] += 1 - row[k];
        }
    }
    const std::size_t neg = rows - pos;
    if (pos == 0 || neg == 0) fail("fit_supervised: a class is absent from labels");

    WSParams params;
    params.prior = clamp_prob(static_cast<double>(pos) / static_cast<double>(rows));
    params.tpr.resize(m);
    params.tnr.resize(m);
    for (int k = 0; k < m; ++k) {
        params.tpr[k] = clamp_prob(static_cast<double>(tp[k]) / static_cast<double>(pos));
        params.tnr[k] = clamp_prob(static_cast<double>(tn[k]) / static_cast<double>(neg));
    }
    return params;
}

double posterior(const std::uint8_t* row, const WSParams& params) {
    const int m = params.m();
    double lp1 = std::log(clamp_prob(params.prior));
    double lp0 = std::log(clamp_prob(1.0 - params.prior));
    for (int k = 0; k < m; ++k) {
        const double tpr = clamp_prob(params.tpr[k]);
        const double tnr = clamp_prob(params.tnr[k]);
        if (row[k]) {
            lp1 += std::log(tpr);
            lp0 += std::log(1.0 - tnr);
        } else {
            lp1 += std::log(1.0 - tpr);
            lp0 += std::log(tnr);
        }
    }
    return sigmoid(lp1 - lp0);
}

double posterior(const std::vector<std::uint8_t>& row, const WSParams& params) {
    if (static_cast<int>(row.size()) != params.m()) fail("posterior: vote row length mismatch");
    return posterior(row.data(), params);
}

std::vector<double> posterior_matrix(const VoteTensor& votes, const WSParams& params) {
    if (votes.m != params.m()) fail("posterior_matrix: parameter count mismatch");
    std::vector<double> out(static_cast<std::size_t>(votes.n) * votes.K);
    parallel_for(static_cast<std::size_t>(votes.n), [&](std::size_t i) {
        for (int j = 0; j < votes.K; ++j) {
            const std::size_t r = i * votes.K + j;
            out[r] = posterior(votes.votes.data() + r * votes.m, params);
        }
    });
    return out;
}

SelectionResult select(const std::vector<double>& posteriors, int n, int K) {
    if (posteriors.size() != static_cast<std::size_t>(n) * K) fail("select: shape mismatch");
    SelectionResult res;
    res.j_star.resize(n);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_p = posteriors[static_cast<std::size_t>(i) * K];
        for (int j = 1; j < K; ++j) {
            const double p = posteriors[static_cast<std::size_t>(i) * K + j];
            if (p > best_p) {
                best_p = p;
                best = j;
            }
        }
        res.j_star[i] = best;
    }
    return res;
}

void export_pseudolabels(const std::vector<double>& posteriors, const DatasetBundle& bundle,
                         const std::string& path) {
    const int K = bundle.K();
    if (posteriors.size() != static_cast<std::size_t>(bundle.n()) * K)
        fail("export_pseudolabels: shape mismatch");
    std::ofstream out(path);
    if (!out) fail("cannot write pseudolabels: " + path);
    for (int i = 0; i < bundle.n(); ++i) {
        for (int j = 0; j < K; ++j) {
            json rec;
            rec["query_id"] = bundle.query_ids[i];
            rec["response_index"] = j;
            rec["posterior"] = posteriors[static_cast<std::size_t>(i) * K + j];
            out << rec.dump() << "\n";
        }
    }
}

}  // namespace weaver
