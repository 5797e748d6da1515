#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "weaver/label_model.hpp"
#include "weaver/rng.hpp"
#include "weaver/synth.hpp"
#include "test_util.hpp"

using namespace weaver;
using testutil::TempDir;
using testutil::read_file;
using testutil::throws_containing;

namespace {

VoteTensor make_votes(int n, int K, int m, const std::vector<std::uint8_t>& bits) {
    VoteTensor v;
    v.n = n;
    v.K = K;
    v.m = m;
    v.votes = bits;
    v.kept.resize(m);
    v.ids.resize(m);
    for (int k = 0; k < m; ++k) {
        v.kept[k] = k;
        v.ids[k] = "v" + std::to_string(k);
    }
    return v;
}

// Direct probability-space Bayes product, the reference for the log-space path.
double brute_posterior(const std::vector<std::uint8_t>& row, const WSParams& p) {
    long double pos = p.prior, neg = 1.0L - p.prior;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (row[k]) {
            pos *= p.tpr[k];
            neg *= 1.0L - p.tnr[k];
        } else {
            pos *= 1.0L - p.tpr[k];
            neg *= p.tnr[k];
        }
    }
    return static_cast<double>(pos / (pos + neg));
}

}  // namespace

TEST_CASE("moments: marginal blocks and pairwise joints") {
    SUBCASE("two always-positive verifiers") {
        VoteTensor v = make_votes(2, 1, 2, {1, 1, 1, 1});
        MomentMatrices M = estimate_moments(v);
        REQUIRE(M.m == 2);
        // Diagonal block of verifier 0: diag(Pr=0, Pr=1) = diag(0, 1).
        CHECK(M.at(0, 0) == doctest::Approx(0.0));
        CHECK(M.at(1, 1) == doctest::Approx(1.0));
        CHECK(M.at(0, 1) == doctest::Approx(0.0));
        // Off-diagonal block rows (S_0=a, S_1=b): only (1,1) occurs.
        CHECK(M.at(0, 2) == doctest::Approx(0.0));
        CHECK(M.at(0, 3) == doctest::Approx(0.0));
        CHECK(M.at(1, 2) == doctest::Approx(0.0));
        CHECK(M.at(1, 3) == doctest::Approx(1.0));
    }
    SUBCASE("perfect agreement, half positive") {
        VoteTensor v = make_votes(2, 1, 2, {0, 0, 1, 1});
        MomentMatrices M = estimate_moments(v);
        CHECK(M.at(0, 2) == doctest::Approx(0.5));
        CHECK(M.at(0, 3) == doctest::Approx(0.0));
        CHECK(M.at(1, 2) == doctest::Approx(0.0));
        CHECK(M.at(1, 3) == doctest::Approx(0.5));
    }
    SUBCASE("marginals on a 3-of-4 positive column") {
        VoteTensor v = make_votes(4, 1, 1, {1, 1, 1, 0});
        MomentMatrices M = estimate_moments(v);
        CHECK(M.at(0, 0) == doctest::Approx(0.25));
        CHECK(M.at(1, 1) == doctest::Approx(0.75));
    }
    SUBCASE("symmetry of off-diagonal blocks") {
        Rng rng(17);
        std::vector<std::uint8_t> bits(5 * 4 * 3);
        for (auto& b : bits) b = rng.bernoulli(0.4);
        MomentMatrices M = estimate_moments(make_votes(5, 4, 3, bits));
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) CHECK(M.at(r, c) == doctest::Approx(M.at(c, r)));
    }
}

TEST_CASE("prior estimate: dev-slice mean with clamping") {
    LabelSet l;
    l.labels = {1, 0, 1, 1};
    l.dev_mask = {1, 1};
    CHECK(estimate_prior(l, 2, 2) == doctest::Approx(0.75));

    LabelSet zero;
    zero.labels = {0, 0};
    zero.dev_mask = {1};
    CHECK(estimate_prior(zero, 1, 2) == doctest::Approx(1e-6));

    LabelSet partial;
    partial.labels = {1, 1, 0, 0};
    partial.dev_mask = {1, 0};
    CHECK(estimate_prior(partial, 2, 2) == doctest::Approx(1.0 - 1e-6));
}

TEST_CASE("posterior: closed-form single-verifier case") {
    WSParams p;
    p.prior = 0.5;
    p.tpr = {0.9};
    p.tnr = {0.8};
    std::vector<std::uint8_t> one{1}, zero{0};
    // 0.5*0.9 / (0.5*0.9 + 0.5*0.2) = 9/11
    CHECK(posterior(one, p) == doctest::Approx(9.0 / 11.0).epsilon(1e-12));
    CHECK(posterior(zero, p) == doctest::Approx(0.1 / (0.1 + 0.8)).epsilon(1e-12));

    WSParams empty;
    empty.prior = 0.37;
    CHECK(posterior(std::vector<std::uint8_t>{}, empty) == doctest::Approx(0.37));

    WSParams coin;
    coin.prior = 0.5;
    coin.tpr = {0.5, 0.5};
    coin.tnr = {0.5, 0.5};
    CHECK(posterior(std::vector<std::uint8_t>{1, 0}, coin) == doctest::Approx(0.5));
}

TEST_CASE("posterior: log-space path matches the direct Bayes product") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        int m = 1 + static_cast<int>(rng.uniform_int(6));
        WSParams p;
        p.prior = rng.uniform(0.05, 0.95);
        for (int k = 0; k < m; ++k) {
            p.tpr.push_back(rng.uniform(0.05, 0.95));
            p.tnr.push_back(rng.uniform(0.05, 0.95));
        }
        for (int pat = 0; pat < (1 << m); ++pat) {
            std::vector<std::uint8_t> row(m);
            for (int k = 0; k < m; ++k) row[k] = (pat >> k) & 1;
            CHECK(posterior(row, p) == doctest::Approx(brute_posterior(row, p)).epsilon(1e-11));
        }
    }
}

TEST_CASE("posterior: monotone in informative votes") {
    WSParams p;
    p.prior = 0.4;
    p.tpr = {0.8, 0.7, 0.9};
    p.tnr = {0.75, 0.6, 0.85};
    std::vector<std::uint8_t> lo{0, 1, 0}, hi{1, 1, 0};
    CHECK(posterior(hi, p) > posterior(lo, p));  // flipping an informative vote up raises it
}

TEST_CASE("posterior matrix and selection") {
    WSParams p;
    p.prior = 0.5;
    p.tpr = {0.9, 0.8};
    p.tnr = {0.9, 0.8};
    VoteTensor v = make_votes(2, 2, 2, {1, 1, 0, 0, 0, 1, 1, 0});
    auto post = posterior_matrix(v, p);
    REQUIRE(post.size() == 4);
    CHECK(post[0] == doctest::Approx(brute_posterior({1, 1}, p)).epsilon(1e-12));
    SelectionResult sel = select(post, 2, 2);
    CHECK(sel.j_star[0] == 0);

    // Ties resolve to the smallest index.
    SelectionResult tie = select({0.7, 0.7, 0.2, 0.9}, 2, 2);
    CHECK(tie.j_star[0] == 0);
    CHECK(tie.j_star[1] == 1);
}

TEST_CASE("supervised fit: empirical rates with clamping") {
    VoteTensor v = make_votes(4, 1, 1, {1, 0, 0, 0});
    LabelSet l;
    l.labels = {1, 1, 0, 0};
    WSParams p = fit_supervised(v, l);
    CHECK(p.tpr[0] == doctest::Approx(0.5));
    CHECK(p.tnr[0] == doctest::Approx(1.0 - 1e-6));

    LabelSet onecls;
    onecls.labels = {1, 1, 1, 1};
    CHECK(throws_containing([&] { fit_supervised(v, onecls); }, "class is absent"));
}

TEST_CASE("moment loss: zero at the generating parameters in the infinite-data limit") {
    // With conditionally independent verifiers the population moments factor
    // exactly, so the loss at the true parameters is zero.
    double pi = 0.4;
    std::vector<double> tpr{0.8, 0.7, 0.9}, tnr{0.75, 0.85, 0.6};
    int m = 3;
    MomentMatrices M;
    M.m = m;
    M.O.assign(36, 0.0);
    auto pr = [&](int k, int a, int y) {
        double on = y ? tpr[k] : 1.0 - tnr[k];
        return a ? on : 1.0 - on;
    };
    for (int k = 0; k < m; ++k)
        for (int a = 0; a < 2; ++a) {
            M.O[static_cast<std::size_t>(2 * k + a) * 2 * m + 2 * k + a] =
                pi * pr(k, a, 1) + (1 - pi) * pr(k, a, 0);
            for (int l = 0; l < m; ++l) {
                if (l == k) continue;
                for (int b = 0; b < 2; ++b)
                    M.O[static_cast<std::size_t>(2 * k + a) * 2 * m + 2 * l + b] =
                        pi * pr(k, a, 1) * pr(l, b, 1) + (1 - pi) * pr(k, a, 0) * pr(l, b, 0);
            }
        }
    CHECK(moment_loss(M, pi, tpr, tnr) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(moment_loss(M, pi, {0.6, 0.6, 0.6}, {0.6, 0.6, 0.6}) > 1e-4);
}

TEST_CASE("unsupervised fit: recovers planted accuracies from votes") {
    SynthSpec spec;
    spec.n = 400;
    spec.K = 8;
    spec.m = 5;
    spec.prior_mode = SynthSpec::PriorMode::fixed;
    spec.pi = 0.45;
    spec.tpr = {0.85, 0.75, 0.9, 0.7, 0.8};
    spec.tnr = {0.8, 0.7, 0.85, 0.75, 0.9};
    spec.score_mode = SynthSpec::ScoreMode::discrete;
    spec.seed = 31;
    SynthResult synth = generate(spec);

    BinarizeResult bin = binarize(synth.bundle.scores, {});
    FitConfig cfg;
    cfg.seed = 7;
    WSParams fit = fit_accuracies(bin.votes, 0.45, cfg);
    REQUIRE(fit.m() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(fit.tpr[k] - spec.tpr[k]) < 0.08);
        CHECK(std::abs(fit.tnr[k] - spec.tnr[k]) < 0.08);
    }
    // Run to convergence: the optimum fits the empirical moments at least as
    // well as the planted parameters do (sampling noise sets the floor).
    FitConfig deep = cfg;
    deep.max_iters = 32000;
    WSParams converged = fit_accuracies(bin.votes, 0.45, deep);
    MomentMatrices emp = estimate_moments(bin.votes);
    CHECK(converged.final_loss <= moment_loss(emp, 0.45, spec.tpr, spec.tnr) + 1e-4);

    SUBCASE("deterministic given the seed") {
        WSParams again = fit_accuracies(bin.votes, 0.45, cfg);
        CHECK(again.tpr == fit.tpr);
        CHECK(again.tnr == fit.tnr);
        CHECK(again.final_loss == fit.final_loss);
    }
    SUBCASE("majority-seeded init lands in the same basin") {
        FitConfig maj = cfg;
        maj.init = FitConfig::Init::majority_seeded;
        WSParams fit2 = fit_accuracies(bin.votes, 0.45, maj);
        for (int k = 0; k < 5; ++k) CHECK(std::abs(fit2.tpr[k] - fit.tpr[k]) < 0.05);
    }
    SUBCASE("moment consistency bound") {
        MomentMatrices M = estimate_moments(bin.votes);
        double bound = 3.0 / std::sqrt(static_cast<double>(spec.n) * spec.K);
        for (int k = 0; k < 5; ++k) {
            double marg1 = 0.45 * fit.tpr[k] + 0.55 * (1.0 - fit.tnr[k]);
            CHECK(std::abs(M.at(2 * k + 1, 2 * k + 1) - marg1) < bound + 0.02);
        }
    }
}

TEST_CASE("unsupervised fit: coin-flip verifiers estimate near one half") {
    Rng rng(12);
    std::vector<std::uint8_t> bits(500 * 4 * 4);
    for (auto& b : bits) b = rng.bernoulli(0.5);
    VoteTensor v = make_votes(500, 4, 4, bits);
    FitConfig cfg;
    WSParams fit = fit_accuracies(v, 0.5, cfg);
    // No signal to latch onto: estimates stay near chance instead of drifting
    // to the extremes. Weak identification leaves sizable wobble.
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(fit.tpr[k] - 0.5) < 0.2);
        CHECK(std::abs(fit.tnr[k] - 0.5) < 0.2);
    }
}

TEST_CASE("unsupervised fit: better-than-random convention enforced") {
    // Adversarial verifiers (systematically anti-correlated with truth) land in
    // the mirrored optimum; the post-hoc flip must restore mean accuracy >= 0.5.
    SynthSpec spec;
    spec.n = 300;
    spec.K = 6;
    spec.m = 4;
    spec.pi = 0.5;
    spec.tpr = {0.15, 0.2, 0.25, 0.2};
    spec.tnr = {0.2, 0.15, 0.2, 0.25};
    spec.score_mode = SynthSpec::ScoreMode::discrete;
    spec.seed = 77;
    SynthResult synth = generate(spec);
    BinarizeResult bin = binarize(synth.bundle.scores, {});
    WSParams fit = fit_accuracies(bin.votes, 0.5, {});
    double mean_acc = 0.0;
    for (int k = 0; k < 4; ++k) mean_acc += 0.5 * (fit.tpr[k] + fit.tnr[k]);
    mean_acc /= 4.0;
    CHECK(mean_acc >= 0.5);
}

TEST_CASE("unsupervised fit: verifier order equivariance") {
    SynthSpec spec;
    spec.n = 200;
    spec.K = 5;
    spec.m = 4;
    spec.pi = 0.4;
    spec.tpr = {0.9, 0.7, 0.8, 0.6};
    spec.tnr = {0.85, 0.65, 0.75, 0.7};
    spec.score_mode = SynthSpec::ScoreMode::discrete;
    spec.seed = 5;
    SynthResult synth = generate(spec);
    BinarizeResult bin = binarize(synth.bundle.scores, {});

    VoteTensor swapped = bin.votes;
    for (int i = 0; i < swapped.n; ++i)
        for (int j = 0; j < swapped.K; ++j) {
            std::size_t base = (static_cast<std::size_t>(i) * swapped.K + j) * swapped.m;
            std::swap(swapped.votes[base + 0], swapped.votes[base + 3]);
        }
    std::swap(swapped.ids[0], swapped.ids[3]);

    FitConfig cfg;
    WSParams a = fit_accuracies(bin.votes, 0.4, cfg);
    WSParams b = fit_accuracies(swapped, 0.4, cfg);
    // Same marginal information, so the estimates agree up to the column swap
    // (init noise is per-column, hence the loose tolerance).
    CHECK(std::abs(a.tpr[0] - b.tpr[3]) < 0.05);
    CHECK(std::abs(a.tpr[3] - b.tpr[0]) < 0.05);
    CHECK(std::abs(a.tpr[1] - b.tpr[1]) < 0.05);
}

TEST_CASE("unsupervised fit: fewer than three verifiers rejected") {
    VoteTensor v = make_votes(4, 1, 2, {1, 0, 0, 1, 1, 1, 0, 0});
    CHECK(throws_containing([&] { fit_accuracies(v, 0.5, {}); }, "3"));
}

TEST_CASE("export: pseudolabel records are sorted and round-trip") {
    TempDir dir("pseudo");
    DatasetBundle b;
    b.query_ids = {"qa", "qb"};
    b.scores.n = 2;
    b.scores.K = 1;
    b.scores.m = 1;
    b.scores.scores = {0.5, 0.5};
    b.scores.verifiers = {{"v", VerifierKind::continuous_reward, ""}};
    std::vector<double> post{0.123456789012345, 0.9};
    export_pseudolabels(post, b, dir.file("pseudo.jsonl"));
    std::string text = read_file(dir.file("pseudo.jsonl"));
    auto first_nl = text.find('\n');
    json rec0 = json::parse(text.substr(0, first_nl));
    CHECK(rec0["query_id"] == "qa");
    CHECK(rec0["response_index"] == 0);
    CHECK(rec0["posterior"].get<double>() == doctest::Approx(post[0]).epsilon(1e-12));
}
