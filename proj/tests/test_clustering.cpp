#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "weaver/clustering.hpp"
#include "weaver/metrics.hpp"
#include "weaver/pipeline.hpp"
#include "weaver/synth.hpp"
#include "test_util.hpp"

using namespace weaver;
using testutil::throws_containing;

namespace {

// Two populations with opposite verifier specializations: on the first half
// verifiers 0-2 are strong and 3-5 guess; on the second half the roles swap.
DatasetBundle heterogeneous_bundle(std::uint64_t seed) {
    SynthSpec easy;
    easy.n = 300;
    easy.K = 10;
    easy.m = 6;
    easy.pi = 0.8;
    easy.tpr = {0.9, 0.9, 0.9, 0.5, 0.5, 0.5};
    easy.tnr = {0.9, 0.9, 0.9, 0.5, 0.5, 0.5};
    easy.score_mode = SynthSpec::ScoreMode::discrete;
    easy.seed = seed;

    SynthSpec hard = easy;
    hard.pi = 0.2;
    hard.tpr = {0.5, 0.5, 0.5, 0.9, 0.9, 0.9};
    hard.tnr = {0.5, 0.5, 0.5, 0.9, 0.9, 0.9};
    hard.seed = seed + 1000;

    DatasetBundle a = generate(easy).bundle;
    DatasetBundle b = generate(hard).bundle;

    // Concatenate b after a with disambiguated ids.
    DatasetBundle out = a;
    for (int i = 0; i < b.n(); ++i) out.query_ids.push_back("z" + b.query_ids[i]);
    out.scores.n += b.scores.n;
    out.scores.scores.insert(out.scores.scores.end(), b.scores.scores.begin(),
                             b.scores.scores.end());
    out.labels.labels.insert(out.labels.labels.end(), b.labels.labels.begin(),
                             b.labels.labels.end());
    out.labels.answers.insert(out.labels.answers.end(), b.labels.answers.begin(),
                              b.labels.answers.end());
    out.dataset_hash = canonical_hash(out);
    return out;
}

}  // namespace

TEST_CASE("difficulty: correct-response fraction per query") {
    LabelSet l;
    l.labels = {1, 1, 1, 0, 0, 0, 0, 0};
    auto d = compute_difficulty(l, 2, 4);
    REQUIRE(d.size() == 2);
    CHECK(d[0] == doctest::Approx(0.75));
    CHECK(d[1] == doctest::Approx(0.0));
    LabelSet none;
    CHECK(throws_containing([&] { compute_difficulty(none, 2, 4); }, "labels"));
}

TEST_CASE("partition: contiguous groups with near-equal sizes") {
    SUBCASE("even split") {
        std::vector<double> d{0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0};
        DifficultyPartition p = partition(d, 5);
        REQUIRE(p.assignment.size() == 10);
        std::vector<int> sizes(5, 0);
        for (int c : p.assignment) sizes[c]++;
        CHECK(sizes == std::vector<int>{2, 2, 2, 2, 2});
        // Lowest difficulties land in cluster 0.
        CHECK(p.assignment[9] == 0);  // 0.0
        CHECK(p.assignment[1] == 0);  // 0.1
        CHECK(p.assignment[0] == 4);  // 0.9
    }
    SUBCASE("remainder goes to the earliest clusters") {
        std::vector<double> d(10);
        for (int i = 0; i < 10; ++i) d[i] = i / 10.0;
        DifficultyPartition p = partition(d, 3);
        std::vector<int> sizes(3, 0);
        for (int c : p.assignment) sizes[c]++;
        CHECK(sizes == std::vector<int>{4, 3, 3});
        REQUIRE(p.boundaries.size() == 2);
        CHECK(p.boundaries[0] == doctest::Approx(0.3));
        CHECK(p.boundaries[1] == doctest::Approx(0.6));
    }
    SUBCASE("ties keep query order") {
        std::vector<double> d{0.5, 0.5, 0.5, 0.5};
        DifficultyPartition p = partition(d, 2);
        CHECK(p.assignment == std::vector<int>{0, 0, 1, 1});
    }
    SUBCASE("single cluster covers everything") {
        DifficultyPartition p = partition({0.2, 0.8}, 1);
        CHECK(p.assignment == std::vector<int>{0, 0});
        CHECK(p.boundaries.empty());
    }
    SUBCASE("bad cluster counts") {
        CHECK(throws_containing([] { partition({0.5}, 0); }, ">= 1"));
        CHECK(throws_containing([] { partition({0.5}, 2); }, "exceeds"));
    }
}

TEST_CASE("threshold mode strings") {
    CHECK(threshold_mode_from_string("global") == ThresholdMode::global);
    CHECK(threshold_mode_from_string("per_cluster") == ThresholdMode::per_cluster);
    CHECK(threshold_mode_from_string("per_model") == ThresholdMode::per_model);
    CHECK(std::string(to_string(ThresholdMode::per_cluster)) == "per_cluster");
    CHECK(throws_containing([] { threshold_mode_from_string("x"); }, "unknown threshold mode"));
}

TEST_CASE("per-cluster fit: trivial partition equals the global pipeline") {
    SynthSpec spec;
    spec.n = 120;
    spec.K = 6;
    spec.m = 4;
    spec.pi = 0.5;
    spec.tpr = {0.85, 0.8, 0.75, 0.7};
    spec.tnr = {0.8, 0.85, 0.7, 0.75};
    spec.score_mode = SynthSpec::ScoreMode::continuous;
    spec.seed = 13;
    DatasetBundle bundle = generate(spec).bundle;
    split_dev(bundle, 0.15, 3);

    PipelineConfig cfg;
    cfg.fit.seed = 5;

    DifficultyPartition trivial;
    trivial.n_clusters = 1;
    trivial.assignment.assign(bundle.n(), 0);
    PerClusterResult clustered = fit_per_cluster(bundle, trivial, ThresholdMode::global, cfg);

    // Manual composition of the same stages.
    NormalizeResult normed = normalize(bundle.scores, cfg.normalization);
    BinarizeResult bin = binarize(normed.tensor, cfg.binarization, &bundle.labels, std::nullopt);
    double prior = estimate_prior(bundle.labels, bundle.n(), bundle.K());
    VoteTensor kept = filter_verifiers(bin.votes, prior, normed.degenerate);
    FitConfig fc = cfg.fit;
    fc.seed = cfg.fit.seed + 0;  // cluster id 0
    WSParams params = fit_accuracies(kept, prior, fc);
    auto post = posterior_matrix(kept, params);

    REQUIRE(clustered.clusters.size() == 1);
    CHECK(clustered.clusters[0].prior == doctest::Approx(prior).epsilon(1e-15));
    CHECK(clustered.clusters[0].params.tpr == params.tpr);
    CHECK(clustered.clusters[0].params.tnr == params.tnr);
    CHECK(clustered.posteriors == post);
    CHECK(clustered.selection.j_star == select(post, bundle.n(), bundle.K()).j_star);
}

TEST_CASE("per-cluster fit: threshold modes and their dev-evaluation budgets") {
    SynthSpec spec;
    spec.n = 90;
    spec.K = 5;
    spec.m = 3;
    spec.pi = 0.5;
    spec.tpr = {0.85, 0.8, 0.9};
    spec.tnr = {0.85, 0.8, 0.9};
    spec.score_mode = SynthSpec::ScoreMode::continuous;
    spec.seed = 21;
    DatasetBundle bundle = generate(spec).bundle;
    split_dev(bundle, 0.2, 1);

    PipelineConfig cfg;
    DifficultyPartition part = partition(compute_difficulty(bundle.labels, bundle.n(), bundle.K()),
                                         2);

    PerClusterResult shared = fit_per_cluster(bundle, part, ThresholdMode::per_cluster, cfg);
    REQUIRE(shared.clusters.size() == 2);
    for (const auto& c : shared.clusters) {
        CHECK(c.dev_evaluations == 19);  // one grid sweep for the shared threshold
        double thr = -1.0;
        for (double t : c.thresholds)
            if (!std::isnan(t)) {
                if (thr < 0.0) thr = t;
                CHECK(t == doctest::Approx(thr));  // shared across continuous verifiers
            }
    }

    PerClusterResult perm = fit_per_cluster(bundle, part, ThresholdMode::per_model, cfg);
    for (const auto& c : perm.clusters) CHECK(c.dev_evaluations == 19 * 3);

    PerClusterResult glob = fit_per_cluster(bundle, part, ThresholdMode::global, cfg);
    for (const auto& c : glob.clusters) {
        CHECK(c.dev_evaluations == 0);  // fixed threshold, no grid search
        for (double t : c.thresholds)
            if (!std::isnan(t)) CHECK(t == doctest::Approx(0.5));
    }

    // Posteriors cover every response in bundle order.
    CHECK(shared.posteriors.size() == static_cast<std::size_t>(bundle.n()) * bundle.K());
    for (double p : shared.posteriors) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("per-cluster fit: guards") {
    SynthSpec spec;
    spec.n = 30;
    spec.K = 4;
    spec.m = 3;
    spec.score_mode = SynthSpec::ScoreMode::discrete;
    spec.seed = 2;
    DatasetBundle bundle = generate(spec).bundle;

    PipelineConfig cfg;
    DifficultyPartition trivial;
    trivial.n_clusters = 1;
    trivial.assignment.assign(bundle.n(), 0);

    SUBCASE("needs a dev split") {
        CHECK(throws_containing(
            [&] { fit_per_cluster(bundle, trivial, ThresholdMode::global, cfg); }, "dev split"));
    }
    SUBCASE("partition must match the dataset") {
        split_dev(bundle, 0.2, 0);
        DifficultyPartition bad = trivial;
        bad.assignment.pop_back();
        CHECK(throws_containing([&] { fit_per_cluster(bundle, bad, ThresholdMode::global, cfg); },
                                "partition does not match"));
    }
    SUBCASE("every cluster needs a dev query") {
        // Dev mask confined to the first half; cluster of the second half has none.
        bundle.labels.dev_mask.assign(bundle.n(), 0);
        for (int i = 0; i < 5; ++i) bundle.labels.dev_mask[i] = 1;
        DifficultyPartition split;
        split.n_clusters = 2;
        split.assignment.assign(bundle.n(), 0);
        for (int i = 15; i < bundle.n(); ++i) split.assignment[i] = 1;
        CHECK(throws_containing(
            [&] { fit_per_cluster(bundle, split, ThresholdMode::global, cfg); },
            "no dev queries"));
    }
}

TEST_CASE("per-cluster fit: specialization beats one global model on mixed data") {
    // Median over five seeds so a single unlucky draw cannot flip the sign.
    std::vector<double> deltas;
    for (std::uint64_t seed : {11u, 22u, 33u, 44u, 55u}) {
        DatasetBundle bundle = heterogeneous_bundle(seed);
        split_dev(bundle, 0.15, seed);

        PipelineConfig cfg;
        cfg.fit.seed = seed;

        DifficultyPartition trivial;
        trivial.n_clusters = 1;
        trivial.assignment.assign(bundle.n(), 0);
        PerClusterResult global = fit_per_cluster(bundle, trivial, ThresholdMode::global, cfg);

        // Cluster along the population boundary: the two halves differ in
        // difficulty by construction (prior 0.8 vs 0.2), so the cut recovers
        // the populations almost exactly.
        DifficultyPartition part =
            partition(compute_difficulty(bundle.labels, bundle.n(), bundle.K()), 2);
        PerClusterResult by_cluster =
            fit_per_cluster(bundle, part, ThresholdMode::global, cfg);

        double sg = success_rate(global.selection, bundle.labels, bundle.n(), bundle.K());
        double sc = success_rate(by_cluster.selection, bundle.labels, bundle.n(), bundle.K());
        deltas.push_back(sc - sg);
    }
    std::sort(deltas.begin(), deltas.end());
    CHECK(deltas[2] >= 0.0);  // median improvement
}
