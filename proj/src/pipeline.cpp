#include "weaver/pipeline.hpp"

#include <cmath>
#include <limits>

namespace weaver {

namespace {

const char* to_string(FitConfig::Init i) {
    return i == FitConfig::Init::heuristic ? "heuristic" : "majority_seeded";
}

FitConfig::Init init_from_string(const std::string& s) {
    if (s == "heuristic") return FitConfig::Init::heuristic;
    if (s == "majority_seeded") return FitConfig::Init::majority_seeded;
    fail("unknown fit init: " + s);
}

nlohmann::json thresholds_to_json(const std::vector<double>& thresholds) {
    nlohmann::json arr = nlohmann::json::array();
    for (double t : thresholds) {
        if (std::isnan(t))
            arr.push_back(nullptr);
        else
            arr.push_back(t);
    }
    return arr;
}

std::vector<double> thresholds_from_json(const nlohmann::json& arr) {
    std::vector<double> out;
    for (const auto& v : arr)
        out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                  : v.get<double>());
    return out;
}

nlohmann::json cluster_to_json(const ClusterFit& c, const std::vector<VerifierMeta>& metas) {
    nlohmann::json verifiers = nlohmann::json::array();
    for (std::size_t t = 0; t < c.kept.size(); ++t)
        verifiers.push_back({{"id", metas[c.kept[t]].id},
                             {"tpr", c.params.tpr[t]},
                             {"tnr", c.params.tnr[t]}});
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : c.dropped) dropped.push_back({d.first, d.second});
    return nlohmann::json{{"cluster_id", c.cluster_id},
                          {"prior", c.prior},
                          {"verifiers", verifiers},
                          {"thresholds", thresholds_to_json(c.thresholds)},
                          {"kept", c.kept},
                          {"dropped", dropped},
                          {"converged", c.params.converged},
                          {"final_loss", c.params.final_loss},
                          {"flipped", c.params.flipped},
                          {"warnings", c.params.warnings},
                          {"dev_evaluations", c.dev_evaluations}};
}

struct ClusterSpec {
    double prior = 0.5;
    std::vector<double> thresholds;
    std::vector<int> kept;
    WSParams params;
};

ClusterSpec cluster_from_json(const nlohmann::json& doc, const ScoreTensor& scores) {
    ClusterSpec c;
    c.prior = doc.at("prior").get<double>();
    c.thresholds = thresholds_from_json(doc.at("thresholds"));
    c.kept = doc.at("kept").get<std::vector<int>>();
    if (c.thresholds.size() != static_cast<std::size_t>(scores.m))
        fail("fit artifact thresholds do not match dataset verifiers");
    c.params.prior = c.prior;
    const auto& verifiers = doc.at("verifiers");
    if (verifiers.size() != c.kept.size()) fail("fit artifact kept/verifiers mismatch");
    for (std::size_t t = 0; t < c.kept.size(); ++t) {
        int orig = c.kept[t];
        if (orig < 0 || orig >= scores.m) fail("fit artifact kept index out of range");
        const auto& v = verifiers[t];
        if (v.at("id").get<std::string>() != scores.verifiers[orig].id)
            fail("fit artifact does not match dataset verifiers");
        c.params.tpr.push_back(clamp_prob(v.at("tpr").get<double>()));
        c.params.tnr.push_back(clamp_prob(v.at("tnr").get<double>()));
    }
    return c;
}

VoteTensor take_columns(const VoteTensor& v, const std::vector<int>& kept,
                        const std::vector<VerifierMeta>& metas) {
    VoteTensor out;
    out.n = v.n;
    out.K = v.K;
    out.m = static_cast<int>(kept.size());
    out.kept = kept;
    for (int k : kept) out.ids.push_back(metas[k].id);
    out.votes.resize(static_cast<std::size_t>(out.n) * out.K * out.m);
    const std::size_t rows = static_cast<std::size_t>(v.n) * v.K;
    for (std::size_t r = 0; r < rows; ++r)
        for (int t = 0; t < out.m; ++t)
            out.votes[r * out.m + t] = v.votes[r * v.m + kept[t]];
    return out;
}

ScoreTensor take_query_rows(const ScoreTensor& t, const std::vector<int>& queries) {
    ScoreTensor out;
    out.n = static_cast<int>(queries.size());
    out.K = t.K;
    out.m = t.m;
    out.verifiers = t.verifiers;
    const std::size_t row = static_cast<std::size_t>(t.K) * t.m;
    out.scores.reserve(row * queries.size());
    for (int q : queries) {
        const double* src = t.scores.data() + static_cast<std::size_t>(q) * row;
        out.scores.insert(out.scores.end(), src, src + row);
    }
    return out;
}

}  // namespace

nlohmann::json PipelineConfig::to_json() const {
    return nlohmann::json{
        {"normalization",
         {{"lo_percentile", normalization.lo_percentile},
          {"hi_percentile", normalization.hi_percentile},
          {"clamp", normalization.clamp}}},
        {"binarization",
         {{"strategy", to_string(binarization.strategy)},
          {"threshold", binarization.threshold},
          {"quantile_q", binarization.quantile_q},
          {"balanced_accuracy", binarization.balanced_accuracy}}},
        {"fit",
         {{"learning_rate", fit.learning_rate},
          {"max_iters", fit.max_iters},
          {"tolerance", fit.tolerance},
          {"init", to_string(fit.init)},
          {"seed", fit.seed}}},
        {"dev_fraction", dev_fraction},
        {"seed", seed},
        {"n_clusters", n_clusters},
        {"threshold_mode", to_string(threshold_mode)}};
}

namespace {

PipelineConfig parse_config(const nlohmann::json& doc) {
    PipelineConfig cfg;
    if (doc.contains("normalization")) {
        const auto& n = doc.at("normalization");
        cfg.normalization.lo_percentile = n.value("lo_percentile", 5.0);
        cfg.normalization.hi_percentile = n.value("hi_percentile", 95.0);
        cfg.normalization.clamp = n.value("clamp", true);
    }
    if (doc.contains("binarization")) {
        const auto& b = doc.at("binarization");
        cfg.binarization.strategy =
            binarization_strategy_from_string(b.value("strategy", "fixed_threshold"));
        cfg.binarization.threshold = b.value("threshold", 0.5);
        cfg.binarization.quantile_q = b.value("quantile_q", 0.85);
        cfg.binarization.balanced_accuracy = b.value("balanced_accuracy", false);
    }
    if (doc.contains("fit")) {
        const auto& f = doc.at("fit");
        cfg.fit.learning_rate = f.value("learning_rate", 0.01);
        cfg.fit.max_iters = f.value("max_iters", 2000);
        cfg.fit.tolerance = f.value("tolerance", 1e-9);
        cfg.fit.init = init_from_string(f.value("init", "heuristic"));
        cfg.fit.seed = f.value("seed", 0ull);
    }
    cfg.dev_fraction = doc.value("dev_fraction", 0.1);
    cfg.seed = doc.value("seed", 0ull);
    cfg.n_clusters = doc.value("n_clusters", 1);
    cfg.threshold_mode = threshold_mode_from_string(doc.value("threshold_mode", "global"));
    return cfg;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc) {
    try {
        return parse_config(doc);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("invalid config: ") + e.what());
    }
}

std::string PipelineConfig::config_hash() const { return fnv1a_hex(to_json().dump()); }

FitOutput run_fit_pipeline(const DatasetBundle& bundle_in, const PipelineConfig& cfg) {
    if (!bundle_in.labels.has_labels()) fail("fit needs labels for the dev split");
    if (cfg.n_clusters < 1) fail("n_clusters must be >= 1");
    if (!(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0))
        fail("dev fraction must lie in (0, 1)");

    DatasetBundle bundle = bundle_in;
    if (bundle.labels.dev_mask.empty())
        bundle.labels.dev_mask = make_dev_mask(bundle.n(), cfg.dev_fraction, cfg.seed);

    FitOutput out;
    out.cutpoints = normalize(bundle.scores, cfg.normalization).cutpoints;

    DifficultyPartition trivial;
    trivial.n_clusters = 1;
    trivial.assignment.assign(bundle.n(), 0);
    out.global_ref = fit_per_cluster(bundle, trivial, cfg.threshold_mode, cfg);

    if (cfg.n_clusters > 1) {
        auto difficulties = compute_difficulty(bundle.labels, bundle.n(), bundle.K());
        out.part = partition(difficulties, cfg.n_clusters);
        out.run = fit_per_cluster(bundle, out.part, cfg.threshold_mode, cfg);
    } else {
        out.part = trivial;
        out.run = out.global_ref;
    }

    const ClusterFit& g = out.global_ref.clusters[0];
    nlohmann::json verifiers = nlohmann::json::array();
    for (std::size_t t = 0; t < g.kept.size(); ++t)
        verifiers.push_back({{"id", bundle.scores.verifiers[g.kept[t]].id},
                             {"tpr", g.params.tpr[t]},
                             {"tnr", g.params.tnr[t]}});
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : g.dropped) dropped.push_back({d.first, d.second});
    nlohmann::json cut = nlohmann::json::array();
    for (const auto& c : out.cutpoints) cut.push_back({c.first, c.second});

    out.artifact = nlohmann::json{{"artifact", "fit"},
                                  {"prior", g.prior},
                                  {"verifiers", verifiers},
                                  {"config", cfg.to_json()},
                                  {"config_hash", cfg.config_hash()},
                                  {"dataset_hash", bundle.dataset_hash},
                                  {"converged", g.params.converged},
                                  {"final_loss", g.params.final_loss},
                                  {"flipped", g.params.flipped},
                                  {"warnings", g.params.warnings},
                                  {"cutpoints", cut},
                                  {"thresholds", thresholds_to_json(g.thresholds)},
                                  {"kept", g.kept},
                                  {"dropped", dropped},
                                  {"n_clusters", cfg.n_clusters},
                                  {"threshold_mode", to_string(cfg.threshold_mode)},
                                  {"dev_evaluations", g.dev_evaluations}};

    if (cfg.n_clusters > 1) {
        nlohmann::json clusters = nlohmann::json::array();
        for (const auto& c : out.run.clusters)
            clusters.push_back(cluster_to_json(c, bundle.scores.verifiers));
        nlohmann::json assignment = nlohmann::json::object();
        for (int i = 0; i < bundle.n(); ++i)
            assignment[bundle.query_ids[i]] = out.part.assignment[i];
        out.artifact["clusters"] = clusters;
        out.artifact["assignment"] = assignment;
    }
    return out;
}

namespace {

ApplyOutput apply_artifact_checked(const DatasetBundle& bundle, const nlohmann::json& artifact) {
    const int n = bundle.n(), K = bundle.K(), m = bundle.m();

    std::vector<std::pair<double, double>> cutpoints;
    for (const auto& c : artifact.at("cutpoints"))
        cutpoints.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    if (cutpoints.size() != static_cast<std::size_t>(m))
        fail("fit artifact cutpoints do not match dataset verifiers");
    ScoreTensor normalized = apply_cutpoints(bundle.scores, cutpoints);

    ApplyOutput out;
    out.posteriors.assign(static_cast<std::size_t>(n) * K, 0.0);

    if (artifact.contains("clusters")) {
        const auto& assignment = artifact.at("assignment");
        const auto& clusters = artifact.at("clusters");
        std::vector<std::vector<int>> members(clusters.size());
        for (int i = 0; i < n; ++i) {
            auto it = assignment.find(bundle.query_ids[i]);
            if (it == assignment.end())
                fail("query missing from fit assignment: " + bundle.query_ids[i]);
            int c = it->get<int>();
            if (c < 0 || c >= static_cast<int>(members.size()))
                fail("fit assignment cluster out of range");
            members[c].push_back(i);
        }
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (members[c].empty()) continue;
            ClusterSpec spec = cluster_from_json(clusters[c], bundle.scores);
            ScoreTensor slice = take_query_rows(normalized, members[c]);
            VoteTensor votes = apply_thresholds(slice, spec.thresholds);
            VoteTensor kept = take_columns(votes, spec.kept, bundle.scores.verifiers);
            std::vector<double> post = posterior_matrix(kept, spec.params);
            for (std::size_t qi = 0; qi < members[c].size(); ++qi)
                for (int j = 0; j < K; ++j)
                    out.posteriors[static_cast<std::size_t>(members[c][qi]) * K + j] =
                        post[qi * K + j];
        }
    } else {
        nlohmann::json flat = artifact;
        ClusterSpec spec = cluster_from_json(flat, bundle.scores);
        VoteTensor votes = apply_thresholds(normalized, spec.thresholds);
        VoteTensor kept = take_columns(votes, spec.kept, bundle.scores.verifiers);
        out.posteriors = posterior_matrix(kept, spec.params);
    }

    out.selection = select(out.posteriors, n, K);
    return out;
}

}  // namespace

ApplyOutput apply_fit_artifact(const DatasetBundle& bundle, const nlohmann::json& artifact) {
    try {
        return apply_artifact_checked(bundle, artifact);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("invalid fit artifact: ") + e.what());
    }
}

}  // namespace weaver
