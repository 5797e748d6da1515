#include "weaver/synth.hpp"

#include <cmath>
#include <cstdio>

#include "weaver/metrics.hpp"
#include "weaver/rng.hpp"

namespace weaver {

namespace {

const char* to_string(SynthSpec::PriorMode m) {
    return m == SynthSpec::PriorMode::fixed ? "fixed" : "beta";
}

const char* to_string(SynthSpec::ScoreMode m) {
    return m == SynthSpec::ScoreMode::discrete ? "discrete" : "continuous";
}

std::string format_id(const char* fmt, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), fmt, i);
    return buf;
}

void validate(const SynthSpec& s) {
    if (s.n < 1 || s.K < 1 || s.m < 1) fail("invalid spec: n, K, m must be >= 1");
    if (s.prior_mode == SynthSpec::PriorMode::fixed) {
        if (!(s.pi > 0.0 && s.pi < 1.0)) fail("invalid spec: pi must lie in (0, 1)");
    } else {
        if (!(s.beta_a > 0.0 && s.beta_b > 0.0)) fail("invalid spec: beta a, b must be > 0");
    }
    if (!s.tpr.empty() || !s.tnr.empty()) {
        if (s.tpr.size() != static_cast<std::size_t>(s.m) ||
            s.tnr.size() != static_cast<std::size_t>(s.m))
            fail("invalid spec: explicit accuracies must list all m verifiers");
        for (double v : s.tpr)
            if (!(v >= 0.0 && v <= 1.0)) fail("invalid spec: tpr outside [0, 1]");
        for (double v : s.tnr)
            if (!(v >= 0.0 && v <= 1.0)) fail("invalid spec: tnr outside [0, 1]");
    } else {
        if (!(s.acc_lo > 0.0 && s.acc_hi < 1.0 && s.acc_lo <= s.acc_hi))
            fail("invalid spec: accuracy range must satisfy 0 < lo <= hi < 1");
    }
    if (s.score_mode == SynthSpec::ScoreMode::continuous) {
        if (!(s.f1_a > 0.0 && s.f1_b > 0.0 && s.f0_a > 0.0 && s.f0_b > 0.0))
            fail("invalid spec: score distribution parameters must be > 0");
    }
    if (s.distinct_wrong < 1) fail("invalid spec: distinct_wrong must be >= 1");
}

}  // namespace

nlohmann::json SynthSpec::to_json() const {
    nlohmann::json doc{{"n", n}, {"K", K}, {"m", m}, {"seed", seed},
                       {"distinct_wrong", distinct_wrong}};
    if (prior_mode == PriorMode::fixed)
        doc["prior"] = {{"mode", "fixed"}, {"pi", pi}};
    else
        doc["prior"] = {{"mode", "beta"}, {"a", beta_a}, {"b", beta_b}};
    if (!tpr.empty())
        doc["accuracies"] = {{"mode", "explicit"}, {"tpr", tpr}, {"tnr", tnr}};
    else
        doc["accuracies"] = {{"mode", "uniform"}, {"lo", acc_lo}, {"hi", acc_hi}};
    if (score_mode == ScoreMode::discrete)
        doc["scores"] = {{"mode", "discrete"}};
    else
        doc["scores"] = {{"mode", "continuous"},
                         {"f1", {f1_a, f1_b}},
                         {"f0", {f0_a, f0_b}}};
    return doc;
}

namespace {

SynthSpec parse_spec(const nlohmann::json& doc) {
    SynthSpec s;
    s.n = doc.at("n").get<int>();
    s.K = doc.at("K").get<int>();
    s.m = doc.at("m").get<int>();
    s.seed = doc.value("seed", 0ull);
    s.distinct_wrong = doc.value("distinct_wrong", 4);
    const auto& prior = doc.at("prior");
    std::string pm = prior.at("mode").get<std::string>();
    if (pm == "fixed") {
        s.prior_mode = SynthSpec::PriorMode::fixed;
        s.pi = prior.at("pi").get<double>();
    } else if (pm == "beta") {
        s.prior_mode = SynthSpec::PriorMode::beta;
        s.beta_a = prior.at("a").get<double>();
        s.beta_b = prior.at("b").get<double>();
    } else {
        fail("invalid spec: unknown prior mode " + pm);
    }
    const auto& acc = doc.at("accuracies");
    std::string am = acc.at("mode").get<std::string>();
    if (am == "explicit") {
        s.tpr = acc.at("tpr").get<std::vector<double>>();
        s.tnr = acc.at("tnr").get<std::vector<double>>();
    } else if (am == "uniform") {
        s.acc_lo = acc.at("lo").get<double>();
        s.acc_hi = acc.at("hi").get<double>();
    } else {
        fail("invalid spec: unknown accuracies mode " + am);
    }
    const auto& sc = doc.at("scores");
    std::string sm = sc.at("mode").get<std::string>();
    if (sm == "discrete") {
        s.score_mode = SynthSpec::ScoreMode::discrete;
    } else if (sm == "continuous") {
        s.score_mode = SynthSpec::ScoreMode::continuous;
        auto f1 = sc.at("f1").get<std::vector<double>>();
        auto f0 = sc.at("f0").get<std::vector<double>>();
        if (f1.size() != 2 || f0.size() != 2) fail("invalid spec: f1/f0 need two parameters");
        s.f1_a = f1[0];
        s.f1_b = f1[1];
        s.f0_a = f0[0];
        s.f0_b = f0[1];
    } else {
        fail("invalid spec: unknown score mode " + sm);
    }
    validate(s);
    return s;
}

}  // namespace

SynthSpec SynthSpec::from_json(const nlohmann::json& doc) {
    // schema misses are caller input problems, not internal failures
    try {
        return parse_spec(doc);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("invalid spec: ") + e.what());
    }
}

SynthResult generate(const SynthSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);

    std::vector<double> tpr = spec.tpr, tnr = spec.tnr;
    if (tpr.empty()) {
        tpr.resize(spec.m);
        tnr.resize(spec.m);
        for (int k = 0; k < spec.m; ++k) {
            tpr[k] = rng.uniform(spec.acc_lo, spec.acc_hi);
            tnr[k] = rng.uniform(spec.acc_lo, spec.acc_hi);
        }
    }

    SynthResult out;
    DatasetBundle& b = out.bundle;
    b.scores.n = spec.n;
    b.scores.K = spec.K;
    b.scores.m = spec.m;
    for (int k = 0; k < spec.m; ++k) {
        VerifierMeta meta;
        meta.id = format_id("v%03d", k);
        meta.kind = spec.score_mode == SynthSpec::ScoreMode::discrete
                        ? VerifierKind::binary_judge
                        : VerifierKind::continuous_reward;
        b.scores.verifiers.push_back(meta);
    }
    b.scores.scores.resize(static_cast<std::size_t>(spec.n) * spec.K * spec.m);
    b.labels.labels.resize(static_cast<std::size_t>(spec.n) * spec.K);
    b.labels.answers.resize(static_cast<std::size_t>(spec.n) * spec.K);

    std::vector<double> query_p(spec.n);
    for (int i = 0; i < spec.n; ++i) {
        b.query_ids.push_back(format_id("q%06d", i));
        query_p[i] = spec.prior_mode == SynthSpec::PriorMode::fixed
                         ? spec.pi
                         : rng.beta(spec.beta_a, spec.beta_b);
        for (int j = 0; j < spec.K; ++j) {
            const std::size_t rj = static_cast<std::size_t>(i) * spec.K + j;
            const int y = rng.bernoulli(query_p[i]) ? 1 : 0;
            b.labels.labels[rj] = static_cast<std::uint8_t>(y);
            for (int k = 0; k < spec.m; ++k) {
                double s;
                if (spec.score_mode == SynthSpec::ScoreMode::discrete) {
                    const double p1 = y ? tpr[k] : 1.0 - tnr[k];
                    s = rng.bernoulli(p1) ? 1.0 : 0.0;
                } else {
                    s = y ? rng.beta(spec.f1_a, spec.f1_b) : rng.beta(spec.f0_a, spec.f0_b);
                }
                b.scores.scores[rj * spec.m + k] = s;
            }
            b.labels.answers[rj] =
                y ? b.query_ids[i] + "_true"
                  : b.query_ids[i] + "_wrong_" + std::to_string(rng.uniform_int(spec.distinct_wrong));
        }
    }

    out.truth = nlohmann::json{{"spec", spec.to_json()},
                               {"tpr", tpr},
                               {"tnr", tnr},
                               {"prior_mode", to_string(spec.prior_mode)},
                               {"score_mode", to_string(spec.score_mode)}};
    if (spec.prior_mode == SynthSpec::PriorMode::fixed)
        out.truth["pi"] = spec.pi;
    else {
        out.truth["beta"] = {spec.beta_a, spec.beta_b};
        out.truth["query_p"] = query_p;
    }

    b.source_path = "synth:" + std::to_string(spec.seed);
    b.provenance = nlohmann::json{{"synth", out.truth}};
    b.dataset_hash = canonical_hash(b);
    return out;
}

std::vector<CurvePoint> empirical_passk_curve(const DatasetBundle& bundle,
                                              const std::vector<int>& ks) {
    if (!bundle.labels.has_labels()) fail("pass@k curve needs labels");
    std::vector<CurvePoint> out;
    for (int k : ks) {
        if (k < 1) fail("k must be >= 1");
        if (k > bundle.K()) fail("k exceeds K");
        CurvePoint p;
        p.k = k;
        p.value = pass_at_k(bundle.labels, bundle.n(), bundle.K(), k);
        out.push_back(p);
    }
    validate_curve(out);
    return out;
}

}  // namespace weaver
