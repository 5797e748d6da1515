#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "weaver/dataset.hpp"
#include "weaver/scaling.hpp"

namespace weaver {

// Generative model: y ~ Bernoulli(p_i) with p_i fixed (pi) or Beta(a,b);
// discrete votes s ~ Bernoulli(tpr) when y=1 else Bernoulli(1-tnr);
// continuous scores s ~ Beta(f1) when y=1 else Beta(f0).
struct SynthSpec {
    int n = 100;
    int K = 10;
    int m = 5;

    enum class PriorMode { fixed, beta } prior_mode = PriorMode::fixed;
    double pi = 0.5;
    double beta_a = 1.0;
    double beta_b = 1.0;

    // Explicit per-verifier accuracies win over the sampling range.
    std::vector<double> tpr;
    std::vector<double> tnr;
    double acc_lo = 0.6;
    double acc_hi = 0.9;

    enum class ScoreMode { discrete, continuous } score_mode = ScoreMode::discrete;
    double f1_a = 5.0, f1_b = 2.0;  // score distribution for correct responses
    double f0_a = 2.0, f0_b = 5.0;  // and for incorrect ones

    int distinct_wrong = 4;  // wrong answers per query draw from this many strings
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& doc);
};

struct SynthResult {
    DatasetBundle bundle;  // full labels + answers; truth recorded in provenance
    nlohmann::json truth;  // realized tpr/tnr, prior settings, per-query p
};

// Deterministic given spec+seed. Draw order: per-verifier accuracies (tpr
// then tnr), then per query i: p_i, then per response j: y, the m scores,
// and the wrong-answer pick when y=0.
SynthResult generate(const SynthSpec& spec);

// pass_at_k at each requested k; every k must be <= bundle K.
std::vector<CurvePoint> empirical_passk_curve(const DatasetBundle& bundle,
                                              const std::vector<int>& ks);

}  // namespace weaver
