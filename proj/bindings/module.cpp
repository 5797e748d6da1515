#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"
#include "weaver/metrics.hpp"
#include "weaver/pipeline.hpp"
#include "weaver/scaling.hpp"
#include "weaver/synth.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::string format_id(const char* fmt, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), fmt, i);
    return buf;
}

weaver::DatasetBundle make_bundle(const DoubleArray& scores, const py::object& labels,
                                  std::vector<std::string> kinds) {
    auto buf = scores.request();
    if (buf.ndim != 3) weaver::fail("scores must have shape (n, K, m)");
    const int n = static_cast<int>(buf.shape[0]);
    const int K = static_cast<int>(buf.shape[1]);
    const int m = static_cast<int>(buf.shape[2]);

    if (kinds.empty()) kinds.assign(m, "continuous_reward");
    if (kinds.size() == 1) kinds.assign(m, kinds[0]);
    if (kinds.size() != static_cast<std::size_t>(m))
        weaver::fail("kinds must list one entry per verifier");

    weaver::DatasetBundle b;
    b.scores.n = n;
    b.scores.K = K;
    b.scores.m = m;
    b.scores.scores.resize(static_cast<std::size_t>(n) * K * m);
    std::memcpy(b.scores.scores.data(), buf.ptr, sizeof(double) * b.scores.scores.size());
    for (int k = 0; k < m; ++k) {
        weaver::VerifierMeta meta;
        meta.id = format_id("v%03d", k);
        meta.kind = weaver::verifier_kind_from_string(kinds[k]);
        b.scores.verifiers.push_back(meta);
    }
    for (int i = 0; i < n; ++i) b.query_ids.push_back(format_id("q%06d", i));

    if (!labels.is_none()) {
        DoubleArray lab = labels.cast<DoubleArray>();
        auto lbuf = lab.request();
        if (lbuf.ndim != 2 || lbuf.shape[0] != n || lbuf.shape[1] != K)
            weaver::fail("labels must have shape (n, K)");
        const double* p = static_cast<const double*>(lbuf.ptr);
        b.labels.labels.resize(static_cast<std::size_t>(n) * K);
        for (std::size_t r = 0; r < b.labels.labels.size(); ++r) {
            if (p[r] != 0.0 && p[r] != 1.0) weaver::fail("labels must be 0 or 1");
            b.labels.labels[r] = static_cast<std::uint8_t>(p[r]);
        }
    }
    b.dataset_hash = weaver::canonical_hash(b);
    return b;
}

py::dict apply_to_dict(const weaver::ApplyOutput& res, int n, int K) {
    py::array_t<double> post({n, K});
    std::memcpy(post.mutable_data(), res.posteriors.data(), sizeof(double) * res.posteriors.size());
    // Vector shape on purpose: a lone integer (braced or not) resolves to the
    // count constructor, which leaves the array with zero strides.
    py::array_t<int> sel(std::vector<py::ssize_t>{n});
    std::memcpy(sel.mutable_data(), res.selection.j_star.data(), sizeof(int) * n);
    py::dict out;
    out["posteriors"] = post;
    out["selection"] = sel;
    return out;
}

}  // namespace

PYBIND11_MODULE(weaver_core, mod) {
    mod.doc() = "Weak-verifier aggregation: accuracy estimation, posterior selection, scaling fits";

    mod.def(
        "fit",
        [](const DoubleArray& scores, const DoubleArray& labels, std::vector<std::string> kinds,
           const std::string& config_json) {
            weaver::DatasetBundle bundle = make_bundle(scores, labels, std::move(kinds));
            weaver::PipelineConfig cfg;
            if (!config_json.empty())
                cfg = weaver::PipelineConfig::from_json(nlohmann::json::parse(config_json));
            weaver::FitOutput out = weaver::run_fit_pipeline(bundle, cfg);
            return out.artifact.dump();
        },
        py::arg("scores"), py::arg("labels"), py::arg("kinds") = std::vector<std::string>{},
        py::arg("config_json") = std::string(),
        "Run the fit pipeline on a (n, K, m) score array; returns the fit artifact JSON.");

    mod.def(
        "apply_fit",
        [](const DoubleArray& scores, const std::string& artifact_json,
           std::vector<std::string> kinds) {
            weaver::DatasetBundle bundle = make_bundle(scores, py::none(), std::move(kinds));
            weaver::ApplyOutput res =
                weaver::apply_fit_artifact(bundle, nlohmann::json::parse(artifact_json));
            return apply_to_dict(res, bundle.n(), bundle.K());
        },
        py::arg("scores"), py::arg("artifact_json"), py::arg("kinds") = std::vector<std::string>{},
        "Replay a fit artifact: posteriors (n, K) and the selected response per query.");

    mod.def(
        "posterior",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& votes,
           double prior, std::vector<double> tpr, std::vector<double> tnr) {
            auto buf = votes.request();
            if (buf.ndim != 2) weaver::fail("votes must have shape (rows, m)");
            const int rows = static_cast<int>(buf.shape[0]);
            const int m = static_cast<int>(buf.shape[1]);
            if (tpr.size() != static_cast<std::size_t>(m) || tnr.size() != tpr.size())
                weaver::fail("tpr/tnr must list one entry per verifier");
            weaver::WSParams params;
            params.prior = prior;
            params.tpr = std::move(tpr);
            params.tnr = std::move(tnr);
            const std::uint8_t* p = static_cast<const std::uint8_t*>(buf.ptr);
            py::array_t<double> out(std::vector<py::ssize_t>{rows});
            for (int r = 0; r < rows; ++r)
                out.mutable_at(r) = weaver::posterior(p + static_cast<std::size_t>(r) * m, params);
            return out;
        },
        py::arg("votes"), py::arg("prior"), py::arg("tpr"), py::arg("tnr"),
        "Pr(Y=1 | votes) for each row of a (rows, m) vote matrix.");

    mod.def(
        "pass_at_k",
        [](const DoubleArray& labels, int k) {
            auto buf = labels.request();
            if (buf.ndim != 2) weaver::fail("labels must have shape (n, K)");
            const int n = static_cast<int>(buf.shape[0]);
            const int K = static_cast<int>(buf.shape[1]);
            weaver::LabelSet ls;
            const double* p = static_cast<const double*>(buf.ptr);
            ls.labels.resize(static_cast<std::size_t>(n) * K);
            for (std::size_t r = 0; r < ls.labels.size(); ++r)
                ls.labels[r] = p[r] != 0.0 ? 1 : 0;
            return weaver::pass_at_k(ls, n, K, k);
        },
        py::arg("labels"), py::arg("k"), "Unbiased pass@k over an (n, K) 0/1 label matrix.");

    mod.def("beta_passk_closed_form", &weaver::beta_passk_closed_form, py::arg("a"), py::arg("b"),
            py::arg("k"), "1 - B(a, b+k)/B(a, b).");

    mod.def("huber", &weaver::huber, py::arg("r"), py::arg("delta"));

    mod.def(
        "fit_curve",
        [](std::vector<int> ks, std::vector<double> values, const std::string& form) {
            if (ks.size() != values.size()) weaver::fail("ks and values must align");
            std::vector<weaver::CurvePoint> points;
            for (std::size_t i = 0; i < ks.size(); ++i)
                points.push_back({ks[i], values[i], -1.0});
            weaver::ScalingFit fit = form == "coverage_power"
                                         ? weaver::fit_coverage_power(points)
                                         : weaver::fit_selection_curve(points);
            return fit.to_json().dump();
        },
        py::arg("ks"), py::arg("values"), py::arg("form") = "selection_full",
        "Huber fit of a saturating scaling curve; returns the fit JSON.");

    mod.def(
        "predict_curve",
        [](const std::string& fit_json, double k) {
            return weaver::predict(weaver::ScalingFit::from_json(nlohmann::json::parse(fit_json)),
                                   k);
        },
        py::arg("fit_json"), py::arg("k"));

    mod.def(
        "synth",
        [](const std::string& spec_json) {
            weaver::SynthSpec spec = weaver::SynthSpec::from_json(nlohmann::json::parse(spec_json));
            weaver::SynthResult res = weaver::generate(spec);
            const int n = res.bundle.n(), K = res.bundle.K(), m = res.bundle.m();
            py::array_t<double> scores({n, K, m});
            std::memcpy(scores.mutable_data(), res.bundle.scores.scores.data(),
                        sizeof(double) * res.bundle.scores.scores.size());
            py::array_t<std::uint8_t> labels({n, K});
            std::memcpy(labels.mutable_data(), res.bundle.labels.labels.data(),
                        static_cast<std::size_t>(n) * K);
            py::dict out;
            out["scores"] = scores;
            out["labels"] = labels;
            out["query_ids"] = res.bundle.query_ids;
            out["answers"] = res.bundle.labels.answers;
            out["truth"] = res.truth.dump();
            out["dataset_hash"] = res.bundle.dataset_hash;
            return out;
        },
        py::arg("spec_json"), "Generate a synthetic bundle; truth holds the realized parameters.");
}
