#include "weaver/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "weaver/baselines.hpp"
#include "weaver/clustering.hpp"
#include "weaver/common.hpp"
#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"
#include "weaver/metrics.hpp"
#include "weaver/pipeline.hpp"
#include "weaver/preprocess.hpp"
#include "weaver/scaling.hpp"
#include "weaver/synth.hpp"

namespace weaver {

namespace {

using nlohmann::json;

void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) fail("cannot write " + path);
    out << doc.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(path + ": " + e.what());
    }
}

void emit_error(const std::string& command, const std::string& type, const std::string& message) {
    json err{{"error", {{"command", command}, {"type", type}, {"message", message}}}};
    std::cerr << err.dump() << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        out.push_back(std::stoi(cell));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        out.push_back(std::stod(cell));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) out.push_back(cell);
    }
    return out;
}

struct DatasetArgs {
    std::string input;
    std::string manifest;
    std::string format = "jsonl";
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args) {
    cmd->add_option("--input", args.input, "dataset file")->required();
    cmd->add_option("--manifest", args.manifest, "manifest sidecar (verifier ids and kinds)");
    cmd->add_option("--format", args.format, "jsonl or csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
}

DatasetBundle load_from_args(const DatasetArgs& args) {
    return load_dataset(args.input, args.manifest,
                        args.format == "csv" ? DatasetFormat::csv : DatasetFormat::jsonl);
}

SelectionResult argmax_per_query(const std::vector<double>& values, int n, int K) {
    SelectionResult sel;
    sel.j_star.resize(n, 0);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < K; ++j)
            if (values[static_cast<std::size_t>(i) * K + j] >
                values[static_cast<std::size_t>(i) * K + best])
                best = j;
        sel.j_star[i] = best;
    }
    return sel;
}

// ---- fit ----------------------------------------------------------------

struct FitArgs {
    DatasetArgs data;
    std::string config_path;
    std::string out = "fit.json";
    std::uint64_t seed = 0;
    double dev_fraction = 0.1;
    int clusters = 1;
    std::string threshold_mode = "global";
    std::string binarize = "fixed_threshold";
    double threshold = 0.5;
    double quantile_q = 0.85;
    bool balanced = false;
    std::string init = "heuristic";
    double lr = 0.01;
    int max_iters = 2000;
    double tol = 1e-9;
    double lo_percentile = 5.0;
    double hi_percentile = 95.0;
};

PipelineConfig resolve_fit_config(const FitArgs& a, const CLI::App* cmd) {
    PipelineConfig cfg;
    if (!a.config_path.empty()) cfg = PipelineConfig::from_json(read_json_file(a.config_path));
    auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--seed")) {
        cfg.seed = a.seed;
        cfg.fit.seed = a.seed;
    }
    if (passed("--dev-fraction")) cfg.dev_fraction = a.dev_fraction;
    if (passed("--clusters")) cfg.n_clusters = a.clusters;
    if (passed("--threshold-mode"))
        cfg.threshold_mode = threshold_mode_from_string(a.threshold_mode);
    if (passed("--binarize"))
        cfg.binarization.strategy = binarization_strategy_from_string(a.binarize);
    if (passed("--threshold")) cfg.binarization.threshold = a.threshold;
    if (passed("--quantile")) cfg.binarization.quantile_q = a.quantile_q;
    if (passed("--balanced")) cfg.binarization.balanced_accuracy = a.balanced;
    if (passed("--init")) {
        if (a.init == "heuristic")
            cfg.fit.init = FitConfig::Init::heuristic;
        else if (a.init == "majority_seeded")
            cfg.fit.init = FitConfig::Init::majority_seeded;
        else
            fail("unknown fit init: " + a.init);
    }
    if (passed("--lr")) cfg.fit.learning_rate = a.lr;
    if (passed("--max-iters")) cfg.fit.max_iters = a.max_iters;
    if (passed("--tol")) cfg.fit.tolerance = a.tol;
    if (passed("--lo-percentile")) cfg.normalization.lo_percentile = a.lo_percentile;
    if (passed("--hi-percentile")) cfg.normalization.hi_percentile = a.hi_percentile;
    return cfg;
}

void run_fit(const FitArgs& a, const CLI::App* cmd) {
    PipelineConfig cfg = resolve_fit_config(a, cmd);
    DatasetBundle bundle = load_from_args(a.data);
    FitOutput out = run_fit_pipeline(bundle, cfg);
    write_json_file(a.out, out.artifact);
    const ClusterFit& g = out.global_ref.clusters[0];
    std::printf("fit: kept=%zu prior=%.4f converged=%s final_loss=%.6e -> %s\n", g.kept.size(),
                g.prior, g.params.converged ? "true" : "false", g.params.final_loss,
                a.out.c_str());
}

// ---- select / export-distill ---------------------------------------------

struct SelectArgs {
    DatasetArgs data;
    std::string fit_path;
    std::string out = "selections.json";
};

void run_select(const SelectArgs& a) {
    DatasetBundle bundle = load_from_args(a.data);
    json artifact = read_json_file(a.fit_path);
    ApplyOutput res = apply_fit_artifact(bundle, artifact);
    json selections = json::array();
    for (int i = 0; i < bundle.n(); ++i) {
        int j = res.selection.j_star[i];
        selections.push_back(
            {{"query_id", bundle.query_ids[i]},
             {"response_index", j},
             {"posterior", res.posteriors[static_cast<std::size_t>(i) * bundle.K() + j]}});
    }
    json doc{{"artifact", "select"},
             {"dataset_hash", bundle.dataset_hash},
             {"fit_config_hash", artifact.value("config_hash", std::string())},
             {"fit_dataset_hash", artifact.value("dataset_hash", std::string())},
             {"selections", selections}};
    write_json_file(a.out, doc);
    std::printf("select: %d queries -> %s\n", bundle.n(), a.out.c_str());
}

void run_export_distill(const SelectArgs& a) {
    DatasetBundle bundle = load_from_args(a.data);
    json artifact = read_json_file(a.fit_path);
    ApplyOutput res = apply_fit_artifact(bundle, artifact);
    export_pseudolabels(res.posteriors, bundle, a.out);
    std::printf("export-distill: %d rows -> %s\n", bundle.n() * bundle.K(), a.out.c_str());
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    DatasetArgs data;
    std::string fit_path;
    std::string strategies = "auto";
    std::string ks;
    bool exclude_dev = false;
    double dev_fraction = 0.1;
    std::uint64_t seed = 0;
    int top_k = 0;
    double flops_gen_params = 0.0;
    std::string flops_verifier_params;
    double flops_tokens = 0.0;
    std::string out = "eval.json";
};

std::vector<std::uint8_t> eval_dev_mask(const EvalArgs& a, const json* artifact, int n) {
    double fraction = a.dev_fraction;
    std::uint64_t seed = a.seed;
    if (artifact != nullptr && artifact->contains("config")) {
        const json& cfg = artifact->at("config");
        fraction = cfg.value("dev_fraction", fraction);
        seed = cfg.value("seed", seed);
    }
    return make_dev_mask(n, fraction, seed);
}

void run_eval(const EvalArgs& a) {
    DatasetBundle bundle = load_from_args(a.data);
    if (!bundle.labels.has_labels()) fail("eval needs labels");
    const int n = bundle.n(), K = bundle.K(), m = bundle.m();

    json artifact;
    bool has_fit = !a.fit_path.empty();
    if (has_fit) artifact = read_json_file(a.fit_path);

    ScoreTensor normalized;
    if (has_fit) {
        std::vector<std::pair<double, double>> cutpoints;
        for (const auto& c : artifact.at("cutpoints"))
            cutpoints.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
        normalized = apply_cutpoints(bundle.scores, cutpoints);
    } else {
        normalized = normalize(bundle.scores, NormalizationSpec{}).tensor;
    }

    std::vector<std::uint8_t> dev =
        eval_dev_mask(a, has_fit ? &artifact : nullptr, n);
    std::vector<std::uint8_t> include(n, 1);
    if (a.exclude_dev)
        for (int i = 0; i < n; ++i) include[i] = dev[i] ? 0 : 1;

    std::vector<std::string> strategies = parse_string_list(a.strategies);
    if (a.strategies == "auto") {
        strategies = {"first_sample", "naive_ensemble"};
        if (bundle.labels.has_answers()) strategies.insert(strategies.begin() + 1, "majority_vote");
        if (has_fit) strategies.push_back("weaver");
    }

    std::vector<int> ks = a.ks.empty() ? std::vector<int>{K} : parse_int_list(a.ks);
    for (int k : ks)
        if (k < 1 || k > K) fail("ks entries must lie in [1, K]");

    const double pass_full = pass_at_k(bundle.labels, n, K, K, include);
    json report{{"artifact", "eval"},
                {"dataset_hash", bundle.dataset_hash},
                {"n", n},
                {"K", K},
                {"m", m},
                {"exclude_dev", a.exclude_dev}};
    if (has_fit) report["fit_config_hash"] = artifact.value("config_hash", std::string());

    json pk = json::object();
    for (int k : ks) pk[std::to_string(k)] = pass_at_k(bundle.labels, n, K, k, include);
    report["pass_at_k"] = pk;

    json strat_out = json::object();
    for (const std::string& name : strategies) {
        SelectionResult sel;
        if (name == "first_sample") {
            sel = first_sample(n);
        } else if (name == "majority_vote") {
            if (!bundle.labels.has_answers()) fail("majority_vote needs answers");
            sel = majority_vote(bundle.labels.answers, n, K);
        } else if (name == "naive_ensemble") {
            sel = naive_ensemble(normalized);
        } else if (name == "top_k_oracle") {
            sel = top_k_oracle_ensemble(normalized, bundle.labels, a.top_k > 0 ? a.top_k : m);
        } else if (name == "logreg") {
            std::vector<double> feat;
            std::vector<std::uint8_t> yv;
            int rows = 0;
            for (int i = 0; i < n; ++i) {
                if (!dev[i]) continue;
                for (int j = 0; j < K; ++j) {
                    const std::size_t r = static_cast<std::size_t>(i) * K + j;
                    feat.insert(feat.end(), normalized.scores.begin() + r * m,
                                normalized.scores.begin() + (r + 1) * m);
                    yv.push_back(bundle.labels.labels[r]);
                    ++rows;
                }
            }
            if (rows == 0) fail("logreg needs a labeled dev slice");
            LogRegModel model = logreg_fit(feat, yv, rows, m);
            std::vector<double> probs = logreg_predict(model, normalized.scores, n * K);
            sel = argmax_per_query(probs, n, K);
        } else if (name == "weaver") {
            if (!has_fit) fail("strategy weaver needs a fit artifact");
            sel = apply_fit_artifact(bundle, artifact).selection;
        } else {
            fail("unknown strategy: " + name);
        }
        double success = success_rate(sel, bundle.labels, n, K, include);
        strat_out[name] = {{"success_rate", success},
                           {"gap", generation_verification_gap(pass_full, success)}};
    }
    report["strategies"] = strat_out;

    {
        VoteTensor votes_all;
        const VoteTensor* votes_ptr = nullptr;
        if (has_fit) {
            std::vector<double> thresholds;
            for (const auto& t : artifact.at("thresholds"))
                thresholds.push_back(t.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : t.get<double>());
            votes_all = apply_thresholds(normalized, thresholds);
            votes_ptr = &votes_all;
        }
        DiagnosticsReport diag = per_verifier_diagnostics(normalized, votes_ptr, bundle.labels);
        json per = json::array();
        for (const auto& d : diag.per_verifier)
            per.push_back({{"id", d.id},
                           {"selection_accuracy", d.selection_accuracy},
                           {"mean_vote_accuracy", d.mean_vote_accuracy},
                           {"fpr", d.fpr}});
        report["diagnostics"] = {{"per_verifier", per},
                                 {"accuracy_range", diag.accuracy_range},
                                 {"mean_pairwise_pearson", diag.mean_pairwise_pearson},
                                 {"notes", diag.notes}};
    }

    if (bundle.labels.has_answers() && n >= 3) {
        DiversityCorrelation div =
            answer_diversity_correlation(bundle.labels.answers, bundle.labels, n, K);
        report["diversity"] = {{"pearson", div.pearson},
                               {"spearman", div.spearman},
                               {"kendall", div.kendall},
                               {"degenerate", div.degenerate}};
    }

    if (a.flops_gen_params > 0.0 && a.flops_tokens > 0.0) {
        std::vector<double> vp = parse_double_list(a.flops_verifier_params);
        report["flops"] = flops_estimate(a.flops_gen_params, vp, a.flops_tokens, K);
    }

    write_json_file(a.out, report);
    for (const std::string& name : strategies)
        std::printf("eval: %-16s success=%.4f gap=%.4f\n", name.c_str(),
                    strat_out[name]["success_rate"].get<double>(),
                    strat_out[name]["gap"].get<double>());
    std::printf("eval: report -> %s\n", a.out.c_str());
}

// ---- scaling-fit -----------------------------------------------------------

struct ScalingArgs {
    std::string input;
    std::string form = "selection_full";
    double holdout_fraction = 0.0;
    std::string out = "scaling.json";
};

std::string curve_hash(const std::vector<CurvePoint>& points) {
    Fnv1a h;
    for (const auto& p : points) {
        h.update_u64(static_cast<std::uint64_t>(p.k));
        h.update_double(p.value);
        h.update_double(p.se);
    }
    return h.hex();
}

void run_scaling_fit(const ScalingArgs& a) {
    std::vector<CurvePoint> points = load_curve_csv(a.input);
    std::string form = a.form;
    if (form == "coverage") form = "coverage_power";
    if (form == "selection") form = "selection_full";
    CurveForm cf = curve_form_from_string(form);

    if (!(a.holdout_fraction >= 0.0 && a.holdout_fraction < 1.0))
        fail("holdout fraction must lie in [0, 1)");
    std::size_t held = 0;
    if (a.holdout_fraction > 0.0) {
        held = static_cast<std::size_t>(
            std::floor(points.size() * a.holdout_fraction + 0.5));
        if (held == 0) held = 1;
    }
    if (held >= points.size()) fail("holdout leaves no fit points");
    std::vector<CurvePoint> fit_points(points.begin(), points.end() - held);

    ScalingFit fit = cf == CurveForm::coverage_power ? fit_coverage_power(fit_points)
                                                     : fit_selection_curve(fit_points);
    json doc = fit.to_json();
    doc["curve_hash"] = curve_hash(points);
    doc["points_fit"] = fit_points.size();
    doc["points_held_out"] = held;
    if (held > 0) {
        double sse = 0.0;
        for (std::size_t i = points.size() - held; i < points.size(); ++i) {
            double r = predict(fit, points[i].k) - points[i].value;
            sse += r * r;
        }
        doc["holdout_mse"] = sse / static_cast<double>(held);
    }
    write_json_file(a.out, doc);
    std::printf("scaling-fit: form=%s r2=%.4f mse=%.3e delta=%.2f -> %s\n", to_string(fit.form),
                fit.r2, fit.mse, fit.delta, a.out.c_str());
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
    std::string spec_path;
    std::string out = "synth.jsonl";
    std::string manifest;
    std::string truth;
    std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a, const CLI::App* cmd) {
    SynthSpec spec = SynthSpec::from_json(read_json_file(a.spec_path));
    if (cmd->count("--seed") > 0) spec.seed = a.seed;
    SynthResult res = generate(spec);
    std::string manifest = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
    std::string truth = a.truth.empty() ? a.out + ".truth.json" : a.truth;
    save_bundle(res.bundle, a.out, manifest);
    json truth_doc = res.truth;
    truth_doc["dataset_hash"] = res.bundle.dataset_hash;
    write_json_file(truth, truth_doc);
    std::printf("synth: n=%d K=%d m=%d -> %s\n", res.bundle.n(), res.bundle.K(), res.bundle.m(),
                a.out.c_str());
}

// ---- ingest -------------------------------------------------------------------

struct IngestArgs {
    DatasetArgs data;
    std::string out;
};

void run_ingest(const IngestArgs& a) {
    DatasetBundle bundle = load_from_args(a.data);
    ValidationReport report = validate(bundle);
    json doc = report.to_json();
    doc["dataset_hash"] = bundle.dataset_hash;
    if (!a.out.empty()) write_json_file(a.out, doc);
    std::printf("ingest: n=%d K=%d m=%d labels=%s answers=%s hash=%s\n", report.n, report.K,
                report.m, report.has_labels ? "yes" : "no", report.has_answers ? "yes" : "no",
                bundle.dataset_hash.c_str());
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"weak-verifier response selection pipeline"};
    app.require_subcommand(1);
    std::string active = "weaver";

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "validate a dataset and report stats");
    add_dataset_options(ingest, ingest_args.data);
    ingest->add_option("--out", ingest_args.out, "write the report JSON here");
    ingest->callback([&] {
        active = "ingest";
        run_ingest(ingest_args);
    });

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "estimate verifier accuracies and the class prior");
    add_dataset_options(fit, fit_args.data);
    fit->add_option("--config", fit_args.config_path, "pipeline config JSON (flags win)");
    fit->add_option("--out", fit_args.out, "fit artifact path");
    fit->add_option("--seed", fit_args.seed, "seed for the dev split and fit init");
    fit->add_option("--dev-fraction", fit_args.dev_fraction, "labeled dev share");
    fit->add_option("--clusters", fit_args.clusters, "difficulty clusters");
    fit->add_option("--threshold-mode", fit_args.threshold_mode,
                    "global, per_cluster, or per_model")
        ->check(CLI::IsMember({"global", "per_cluster", "per_model"}));
    fit->add_option("--binarize", fit_args.binarize,
                    "fixed_threshold, dev_adaptive, class_balance, or quantile");
    fit->add_option("--threshold", fit_args.threshold, "fixed binarization threshold");
    fit->add_option("--quantile", fit_args.quantile_q, "quantile strategy cut");
    fit->add_flag("--balanced", fit_args.balanced, "balanced dev accuracy objective");
    fit->add_option("--init", fit_args.init, "heuristic or majority_seeded");
    fit->add_option("--lr", fit_args.lr, "fit learning rate");
    fit->add_option("--max-iters", fit_args.max_iters, "fit iteration cap");
    fit->add_option("--tol", fit_args.tol, "fit loss-delta tolerance");
    fit->add_option("--lo-percentile", fit_args.lo_percentile, "normalization low percentile");
    fit->add_option("--hi-percentile", fit_args.hi_percentile, "normalization high percentile");
    fit->callback([&] {
        active = "fit";
        run_fit(fit_args, fit);
    });

    SelectArgs select_args;
    auto* select_cmd = app.add_subcommand("select", "pick responses with a fit artifact");
    add_dataset_options(select_cmd, select_args.data);
    select_cmd->add_option("--fit", select_args.fit_path, "fit artifact")->required();
    select_cmd->add_option("--out", select_args.out, "selections JSON path");
    select_cmd->callback([&] {
        active = "select";
        run_select(select_args);
    });

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score strategies against labels");
    add_dataset_options(eval_cmd, eval_args.data);
    eval_cmd->add_option("--fit", eval_args.fit_path, "fit artifact (enables weaver strategy)");
    eval_cmd->add_option("--strategies", eval_args.strategies,
                         "comma list: first_sample, majority_vote, naive_ensemble, "
                         "top_k_oracle, logreg, weaver");
    eval_cmd->add_option("--ks", eval_args.ks, "comma list of k values for pass@k");
    eval_cmd->add_flag("--exclude-dev", eval_args.exclude_dev,
                       "drop dev queries from every metric");
    eval_cmd->add_option("--dev-fraction", eval_args.dev_fraction,
                         "dev share when no fit artifact supplies one");
    eval_cmd->add_option("--seed", eval_args.seed, "dev-split seed when no fit artifact");
    eval_cmd->add_option("--top-k", eval_args.top_k, "verifier count for top_k_oracle");
    eval_cmd->add_option("--flops-gen-params", eval_args.flops_gen_params,
                         "generator parameter count");
    eval_cmd->add_option("--flops-verifier-params", eval_args.flops_verifier_params,
                         "comma list of verifier parameter counts");
    eval_cmd->add_option("--flops-tokens", eval_args.flops_tokens, "tokens per response");
    eval_cmd->add_option("--out", eval_args.out, "report JSON path");
    eval_cmd->callback([&] {
        active = "eval";
        run_eval(eval_args);
    });

    ScalingArgs scaling_args;
    auto* scaling = app.add_subcommand("scaling-fit", "fit a saturating scaling curve");
    scaling->add_option("--input", scaling_args.input, "curve CSV (k,value[,stderr])")
        ->required();
    scaling->add_option("--form", scaling_args.form, "coverage_power or selection_full");
    scaling->add_option("--holdout-fraction", scaling_args.holdout_fraction,
                        "tail share held out for prediction MSE");
    scaling->add_option("--out", scaling_args.out, "fit JSON path");
    scaling->callback([&] {
        active = "scaling-fit";
        run_scaling_fit(scaling_args);
    });

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", synth_args.spec_path, "generator spec JSON")->required();
    synth->add_option("--out", synth_args.out, "dataset JSONL path");
    synth->add_option("--manifest", synth_args.manifest, "manifest path");
    synth->add_option("--truth", synth_args.truth, "true-parameter JSON path");
    synth->add_option("--seed", synth_args.seed, "override the spec seed");
    synth->callback([&] {
        active = "synth";
        run_synth(synth_args, synth);
    });

    SelectArgs distill_args;
    distill_args.out = "pseudolabels.jsonl";
    auto* distill = app.add_subcommand("export-distill", "write posterior pseudolabels");
    add_dataset_options(distill, distill_args.data);
    distill->add_option("--fit", distill_args.fit_path, "fit artifact")->required();
    distill->add_option("--out", distill_args.out, "pseudolabel JSONL path");
    distill->callback([&] {
        active = "export-distill";
        run_export_distill(distill_args);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        if (code == 0) return 0;
        emit_error(active, "usage", e.what());
        return 2;
    } catch (const Error& e) {
        emit_error(active, "domain", e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error(active, "unexpected", e.what());
        return 1;
    }
    return 0;
}

}  // namespace weaver
