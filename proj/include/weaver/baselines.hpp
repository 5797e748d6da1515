#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weaver/dataset.hpp"
#include "weaver/label_model.hpp"

namespace weaver {

// Always picks the first response.
SelectionResult first_sample(int n);

// Most frequent answer string (whitespace-trimmed exact match). Group ties go
// to the group seen earliest; the winner's earliest index is returned.
SelectionResult majority_vote(const std::vector<std::string>& answers, int n, int K);

std::string trim_answer(const std::string& s);

// argmax of the unweighted mean verifier score; ties to the smallest index.
SelectionResult naive_ensemble(const ScoreTensor& normalized);

// Rank verifiers by their individual selection success on labels, keep the
// top k columns, then run the naive ensemble on those. Oracle method.
SelectionResult top_k_oracle_ensemble(const ScoreTensor& normalized, const LabelSet& labels,
                                      int k);

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::string trained_on = "continuous";  // or "binary"

    json to_json() const;
    static LogRegModel from_json(const json& doc);
};

// L2-regularized logistic regression by full-batch gradient descent, run to
// gradient norm <= 1e-6 or 10k iterations. Training rows are a seeded sample
// of the given fraction; the bias is not regularized.
LogRegModel logreg_fit(const std::vector<double>& features, const std::vector<std::uint8_t>& y,
                       int rows, int m, double l2 = 1e-4, double train_fraction = 1.0,
                       std::uint64_t seed = 0);

std::vector<double> logreg_predict(const LogRegModel& model, const std::vector<double>& features,
                                   int rows);

}  // namespace weaver
