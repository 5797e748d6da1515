#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "weaver/common.hpp"

namespace weaver {

struct CurvePoint {
    int k = 1;
    double value = 0.0;
    double se = -1.0;  // optional reported stderr; negative = absent
};

// Throws unless k values are >= 1 and strictly increasing.
void validate_curve(const std::vector<CurvePoint>& points);

std::vector<CurvePoint> load_curve_csv(const std::string& path);
void save_curve_csv(const std::vector<CurvePoint>& points, const std::string& path);

enum class CurveForm { coverage_power, selection_full };

const char* to_string(CurveForm f);
CurveForm curve_form_from_string(const std::string& s);

// Saturating fit of a coverage or selection curve:
//   coverage_power:  floor + (ceil-floor) * exp(-zeta * k^-alpha)
//   selection_full:  floor + (ceil-floor) * exp(-zeta * k^-alpha)
//                          * (1 - (1-pi)^(k^gamma))
// Box constraints: floor <= ceil in [0,1], zeta in [0,10], alpha in [0,3],
// pi in [0,1], gamma in [0,2.5].
struct ScalingFit {
    CurveForm form = CurveForm::coverage_power;
    double floor = 0.0;
    double ceil = 1.0;
    double zeta = 0.0;
    double alpha = 0.0;
    double pi_eff = 1.0;   // selection_full only
    double gamma = 0.0;    // selection_full only
    double delta = 0.1;    // Huber knee chosen by the fit
    double r2 = 0.0;
    double mse = 0.0;
    double final_loss = 0.0;  // mean Huber at the chosen delta
    bool degenerate = false;  // constant series; r2 undefined and forced to 0

    nlohmann::json to_json() const;
    static ScalingFit from_json(const nlohmann::json& doc);
};

double huber(double r, double delta);

double predict(const ScalingFit& fit, double k);

// Huber-loss fit over the delta grid {0.01, 0.05, 0.1, 0.25, 0.5}; each delta
// is optimized from multiple seeded starts (Adam through a logistic box
// reparameterization plus a simplex polish) and the winner is the delta whose
// parameters minimize MSE on the fit points. Deterministic.
ScalingFit fit_coverage_power(const std::vector<CurvePoint>& points);
ScalingFit fit_selection_curve(const std::vector<CurvePoint>& points);

// 1 - B(a, b+k)/B(a, b) via log-gamma differences.
double beta_passk_closed_form(double a, double b, int k);

}  // namespace weaver
