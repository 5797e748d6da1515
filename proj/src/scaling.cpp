#include "weaver/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "weaver/rng.hpp"

namespace weaver {

void validate_curve(const std::vector<CurvePoint>& points) {
    if (points.empty()) fail("curve has no points");
    int prev = 0;
    for (const auto& p : points) {
        if (p.k < 1) fail("curve k values must be >= 1");
        if (p.k <= prev) fail("curve k values must be strictly increasing");
        if (!std::isfinite(p.value)) fail("non-finite curve value");
        prev = p.k;
    }
}

std::vector<CurvePoint> load_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open curve file: " + path);
    std::vector<CurvePoint> points;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first && !cells.empty() && cells[0] == "k") {
            first = false;
            continue;  // header row
        }
        first = false;
        if (cells.size() < 2) fail("curve row needs k,value: " + line);
        CurvePoint p;
        try {
            p.k = std::stoi(cells[0]);
            p.value = std::stod(cells[1]);
            if (cells.size() > 2 && !cells[2].empty()) p.se = std::stod(cells[2]);
        } catch (const std::exception&) {
            fail("unparseable curve row: " + line);
        }
        points.push_back(p);
    }
    validate_curve(points);
    return points;
}

void save_curve_csv(const std::vector<CurvePoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write curve file: " + path);
    bool any_se = std::any_of(points.begin(), points.end(),
                              [](const CurvePoint& p) { return p.se >= 0.0; });
    out << (any_se ? "k,value,stderr\n" : "k,value\n");
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.value);
        out << p.k << ',' << buf;
        if (any_se) {
            out << ',';  // empty cell keeps "no stderr" distinct from 0
            if (p.se >= 0.0) {
                std::snprintf(buf, sizeof(buf), "%.17g", p.se);
                out << buf;
            }
        }
        out << '\n';
    }
}

const char* to_string(CurveForm f) {
    return f == CurveForm::coverage_power ? "coverage_power" : "selection_full";
}

CurveForm curve_form_from_string(const std::string& s) {
    if (s == "coverage_power") return CurveForm::coverage_power;
    if (s == "selection_full") return CurveForm::selection_full;
    fail("unknown curve form: " + s);
}

nlohmann::json ScalingFit::to_json() const {
    return nlohmann::json{
        {"form", to_string(form)}, {"floor", floor},   {"ceil", ceil},
        {"zeta", zeta},            {"alpha", alpha},   {"pi_eff", pi_eff},
        {"gamma", gamma},          {"delta", delta},   {"r2", r2},
        {"mse", mse},              {"final_loss", final_loss},
        {"degenerate", degenerate}};
}

ScalingFit ScalingFit::from_json(const nlohmann::json& doc) {
    ScalingFit f;
    f.form = curve_form_from_string(doc.at("form").get<std::string>());
    f.floor = doc.at("floor").get<double>();
    f.ceil = doc.at("ceil").get<double>();
    f.zeta = doc.at("zeta").get<double>();
    f.alpha = doc.at("alpha").get<double>();
    f.pi_eff = doc.at("pi_eff").get<double>();
    f.gamma = doc.at("gamma").get<double>();
    f.delta = doc.at("delta").get<double>();
    f.r2 = doc.at("r2").get<double>();
    f.mse = doc.at("mse").get<double>();
    f.final_loss = doc.at("final_loss").get<double>();
    f.degenerate = doc.value("degenerate", false);
    return f;
}

double huber(double r, double delta) {
    double a = std::fabs(r);
    if (a <= delta) return 0.5 * r * r;
    return delta * (a - 0.5 * delta);
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

struct CurveParams {
    double floor = 0.0;
    double ceil = 1.0;
    double zeta = 0.0;
    double alpha = 0.0;
    double pi = 1.0;
    double gamma = 0.0;
};

// theta layout: [tc, tf, tz, ta] (+ [tp, tg] for selection).
// ceil = s(tc), floor = ceil*s(tf), zeta = 10 s(tz), alpha = 3 s(ta),
// pi = s(tp), gamma = 2.5 s(tg). Keeps every iterate inside the box.
CurveParams decode(const std::vector<double>& theta, bool selection) {
    CurveParams p;
    p.ceil = sigmoid(theta[0]);
    p.floor = p.ceil * sigmoid(theta[1]);
    p.zeta = 10.0 * sigmoid(theta[2]);
    p.alpha = 3.0 * sigmoid(theta[3]);
    if (selection) {
        p.pi = sigmoid(theta[4]);
        p.gamma = 2.5 * sigmoid(theta[5]);
    }
    return p;
}

double model_value(const CurveParams& p, double k, bool selection) {
    double cov = std::exp(-p.zeta * std::pow(k, -p.alpha));
    double v = 1.0;
    if (selection) {
        double pi = std::clamp(p.pi, 1e-12, 1.0 - 1e-12);
        v = 1.0 - std::pow(1.0 - pi, std::pow(k, p.gamma));
    }
    return p.floor + (p.ceil - p.floor) * cov * v;
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

LossGrad loss_and_grad(const std::vector<double>& theta,
                       const std::vector<CurvePoint>& points, bool selection,
                       double delta) {
    size_t dim = theta.size();
    LossGrad out;
    out.grad.assign(dim, 0.0);
    CurveParams p = decode(theta, selection);
    double span = p.ceil - p.floor;
    double sc = sigmoid(theta[0]);
    double sf = sigmoid(theta[1]);
    double sz = sigmoid(theta[2]);
    double sa = sigmoid(theta[3]);
    double sp = selection ? sigmoid(theta[4]) : 1.0;
    double sg = selection ? sigmoid(theta[5]) : 0.0;
    double n = static_cast<double>(points.size());
    for (const auto& pt : points) {
        double k = static_cast<double>(pt.k);
        double lnk = std::log(k);
        double u = std::pow(k, -p.alpha);
        double cov = std::exp(-p.zeta * u);
        double v = 1.0, dv_dpi = 0.0, dv_dgamma = 0.0;
        if (selection) {
            double pi = std::clamp(p.pi, 1e-12, 1.0 - 1e-12);
            double w = std::pow(k, p.gamma);
            double q = std::pow(1.0 - pi, w);
            v = 1.0 - q;
            dv_dpi = w * q / (1.0 - pi);
            dv_dgamma = -q * std::log(1.0 - pi) * w * lnk;
        }
        double pred = p.floor + span * cov * v;
        double r = pred - pt.value;
        out.loss += huber(r, delta) / n;
        double psi = (std::fabs(r) <= delta ? r : delta * (r > 0 ? 1.0 : -1.0)) / n;
        double d_floor = 1.0 - cov * v;
        double d_ceil = cov * v;
        double d_zeta = span * v * (-u * cov);
        double d_alpha = span * v * (p.zeta * lnk * u * cov);
        // floor = ceil * s(tf) couples tc to both floor and ceil.
        out.grad[0] += psi * (d_ceil + d_floor * sf) * sc * (1.0 - sc);
        out.grad[1] += psi * d_floor * p.ceil * sf * (1.0 - sf);
        out.grad[2] += psi * d_zeta * 10.0 * sz * (1.0 - sz);
        out.grad[3] += psi * d_alpha * 3.0 * sa * (1.0 - sa);
        if (selection) {
            double d_pi = span * cov * dv_dpi;
            double d_gamma = span * cov * dv_dgamma;
            out.grad[4] += psi * d_pi * sp * (1.0 - sp);
            out.grad[5] += psi * d_gamma * 2.5 * sg * (1.0 - sg);
        }
    }
    return out;
}

double loss_only(const std::vector<double>& theta,
                 const std::vector<CurvePoint>& points, bool selection,
                 double delta) {
    CurveParams p = decode(theta, selection);
    double acc = 0.0;
    for (const auto& pt : points)
        acc += huber(model_value(p, pt.k, selection) - pt.value, delta);
    return acc / static_cast<double>(points.size());
}

std::vector<double> adam_minimize(std::vector<double> theta,
                                  const std::vector<CurvePoint>& points,
                                  bool selection, double delta) {
    const int iters = 4000;
    const double lr0 = 0.05, lr_min = 1e-4;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    size_t dim = theta.size();
    std::vector<double> m(dim, 0.0), v(dim, 0.0);
    std::vector<double> best = theta;
    double best_loss = loss_only(theta, points, selection, delta);
    double pm1 = 1.0, pm2 = 1.0;
    for (int t = 1; t <= iters; ++t) {
        LossGrad lg = loss_and_grad(theta, points, selection, delta);
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            best = theta;
        }
        if (lg.loss < 1e-18) break;
        double lr = lr_min + 0.5 * (lr0 - lr_min) *
                                 (1.0 + std::cos(M_PI * t / static_cast<double>(iters)));
        pm1 *= b1;
        pm2 *= b2;
        double gmax = 0.0;
        for (size_t d = 0; d < dim; ++d) {
            m[d] = b1 * m[d] + (1.0 - b1) * lg.grad[d];
            v[d] = b2 * v[d] + (1.0 - b2) * lg.grad[d] * lg.grad[d];
            double mh = m[d] / (1.0 - pm1);
            double vh = v[d] / (1.0 - pm2);
            theta[d] -= lr * mh / (std::sqrt(vh) + eps);
            gmax = std::max(gmax, std::fabs(lg.grad[d]));
        }
        if (gmax < 1e-14) break;
    }
    double last = loss_only(theta, points, selection, delta);
    if (last < best_loss) best = theta;
    return best;
}

// Nelder-Mead polish in theta space; deterministic, derivative-free.
std::vector<double> simplex_minimize(std::vector<double> start,
                                     const std::vector<CurvePoint>& points,
                                     bool selection, double delta) {
    size_t dim = start.size();
    auto f = [&](const std::vector<double>& x) {
        return loss_only(x, points, selection, delta);
    };
    std::vector<std::vector<double>> simplex(dim + 1, start);
    std::vector<double> fv(dim + 1);
    for (size_t d = 0; d < dim; ++d) simplex[d + 1][d] += 0.25;
    for (size_t i = 0; i <= dim; ++i) fv[i] = f(simplex[i]);
    std::vector<size_t> order(dim + 1);
    for (int iter = 0; iter < 800; ++iter) {
        for (size_t i = 0; i <= dim; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        size_t lo = order[0], hi = order[dim], second = order[dim - 1];
        if (fv[hi] - fv[lo] < 1e-16 * (1.0 + std::fabs(fv[lo]))) break;
        std::vector<double> centroid(dim, 0.0);
        for (size_t i = 0; i <= dim; ++i) {
            if (i == hi) continue;
            for (size_t d = 0; d < dim; ++d) centroid[d] += simplex[i][d] / dim;
        }
        auto blend = [&](double coef) {
            std::vector<double> x(dim);
            for (size_t d = 0; d < dim; ++d)
                x[d] = centroid[d] + coef * (simplex[hi][d] - centroid[d]);
            return x;
        };
        std::vector<double> refl = blend(-1.0);
        double fr = f(refl);
        if (fr < fv[lo]) {
            std::vector<double> exp_pt = blend(-2.0);
            double fe = f(exp_pt);
            if (fe < fr) {
                simplex[hi] = exp_pt;
                fv[hi] = fe;
            } else {
                simplex[hi] = refl;
                fv[hi] = fr;
            }
        } else if (fr < fv[second]) {
            simplex[hi] = refl;
            fv[hi] = fr;
        } else {
            std::vector<double> ctr = blend(fr < fv[hi] ? -0.5 : 0.5);
            double fc = f(ctr);
            if (fc < std::min(fr, fv[hi])) {
                simplex[hi] = ctr;
                fv[hi] = fc;
            } else {
                for (size_t i = 0; i <= dim; ++i) {
                    if (i == lo) continue;
                    for (size_t d = 0; d < dim; ++d)
                        simplex[i][d] = simplex[lo][d] + 0.5 * (simplex[i][d] - simplex[lo][d]);
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    size_t best = 0;
    for (size_t i = 1; i <= dim; ++i)
        if (fv[i] < fv[best]) best = i;
    return simplex[best];
}

std::vector<std::vector<double>> make_starts(const std::vector<CurvePoint>& points,
                                             bool selection) {
    size_t dim = selection ? 6 : 4;
    double lo = points[0].value, hi = points[0].value;
    for (const auto& p : points) {
        lo = std::min(lo, p.value);
        hi = std::max(hi, p.value);
    }
    double ceil0 = std::clamp(hi + 0.02, 0.02, 0.995);
    double frac0 = std::clamp(ceil0 > 0 ? lo / ceil0 : 0.5, 0.01, 0.99);
    std::vector<double> heur = {logit(ceil0), logit(frac0), logit(0.1), logit(1.0 / 3.0)};
    if (selection) {
        heur.push_back(logit(0.5));
        heur.push_back(logit(0.4));
    }
    std::vector<std::vector<double>> starts{heur};
    for (int s = 0; s < 8; ++s) {
        Rng rng(0x5CA1E5u + static_cast<uint64_t>(s));
        std::vector<double> theta(dim);
        for (size_t d = 0; d < dim; ++d) theta[d] = rng.uniform(-2.5, 2.5);
        starts.push_back(std::move(theta));
    }
    return starts;
}

ScalingFit fit_curve(const std::vector<CurvePoint>& points, bool selection) {
    validate_curve(points);
    size_t min_points = selection ? 6 : 4;
    if (points.size() < min_points)
        fail(std::string(selection ? "selection" : "coverage") + " fit needs at least " +
             std::to_string(min_points) + " points");

    const double deltas[] = {0.01, 0.05, 0.1, 0.25, 0.5};
    auto starts = make_starts(points, selection);

    std::vector<double> best_theta;
    double best_mse = std::numeric_limits<double>::infinity();
    double best_delta = deltas[0];
    for (double delta : deltas) {
        std::vector<double> delta_theta;
        double delta_loss = std::numeric_limits<double>::infinity();
        for (const auto& start : starts) {
            auto theta = adam_minimize(start, points, selection, delta);
            theta = simplex_minimize(theta, points, selection, delta);
            double l = loss_only(theta, points, selection, delta);
            if (l < delta_loss) {
                delta_loss = l;
                delta_theta = theta;
            }
        }
        CurveParams p = decode(delta_theta, selection);
        double sse = 0.0;
        for (const auto& pt : points) {
            double r = model_value(p, pt.k, selection) - pt.value;
            sse += r * r;
        }
        double mse = sse / static_cast<double>(points.size());
        if (mse < best_mse) {
            best_mse = mse;
            best_theta = delta_theta;
            best_delta = delta;
        }
    }

    CurveParams p = decode(best_theta, selection);
    ScalingFit fit;
    fit.form = selection ? CurveForm::selection_full : CurveForm::coverage_power;
    fit.floor = p.floor;
    fit.ceil = p.ceil;
    fit.zeta = p.zeta;
    fit.alpha = p.alpha;
    fit.pi_eff = selection ? p.pi : 1.0;
    fit.gamma = selection ? p.gamma : 0.0;
    fit.delta = best_delta;
    fit.mse = best_mse;
    fit.final_loss = loss_only(best_theta, points, selection, best_delta);

    double mean = 0.0;
    for (const auto& pt : points) mean += pt.value / static_cast<double>(points.size());
    double ss_tot = 0.0;
    for (const auto& pt : points) ss_tot += (pt.value - mean) * (pt.value - mean);
    if (ss_tot < 1e-18) {
        fit.degenerate = true;
        fit.r2 = 0.0;
    } else {
        fit.r2 = 1.0 - (best_mse * static_cast<double>(points.size())) / ss_tot;
    }
    return fit;
}

}  // namespace

double predict(const ScalingFit& fit, double k) {
    if (k < 1.0) fail("predict needs k >= 1");
    CurveParams p;
    p.floor = fit.floor;
    p.ceil = fit.ceil;
    p.zeta = fit.zeta;
    p.alpha = fit.alpha;
    p.pi = fit.pi_eff;
    p.gamma = fit.gamma;
    return model_value(p, k, fit.form == CurveForm::selection_full);
}

ScalingFit fit_coverage_power(const std::vector<CurvePoint>& points) {
    return fit_curve(points, false);
}

ScalingFit fit_selection_curve(const std::vector<CurvePoint>& points) {
    return fit_curve(points, true);
}

double beta_passk_closed_form(double a, double b, int k) {
    if (a <= 0.0 || b <= 0.0) fail("beta parameters must be positive");
    if (k < 0) fail("k must be >= 0");
    if (k == 0) return 0.0;
    double log_ratio = std::lgamma(b + k) + std::lgamma(a + b) -
                       std::lgamma(a + b + k) - std::lgamma(b);
    return 1.0 - std::exp(log_ratio);
}

}  // namespace weaver
