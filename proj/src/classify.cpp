#include "cdp/classify.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cdp/rng.hpp"

using nlohmann::json;

namespace cdp {

std::vector<double> Standardization::apply(const std::vector<double>& v) const {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / scale[i];
    return out;
}

Standardization standardize_fit(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 2) throw ParameterError("standardize_fit: need at least 2 vectors");
    std::size_t dim = rows.front().size();
    Standardization s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    s.constant.assign(dim, 0);

    for (const auto& r : rows) {
        if (r.size() != dim) throw DimensionError("standardize_fit: ragged rows");
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += r[i];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    for (std::size_t i = 0; i < dim; ++i) {
        double var = 0.0;
        for (const auto& r : rows) var += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
        var /= static_cast<double>(rows.size());
        if (var < 1e-24) {
            s.constant[i] = 1;
            s.scale[i] = 1.0;
        } else {
            s.scale[i] = std::sqrt(var);
        }
    }
    return s;
}

namespace {

double rbf(const std::vector<double>& a, const std::vector<double>& b, double gamma) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-gamma * d2);
}

std::vector<double> subset_of(const MetricVector& v, const std::vector<int>& subset) {
    std::vector<double> out;
    out.reserve(subset.size());
    for (int i : subset) {
        if (i < 0 || i > 3) throw ParameterError("metric subset index out of range");
        out.push_back(v[i]);
    }
    return out;
}

struct DualProblem {
    std::vector<double> upper;  // per-alpha box
    double sum_target = 0.0;    // y^T alpha
    std::vector<double> p;      // linear term
};

DualProblem make_problem(SvmKind kind, double nu_or_c, std::size_t n) {
    DualProblem prob;
    if (kind == SvmKind::one_class) {
        double nu = nu_or_c;
        if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("one-class svm: nu must be in (0,1]");
        prob.upper.assign(n, 1.0);
        prob.sum_target = nu * static_cast<double>(n);
        prob.p.assign(n, 0.0);
    } else {
        double c = nu_or_c;
        if (!(c > 0.0)) throw ParameterError("two-class svm: C must be > 0");
        prob.upper.assign(n, c);
        prob.sum_target = 0.0;
        prob.p.assign(n, -1.0);
    }
    return prob;
}

}  // namespace

SvmSolveResult solve_svm_dual(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                              SvmKind kind, double nu_or_c, double gamma, double tol,
                              long max_updates) {
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n) throw ParameterError("svm solve: bad problem size");
    DualProblem prob = make_problem(kind, nu_or_c, n);

    // dense kernel; protocol problems are a few hundred points
    std::vector<std::vector<double>> K(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) K[i][j] = K[j][i] = rbf(x[i], x[j], gamma);

    SvmSolveResult res;
    res.alpha.assign(n, 0.0);
    if (kind == SvmKind::one_class) {
        double remaining = prob.sum_target;
        for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
            res.alpha[i] = std::min(1.0, remaining);
            remaining -= res.alpha[i];
        }
    }

    auto Q = [&](std::size_t i, std::size_t j) {
        return static_cast<double>(y[i]) * static_cast<double>(y[j]) * K[i][j];
    };

    std::vector<double> G(n);
    for (std::size_t i = 0; i < n; ++i) {
        G[i] = prob.p[i];
        for (std::size_t j = 0; j < n; ++j)
            if (res.alpha[j] != 0.0) G[i] += Q(i, j) * res.alpha[j];
    }

    constexpr double kTau = 1e-12;
    long updates = 0;
    while (true) {
        // maximal violating pair, second-order j selection
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i = -1;
        for (std::size_t t = 0; t < n; ++t) {
            bool in_up = y[t] == 1 ? res.alpha[t] < prob.upper[t] : res.alpha[t] > 0.0;
            if (in_up && -y[t] * G[t] >= gmax) {
                gmax = -y[t] * G[t];
                i = static_cast<std::ptrdiff_t>(t);
            }
        }
        std::ptrdiff_t j = -1;
        double obj_min = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            bool in_low = y[t] == 1 ? res.alpha[t] > 0.0 : res.alpha[t] < prob.upper[t];
            if (!in_low) continue;
            double neg_ygt = -y[t] * G[t];
            if (y[t] * G[t] >= gmax2) gmax2 = y[t] * G[t];
            double grad_diff = gmax - neg_ygt;
            if (grad_diff > 0.0 && i >= 0) {
                double a = K[i][i] + K[t][t] - 2.0 * K[i][t];
                if (a <= 0.0) a = kTau;
                double obj = -grad_diff * grad_diff / a;
                if (obj < obj_min) {
                    obj_min = obj;
                    j = static_cast<std::ptrdiff_t>(t);
                }
            }
        }

        if (i < 0 || j < 0 || gmax + gmax2 < tol) break;
        if (++updates > max_updates)
            throw TrainingError("svm solve: no convergence within the pair-update cap");

        std::size_t ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
        double old_ai = res.alpha[ii], old_aj = res.alpha[jj];
        double ci = prob.upper[ii], cj = prob.upper[jj];

        if (y[ii] != y[jj]) {
            double quad = K[ii][ii] + K[jj][jj] + 2.0 * K[ii][jj];
            if (quad <= 0.0) quad = kTau;
            double delta = (-G[ii] - G[jj]) / quad;
            double diff = res.alpha[ii] - res.alpha[jj];
            res.alpha[ii] += delta;
            res.alpha[jj] += delta;
            if (diff > 0.0) {
                if (res.alpha[jj] < 0.0) {
                    res.alpha[jj] = 0.0;
                    res.alpha[ii] = diff;
                }
            } else {
                if (res.alpha[ii] < 0.0) {
                    res.alpha[ii] = 0.0;
                    res.alpha[jj] = -diff;
                }
            }
            if (diff > ci - cj) {
                if (res.alpha[ii] > ci) {
                    res.alpha[ii] = ci;
                    res.alpha[jj] = ci - diff;
                }
            } else {
                if (res.alpha[jj] > cj) {
                    res.alpha[jj] = cj;
                    res.alpha[ii] = cj + diff;
                }
            }
        } else {
            double quad = K[ii][ii] + K[jj][jj] - 2.0 * K[ii][jj];
            if (quad <= 0.0) quad = kTau;
            double delta = (G[ii] - G[jj]) / quad;
            double sum = res.alpha[ii] + res.alpha[jj];
            res.alpha[ii] -= delta;
            res.alpha[jj] += delta;
            if (sum > ci) {
                if (res.alpha[ii] > ci) {
                    res.alpha[ii] = ci;
                    res.alpha[jj] = sum - ci;
                }
            } else {
                if (res.alpha[jj] < 0.0) {
                    res.alpha[jj] = 0.0;
                    res.alpha[ii] = sum;
                }
            }
            if (sum > cj) {
                if (res.alpha[jj] > cj) {
                    res.alpha[jj] = cj;
                    res.alpha[ii] = sum - cj;
                }
            } else {
                if (res.alpha[ii] < 0.0) {
                    res.alpha[ii] = 0.0;
                    res.alpha[jj] = sum;
                }
            }
        }

        double d_ai = res.alpha[ii] - old_ai, d_aj = res.alpha[jj] - old_aj;
        for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, ii) * d_ai + Q(t, jj) * d_aj;
    }
    res.updates = updates;

    // offset from free points, midpoint of active bounds otherwise
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    int nfree = 0;
    for (std::size_t t = 0; t < n; ++t) {
        double yg = y[t] * G[t];
        if (res.alpha[t] >= prob.upper[t] - 1e-15) {
            if (y[t] == -1)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else if (res.alpha[t] <= 1e-15) {
            if (y[t] == 1)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else {
            ++nfree;
            sum_free += yg;
        }
    }
    res.rho = nfree > 0 ? sum_free / nfree : 0.5 * (ub + lb);
    return res;
}

double svm_kkt_gap(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                   SvmKind kind, double nu_or_c, double gamma, const std::vector<double>& alpha) {
    const std::size_t n = x.size();
    DualProblem prob = make_problem(kind, nu_or_c, n);
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        double g = prob.p[t];
        for (std::size_t j = 0; j < n; ++j)
            if (alpha[j] != 0.0)
                g += static_cast<double>(y[t]) * y[j] * rbf(x[t], x[j], gamma) * alpha[j];
        bool in_up = y[t] == 1 ? alpha[t] < prob.upper[t] - 1e-12 : alpha[t] > 1e-12;
        bool in_low = y[t] == 1 ? alpha[t] > 1e-12 : alpha[t] < prob.upper[t] - 1e-12;
        if (in_up) gmax = std::max(gmax, -y[t] * g);
        if (in_low) gmax2 = std::max(gmax2, y[t] * g);
    }
    return gmax + gmax2;
}

namespace {

SvmModel finish_model(SvmModel model, const std::vector<std::vector<double>>& xs,
                      const std::vector<int>& y, const SvmSolveResult& sol) {
    model.rho = sol.rho;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (std::abs(sol.alpha[i]) > 1e-12) {
            model.support_vectors.push_back(xs[i]);
            model.dual_coef.push_back(y[i] * sol.alpha[i]);
        }
    }
    model.diag_x = xs;
    model.diag_y = y;
    model.diag_alpha = sol.alpha;
    return model;
}

}  // namespace

SvmModel train_one_class(const std::vector<MetricVector>& train, double nu, double gamma,
                         std::uint64_t seed, const std::vector<int>& metric_subset) {
    (void)seed;  // the dual solve is deterministic; seed is part of the contract only
    if (train.size() < 10) throw ParameterError("train_one_class: need at least 10 vectors");
    SvmModel model;
    model.kind = SvmKind::one_class;
    model.gamma = gamma;
    model.nu = nu;
    model.metric_subset = metric_subset;

    std::vector<std::vector<double>> raw;
    raw.reserve(train.size());
    for (const auto& v : train) raw.push_back(subset_of(v, metric_subset));
    model.standardization = standardize_fit(raw);
    std::vector<std::vector<double>> xs;
    xs.reserve(raw.size());
    for (const auto& r : raw) xs.push_back(model.standardization.apply(r));

    std::vector<int> y(xs.size(), 1);
    SvmSolveResult sol = solve_svm_dual(xs, y, SvmKind::one_class, nu, gamma);
    return finish_model(std::move(model), xs, y, sol);
}

SvmModel train_two_class(const std::vector<MetricVector>& pos, const std::vector<MetricVector>& neg,
                         double C, double gamma, std::uint64_t seed,
                         const std::vector<int>& metric_subset) {
    (void)seed;
    if (pos.empty() || neg.empty())
        throw ParameterError("train_two_class: both classes must be nonempty");
    SvmModel model;
    model.kind = SvmKind::two_class;
    model.gamma = gamma;
    model.C = C;
    model.metric_subset = metric_subset;

    std::vector<std::vector<double>> raw;
    std::vector<int> y;
    for (const auto& v : pos) {
        raw.push_back(subset_of(v, metric_subset));
        y.push_back(1);
    }
    for (const auto& v : neg) {
        raw.push_back(subset_of(v, metric_subset));
        y.push_back(-1);
    }
    model.standardization = standardize_fit(raw);
    std::vector<std::vector<double>> xs;
    xs.reserve(raw.size());
    for (const auto& r : raw) xs.push_back(model.standardization.apply(r));

    SvmSolveResult sol = solve_svm_dual(xs, y, SvmKind::two_class, C, gamma);
    return finish_model(std::move(model), xs, y, sol);
}

double decision_value(const SvmModel& model, const std::vector<double>& raw_subset) {
    if (model.support_vectors.empty())
        throw ParameterError("svm predict: model has no support vectors");
    std::vector<double> z = model.standardization.apply(raw_subset);
    double f = -model.rho;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
        f += model.dual_coef[i] * rbf(model.support_vectors[i], z, model.gamma);
    return f;
}

Prediction predict(const SvmModel& model, const MetricVector& v) {
    double f = decision_value(model, subset_of(v, model.metric_subset));
    return {f > 0.0 ? Label::original : Label::fake, f};
}

ProtocolResult evaluate_protocol(const std::vector<MetricVector>& originals,
                                 const std::vector<MetricVector>& fakes,
                                 const ProtocolConfig& cfg) {
    if (cfg.train_size < 10) throw ProtocolError("protocol: train_size too small");
    if (cfg.runs < 1) throw ProtocolError("protocol: need at least one run");
    if (originals.size() <= static_cast<std::size_t>(cfg.train_size))
        throw ProtocolError("protocol: not enough originals for a held-out split (" +
                            std::to_string(originals.size()) + " <= " +
                            std::to_string(cfg.train_size) + ")");
    if (fakes.empty()) throw ProtocolError("protocol: no fakes provided");
    if (cfg.kind == SvmKind::two_class &&
        fakes.size() <= static_cast<std::size_t>(cfg.train_size))
        throw ProtocolError("protocol: not enough fakes for a two-class held-out split");

    // canonical order so the result is independent of caller ordering
    auto canon = [](std::vector<MetricVector> v) {
        std::sort(v.begin(), v.end(), [](const MetricVector& a, const MetricVector& b) {
            for (int i = 0; i < 4; ++i) {
                if (a[i] < b[i]) return true;
                if (a[i] > b[i]) return false;
            }
            return false;
        });
        return v;
    };
    std::vector<MetricVector> orig = canon(originals);
    std::vector<MetricVector> fake = canon(fakes);

    ProtocolResult result;
    result.per_run.reserve(cfg.runs);

    for (int run = 0; run < cfg.runs; ++run) {
        Rng rng(hash3(cfg.seed, static_cast<std::uint64_t>(run), 0x70726f74ull));
        std::vector<std::size_t> oidx(orig.size()), fidx(fake.size());
        for (std::size_t i = 0; i < oidx.size(); ++i) oidx[i] = i;
        for (std::size_t i = 0; i < fidx.size(); ++i) fidx[i] = i;
        rng.shuffle(oidx);
        rng.shuffle(fidx);

        std::vector<MetricVector> train_orig, test_orig, train_fake, test_fake;
        for (std::size_t i = 0; i < oidx.size(); ++i)
            (i < static_cast<std::size_t>(cfg.train_size) ? train_orig : test_orig)
                .push_back(orig[oidx[i]]);
        // Fakes are split the same way for both kinds so that a one-class and
        // a two-class run with the same seed score the same held-out set; the
        // one-class model just never sees its train side. With few fakes the
        // one-class protocol scores them all.
        bool split_fakes = fake.size() > static_cast<std::size_t>(cfg.train_size);
        for (std::size_t i = 0; i < fidx.size(); ++i) {
            if (split_fakes && i < static_cast<std::size_t>(cfg.train_size)) {
                if (cfg.kind == SvmKind::two_class) train_fake.push_back(fake[fidx[i]]);
            } else {
                test_fake.push_back(fake[fidx[i]]);
            }
        }

        SvmModel model;
        if (cfg.kind == SvmKind::one_class)
            model = train_one_class(train_orig, cfg.nu, cfg.gamma, cfg.seed, cfg.metric_subset);
        else
            model = train_two_class(train_orig, train_fake, cfg.C, cfg.gamma, cfg.seed,
                                    cfg.metric_subset);

        int miss = 0, fa = 0;
        for (const auto& v : test_orig)
            if (predict(model, v).label == Label::fake) ++miss;
        for (const auto& v : test_fake)
            if (predict(model, v).label == Label::original) ++fa;

        RunRates rr;
        rr.p_miss = 100.0 * miss / static_cast<double>(test_orig.size());
        rr.p_fa = test_fake.empty() ? 0.0 : 100.0 * fa / static_cast<double>(test_fake.size());
        result.per_run.push_back(rr);
    }

    auto mean_std = [](const std::vector<RunRates>& rs, bool miss) {
        double mean = 0.0;
        for (const auto& r : rs) mean += miss ? r.p_miss : r.p_fa;
        mean /= static_cast<double>(rs.size());
        double var = 0.0;
        for (const auto& r : rs) {
            double d = (miss ? r.p_miss : r.p_fa) - mean;
            var += d * d;
        }
        double std = rs.size() > 1 ? std::sqrt(var / (static_cast<double>(rs.size()) - 1.0)) : 0.0;
        return std::make_pair(mean, std);
    };
    auto [pm, pms] = mean_std(result.per_run, true);
    auto [pf, pfs] = mean_std(result.per_run, false);
    result.rates = {pm, pms, pf, pfs, cfg.runs};
    return result;
}

void save_svm(const SvmModel& model, const std::string& path) {
    json j;
    j["kind"] = model.kind == SvmKind::one_class ? "one-class" : "two-class";
    j["gamma"] = model.gamma;
    j["nu"] = model.nu;
    j["C"] = model.C;
    j["metric_subset"] = model.metric_subset;
    j["standardization"] = {{"mean", model.standardization.mean},
                            {"scale", model.standardization.scale}};
    j["support_vectors"] = model.support_vectors;
    j["dual_coef"] = model.dual_coef;
    j["rho"] = model.rho;
    std::ofstream out(path);
    if (!out) throw FormatError("save_svm: cannot open " + path);
    out << j.dump() << "\n";
}

SvmModel load_svm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("load_svm: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("load_svm: parse error: " + std::string(e.what()));
    }
    SvmModel m;
    m.kind = j.at("kind").get<std::string>() == "one-class" ? SvmKind::one_class
                                                            : SvmKind::two_class;
    m.gamma = j.at("gamma").get<double>();
    m.nu = j.at("nu").get<double>();
    m.C = j.at("C").get<double>();
    m.metric_subset = j.at("metric_subset").get<std::vector<int>>();
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.scale = j.at("standardization").at("scale").get<std::vector<double>>();
    m.standardization.constant.assign(m.standardization.mean.size(), 0);
    m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    m.dual_coef = j.at("dual_coef").get<std::vector<double>>();
    m.rho = j.at("rho").get<double>();
    return m;
}

}  // namespace cdp
