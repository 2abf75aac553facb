#include "sacl/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "sacl/core/error.hpp"
#include "sacl/core/rng.hpp"
#include "sacl/simd/kernels.hpp"

namespace sacl {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double sq_dist(const Tensor& a, const Tensor& b) { return simd::sq_dist(a.span().data(), b.span().data(), a.size()); }

void check_points(std::span<const Tensor> points) {
    if (points.empty()) throw DataError("clustering: no points");
    const Shape s = points[0].shape();
    if (s.rank() != 1) throw ShapeError("clustering: points must be vectors");
    for (const Tensor& p : points) {
        if (!(p.shape() == s)) throw ShapeError("clustering: points differ in dimension");
        if (!p.all_finite()) throw NumericalError("clustering: non-finite point");
    }
}

// Relabel arbitrary ids to 0..m-1 in order of first appearance.
std::vector<std::size_t> compact(std::span<const int> ids, std::size_t& m) {
    std::map<int, std::size_t> seen;
    std::vector<std::size_t> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto [it, inserted] = seen.emplace(ids[i], seen.size());
        out[i] = it->second;
    }
    m = seen.size();
    return out;
}

}  // namespace

ClassificationReport classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                                           std::size_t num_classes) {
    if (y_true.empty()) throw DataError("classification_report: empty input");
    if (y_true.size() != y_pred.size()) throw ShapeError("classification_report: length mismatch");
    if (num_classes == 0) throw ConfigError("classification_report: num_classes must be positive");
    ClassificationReport r;
    const std::size_t c = num_classes;
    r.confusion.assign(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || p < 0 || std::size_t(t) >= c || std::size_t(p) >= c) {
            throw DataError("classification_report: label out of range at index " + std::to_string(i));
        }
        ++r.confusion[std::size_t(t)][std::size_t(p)];
    }
    const double n = static_cast<double>(y_true.size());
    r.precision.assign(c, 0.0);
    r.recall.assign(c, 0.0);
    r.per_class_f1.assign(c, 0.0);
    r.support.assign(c, 0);
    r.normalized.assign(c, std::vector<double>(c, 0.0));
    r.zero_support.assign(c, false);
    std::size_t correct = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += r.confusion[k][j];
            col += r.confusion[j][k];
        }
        const std::size_t tp = r.confusion[k][k];
        correct += tp;
        r.support[k] = row;
        r.precision[k] = col ? double(tp) / double(col) : 0.0;
        r.recall[k] = row ? double(tp) / double(row) : 0.0;
        // F1 = 2tp / (2tp + fp + fn), 0 when undefined.
        const std::size_t denom = row + col;
        r.per_class_f1[k] = denom ? 2.0 * double(tp) / double(denom) : 0.0;
        if (row == 0) {
            r.zero_support[k] = true;
        } else {
            for (std::size_t j = 0; j < c; ++j) r.normalized[k][j] = double(r.confusion[k][j]) / double(row);
        }
    }
    r.accuracy = double(correct) / n;
    double wf1 = 0.0, mf1 = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        wf1 += r.per_class_f1[k] * double(r.support[k]);
        mf1 += r.per_class_f1[k];
    }
    r.weighted_f1 = wf1 / n;
    r.macro_f1 = mf1 / double(c);
    return r;
}

KMeansResult kmeans(std::span<const Tensor> points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                    std::size_t restarts) {
    check_points(points);
    const std::size_t n = points.size();
    if (k < 1) throw ConfigError("kmeans: K must be at least 1");
    if (k > n) throw ConfigError("kmeans: K=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
    if (restarts == 0 || max_iter == 0) throw ConfigError("kmeans: restarts and max_iter must be positive");
    const std::size_t d = points[0].size();

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t rs = 0; rs < restarts; ++rs) {
        Rng rng(derive_seed(seed, streams::kmeans, static_cast<std::uint32_t>(rs)));
        // k-means++ seeding.
        std::vector<Tensor> cent;
        cent.push_back(points[rng.below(n)]);
        std::vector<double> d2(n);
        for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], cent[0]);
        while (cent.size() < k) {
            const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
            std::size_t pick = 0;
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (u < acc && d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
                while (d2[pick] == 0.0) --pick;  // never re-pick a centre
            } else {
                pick = rng.below(n);
            }
            cent.push_back(points[pick]);
            for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], cent.back()));
        }

        std::vector<int> assign(n, -1);
        double prev = std::numeric_limits<double>::infinity();
        std::size_t it = 0;
        for (; it < max_iter; ++it) {
            bool changed = false;
            double inertia = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                double bd = sq_dist(points[i], cent[0]);
                for (std::size_t j = 1; j < k; ++j) {
                    const double dj = sq_dist(points[i], cent[j]);
                    if (dj < bd) {
                        bd = dj;
                        arg = static_cast<int>(j);
                    }
                }
                changed |= assign[i] != arg;
                assign[i] = arg;
                inertia += bd;
            }
            if (inertia > prev * (1 + 1e-12) + 1e-300) {
                throw std::logic_error("kmeans: inertia increased during Lloyd iterations");
            }
            prev = inertia;
            if (!changed && it > 0) break;
            std::vector<Tensor> sum(k, Tensor(Shape{d}));
            std::vector<std::size_t> count(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                simd::axpy(1.0, points[i].span().data(), sum[std::size_t(assign[i])].span().data(), d);
                ++count[std::size_t(assign[i])];
            }
            for (std::size_t j = 0; j < k; ++j) {
                if (count[j] == 0) continue;  // empty cluster keeps its centre
                for (std::size_t t = 0; t < d; ++t) sum[j][t] /= double(count[j]);
                cent[j] = std::move(sum[j]);
            }
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(points[i], cent[std::size_t(assign[i])]);
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.assignments = assign;
            best.centroids = cent;
            best.iterations = it;
        }
    }
    return best;
}

SupervisedScores supervised_clustering(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.empty()) throw DataError("supervised_clustering: empty input");
    if (predicted.size() != truth.size()) throw ShapeError("supervised_clustering: length mismatch");
    std::size_t mp = 0, mt = 0;
    const auto p = compact(predicted, mp);
    const auto t = compact(truth, mt);
    const double n = static_cast<double>(p.size());
    std::vector<double> table(mt * mp, 0.0), a(mt, 0.0), b(mp, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        table[t[i] * mp + p[i]] += 1;
        a[t[i]] += 1;
        b[p[i]] += 1;
    }
    double sum_nij2 = 0, sum_a2 = 0, sum_b2 = 0;
    for (double v : table) sum_nij2 += v * v;
    for (double v : a) sum_a2 += v * v;
    for (double v : b) sum_b2 += v * v;

    SupervisedScores s;
    // Pair confusion counts (ordered pairs).
    const double tp = sum_nij2 - n;
    const double fp = sum_b2 - sum_nij2;
    const double fn = sum_a2 - sum_nij2;
    const double tn = n * n - fp - fn - sum_nij2;
    if (fn == 0 && fp == 0) {
        s.ari = 1.0;
    } else {
        s.ari = 2.0 * (tp * tn - fn * fp) / ((tp + fn) * (fn + tn) + (tp + fp) * (fp + tn));
    }

    const double pk = sum_a2 - n, qk = sum_b2 - n;
    s.fmi = tp != 0.0 ? std::sqrt(tp / pk) * std::sqrt(tp / qk) : 0.0;

    if ((mt == 1 && mp == 1)) {
        s.nmi = 1.0;
    } else {
        double mi = 0.0, ht = 0.0, hp = 0.0;
        for (std::size_t i = 0; i < mt; ++i) {
            for (std::size_t j = 0; j < mp; ++j) {
                const double nij = table[i * mp + j];
                if (nij > 0) mi += nij / n * std::log(n * nij / (a[i] * b[j]));
            }
        }
        for (double v : a) ht -= v / n * std::log(v / n);
        for (double v : b) hp -= v / n * std::log(v / n);
        mi = std::max(mi, 0.0);
        if (mi == 0.0) {
            s.nmi = 0.0;
        } else {
            const double norm = std::max((ht + hp) / 2, std::numeric_limits<double>::epsilon());
            s.nmi = std::min(1.0, mi / norm);
        }
    }
    return s;
}

UnsupervisedScores unsupervised_clustering(std::span<const Tensor> points, std::span<const int> assignments) {
    check_points(points);
    if (points.size() != assignments.size()) throw ShapeError("unsupervised_clustering: length mismatch");
    std::size_t k = 0;
    const auto lab = compact(assignments, k);
    const std::size_t n = points.size(), d = points[0].size();
    if (k < 2) throw DataError("unsupervised_clustering: need at least 2 clusters");

    std::vector<std::size_t> count(k, 0);
    std::vector<Tensor> cent(k, Tensor(Shape{d}));
    Tensor overall(Shape{d});
    for (std::size_t i = 0; i < n; ++i) {
        ++count[lab[i]];
        simd::axpy(1.0, points[i].span().data(), cent[lab[i]].span().data(), d);
        simd::axpy(1.0, points[i].span().data(), overall.span().data(), d);
    }
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t t = 0; t < d; ++t) cent[j][t] /= double(count[j]);
    }
    for (std::size_t t = 0; t < d; ++t) overall[t] /= double(n);

    UnsupervisedScores s;
    // Silhouette.
    std::vector<double> dist_sum(k);
    double sc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dist_sum[lab[j]] += std::sqrt(sq_dist(points[i], points[j]));
        }
        const std::size_t own = lab[i];
        if (count[own] == 1) continue;  // singleton: 0
        const double a = dist_sum[own] / double(count[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c != own) b = std::min(b, dist_sum[c] / double(count[c]));
        }
        const double m = std::max(a, b);
        if (m > 0.0) sc += (b - a) / m;
    }
    s.sc = sc / double(n);

    // Calinski-Harabasz.
    double between = 0.0, within = 0.0;
    for (std::size_t j = 0; j < k; ++j) between += double(count[j]) * sq_dist(cent[j], overall);
    for (std::size_t i = 0; i < n; ++i) within += sq_dist(points[i], cent[lab[i]]);
    if (n == k) {
        s.chi = 1.0;
    } else {
        s.chi = within == 0.0 ? 1.0 : between * double(n - k) / (within * double(k - 1));
    }

    // Davies-Bouldin.
    std::vector<double> spread(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) spread[lab[i]] += std::sqrt(sq_dist(points[i], cent[lab[i]]));
    bool any_spread = false, any_sep = false;
    for (std::size_t j = 0; j < k; ++j) {
        spread[j] /= double(count[j]);
        any_spread |= spread[j] != 0.0;
    }
    double dbi = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            const double m = std::sqrt(sq_dist(cent[i], cent[j]));
            any_sep |= m != 0.0;
            if (m == 0.0) continue;
            worst = std::max(worst, (spread[i] + spread[j]) / m);
        }
        dbi += worst;
    }
    s.dbi = (!any_spread || !any_sep) ? 0.0 : dbi / double(k);
    return s;
}

ClusteringReport clustering_report(std::span<const Tensor> points, std::span<const int> truth, std::size_t k,
                                   std::uint64_t seed) {
    if (points.size() != truth.size()) throw ShapeError("clustering_report: length mismatch");
    const KMeansResult km = kmeans(points, k, seed);
    ClusteringReport r;
    r.k = k;
    r.seed = seed;
    r.supervised = supervised_clustering(km.assignments, truth);
    r.unsupervised = unsupervised_clustering(points, km.assignments);
    return r;
}

RobustnessCurve robustness_curve(const Model& model, std::span<const ParamMap> params_per_seed,
                                 std::span<const Conversation> test, std::span<const double> epsilons) {
    if (params_per_seed.empty()) throw ConfigError("robustness_curve: no parameter sets");
    std::vector<int> truth;
    for (const Conversation& c : test) {
        for (const Utterance& u : c.utterances) truth.push_back(u.label);
    }
    RobustnessCurve curve;
    curve.epsilons.assign(epsilons.begin(), epsilons.end());
    curve.seeds = params_per_seed.size();
    std::vector<std::vector<double>> scores(epsilons.size());
    for (const ParamMap& p : params_per_seed) {
        const auto points = attack_for_eval(model, p, test, epsilons);
        for (std::size_t e = 0; e < points.size(); ++e) {
            scores[e].push_back(
                classification_report(truth, points[e].predictions.labels, model.config().num_classes).weighted_f1);
        }
    }
    for (const auto& s : scores) {
        curve.weighted_f1.push_back(mean(s));
        curve.std_dev.push_back(s.size() > 1 ? sample_std(s) : 0.0);
    }
    return curve;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("paired_t_test: length mismatch");
    if (a.size() < 2) throw DataError("paired_t_test: need at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    TTestResult r;
    r.dof = d.size() - 1;
    const double m = mean(d);
    const double sd = sample_std(d);
    if (sd == 0.0) {
        r.degenerate = true;
        r.t = m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
        r.p = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.t = m / (sd / std::sqrt(double(d.size())));
    const boost::math::students_t dist(static_cast<double>(r.dof));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

std::string format_mean_std(std::span<const double> scores) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean(scores), 100.0 * sample_std(scores));
    return buf;
}

nlohmann::json to_json(const ClassificationReport& r, std::span<const std::string> label_names) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["weighted_f1"] = r.weighted_f1;
    j["macro_f1"] = r.macro_f1;
    j["per_class"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.per_class_f1.size(); ++k) {
        nlohmann::json c{{"class", k},
                         {"precision", r.precision[k]},
                         {"recall", r.recall[k]},
                         {"f1", r.per_class_f1[k]},
                         {"support", r.support[k]},
                         {"zero_support", bool(r.zero_support[k])}};
        if (k < label_names.size()) c["name"] = label_names[k];
        j["per_class"].push_back(std::move(c));
    }
    j["confusion"] = r.confusion;
    j["confusion_normalized"] = r.normalized;
    return j;
}

nlohmann::json to_json(const ClusteringReport& r) {
    return {{"k", r.k},
            {"seed", r.seed},
            {"ari", r.supervised.ari},
            {"nmi", r.supervised.nmi},
            {"fmi", r.supervised.fmi},
            {"sc", r.unsupervised.sc},
            {"chi", r.unsupervised.chi},
            {"dbi", r.unsupervised.dbi}};
}

nlohmann::json to_json(const RobustnessCurve& c) {
    return {{"epsilon", c.epsilons}, {"weighted_f1", c.weighted_f1}, {"std", c.std_dev}, {"seeds", c.seeds}};
}

nlohmann::json to_json(const TTestResult& t) {
    nlohmann::json j{{"t", t.t}, {"dof", t.dof}, {"degenerate", t.degenerate}};
    j["p"] = t.degenerate ? nlohmann::json(nullptr) : nlohmann::json(t.p);
    if (!std::isfinite(t.t)) j["t"] = t.t > 0 ? "inf" : "-inf";
    return j;
}

std::string per_class_csv(const ClassificationReport& r, std::span<const std::string> label_names) {
    std::string out = "class,name,precision,recall,f1,support\n";
    for (std::size_t k = 0; k < r.per_class_f1.size(); ++k) {
        out += std::to_string(k) + "," + (k < label_names.size() ? label_names[k] : std::to_string(k)) + "," +
               num(r.precision[k]) + "," + num(r.recall[k]) + "," + num(r.per_class_f1[k]) + "," +
               std::to_string(r.support[k]) + "\n";
    }
    return out;
}

std::string confusion_csv(const ClassificationReport& r, bool normalized) {
    const std::size_t c = r.confusion.size();
    std::string out = "true\\pred";
    for (std::size_t j = 0; j < c; ++j) out += "," + std::to_string(j);
    out += "\n";
    for (std::size_t i = 0; i < c; ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < c; ++j) {
            out += "," + (normalized ? num(r.normalized[i][j]) : std::to_string(r.confusion[i][j]));
        }
        out += "\n";
    }
    return out;
}

std::string curves_csv(std::span<const RobustnessCurve> curves, std::span<const std::string> names) {
    if (curves.size() != names.size()) throw std::invalid_argument("curves_csv: one name per curve");
    std::string out = "epsilon";
    for (const auto& n : names) out += "," + n + "_wf1," + n + "_std";
    out += "\n";
    if (curves.empty()) return out;
    for (const auto& c : curves) {
        if (c.epsilons != curves[0].epsilons) throw std::invalid_argument("curves_csv: epsilon grids differ");
    }
    for (std::size_t e = 0; e < curves[0].epsilons.size(); ++e) {
        out += num(curves[0].epsilons[e]);
        for (const auto& c : curves) out += "," + num(c.weighted_f1[e]) + "," + num(c.std_dev[e]);
        out += "\n";
    }
    return out;
}

}  // namespace sacl
