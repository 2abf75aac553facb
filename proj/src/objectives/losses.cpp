#include "sacl/objectives/losses.hpp"

#include <cmath>
#include <string>

#include "sacl/core/error.hpp"

namespace sacl {

void ContrastiveConfig::validate() const {
    if (!(tau > 0.0) || !(tau_radv > 0.0)) throw ConfigError("temperatures tau and tau_radv must be positive");
    if (!(lambda >= 0.0) || !(lambda_radv >= 0.0)) throw ConfigError("lambda and lambda_radv must be non-negative");
}

namespace objectives {
namespace {

void check_labels(std::span<const int> labels, std::size_t n, std::size_t num_classes) {
    if (labels.size() != n) throw ShapeError("loss: label count does not match the batch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw DataError("loss: label " + std::to_string(y) + " out of range [0," +
                            std::to_string(num_classes) + ")");
        }
    }
}

double weight_of(std::span<const double> w, int y) {
    if (w.empty()) return 1.0;
    if (static_cast<std::size_t>(y) >= w.size()) throw DataError("class weight missing for label");
    return w[static_cast<std::size_t>(y)];
}

// Clamped log-probability of the target class.
ad::Var target_log_prob(ad::Tape& t, ad::Var lp, int y, LossDiagnostics* diag) {
    static const double floor = std::log(kProbFloor);
    ad::Var picked = t.pick(lp, static_cast<std::size_t>(y));
    if (t.value(picked)[0] < floor && diag != nullptr) ++diag->clamped;
    return t.clamp_min(picked, floor);
}

ad::Var sum_scalars(ad::Tape& t, const std::vector<ad::Var>& terms) {
    if (terms.empty()) return t.constant(Tensor::scalar(0.0));
    if (terms.size() == 1) return terms.front();
    return t.sum(t.concat(terms));
}

}  // namespace

ad::Var ce(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels,
           std::span<const double> class_weights, LossDiagnostics* diag) {
    if (log_probs.empty()) return t.constant(Tensor::scalar(0.0));
    check_labels(labels, log_probs.size(), t.value(log_probs[0]).size());
    std::vector<ad::Var> terms;
    terms.reserve(log_probs.size());
    for (std::size_t i = 0; i < log_probs.size(); ++i) {
        const double w = weight_of(class_weights, labels[i]);
        terms.push_back(t.scale(target_log_prob(t, log_probs[i], labels[i], diag), -w));
    }
    return sum_scalars(t, terms);
}

ad::Var focal(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels, double gamma,
              std::span<const double> class_weights, LossDiagnostics* diag) {
    if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be non-negative");
    if (gamma == 0.0) return ce(t, log_probs, labels, class_weights, diag);
    if (log_probs.empty()) return t.constant(Tensor::scalar(0.0));
    check_labels(labels, log_probs.size(), t.value(log_probs[0]).size());
    std::vector<ad::Var> terms;
    terms.reserve(log_probs.size());
    for (std::size_t i = 0; i < log_probs.size(); ++i) {
        const double w = weight_of(class_weights, labels[i]);
        ad::Var lp = target_log_prob(t, log_probs[i], labels[i], diag);
        // (1 - p)^gamma, with 1 - p clamped at zero against rounding.
        ad::Var one_minus_p = t.clamp_min(t.add_scalar(t.scale(t.exp(lp), -1.0), 1.0), 0.0);
        ad::Var modulation = t.pow(one_minus_p, gamma);
        terms.push_back(t.scale(t.mul(modulation, lp), -w));
    }
    return sum_scalars(t, terms);
}

ad::Var ce_term(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels,
                const CeTerm& term, LossDiagnostics* diag) {
    if (term.focal_gamma) return focal(t, log_probs, labels, *term.focal_gamma, term.class_weights, diag);
    return ce(t, log_probs, labels, term.class_weights, diag);
}

ad::Var scl(ad::Tape& t, std::span<const ad::Var> z, std::span<const int> labels, double tau) {
    if (!(tau > 0.0)) throw ConfigError("scl: tau must be positive");
    if (labels.size() != z.size()) throw ShapeError("scl: label count does not match the batch");
    const std::size_t n = z.size();
    for (ad::Var v : z) {
        if (!t.value(v).all_finite()) throw NumericalError("scl: non-finite embedding");
    }
    // Pairwise similarities, computed once per unordered pair.
    std::vector<ad::Var> sim(n * n);
    auto need = [&](std::size_t i) {
        for (std::size_t e = 0; e < n; ++e) {
            if (e != i && labels[e] == labels[i]) return true;
        }
        return false;
    };
    std::vector<char> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = need(i);

    std::vector<ad::Var> terms;
    for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        std::vector<ad::Var> row;
        std::vector<double> positive;
        row.reserve(n - 1);
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            const std::size_t lo = std::min(i, a), hi = std::max(i, a);
            if (!sim[lo * n + hi].valid()) sim[lo * n + hi] = t.dot(z[lo], z[hi]);
            row.push_back(sim[lo * n + hi]);
            positive.push_back(labels[a] == labels[i] ? 1.0 : 0.0);
        }
        double count = 0.0;
        for (double p : positive) count += p;
        ad::Var lsm = t.log_softmax(t.scale(t.concat(row), 1.0 / tau));
        ad::Var pos_sum = t.sum(t.mul(lsm, t.constant(Tensor::vector(std::move(positive)))));
        terms.push_back(t.scale(pos_sum, -1.0 / count));
    }
    return sum_scalars(t, terms);
}

ad::Var supcon(ad::Tape& t, std::span<const ad::Var> z, std::span<const int> labels, double tau) {
    std::vector<ad::Var> unit;
    unit.reserve(z.size());
    for (ad::Var v : z) unit.push_back(t.l2_normalize(v));
    return scl(t, unit, labels, tau);
}

ad::Var soft_scl(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const ad::Var> z,
                 std::span<const int> labels, double lambda, double tau, bool normalize,
                 const CeTerm& term, LossDiagnostics* diag) {
    if (log_probs.size() != z.size()) throw ShapeError("soft_scl: probability and embedding counts differ");
    ad::Var cls = ce_term(t, log_probs, labels, term, diag);
    if (lambda == 0.0) return cls;
    ad::Var con = normalize ? supcon(t, z, labels, tau) : scl(t, z, labels, tau);
    return t.add(cls, t.scale(con, lambda));
}

ad::Var sacl_total(ad::Tape& t, const ViewVars& original, const ViewVars& adversarial,
                   std::span<const int> labels, const ContrastiveConfig& config, const CeTerm& term,
                   LossDiagnostics* diag) {
    config.validate();
    if (original.log_probs.size() != adversarial.log_probs.size() ||
        original.z.size() != adversarial.z.size()) {
        throw ShapeError("sacl_total: original and adversarial batch sizes differ");
    }
    ad::Var a = soft_scl(t, original.log_probs, original.z, labels, config.lambda, config.tau,
                         config.normalize_embeddings, term, diag);
    ad::Var b = soft_scl(t, adversarial.log_probs, adversarial.z, labels, config.lambda_radv,
                         config.tau_radv, config.normalize_embeddings, term, diag);
    return t.add(a, b);
}

}  // namespace objectives

// ---------------------------------------------------------------------------
// Value-level entry points.

namespace {

std::vector<ad::Var> log_prob_constants(ad::Tape& t, std::span<const Tensor> probs) {
    std::vector<ad::Var> out;
    out.reserve(probs.size());
    for (const Tensor& p : probs) {
        Tensor lp(p.shape());
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (!(p[k] >= 0.0 && p[k] <= 1.0 + 1e-9)) throw DataError("loss: probability outside [0,1]");
            lp[k] = std::log(std::max(p[k], kProbFloor * 0.5));
        }
        out.push_back(t.constant(std::move(lp)));
    }
    return out;
}

std::vector<ad::Var> constants(ad::Tape& t, std::span<const Tensor> xs) {
    std::vector<ad::Var> out;
    out.reserve(xs.size());
    for (const Tensor& x : xs) out.push_back(t.constant(x));
    return out;
}

}  // namespace

double ce_loss(std::span<const Tensor> probs, std::span<const int> labels,
               std::span<const double> class_weights, LossDiagnostics* diag) {
    ad::Tape t;
    const auto lp = log_prob_constants(t, probs);
    return t.value(objectives::ce(t, lp, labels, class_weights, diag)).item();
}

double focal_loss(std::span<const Tensor> probs, std::span<const int> labels, double gamma,
                  std::span<const double> class_weights, LossDiagnostics* diag) {
    ad::Tape t;
    const auto lp = log_prob_constants(t, probs);
    return t.value(objectives::focal(t, lp, labels, gamma, class_weights, diag)).item();
}

double scl_loss(std::span<const Tensor> z, std::span<const int> labels, double tau) {
    ad::Tape t;
    const auto zs = constants(t, z);
    return t.value(objectives::scl(t, zs, labels, tau)).item();
}

double supcon_loss(std::span<const Tensor> z, std::span<const int> labels, double tau) {
    ad::Tape t;
    const auto zs = constants(t, z);
    return t.value(objectives::supcon(t, zs, labels, tau)).item();
}

double soft_scl_loss(std::span<const Tensor> probs, std::span<const Tensor> z, std::span<const int> labels,
                     double lambda, double tau, const CeTerm& term, bool normalize) {
    ad::Tape t;
    const auto lp = log_prob_constants(t, probs);
    const auto zs = constants(t, z);
    return t.value(objectives::soft_scl(t, lp, zs, labels, lambda, tau, normalize, term)).item();
}

double sacl_total(const LabeledView& original, const LabeledView& adversarial, std::span<const int> labels,
                  const ContrastiveConfig& config, const CeTerm& term) {
    ad::Tape t;
    const auto lp0 = log_prob_constants(t, original.probs);
    const auto z0 = constants(t, original.z);
    const auto lp1 = log_prob_constants(t, adversarial.probs);
    const auto z1 = constants(t, adversarial.z);
    return t.value(objectives::sacl_total(t, {lp0, z0}, {lp1, z1}, labels, config, term)).item();
}

}  // namespace sacl
