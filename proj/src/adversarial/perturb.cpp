#include "sacl/adversarial/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "sacl/core/error.hpp"

namespace sacl {

void PerturbationConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be a finite non-negative number");
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("perturbation_rate must lie in [0,1]");
}

double norm_q(std::span<const double> v, NormQ q) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    if (q == NormQ::linf || m == 0.0) return m;
    // Scaled accumulation avoids overflow and underflow for extreme gradients.
    double s = 0.0;
    for (double x : v) {
        const double r = x / m;
        s += r * r;
    }
    return m * std::sqrt(s);
}

Tensor normalized_perturbation(const Tensor& g, double epsilon, NormQ q) {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    if (!g.all_finite()) throw NumericalError("perturbation gradient is not finite");
    Tensor r(g.shape());
    const double n = norm_q(g.span(), q);
    if (n == 0.0 || epsilon == 0.0) return r;
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = -epsilon * (g[i] / n);
    return r;
}

AttackObjective make_attack_objective(AttackLoss loss, const ContrastiveConfig& contrastive, const CeTerm& term) {
    if (loss == AttackLoss::ce) {
        return [term](ad::Tape& t, const ForwardPass& pass, std::span<const int> labels) {
            return objectives::ce_term(t, pass.log_probs, labels, term);
        };
    }
    return [contrastive, term](ad::Tape& t, const ForwardPass& pass, std::span<const int> labels) {
        return objectives::soft_scl(t, pass.log_probs, pass.z, labels, contrastive.lambda, contrastive.tau,
                                    contrastive.normalize_embeddings, term);
    };
}

PerturbationBundle bundle_from_site_grads(const ad::Tape& tape, std::span<const std::pair<SiteKey, ad::Var>> sites,
                                          double epsilon, NormQ q, bool* all_zero) {
    PerturbationBundle bundle;
    bool any = false;
    for (const auto& [key, var] : sites) {
        Tensor g = tape.grad(var);
        // The adjoint is dL/dsite = -d log p/dsite.
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
        any |= !g.all_zero();
        bundle.entries.emplace(key, normalized_perturbation(g, epsilon, q));
    }
    if (all_zero != nullptr) *all_zero = !any;
    if (!any) bundle.entries.clear();
    return bundle;
}

PerturbationBundle cat_perturb(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                               const AttackObjective& objective, const PerturbationConfig& config,
                               DropoutMasks* dropout) {
    config.validate();
    ad::Tape tape;
    ForwardOptions opt;
    opt.record_sites = true;
    opt.dropout = dropout;
    const ForwardPass pass = model.forward(tape, params, batch, opt);
    const std::vector<int> labels = batch.labels();
    const ad::Var loss = objective(tape, pass, labels);
    tape.backward(loss);
    return bundle_from_site_grads(tape, pass.sites, config.epsilon, config.norm);
}

FeaturePerturbation at_perturb(std::span<const Tensor> feature_grads, const PerturbationConfig& config) {
    config.validate();
    FeaturePerturbation out;
    out.shifts.reserve(feature_grads.size());
    for (const Tensor& g : feature_grads) out.shifts.push_back(normalized_perturbation(g, config.epsilon, config.norm));
    return out;
}

FeaturePerturbation at_perturb(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                               const AttackObjective& objective, const PerturbationConfig& config,
                               DropoutMasks* dropout) {
    ad::Tape tape;
    ForwardOptions opt;
    opt.feature_inputs = true;
    opt.dropout = dropout;
    const ForwardPass pass = model.forward(tape, params, batch, opt);
    const std::vector<int> labels = batch.labels();
    tape.backward(objective(tape, pass, labels));
    std::vector<Tensor> grads;
    grads.reserve(pass.features.size());
    for (ad::Var f : pass.features) {
        Tensor g = tape.grad(f);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
        grads.push_back(std::move(g));
    }
    return at_perturb(grads, config);
}

PerturbationBundle crt_perturb(std::span<const SiteKey> keys, std::size_t d_h, double epsilon, NormQ q, Rng& rng) {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    PerturbationBundle bundle;
    for (const SiteKey& key : keys) {
        Tensor g(Shape{d_h});
        for (std::size_t i = 0; i < d_h; ++i) g[i] = rng.normal();
        // normalized_perturbation flips the sign; the Gaussian is symmetric.
        bundle.entries.emplace(key, normalized_perturbation(g, epsilon, q));
    }
    return bundle;
}

std::vector<AttackPoint> attack_for_eval(const Model& model, const ParamMap& params,
                                         std::span<const Conversation> data, std::span<const double> epsilons,
                                         NormQ q) {
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] >= 0.0)) throw ConfigError("attack epsilon must be non-negative");
        if (i > 0 && !(epsilons[i] > epsilons[i - 1])) throw ConfigError("attack epsilons must be strictly increasing");
    }
    std::vector<AttackPoint> out(epsilons.size());
    for (std::size_t e = 0; e < epsilons.size(); ++e) out[e].epsilon = epsilons[e];
    const AttackObjective ce = make_attack_objective(AttackLoss::ce, {}, {});

    for (const Conversation& conv : data) {
        const Conversation* ptr = &conv;
        const UtteranceBatch batch = make_batch(std::span<const Conversation* const>(&ptr, 1));
        PerturbationBundle unit;
        {
            ad::Tape tape;
            ForwardOptions opt;
            opt.record_sites = true;
            const ForwardPass pass = model.forward(tape, params, batch, opt);
            const std::vector<int> labels = batch.labels();
            tape.backward(ce(tape, pass, labels));
            unit = bundle_from_site_grads(tape, pass.sites, 1.0, q);
        }
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            PerturbationBundle scaled = unit;
            for (auto& [key, r] : scaled.entries) {
                for (std::size_t i = 0; i < r.size(); ++i) r[i] *= epsilons[e];
            }
            const Predictions p = infer(model, params, std::span<const Conversation>(&conv, 1),
                                        std::span<const PerturbationBundle>(&scaled, 1));
            Predictions& acc = out[e].predictions;
            acc.labels.insert(acc.labels.end(), p.labels.begin(), p.labels.end());
            acc.probs.insert(acc.probs.end(), p.probs.begin(), p.probs.end());
            acc.z.insert(acc.z.end(), p.z.begin(), p.z.end());
        }
    }
    return out;
}

std::string to_string(NormQ q) { return q == NormQ::l2 ? "L2" : "Linf"; }

std::string to_string(PerturbTarget t) {
    switch (t) {
        case PerturbTarget::cat: return "cat-multichannel";
        case PerturbTarget::at: return "at-embedding";
        case PerturbTarget::crt: return "crt-random";
        case PerturbTarget::none: return "none";
    }
    return "none";
}

std::string to_string(AttackLoss l) { return l == AttackLoss::ce ? "ce" : "soft-scl"; }

NormQ parse_norm(const std::string& s) {
    if (s == "L2" || s == "l2") return NormQ::l2;
    if (s == "Linf" || s == "linf" || s == "Inf" || s == "inf") return NormQ::linf;
    throw ConfigError("unknown norm_q '" + s + "' (expected L2 or Linf)");
}

PerturbTarget parse_target(const std::string& s) {
    if (s == "cat-multichannel" || s == "cat") return PerturbTarget::cat;
    if (s == "at-embedding" || s == "at") return PerturbTarget::at;
    if (s == "crt-random" || s == "crt") return PerturbTarget::crt;
    if (s == "none") return PerturbTarget::none;
    throw ConfigError("unknown perturbation target '" + s + "'");
}

AttackLoss parse_attack_loss(const std::string& s) {
    if (s == "soft-scl") return AttackLoss::soft_scl;
    if (s == "ce") return AttackLoss::ce;
    throw ConfigError("unknown attack_loss '" + s + "' (expected soft-scl or ce)");
}

}  // namespace sacl
