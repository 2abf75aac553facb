#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sacl/model/inference.hpp"
#include "sacl/model/model.hpp"
#include "sacl/objectives/losses.hpp"

namespace sacl {

enum class NormQ : std::uint8_t { l2, linf };
enum class PerturbTarget : std::uint8_t { cat, at, crt, none };
enum class AttackLoss : std::uint8_t { soft_scl, ce };

struct PerturbationConfig {
    double epsilon = 5.0;
    NormQ norm = NormQ::l2;
    // Probability that a micro-batch gets an adversarial view.
    double rate = 1.0;
    PerturbTarget target = PerturbTarget::cat;
    AttackLoss attack_loss = AttackLoss::soft_scl;

    void validate() const;
};

double norm_q(std::span<const double> v, NormQ q);

// r = -epsilon * g / ||g||_q, zero when g is zero. Throws NumericalError for
// non-finite g. `g` is the gradient of the log-likelihood, so -g ascends the loss.
Tensor normalized_perturbation(const Tensor& g, double epsilon, NormQ q);

// Scalar loss used to generate perturbations from a clean forward pass.
using AttackObjective = std::function<ad::Var(ad::Tape&, const ForwardPass&, std::span<const int>)>;

AttackObjective make_attack_objective(AttackLoss loss, const ContrastiveConfig& contrastive, const CeTerm& term);

// Bundle from the site adjoints of a finished backward pass: every site gets
// +epsilon * dL/dsite / ||dL/dsite||_q. Returns an empty bundle when every
// site gradient is zero (`all_zero` is set then).
PerturbationBundle bundle_from_site_grads(const ad::Tape& tape, std::span<const std::pair<SiteKey, ad::Var>> sites,
                                          double epsilon, NormQ q, bool* all_zero = nullptr);

// One clean forward with zero-valued sites, backward of `objective`, then
// per-site normalization. `dropout` (optional) is used as is; callers that
// want the same masks later must rewind it.
PerturbationBundle cat_perturb(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                               const AttackObjective& objective, const PerturbationConfig& config,
                               DropoutMasks* dropout = nullptr);

// Embedding-level (FGM) perturbation from log-likelihood gradients w.r.t. u_i.
FeaturePerturbation at_perturb(std::span<const Tensor> feature_grads, const PerturbationConfig& config);

FeaturePerturbation at_perturb(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                               const AttackObjective& objective, const PerturbationConfig& config,
                               DropoutMasks* dropout = nullptr);

// Isotropic Gaussian per site rescaled to q-norm epsilon.
PerturbationBundle crt_perturb(std::span<const SiteKey> keys, std::size_t d_h, double epsilon, NormQ q, Rng& rng);

struct AttackPoint {
    double epsilon = 0.0;
    Predictions predictions;
};

// White-box CE attack per conversation: site gradients are computed once
// against the clean model, then each epsilon scales the unit directions.
std::vector<AttackPoint> attack_for_eval(const Model& model, const ParamMap& params,
                                         std::span<const Conversation> data, std::span<const double> epsilons,
                                         NormQ q = NormQ::l2);

std::string to_string(NormQ q);
std::string to_string(PerturbTarget t);
std::string to_string(AttackLoss l);
NormQ parse_norm(const std::string& s);
PerturbTarget parse_target(const std::string& s);
AttackLoss parse_attack_loss(const std::string& s);

}  // namespace sacl
