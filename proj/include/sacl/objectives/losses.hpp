#pragma once

// Loss family: weighted CE, focal CE, dot-product SCL, a SupCon-style variant
// on L2-normalized embeddings, soft SCL (CE + lambda * SCL) and the two-view
// SACL total. All losses are batch sums.
//
// Each loss exists at two levels: tape-level builders that consume
// log-probabilities and embedding Vars (used for training), and value-level
// functions over probability vectors (clamped at 1e-12 before the log).

#include <optional>
#include <span>
#include <vector>

#include "sacl/autodiff/tape.hpp"

namespace sacl {

struct ContrastiveConfig {
    double tau = 0.1;
    double tau_radv = 0.1;
    double lambda = 0.05;
    double lambda_radv = 0.5;
    // True selects the SupCon-style variant (SCL on unit-normalized z).
    bool normalize_embeddings = false;

    void validate() const;
};

// Classification term of soft SCL: weighted CE, or focal CE when gamma is set.
struct CeTerm {
    std::vector<double> class_weights;  // empty means all ones
    std::optional<double> focal_gamma;
};

struct LossDiagnostics {
    // Number of target probabilities that hit the 1e-12 floor.
    std::size_t clamped = 0;
};

inline constexpr double kProbFloor = 1e-12;

namespace objectives {

ad::Var ce(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels,
           std::span<const double> class_weights = {}, LossDiagnostics* diag = nullptr);
ad::Var focal(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels,
              double gamma, std::span<const double> class_weights = {}, LossDiagnostics* diag = nullptr);
ad::Var ce_term(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const int> labels,
                const CeTerm& term, LossDiagnostics* diag = nullptr);
ad::Var scl(ad::Tape& t, std::span<const ad::Var> z, std::span<const int> labels, double tau);
ad::Var supcon(ad::Tape& t, std::span<const ad::Var> z, std::span<const int> labels, double tau);
ad::Var soft_scl(ad::Tape& t, std::span<const ad::Var> log_probs, std::span<const ad::Var> z,
                 std::span<const int> labels, double lambda, double tau, bool normalize,
                 const CeTerm& term, LossDiagnostics* diag = nullptr);

struct ViewVars {
    std::span<const ad::Var> log_probs;
    std::span<const ad::Var> z;
};

ad::Var sacl_total(ad::Tape& t, const ViewVars& original, const ViewVars& adversarial,
                   std::span<const int> labels, const ContrastiveConfig& config, const CeTerm& term,
                   LossDiagnostics* diag = nullptr);

}  // namespace objectives

double ce_loss(std::span<const Tensor> probs, std::span<const int> labels,
               std::span<const double> class_weights = {}, LossDiagnostics* diag = nullptr);
double focal_loss(std::span<const Tensor> probs, std::span<const int> labels, double gamma,
                  std::span<const double> class_weights = {}, LossDiagnostics* diag = nullptr);
double scl_loss(std::span<const Tensor> z, std::span<const int> labels, double tau);
double supcon_loss(std::span<const Tensor> z, std::span<const int> labels, double tau);
double soft_scl_loss(std::span<const Tensor> probs, std::span<const Tensor> z, std::span<const int> labels,
                     double lambda, double tau, const CeTerm& term = {}, bool normalize = false);

struct LabeledView {
    std::span<const Tensor> probs;
    std::span<const Tensor> z;
};

double sacl_total(const LabeledView& original, const LabeledView& adversarial, std::span<const int> labels,
                  const ContrastiveConfig& config, const CeTerm& term = {});

}  // namespace sacl
