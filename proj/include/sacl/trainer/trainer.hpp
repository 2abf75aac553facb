#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sacl/adversarial/perturb.hpp"
#include "sacl/data/conversation.hpp"
#include "sacl/model/model.hpp"
#include "sacl/objectives/losses.hpp"

namespace sacl {

enum class Strategy : std::uint8_t { vt, at, crt, cat };
enum class Objective : std::uint8_t { ce, ce_scl, ce_supcon, sacl };

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t patience = 20;
    std::size_t batch_size = 4;  // conversations per micro-batch
    std::size_t grad_accum_steps = 1;
    double learning_rate = 1e-3;
    double weight_decay = 2e-4;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::cat;
    Objective objective = Objective::sacl;
    ContrastiveConfig contrastive;
    // `target` is ignored; the strategy decides where perturbations go.
    PerturbationConfig perturbation;
    bool class_weight = true;
    std::optional<double> focal_gamma;
    // Divide each micro-batch loss by its utterance count before backward.
    bool normalize_loss = true;

    void validate() const;
};

std::string to_string(Strategy s);
std::string to_string(Objective o);
Strategy parse_strategy(const std::string& s);
Objective parse_objective(const std::string& s);

// Flat config file: model fields and training fields side by side.
struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
// Unknown keys are rejected, missing keys keep the values of `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

// w_k = total / (C * count_k) over train+val labels, rescaled to mean 1.
// Throws DataError naming the first absent class.
std::vector<double> compute_class_weights(std::span<const int> train_labels, std::span<const int> val_labels,
                                          std::size_t num_classes, std::span<const std::string> label_names = {});

struct AdamState {
    ParamMap m;
    ParamMap v;
    std::uint64_t t = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Decoupled weight decay (p -= lr*wd*p), then the bias-corrected Adam update.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr, double weight_decay);

struct MicroBatchResult {
    double loss = 0.0;
    bool perturbed = false;
    ParamMap grads;
    LossDiagnostics diagnostics;
};

// Random state carried across micro-batches of a run.
struct TrainRngs {
    Rng dropout;
    Rng perturb;

    explicit TrainRngs(std::uint64_t seed);
};

// Clean forward, optional adversarial view, objective, backward. Throws
// NumericalError for a non-finite loss.
MicroBatchResult micro_batch(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                             const TrainConfig& config, const CeTerm& term, TrainRngs& rngs);

class Trainer {
public:
    Trainer(const Model& model, TrainConfig config, CeTerm term);

    // Accumulates gradients; steps Adam every grad_accum_steps micro-batches.
    MicroBatchResult step(ParamMap& params, const UtteranceBatch& batch);
    // Applies a pending partial accumulation, if any.
    void flush(ParamMap& params);

    std::uint64_t optimizer_steps() const { return adam_.t; }

private:
    const Model& model_;
    TrainConfig config_;
    CeTerm term_;
    TrainRngs rngs_;
    AdamState adam_;
    ParamMap acc_;
    std::size_t pending_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_weighted_f1 = 0.0;
    std::size_t perturbed_batches = 0;
    bool best = false;
};

struct RunLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    double best_val_weighted_f1 = 0.0;
    bool stopped_early = false;
    std::uint64_t optimizer_steps = 0;
    // Not serialized, so logs stay byte-identical across runs.
    double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunLog& log);

struct FitResult {
    ParamMap params;  // best validation checkpoint
    RunLog log;
};

FitResult fit(const Model& model, std::span<const Conversation> train, std::span<const Conversation> val,
              const TrainConfig& config);

// Labels of every utterance, in order.
std::vector<int> all_labels(std::span<const Conversation> data);

}  // namespace sacl
