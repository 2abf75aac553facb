#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sacl/autodiff/tape.hpp"
#include "sacl/core/rng.hpp"
#include "sacl/core/tensor.hpp"
#include "sacl/data/conversation.hpp"
#include "sacl/model/perturbation.hpp"

namespace sacl {

enum class ModelKind : std::uint8_t {
    dual_lstm,
    // Context-free baseline: one hidden ReLU layer of width 4*d_h per utterance.
    mlp,
};

struct ModelConfig {
    ModelKind kind = ModelKind::dual_lstm;
    std::size_t d_u = 32;
    std::size_t d_h = 16;
    std::size_t num_lstm_layers = 1;
    std::size_t xi = 2;
    std::size_t num_classes = 4;
    double dropout = 0.2;
    // Which recurrent tracks carry CAT injection sites.
    bool perturb_situation = true;
    bool perturb_speaker = true;

    std::size_t z_dim() const { return 4 * d_h; }
    void validate() const;
};

using ParamMap = std::map<std::string, Tensor>;

// Dropout masks for one micro-batch. The first pass draws masks from the run
// RNG and records them; after rewind() later passes replay the same masks in
// the same order, so clean and adversarial views share a subnetwork.
class DropoutMasks {
public:
    DropoutMasks(double rate, Rng& rng) : rate_(rate), rng_(&rng) {}

    std::vector<double> next(std::size_t n);
    void rewind() { cursor_ = 0; replay_ = true; }
    double rate() const { return rate_; }

private:
    double rate_;
    Rng* rng_;
    std::vector<std::vector<double>> masks_;
    std::size_t cursor_ = 0;
    bool replay_ = false;
};

struct ForwardOptions {
    const PerturbationBundle* bundle = nullptr;
    const FeaturePerturbation* feature_shift = nullptr;
    // Create a named site leaf for every covered channel (zero unless the
    // bundle holds a value), so gradients w.r.t. sites can be requested.
    bool record_sites = false;
    // Register utterance features as differentiable inputs.
    bool feature_inputs = false;
    // Null disables dropout (evaluation).
    DropoutMasks* dropout = nullptr;
};

struct ForwardPass {
    std::vector<ad::Var> z;          // classifier input per flattened utterance
    std::vector<ad::Var> log_probs;  // log softmax(W_c^T z + b_c)
    std::vector<std::pair<SiteKey, ad::Var>> sites;
    std::vector<ad::Var> features;
    std::map<std::string, ad::Var> params;
};

struct LstmWeights {
    ad::Var w_ih;  // [4 d_h, d_in]
    ad::Var w_hh;  // [4 d_h, d_h]
    ad::Var bias;  // [4 d_h]
};

struct CellState {
    ad::Var h;
    ad::Var c;
};

// One LSTM step. Each entry of `sites` that is valid is injected into the
// matching pre-activation (input, forget, output gate, cell candidate).
CellState lstm_cell(ad::Tape& tape, const LstmWeights& w, ad::Var x, CellState prev,
                    const std::array<ad::Var, kNumChannels>& sites);

struct LstmCellParams {
    Tensor w_ih;
    Tensor w_hh;
    Tensor bias;
};

struct LstmCellOutput {
    Tensor h;
    Tensor c;
};

// Value-level convenience wrapper around lstm_cell.
LstmCellOutput lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                              const LstmCellParams& params,
                              const std::array<Tensor, kNumChannels>* perturb = nullptr);

class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    ParamMap init_params(std::uint64_t seed) const;
    // Throws ShapeError unless `params` has exactly the expected names/shapes.
    void check_params(const ParamMap& params) const;

    ForwardPass forward(ad::Tape& tape, const ParamMap& params, const UtteranceBatch& batch,
                        const ForwardOptions& options = {}) const;

    // Sequences of c^si / c^sp for one conversation (value level, no dropout).
    std::vector<Tensor> situation_features(const Conversation& conv, const ParamMap& params,
                                           const PerturbationBundle* bundle = nullptr) const;
    std::vector<Tensor> speaker_features(const Conversation& conv, const ParamMap& params,
                                         const PerturbationBundle* bundle = nullptr) const;

    // Every injection site key the model would create for `batch`.
    std::vector<SiteKey> site_keys(const UtteranceBatch& batch) const;

private:
    struct Context;

    std::vector<ad::Var> run_bilstm_stack(Context& ctx, Network net, std::uint32_t conv,
                                          const std::vector<ad::Var>& inputs,
                                          const std::vector<std::uint32_t>& positions) const;
    std::vector<ad::Var> run_direction(Context& ctx, Network net, std::uint32_t layer,
                                       Direction dir, std::uint32_t conv,
                                       const std::vector<ad::Var>& inputs,
                                       const std::vector<std::uint32_t>& positions) const;
    std::vector<ad::Var> situation_track(Context& ctx, std::uint32_t conv,
                                         const std::vector<ad::Var>& inputs) const;
    std::vector<ad::Var> speaker_track(Context& ctx, std::uint32_t conv, const Conversation& c,
                                       const std::vector<ad::Var>& inputs) const;

    ModelConfig config_;
};

// Grouping of a conversation's positions by speaker, in order of first
// appearance. Throws DataError for a speaker missing from a declared roster.
std::vector<std::pair<std::string, std::vector<std::uint32_t>>> speaker_groups(const Conversation& conv);

std::string lstm_param_name(Network net, std::size_t layer, Direction dir, std::string_view what);

}  // namespace sacl
