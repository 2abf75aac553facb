#include "sacl/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sacl/core/error.hpp"

namespace sacl {

namespace {

constexpr const char* kSpeakerVector = "speaker_vector";
constexpr const char* kClassifierWeight = "classifier.weight";
constexpr const char* kClassifierBias = "classifier.bias";
constexpr const char* kMlpWeight = "mlp.weight";
constexpr const char* kMlpBias = "mlp.bias";

const char* net_tag(Network n) { return n == Network::situation ? "situation" : "speaker"; }

Tensor uniform_tensor(Rng& rng, Shape shape, double bound) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// Parameter leaves are created once per tape; later passes on the same tape
// (clean and adversarial views) share them.
void bind_params(ad::Tape& tape, const ParamMap& params, std::map<std::string, ad::Var>& out) {
    for (const auto& [name, t] : params) {
        ad::Var v = tape.find(name);
        out.emplace(name, v.valid() ? v : tape.parameter(name, t));
    }
}

}  // namespace

std::string SiteKey::str() const {
    static constexpr char channels[] = {'i', 'f', 'o', 'g'};
    std::string s = "site/c" + std::to_string(conversation);
    s += network == Network::situation ? "/si" : "/sp";
    s += "/l" + std::to_string(layer);
    s += direction == Direction::forward ? "/f" : "/b";
    s += "/t" + std::to_string(position) + "/";
    s += channels[static_cast<int>(channel)];
    return s;
}

std::string lstm_param_name(Network net, std::size_t layer, Direction dir, std::string_view what) {
    std::string s = net_tag(net);
    s += ".l" + std::to_string(layer);
    s += dir == Direction::forward ? ".fwd." : ".bwd.";
    s += what;
    return s;
}

void ModelConfig::validate() const {
    if (d_u == 0 || d_h == 0) throw ConfigError("d_u and d_h must be positive");
    if (num_lstm_layers == 0) throw ConfigError("num_lstm_layers must be positive");
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
}

std::vector<double> DropoutMasks::next(std::size_t n) {
    if (replay_) {
        if (cursor_ >= masks_.size() || masks_[cursor_].size() != n) {
            throw std::logic_error("dropout replay does not match the recorded pass");
        }
        return masks_[cursor_++];
    }
    std::vector<double> m(n);
    const double keep = 1.0 / (1.0 - rate_);
    for (double& v : m) v = rng_->uniform() < rate_ ? 0.0 : keep;
    masks_.push_back(m);
    return m;
}

// ---------------------------------------------------------------------------

CellState lstm_cell(ad::Tape& t, const LstmWeights& w, ad::Var x, CellState prev,
                    const std::array<ad::Var, kNumChannels>& sites) {
    const std::size_t dh = t.value(prev.h).size();
    ad::Var pre = t.add(t.add(t.matmul(w.w_ih, x), t.matmul(w.w_hh, prev.h)), w.bias);
    std::array<ad::Var, kNumChannels> ch;
    for (std::size_t k = 0; k < kNumChannels; ++k) {
        ch[k] = t.slice(pre, k * dh, dh);
        if (sites[k].valid()) ch[k] = t.inject(ch[k], sites[k]);
    }
    ad::Var in_gate = t.sigmoid(ch[0]);
    ad::Var forget_gate = t.sigmoid(ch[1]);
    ad::Var out_gate = t.sigmoid(ch[2]);
    ad::Var candidate = t.tanh(ch[3]);
    ad::Var c = t.add(t.mul(forget_gate, prev.c), t.mul(in_gate, candidate));
    ad::Var h = t.mul(out_gate, t.tanh(c));
    return {h, c};
}

LstmCellOutput lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                              const LstmCellParams& params,
                              const std::array<Tensor, kNumChannels>* perturb) {
    const std::size_t dh = h.size();
    if (c.size() != dh || params.w_hh.shape() != Shape{4 * dh, dh} ||
        params.w_ih.shape() != Shape{4 * dh, x.size()} || params.bias.shape() != Shape{4 * dh}) {
        throw ShapeError("lstm_cell_step: inconsistent shapes");
    }
    ad::Tape t;
    LstmWeights w{t.constant(params.w_ih), t.constant(params.w_hh), t.constant(params.bias)};
    std::array<ad::Var, kNumChannels> sites{};
    if (perturb != nullptr) {
        for (std::size_t k = 0; k < kNumChannels; ++k) {
            const Tensor& p = (*perturb)[k];
            if (p.shape() != Shape{dh}) throw ShapeError("lstm_cell_step: perturbation must have shape [d_h]");
            if (!p.all_finite()) throw NumericalError("lstm_cell_step: non-finite perturbation");
            sites[k] = t.constant(p);
        }
    }
    CellState out = lstm_cell(t, w, t.constant(x), {t.constant(h), t.constant(c)}, sites);
    return {t.value(out.h), t.value(out.c)};
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::vector<std::uint32_t>>> speaker_groups(const Conversation& conv) {
    std::vector<std::pair<std::string, std::vector<std::uint32_t>>> groups;
    for (std::uint32_t p = 0; p < conv.utterances.size(); ++p) {
        const std::string& s = conv.utterances[p].speaker;
        if (!conv.speakers.empty() &&
            std::find(conv.speakers.begin(), conv.speakers.end(), s) == conv.speakers.end()) {
            throw DataError("dialogue " + conv.dialogue_id + ": speaker '" + s +
                            "' is not in the speaker map");
        }
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == s; });
        if (it == groups.end()) {
            groups.emplace_back(s, std::vector<std::uint32_t>{p});
        } else {
            it->second.push_back(p);
        }
    }
    return groups;
}

Model::Model(ModelConfig config) : config_(config) { config_.validate(); }

ParamMap Model::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ParamMap p;
    const std::size_t dh = config_.d_h;
    const double bound = 1.0 / std::sqrt(double(dh));
    if (config_.kind == ModelKind::dual_lstm) {
        for (Network net : {Network::situation, Network::speaker}) {
            for (std::size_t l = 0; l < config_.num_lstm_layers; ++l) {
                const std::size_t din = l == 0 ? config_.d_u : 2 * dh;
                for (Direction dir : {Direction::forward, Direction::backward}) {
                    p.emplace(lstm_param_name(net, l, dir, "w_ih"), uniform_tensor(rng, Shape{4 * dh, din}, bound));
                    p.emplace(lstm_param_name(net, l, dir, "w_hh"), uniform_tensor(rng, Shape{4 * dh, dh}, bound));
                    Tensor b(Shape{4 * dh});
                    for (std::size_t i = dh; i < 2 * dh; ++i) b[i] = 1.0;
                    p.emplace(lstm_param_name(net, l, dir, "bias"), std::move(b));
                }
            }
        }
        p.emplace(kSpeakerVector, uniform_tensor(rng, Shape{2 * dh}, bound));
    } else {
        p.emplace(kMlpWeight, uniform_tensor(rng, Shape{config_.z_dim(), config_.d_u},
                                             1.0 / std::sqrt(double(config_.d_u))));
        p.emplace(kMlpBias, Tensor(Shape{config_.z_dim()}));
    }
    p.emplace(kClassifierWeight, uniform_tensor(rng, Shape{config_.z_dim(), config_.num_classes},
                                                1.0 / std::sqrt(double(config_.z_dim()))));
    p.emplace(kClassifierBias, Tensor(Shape{config_.num_classes}));
    return p;
}

void Model::check_params(const ParamMap& params) const {
    const ParamMap ref = init_params(0);
    if (ref.size() != params.size()) {
        throw ShapeError("parameter set has " + std::to_string(params.size()) + " tensors, expected " +
                         std::to_string(ref.size()));
    }
    for (const auto& [name, t] : ref) {
        auto it = params.find(name);
        if (it == params.end()) throw ShapeError("missing parameter " + name);
        if (!(it->second.shape() == t.shape())) {
            throw ShapeError("parameter " + name + " has shape " + it->second.shape().str() +
                             ", expected " + t.shape().str());
        }
    }
}

// ---------------------------------------------------------------------------

struct Model::Context {
    ad::Tape& tape;
    const ForwardOptions& options;
    std::map<std::string, ad::Var>& params;
    std::vector<std::pair<SiteKey, ad::Var>>& sites;

    ad::Var param(const std::string& name) const { return params.at(name); }

    ad::Var maybe_dropout(ad::Var v) {
        if (options.dropout == nullptr || options.dropout->rate() == 0.0) return v;
        return tape.dropout(v, options.dropout->next(tape.value(v).size()));
    }
};

std::vector<ad::Var> Model::run_direction(Context& ctx, Network net, std::uint32_t layer,
                                          Direction dir, std::uint32_t conv,
                                          const std::vector<ad::Var>& inputs,
                                          const std::vector<std::uint32_t>& positions) const {
    ad::Tape& t = ctx.tape;
    const std::size_t dh = config_.d_h;
    const LstmWeights w{ctx.param(lstm_param_name(net, layer, dir, "w_ih")),
                        ctx.param(lstm_param_name(net, layer, dir, "w_hh")),
                        ctx.param(lstm_param_name(net, layer, dir, "bias"))};
    const bool covered = net == Network::situation ? config_.perturb_situation : config_.perturb_speaker;
    const ad::Var zero = t.constant(Tensor(Shape{dh}));
    CellState state{zero, zero};
    std::vector<ad::Var> out(inputs.size());
    const std::size_t n = inputs.size();
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t k = dir == Direction::forward ? s : n - 1 - s;
        std::array<ad::Var, kNumChannels> sites{};
        if (covered && (ctx.options.record_sites || ctx.options.bundle != nullptr)) {
            for (std::size_t c = 0; c < kNumChannels; ++c) {
                const SiteKey key{conv, net, layer, dir, positions[k], static_cast<Channel>(c)};
                const Tensor* given = ctx.options.bundle ? ctx.options.bundle->find(key) : nullptr;
                if (ctx.options.record_sites) {
                    sites[c] = t.site(key.str(), given ? *given : Tensor(Shape{dh}));
                    ctx.sites.emplace_back(key, sites[c]);
                } else if (given != nullptr) {
                    if (given->shape() != Shape{dh}) throw ShapeError("perturbation " + key.str() + " must have shape [d_h]");
                    sites[c] = t.constant(*given);
                }
            }
        }
        state = lstm_cell(t, w, inputs[k], state, sites);
        out[k] = state.h;
    }
    return out;
}

std::vector<ad::Var> Model::run_bilstm_stack(Context& ctx, Network net, std::uint32_t conv,
                                             const std::vector<ad::Var>& inputs,
                                             const std::vector<std::uint32_t>& positions) const {
    std::vector<ad::Var> layer_in = inputs;
    for (std::uint32_t l = 0; l < config_.num_lstm_layers; ++l) {
        for (ad::Var& x : layer_in) x = ctx.maybe_dropout(x);
        const auto fwd = run_direction(ctx, net, l, Direction::forward, conv, layer_in, positions);
        const auto bwd = run_direction(ctx, net, l, Direction::backward, conv, layer_in, positions);
        for (std::size_t k = 0; k < layer_in.size(); ++k) {
            const ad::Var parts[] = {fwd[k], bwd[k]};
            layer_in[k] = ctx.tape.concat(parts);
        }
    }
    return layer_in;
}

std::vector<ad::Var> Model::situation_track(Context& ctx, std::uint32_t conv,
                                            const std::vector<ad::Var>& inputs) const {
    std::vector<std::uint32_t> positions(inputs.size());
    for (std::uint32_t i = 0; i < positions.size(); ++i) positions[i] = i;
    return run_bilstm_stack(ctx, Network::situation, conv, inputs, positions);
}

std::vector<ad::Var> Model::speaker_track(Context& ctx, std::uint32_t conv, const Conversation& c,
                                          const std::vector<ad::Var>& inputs) const {
    std::vector<ad::Var> out(inputs.size());
    for (const auto& [speaker, positions] : speaker_groups(c)) {
        if (positions.size() < config_.xi) {
            const ad::Var o = ctx.param(kSpeakerVector);
            for (std::uint32_t p : positions) out[p] = o;
            continue;
        }
        std::vector<ad::Var> seq;
        seq.reserve(positions.size());
        for (std::uint32_t p : positions) seq.push_back(inputs[p]);
        const auto res = run_bilstm_stack(ctx, Network::speaker, conv, seq, positions);
        for (std::size_t j = 0; j < positions.size(); ++j) out[positions[j]] = res[j];
    }
    return out;
}

ForwardPass Model::forward(ad::Tape& tape, const ParamMap& params, const UtteranceBatch& batch,
                           const ForwardOptions& options) const {
    if (batch.size() == 0) throw DataError("forward: empty batch");
    ForwardPass pass;
    bind_params(tape, params, pass.params);
    Context ctx{tape, options, pass.params, pass.sites};

    const auto* shift = options.feature_shift;
    if (shift != nullptr && shift->shifts.size() != batch.size()) {
        throw ShapeError("feature perturbation count does not match the batch");
    }

    std::size_t flat = 0;
    pass.z.reserve(batch.size());
    for (std::uint32_t ci = 0; ci < batch.conversations.size(); ++ci) {
        const Conversation& conv = *batch.conversations[ci];
        if (conv.utterances.empty()) throw DataError("forward: empty conversation " + conv.dialogue_id);
        std::vector<ad::Var> inputs;
        inputs.reserve(conv.size());
        for (const Utterance& u : conv.utterances) {
            if (u.features.size() != config_.d_u) {
                throw ShapeError("utterance feature dimension " + std::to_string(u.features.size()) +
                                 " != d_u " + std::to_string(config_.d_u));
            }
            Tensor x = u.features;
            if (shift != nullptr) {
                const Tensor& r = shift->shifts[flat + inputs.size()];
                if (!(r.shape() == x.shape())) throw ShapeError("feature perturbation shape mismatch");
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (r[i] != 0.0) x[i] += r[i];
                }
            }
            ad::Var v = options.feature_inputs
                            ? tape.input("u/" + std::to_string(flat + inputs.size()), std::move(x))
                            : tape.constant(std::move(x));
            pass.features.push_back(v);
            inputs.push_back(v);
        }

        if (config_.kind == ModelKind::dual_lstm) {
            const auto si = situation_track(ctx, ci, inputs);
            const auto sp = speaker_track(ctx, ci, conv, inputs);
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                const ad::Var parts[] = {si[k], sp[k]};
                pass.z.push_back(tape.concat(parts));
            }
        } else {
            for (ad::Var x : inputs) {
                x = ctx.maybe_dropout(x);
                ad::Var h = tape.relu(tape.add(tape.matmul(ctx.param(kMlpWeight), x), ctx.param(kMlpBias)));
                pass.z.push_back(h);
            }
        }
        flat += inputs.size();
    }

    pass.log_probs.reserve(pass.z.size());
    for (ad::Var z : pass.z) {
        ad::Var zin = ctx.maybe_dropout(z);
        ad::Var logits = tape.add(tape.matmul(zin, ctx.param(kClassifierWeight)), ctx.param(kClassifierBias));
        pass.log_probs.push_back(tape.log_softmax(logits));
    }
    return pass;
}

std::vector<Tensor> Model::situation_features(const Conversation& conv, const ParamMap& params,
                                              const PerturbationBundle* bundle) const {
    if (conv.utterances.empty()) throw DataError("situation_features: empty conversation");
    ad::Tape tape;
    ForwardOptions opt;
    opt.bundle = bundle;
    ForwardPass pass;
    bind_params(tape, params, pass.params);
    Context ctx{tape, opt, pass.params, pass.sites};
    std::vector<ad::Var> inputs;
    for (const Utterance& u : conv.utterances) inputs.push_back(tape.constant(u.features));
    std::vector<Tensor> out;
    for (ad::Var v : situation_track(ctx, 0, inputs)) out.push_back(tape.value(v));
    return out;
}

std::vector<Tensor> Model::speaker_features(const Conversation& conv, const ParamMap& params,
                                            const PerturbationBundle* bundle) const {
    if (conv.utterances.empty()) throw DataError("speaker_features: empty conversation");
    ad::Tape tape;
    ForwardOptions opt;
    opt.bundle = bundle;
    ForwardPass pass;
    bind_params(tape, params, pass.params);
    Context ctx{tape, opt, pass.params, pass.sites};
    std::vector<ad::Var> inputs;
    for (const Utterance& u : conv.utterances) inputs.push_back(tape.constant(u.features));
    std::vector<Tensor> out;
    for (ad::Var v : speaker_track(ctx, 0, conv, inputs)) out.push_back(tape.value(v));
    return out;
}

std::vector<SiteKey> Model::site_keys(const UtteranceBatch& batch) const {
    std::vector<SiteKey> keys;
    if (config_.kind != ModelKind::dual_lstm) return keys;
    auto add_run = [&](std::uint32_t conv, Network net, const std::vector<std::uint32_t>& positions) {
        for (std::uint32_t l = 0; l < config_.num_lstm_layers; ++l) {
            for (Direction dir : {Direction::forward, Direction::backward}) {
                for (std::uint32_t p : positions) {
                    for (std::size_t c = 0; c < kNumChannels; ++c) {
                        keys.push_back({conv, net, l, dir, p, static_cast<Channel>(c)});
                    }
                }
            }
        }
    };
    for (std::uint32_t ci = 0; ci < batch.conversations.size(); ++ci) {
        const Conversation& conv = *batch.conversations[ci];
        if (config_.perturb_situation) {
            std::vector<std::uint32_t> all(conv.size());
            for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
            add_run(ci, Network::situation, all);
        }
        if (config_.perturb_speaker) {
            for (const auto& [speaker, positions] : speaker_groups(conv)) {
                if (positions.size() >= config_.xi) add_run(ci, Network::speaker, positions);
            }
        }
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace sacl
