#include "sacl/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "sacl/core/error.hpp"
#include "sacl/data/dataset.hpp"
#include "sacl/metrics/metrics.hpp"
#include "sacl/model/checkpoint.hpp"
#include "sacl/model/inference.hpp"

namespace sacl {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (grad_accum_steps < 1) throw ConfigError("grad_accum_steps must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
    if (objective == Objective::sacl && strategy == Strategy::vt) {
        throw ConfigError("objective sacl needs an adversarial strategy (at, crt or cat), not vt");
    }
    if (focal_gamma && !(*focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
    contrastive.validate();
    perturbation.validate();
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::vt: return "vt";
        case Strategy::at: return "at";
        case Strategy::crt: return "crt";
        case Strategy::cat: return "cat";
    }
    return "vt";
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::ce: return "ce";
        case Objective::ce_scl: return "ce+scl";
        case Objective::ce_supcon: return "ce+supcon";
        case Objective::sacl: return "sacl";
    }
    return "ce";
}

Strategy parse_strategy(const std::string& s) {
    for (Strategy x : {Strategy::vt, Strategy::at, Strategy::crt, Strategy::cat}) {
        if (to_string(x) == s) return x;
    }
    throw ConfigError("unknown strategy '" + s + "' (expected vt, at, crt or cat)");
}

Objective parse_objective(const std::string& s) {
    for (Objective x : {Objective::ce, Objective::ce_scl, Objective::ce_supcon, Objective::sacl}) {
        if (to_string(x) == s) return x;
    }
    throw ConfigError("unknown objective '" + s + "' (expected ce, ce+scl, ce+supcon or sacl)");
}

namespace {

const std::set<std::string>& model_keys() {
    static const std::set<std::string> keys = [] {
        std::set<std::string> k;
        const json ref = model_config_to_json(ModelConfig{});
        for (const auto& [key, v] : ref.items()) k.insert(key);
        return k;
    }();
    return keys;
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

json train_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"patience", c.patience},
                {"batch_size", c.batch_size},
                {"grad_accum_steps", c.grad_accum_steps},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"seed", c.seed},
                {"strategy", to_string(c.strategy)},
                {"objective", to_string(c.objective)},
                {"lambda", c.contrastive.lambda},
                {"lambda_radv", c.contrastive.lambda_radv},
                {"tau", c.contrastive.tau},
                {"tau_radv", c.contrastive.tau_radv},
                {"normalize_embeddings", c.contrastive.normalize_embeddings},
                {"epsilon", c.perturbation.epsilon},
                {"perturbation_rate", c.perturbation.rate},
                {"norm_q", to_string(c.perturbation.norm)},
                {"attack_loss", to_string(c.perturbation.attack_loss)},
                {"class_weight", c.class_weight},
                {"focal_gamma", c.focal_gamma ? json(*c.focal_gamma) : json(nullptr)},
                {"normalize_loss", c.normalize_loss}};
}

}  // namespace

json experiment_config_to_json(const ExperimentConfig& c) {
    json j = model_config_to_json(c.model);
    j.update(train_json(c.train));
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const json train_known = train_json(c.train);
    json model_part = json::object();
    for (const auto& [key, v] : j.items()) {
        if (model_keys().count(key)) {
            model_part[key] = v;
        } else if (!train_known.contains(key)) {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    c.model = model_config_from_json(model_part, c.model);

    TrainConfig& t = c.train;
    read(j, "epochs", t.epochs);
    read(j, "patience", t.patience);
    read(j, "batch_size", t.batch_size);
    read(j, "grad_accum_steps", t.grad_accum_steps);
    read(j, "learning_rate", t.learning_rate);
    read(j, "weight_decay", t.weight_decay);
    read(j, "seed", t.seed);
    std::string s;
    if (j.contains("strategy")) read(j, "strategy", s), t.strategy = parse_strategy(s);
    if (j.contains("objective")) read(j, "objective", s), t.objective = parse_objective(s);
    read(j, "lambda", t.contrastive.lambda);
    read(j, "lambda_radv", t.contrastive.lambda_radv);
    read(j, "tau", t.contrastive.tau);
    read(j, "tau_radv", t.contrastive.tau_radv);
    read(j, "normalize_embeddings", t.contrastive.normalize_embeddings);
    read(j, "epsilon", t.perturbation.epsilon);
    read(j, "perturbation_rate", t.perturbation.rate);
    if (j.contains("norm_q")) read(j, "norm_q", s), t.perturbation.norm = parse_norm(s);
    if (j.contains("attack_loss")) read(j, "attack_loss", s), t.perturbation.attack_loss = parse_attack_loss(s);
    read(j, "class_weight", t.class_weight);
    if (j.contains("focal_gamma")) {
        if (j.at("focal_gamma").is_null()) {
            t.focal_gamma.reset();
        } else {
            double g = 0;
            read(j, "focal_gamma", g);
            t.focal_gamma = g;
        }
    }
    read(j, "normalize_loss", t.normalize_loss);
    t.validate();
    return c;
}

std::vector<double> compute_class_weights(std::span<const int> train_labels, std::span<const int> val_labels,
                                          std::size_t num_classes, std::span<const std::string> label_names) {
    if (num_classes == 0) throw ConfigError("compute_class_weights: num_classes must be positive");
    std::vector<double> count(num_classes, 0.0);
    double total = 0.0;
    for (auto labels : {train_labels, val_labels}) {
        for (int y : labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
                throw DataError("compute_class_weights: label " + std::to_string(y) + " out of range");
            }
            count[static_cast<std::size_t>(y)] += 1.0;
            total += 1.0;
        }
    }
    std::vector<double> w(num_classes);
    double mean = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (count[k] == 0.0) {
            const std::string name = k < label_names.size() ? " '" + label_names[k] + "'" : "";
            throw DataError("class " + std::to_string(k) + name + " has no examples in train or val");
        }
        w[k] = total / (double(num_classes) * count[k]);
        mean += w[k] / double(num_classes);
    }
    for (double& x : w) x /= mean;
    return w;
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr, double weight_decay) {
    if (grads.size() != params.size()) throw ShapeError("adam_step: gradient set does not match parameters");
    ++state.t;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, double(state.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, double(state.t));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ShapeError("adam_step: no gradient for " + name);
        const Tensor& g = git->second;
        if (!(g.shape() == p.shape())) throw ShapeError("adam_step: gradient shape mismatch for " + name);
        Tensor& m = state.m.try_emplace(name, p.shape()).first->second;
        Tensor& v = state.v.try_emplace(name, p.shape()).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= lr * weight_decay * p[i];
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            const double mhat = m[i] / bc1, vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

TrainRngs::TrainRngs(std::uint64_t seed)
    : dropout(derive_seed(seed, streams::dropout)), perturb(derive_seed(seed, streams::perturb)) {}

namespace {

ad::Var view_loss(ad::Tape& t, const ForwardPass& pass, std::span<const int> labels, Objective obj, double lambda,
                  double tau, bool normalize, const CeTerm& term, LossDiagnostics* diag) {
    if (obj == Objective::ce) return objectives::ce_term(t, pass.log_probs, labels, term, diag);
    const bool supcon = normalize || obj == Objective::ce_supcon;
    return objectives::soft_scl(t, pass.log_probs, pass.z, labels, lambda, tau, supcon, term, diag);
}

}  // namespace

MicroBatchResult micro_batch(const Model& model, const ParamMap& params, const UtteranceBatch& batch,
                             const TrainConfig& config, const CeTerm& term, TrainRngs& rngs) {
    MicroBatchResult out;
    const std::vector<int> labels = batch.labels();
    const ContrastiveConfig& cc = config.contrastive;
    DropoutMasks masks(model.config().dropout, rngs.dropout);

    const bool adversarial =
        config.strategy != Strategy::vt && rngs.perturb.bernoulli(config.perturbation.rate);

    ad::Tape tape;
    ForwardOptions clean_opt;
    clean_opt.dropout = &masks;
    clean_opt.record_sites = adversarial && config.strategy == Strategy::cat;
    clean_opt.feature_inputs = adversarial && config.strategy == Strategy::at;
    const ForwardPass clean = model.forward(tape, params, batch, clean_opt);
    ad::Var loss = view_loss(tape, clean, labels, config.objective, cc.lambda, cc.tau, cc.normalize_embeddings, term,
                             &out.diagnostics);

    if (adversarial) {
        PerturbationBundle bundle;
        FeaturePerturbation shift;
        ForwardOptions adv_opt;
        if (config.strategy == Strategy::crt) {
            bundle = crt_perturb(model.site_keys(batch), model.config().d_h, config.perturbation.epsilon,
                                 config.perturbation.norm, rngs.perturb);
            adv_opt.bundle = &bundle;
        } else {
            ContrastiveConfig attack_cc = cc;
            attack_cc.normalize_embeddings = cc.normalize_embeddings || config.objective == Objective::ce_supcon;
            const AttackObjective attack = make_attack_objective(config.perturbation.attack_loss, attack_cc, term);
            tape.backward(attack(tape, clean, labels));
            if (config.strategy == Strategy::cat) {
                bundle = bundle_from_site_grads(tape, clean.sites, config.perturbation.epsilon,
                                                config.perturbation.norm);
                adv_opt.bundle = &bundle;
            } else {
                std::vector<Tensor> grads;
                grads.reserve(clean.features.size());
                for (ad::Var f : clean.features) {
                    Tensor g = tape.grad(f);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
                    grads.push_back(std::move(g));
                }
                shift = at_perturb(grads, config.perturbation);
                adv_opt.feature_shift = &shift;
            }
        }
        masks.rewind();
        adv_opt.dropout = &masks;
        const ForwardPass adv = model.forward(tape, params, batch, adv_opt);
        const ad::Var adv_loss = view_loss(tape, adv, labels, config.objective, cc.lambda_radv, cc.tau_radv,
                                           cc.normalize_embeddings, term, &out.diagnostics);
        loss = tape.add(loss, adv_loss);
        out.perturbed = true;
    }

    if (config.normalize_loss) loss = tape.scale(loss, 1.0 / double(batch.size()));
    out.loss = tape.value(loss)[0];
    if (!std::isfinite(out.loss)) {
        throw NumericalError("non-finite training loss (" + std::to_string(out.diagnostics.clamped) +
                             " clamped probabilities)");
    }
    tape.backward(loss);
    for (const auto& [name, var] : clean.params) out.grads.emplace(name, tape.grad(var));
    return out;
}

Trainer::Trainer(const Model& model, TrainConfig config, CeTerm term)
    : model_(model), config_(std::move(config)), term_(std::move(term)), rngs_(config_.seed) {
    config_.validate();
}

MicroBatchResult Trainer::step(ParamMap& params, const UtteranceBatch& batch) {
    MicroBatchResult r = micro_batch(model_, params, batch, config_, term_, rngs_);
    if (pending_ == 0) {
        acc_ = r.grads;
    } else {
        for (auto& [name, g] : acc_) {
            const Tensor& add = r.grads.at(name);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += add[i];
        }
    }
    if (++pending_ == config_.grad_accum_steps) flush(params);
    return r;
}

void Trainer::flush(ParamMap& params) {
    if (pending_ == 0) return;
    adam_step(params, acc_, adam_, config_.learning_rate, config_.weight_decay);
    pending_ = 0;
}

json to_json(const RunLog& log) {
    json epochs = json::array();
    for (const EpochLog& e : log.epochs) {
        epochs.push_back(json{{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"val_accuracy", e.val_accuracy},
                              {"val_weighted_f1", e.val_weighted_f1},
                              {"perturbed_batches", e.perturbed_batches},
                              {"best", e.best}});
    }
    return json{{"epochs", std::move(epochs)},
                {"best_epoch", log.best_epoch},
                {"best_val_weighted_f1", log.best_val_weighted_f1},
                {"stopped_early", log.stopped_early},
                {"optimizer_steps", log.optimizer_steps}};
}

std::vector<int> all_labels(std::span<const Conversation> data) {
    std::vector<int> out;
    for (const Conversation& c : data) {
        for (const Utterance& u : c.utterances) out.push_back(u.label);
    }
    return out;
}

FitResult fit(const Model& model, std::span<const Conversation> train, std::span<const Conversation> val,
              const TrainConfig& config) {
    config.validate();
    if (train.empty() || val.empty()) throw DataError("fit: train and validation sets must be non-empty");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t C = model.config().num_classes;

    CeTerm term;
    term.focal_gamma = config.focal_gamma;
    if (config.class_weight) term.class_weights = compute_class_weights(all_labels(train), all_labels(val), C);

    FitResult out;
    ParamMap params = model.init_params(derive_seed(config.seed, streams::init));
    out.params = params;
    Trainer trainer(model, config, term);
    const std::vector<int> val_labels = all_labels(val);
    std::size_t since_best = 0;
    bool have_best = false;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto batches =
            batch_iter(train, config.batch_size, derive_seed(config.seed, streams::shuffle, std::uint32_t(epoch)));
        EpochLog log;
        log.epoch = epoch;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            try {
                const MicroBatchResult r = trainer.step(params, batches[b]);
                log.train_loss += r.loss;
                log.perturbed_batches += r.perturbed;
            } catch (const NumericalError& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + " step " + std::to_string(b + 1) + ": " +
                                     e.what());
            }
        }
        trainer.flush(params);
        log.train_loss /= double(batches.size());

        const Predictions p = infer(model, params, val);
        const ClassificationReport rep = classification_report(val_labels, p.labels, C);
        log.val_accuracy = rep.accuracy;
        log.val_weighted_f1 = rep.weighted_f1;
        if (!have_best || rep.weighted_f1 > out.log.best_val_weighted_f1) {
            have_best = true;
            out.log.best_epoch = epoch;
            out.log.best_val_weighted_f1 = rep.weighted_f1;
            out.params = params;
            since_best = 0;
        } else {
            ++since_best;
        }
        out.log.epochs.push_back(log);
        if (since_best >= config.patience) {
            out.log.stopped_early = epoch < config.epochs;
            break;
        }
    }
    for (EpochLog& e : out.log.epochs) e.best = e.epoch == out.log.best_epoch;
    out.log.optimizer_steps = trainer.optimizer_steps();
    out.log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace sacl
