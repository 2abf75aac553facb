// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "sacl/adversarial/perturb.hpp"
#include "sacl/core/error.hpp"
#include "sacl/data/dataset.hpp"
#include "sacl/metrics/metrics.hpp"
#include "sacl/model/inference.hpp"
#include "sacl/objectives/losses.hpp"
#include "sacl/trainer/trainer.hpp"
#include "test_support.hpp"

using namespace sacl;
using sacl::testing::random_conversation;
using sacl::testing::random_tensor;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// Two random dialogues with 2..4 turns among up to three speakers.
std::vector<Conversation> toy_dialogues(Rng& rng, std::size_t d_u, int classes) {
    std::vector<Conversation> out;
    for (int c = 0; c < 2; ++c) {
        std::vector<std::string> speakers;
        const std::size_t n = 2 + rng.below(3);
        for (std::size_t t = 0; t < n; ++t) speakers.push_back(std::string(1, char('A' + rng.below(3))));
        out.push_back(random_conversation(rng, "d" + std::to_string(c), speakers, d_u, classes));
    }
    return out;
}

ModelConfig toy_model(std::size_t d_u, std::size_t d_h, std::size_t classes) {
    ModelConfig mc;
    mc.d_u = d_u;
    mc.d_h = d_h;
    mc.num_classes = classes;
    mc.dropout = 0.0;
    return mc;
}

ParamMap random_params(const Model& m, Rng& rng, double scale) {
    ParamMap p = m.init_params(rng.below(1u << 30));
    for (auto& [name, t] : p) t = random_tensor(rng, t.shape(), scale);
    return p;
}

// Denominator floor 1e-6 * max(1, |loss|): below it the central difference is
// dominated by roundoff of the loss itself.
double rel_err(double a, double n, double loss) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6 * std::max(1.0, std::abs(loss))});
}

// --- 1 ------------------------------------------------------------------

// Loss on top of the clean pass; `params` lets a second view share parameters.
using LossBuilder =
    std::function<ad::Var(ad::Tape&, const ParamMap& params, const ForwardPass& clean, std::span<const int>)>;

// Worst relative error between tape gradients and central differences over
// every parameter and every injection site of the clean pass.
double gradient_check(const Model& m, ParamMap p, const UtteranceBatch& batch, const LossBuilder& loss,
                      std::size_t& coords) {
    const std::vector<int> labels = batch.labels();
    auto value_at = [&](const ParamMap& params, const PerturbationBundle& sites) {
        ad::Tape t;
        ForwardOptions o;
        o.record_sites = true;
        o.bundle = &sites;
        const ForwardPass fp = m.forward(t, params, batch, o);
        return t.value(loss(t, params, fp, labels)).item();
    };

    const PerturbationBundle zero;
    ad::Tape tape;
    ForwardOptions o;
    o.record_sites = true;
    o.bundle = &zero;
    const ForwardPass pass = m.forward(tape, p, batch, o);
    const ad::Var out = loss(tape, p, pass, labels);
    tape.backward(out);
    const double f0 = tape.value(out).item();

    const double h = 1e-5;
    double worst = 0;
    for (auto& [name, t] : p) {
        const Tensor g = tape.grad(pass.params.at(name));
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + h;
            const double fp = value_at(p, zero);
            t[i] = orig - h;
            const double fm = value_at(p, zero);
            t[i] = orig;
            worst = std::max(worst, rel_err(g[i], (fp - fm) / (2 * h), f0));
            ++coords;
        }
    }
    for (const auto& [key, var] : pass.sites) {
        const Tensor g = tape.grad(var);
        for (std::size_t i = 0; i < g.size(); ++i) {
            PerturbationBundle b;
            Tensor d(g.shape());
            d[i] = h;
            b.entries.emplace(key, d);
            const double fp = value_at(p, b);
            b.entries.at(key)[i] = -h;
            const double fm = value_at(p, b);
            worst = std::max(worst, rel_err(g[i], (fp - fm) / (2 * h), f0));
            ++coords;
        }
    }
    return worst;
}

Outcome criterion1() {
    constexpr int kInstances = 20;
    const std::size_t d_u = 8, d_h = 4, classes = 3;
    const Model m(toy_model(d_u, d_h, classes));
    const std::vector<double> weights{1.3, 0.6, 1.1};
    const CeTerm focal_term{weights, 2.0};
    ContrastiveConfig cc;
    cc.lambda = 0.3;
    cc.lambda_radv = 0.6;
    cc.tau = 0.5;
    cc.tau_radv = 0.8;
    PerturbationBundle adv;
    const UtteranceBatch* current = nullptr;

    const std::vector<std::pair<std::string, LossBuilder>> losses{
        {"ce", [&](ad::Tape& t, const ParamMap&, const ForwardPass& f,
                   std::span<const int> y) { return objectives::ce(t, f.log_probs, y, weights); }},
        {"focal", [&](ad::Tape& t, const ParamMap&, const ForwardPass& f,
                      std::span<const int> y) { return objectives::focal(t, f.log_probs, y, 2.0, weights); }},
        {"scl", [&](ad::Tape& t, const ParamMap&, const ForwardPass& f,
                    std::span<const int> y) { return objectives::scl(t, f.z, y, 0.5); }},
        {"supcon", [&](ad::Tape& t, const ParamMap&, const ForwardPass& f,
                       std::span<const int> y) { return objectives::supcon(t, f.z, y, 0.3); }},
        {"soft-scl",
         [&](ad::Tape& t, const ParamMap&, const ForwardPass& f, std::span<const int> y) {
             return objectives::soft_scl(t, f.log_probs, f.z, y, 0.3, 0.5, false, focal_term);
         }},
        {"sacl",
         [&](ad::Tape& t, const ParamMap& params, const ForwardPass& f, std::span<const int> y) {
             ForwardOptions ao;
             ao.bundle = &adv;
             const ForwardPass pert = m.forward(t, params, *current, ao);
             return objectives::sacl_total(t, {f.log_probs, f.z}, {pert.log_probs, pert.z}, y, cc, focal_term);
         }},
    };

    Outcome o;
    std::size_t coords = 0;
    std::string per_loss;
    for (const auto& [name, loss] : losses) {
        double worst = 0;
        for (int i = 0; i < kInstances; ++i) {
            Rng rng(derive_seed(1000 + i, 0, name.size()));
            const std::vector<Conversation> data = toy_dialogues(rng, d_u, int(classes));
            const UtteranceBatch batch = make_batch(data);
            current = &batch;
            adv.entries.clear();
            for (const SiteKey& k : m.site_keys(batch)) adv.entries.emplace(k, random_tensor(rng, Shape{d_h}, 0.3));
            const ParamMap p = random_params(m, rng, 0.5);
            worst = std::max(worst, gradient_check(m, p, batch, loss, coords));
        }
        per_loss += " " + name + fmt("=%.1e", worst);
        if (!(worst <= 1e-4)) o.pass = false;
    }
    o.detail = std::to_string(kInstances) + " instances per objective, " + std::to_string(coords) +
               " coordinates, worst rel err:" + per_loss;
    return o;
}

// --- 2 ------------------------------------------------------------------

std::vector<Tensor> values_of(const ad::Tape& t, std::span<const ad::Var> vs) {
    std::vector<Tensor> out;
    for (ad::Var v : vs) out.push_back(t.value(v));
    return out;
}

std::vector<Tensor> probs_of(const ad::Tape& t, std::span<const ad::Var> log_probs) {
    std::vector<Tensor> out;
    for (ad::Var v : log_probs) {
        Tensor p = t.value(v);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(p[k]);
        out.push_back(p);
    }
    return out;
}

Outcome criterion2() {
    const std::size_t d_u = 8, d_h = 4, classes = 3;
    const Model m(toy_model(d_u, d_h, classes));
    double worst_a = 0, worst_b = 0, worst_c = 0;
    bool exact_d = true;
    for (int i = 0; i < 20; ++i) {
        Rng rng(2000 + i);
        const std::vector<Conversation> data = toy_dialogues(rng, d_u, int(classes));
        const UtteranceBatch batch = make_batch(data);
        const std::vector<int> y = batch.labels();
        const ParamMap p = random_params(m, rng, 0.5);
        const CeTerm term{{0.7, 1.4, 0.9}, std::nullopt};

        ad::Tape t;
        const ForwardPass f = m.forward(t, p, batch);
        const std::vector<Tensor> probs = probs_of(t, f.log_probs), z = values_of(t, f.z);

        // (a) lambda = 0 reduces soft SCL to CE, value level and tape level.
        const double ce = ce_loss(probs, y, term.class_weights);
        worst_a = std::max(worst_a, std::abs(soft_scl_loss(probs, z, y, 0.0, 0.3, term) - ce));
        const double tape_ce = t.value(objectives::ce(t, f.log_probs, y, term.class_weights)).item();
        const double tape_soft = t.value(objectives::soft_scl(t, f.log_probs, f.z, y, 0.0, 0.3, false, term)).item();
        worst_a = std::max(worst_a, std::abs(tape_soft - tape_ce));

        // (b) gamma = 0 focal is CE.
        worst_b = std::max(worst_b, std::abs(focal_loss(probs, y, 0.0, term.class_weights) - ce));
        worst_b = std::max(worst_b,
                           std::abs(t.value(objectives::focal(t, f.log_probs, y, 0.0, term.class_weights)).item() -
                                    tape_ce));

        // (c) epsilon = 0 CAT bundle: the SACL total is twice soft SCL.
        ContrastiveConfig cc;
        cc.lambda = cc.lambda_radv = 0.25;
        cc.tau = cc.tau_radv = 0.4;
        cc.normalize_embeddings = i % 2 == 1;
        PerturbationConfig pc;
        pc.epsilon = 0.0;
        const auto attack = make_attack_objective(AttackLoss::soft_scl, cc, term);
        const PerturbationBundle zero = cat_perturb(m, p, batch, attack, pc);
        ForwardOptions ao;
        ao.bundle = &zero;
        const ForwardPass pert = m.forward(t, p, batch, ao);
        const double total =
            t.value(objectives::sacl_total(t, {f.log_probs, f.z}, {pert.log_probs, pert.z}, y, cc, term)).item();
        const double soft =
            t.value(objectives::soft_scl(t, f.log_probs, f.z, y, cc.lambda, cc.tau, cc.normalize_embeddings, term))
                .item();
        worst_c = std::max(worst_c, std::abs(total - 2 * soft));
        worst_c = std::max(worst_c, std::abs(sacl_total({probs, z}, {probs, z}, y, cc, term) -
                                             2 * soft_scl_loss(probs, z, y, cc.lambda, cc.tau, term,
                                                               cc.normalize_embeddings)));

        // (d) an empty bundle leaves the forward pass bit-identical.
        const PerturbationBundle empty;
        ForwardOptions eo;
        eo.bundle = &empty;
        ad::Tape t2;
        const ForwardPass fe = m.forward(t2, p, batch, eo);
        for (std::size_t k = 0; k < f.z.size(); ++k) {
            exact_d = exact_d && t.value(f.z[k]) == t2.value(fe.z[k]) &&
                      t.value(f.log_probs[k]) == t2.value(fe.log_probs[k]) &&
                      t.value(f.z[k]) == t.value(pert.z[k]);
        }
        const std::vector<PerturbationBundle> empties(data.size());
        const Predictions a = infer(m, p, data), b = infer(m, p, data, empties);
        for (std::size_t k = 0; k < a.probs.size(); ++k) exact_d = exact_d && a.probs[k] == b.probs[k];
    }
    Outcome o;
    o.pass = worst_a <= 1e-10 && worst_b <= 1e-10 && worst_c <= 1e-10 && exact_d;
    o.detail = fmt("(a) %.1e (b) %.1e (c) %.1e", worst_a, worst_b, worst_c) +
               std::string(" (d) ") + (exact_d ? "bit-identical" : "differs");
    return o;
}

// --- 3 ------------------------------------------------------------------

Outcome criterion3() {
    const std::size_t d_u = 8, d_h = 4, classes = 3;
    const Model m(toy_model(d_u, d_h, classes));
    double worst = 0;
    std::size_t nonzero = 0, zero_sites = 0, bad_zero = 0;
    auto audit = [&](const Tensor& r, double g_norm, double eps, NormQ q) {
        if (g_norm > 0) {
            worst = std::max(worst, std::abs(norm_q(r.values(), q) - eps));
            ++nonzero;
        } else {
            ++zero_sites;
            if (!r.all_zero()) ++bad_zero;
        }
    };
    for (int i = 0; i < 20; ++i) {
        Rng rng(3000 + i);
        const std::vector<Conversation> data = toy_dialogues(rng, d_u, int(classes));
        const UtteranceBatch batch = make_batch(data);
        const std::vector<int> y = batch.labels();
        const ParamMap p = random_params(m, rng, 0.5);
        ContrastiveConfig cc;
        cc.lambda = 0.2;
        const AttackObjective obj = make_attack_objective(i % 2 ? AttackLoss::ce : AttackLoss::soft_scl, cc, {});

        // Site and feature gradients computed independently of the perturbation code.
        ad::Tape t;
        ForwardOptions fo;
        fo.record_sites = true;
        fo.feature_inputs = true;
        const ForwardPass f = m.forward(t, p, batch, fo);
        t.backward(obj(t, f, y));

        for (const NormQ q : {NormQ::l2, NormQ::linf}) {
            for (const double eps : {0.3, 2.0}) {
                PerturbationConfig pc;
                pc.epsilon = eps;
                pc.norm = q;
                const PerturbationBundle cat = cat_perturb(m, p, batch, obj, pc);
                for (const auto& [key, var] : f.sites) {
                    const Tensor g = t.grad(var);
                    const Tensor* r = cat.find(key);
                    audit(r ? *r : Tensor(g.shape()), norm_q(g.values(), q), eps, q);
                }
                const FeaturePerturbation at = at_perturb(m, p, batch, obj, pc);
                for (std::size_t k = 0; k < f.features.size(); ++k) {
                    audit(at.shifts.at(k), norm_q(t.grad(f.features[k]).values(), q), eps, q);
                }
                Rng crt_rng(derive_seed(i, 4, 0));
                const std::vector<SiteKey> keys = m.site_keys(batch);
                const PerturbationBundle crt = crt_perturb(keys, d_h, eps, q, crt_rng);
                if (crt.size() != keys.size()) ++bad_zero;
                for (const auto& [key, r] : crt.entries) audit(r, 1.0, eps, q);
                // Zero gradients give zero perturbations.
                audit(normalized_perturbation(Tensor(Shape{d_h}), eps, q), 0.0, eps, q);
                const std::vector<Tensor> zg{Tensor(Shape{d_u})};
                audit(at_perturb(zg, pc).shifts.at(0), 0.0, eps, q);
            }
        }
    }
    Outcome o;
    o.pass = worst <= 1e-9 && bad_zero == 0 && nonzero > 0;
    o.detail = std::to_string(nonzero) + " non-zero-gradient perturbations (CAT, AT, CRT), worst |norm-eps| " +
               fmt("%.1e", worst) + "; " + std::to_string(zero_sites) + " zero-gradient sites, " +
               std::to_string(bad_zero) + " non-zero";
    return o;
}

// --- 4 ------------------------------------------------------------------

Outcome criterion4() {
    Outcome o;
    double worst_sup = 0;
    std::size_t pairs = 0;
    for (std::size_t n = 1; n <= 8; ++n) {
        std::vector<std::vector<int>> parts;
        oracle::for_each_partition(n, [&](const std::vector<int>& p) { parts.push_back(p); });
        // Full cross product up to 7 points; at 8 every labeling against every 50th.
        for (const auto& p : parts) {
            for (std::size_t ti = 0; ti < parts.size(); ti += n < 8 ? 1 : 50) {
                const auto& t = parts[ti];
                const SupervisedScores s = supervised_clustering(p, t);
                worst_sup = std::max({worst_sup, std::abs(s.ari - oracle::ari(p, t)),
                                      std::abs(s.nmi - oracle::nmi(p, t)), std::abs(s.fmi - oracle::fmi(p, t))});
                ++pairs;
            }
        }
    }

    double worst_uns = 0;
    Rng rng(4000);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng.below(8);
        const int k = 2 + int(rng.below(std::min<std::size_t>(3, n - 1)));
        std::vector<Tensor> x;
        std::vector<int> lab;
        for (std::size_t i = 0; i < n; ++i) {
            x.push_back(random_tensor(rng, Shape{3}));
            lab.push_back(int(i) < k ? int(i) : int(rng.below(std::uint64_t(k))));
        }
        if (trial % 10 == 0) x[1] = x[0];  // coincident points
        const UnsupervisedScores s = unsupervised_clustering(x, lab);
        worst_uns = std::max({worst_uns, std::abs(s.sc - oracle::silhouette(x, lab)),
                              std::abs(s.chi - oracle::calinski_harabasz(x, lab)) / std::max(1.0, std::abs(s.chi)),
                              std::abs(s.dbi - oracle::davies_bouldin(x, lab)) / std::max(1.0, std::abs(s.dbi))});
    }

    const std::vector<int> yt{0, 0, 1, 1}, yp{0, 1, 1, 1};
    const ClassificationReport r = classification_report(yt, yp, 2);
    // Confusion [[1,1],[0,2]]: precision (1, 2/3), recall (1/2, 1).
    const double f0 = 2 * 1.0 * 0.5 / 1.5, f1 = 2 * (2.0 / 3.0) * 1.0 / (5.0 / 3.0);
    double worst_cls = std::max({std::abs(r.per_class_f1[0] - f0), std::abs(r.per_class_f1[1] - f1),
                                 std::abs(r.weighted_f1 - (2 * f0 + 2 * f1) / 4), std::abs(r.accuracy - 0.75),
                                 std::abs(r.macro_f1 - (f0 + f1) / 2), std::abs(r.precision[1] - 2.0 / 3.0),
                                 std::abs(r.recall[0] - 0.5)});
    if (r.confusion != std::vector<std::vector<std::size_t>>{{1, 1}, {0, 2}}) worst_cls = 1;

    o.pass = worst_sup <= 1e-12 && worst_uns <= 1e-9 && worst_cls <= 1e-12;
    o.detail = std::to_string(pairs) + " labeling pairs (n<=8) worst " + fmt("%.1e", worst_sup) +
               "; 200 point sets (n<=10) worst " + fmt("%.1e", worst_uns) + "; worked report worst " +
               fmt("%.1e", worst_cls);
    return o;
}

// --- 5, 6, 7 ------------------------------------------------------------

const fs::path kConfigDir = SACL_CONFIG_DIR;

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    return json::parse(in);
}

constexpr std::size_t kSeeds = 5;

struct Arm {
    std::string name;
    ExperimentConfig config;
    std::vector<ParamMap> params;
    std::vector<double> test_wf1, ari, sc;
};

struct SyntheticStudy {
    SynthData data;
    Arm sacl, ce, mlp;
    double seconds = 0;
};

SyntheticStudy& study() {
    static SyntheticStudy s = [] {
        const auto t0 = std::chrono::steady_clock::now();
        SyntheticStudy st;
        const SynthConfig sc = synth_config_from_json(read_json(kConfigDir / "synth.json"));
        st.data = synth_generate(sc);
        const std::vector<int> test_labels = all_labels(st.data.test);
        for (auto [arm, file] : {std::pair{&st.sacl, "sacl.json"}, std::pair{&st.ce, "ce.json"},
                                 std::pair{&st.mlp, "mlp.json"}}) {
            arm->name = fs::path(file).stem().string();
            arm->config = experiment_config_from_json(read_json(kConfigDir / file));
            arm->config.model.d_u = st.data.meta.d_u;
            arm->config.model.num_classes = st.data.meta.num_classes();
            const Model model(arm->config.model);
            for (std::size_t k = 0; k < kSeeds; ++k) {
                TrainConfig tc = arm->config.train;
                tc.seed += k;
                FitResult f = fit(model, st.data.train, st.data.val, tc);
                const Predictions p = infer(model, f.params, st.data.test);
                arm->test_wf1.push_back(
                    classification_report(test_labels, p.labels, sc.num_classes).weighted_f1);
                const ClusteringReport cr = clustering_report(p.z, test_labels, sc.num_classes, 0);
                arm->ari.push_back(cr.supervised.ari);
                arm->sc.push_back(cr.unsupervised.sc);
                arm->params.push_back(std::move(f.params));
                std::printf("  [%s seed %zu] test wF1 %.4f  ARI %.4f  SC %.4f  best epoch %zu/%zu\n",
                            arm->name.c_str(), std::size_t(tc.seed), arm->test_wf1.back(), arm->ari.back(),
                            arm->sc.back(), f.log.best_epoch, f.log.epochs.size());
                std::fflush(stdout);
            }
        }
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return st;
    }();
    return s;
}

Outcome criterion5() {
    SyntheticStudy& s = study();
    const double a = mean(s.sacl.test_wf1), c = mean(s.ce.test_wf1), m = mean(s.mlp.test_wf1);
    Outcome o;
    o.pass = a >= c && c >= m && std::min(a, c) - m >= 0.05;
    o.detail = "mean test wF1 SACL " + format_mean_std(s.sacl.test_wf1) + ", CE " + format_mean_std(s.ce.test_wf1) +
               ", MLP " + format_mean_std(s.mlp.test_wf1) + fmt(" (Dual-LSTM vs MLP gap %.2f points; %.0fs training)",
                                                               100 * (std::min(a, c) - m), s.seconds);
    return o;
}

std::size_t increases(const std::vector<double>& curve) {
    std::size_t n = 0;
    for (std::size_t i = 1; i < curve.size(); ++i) n += curve[i] > curve[i - 1];
    return n;
}

Outcome criterion6() {
    SyntheticStudy& s = study();
    const std::vector<double> eps{0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
    const auto t0 = std::chrono::steady_clock::now();
    const RobustnessCurve a = robustness_curve(Model(s.sacl.config.model), s.sacl.params, s.data.test, eps);
    const RobustnessCurve c = robustness_curve(Model(s.ce.config.model), s.ce.params, s.data.test, eps);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Outcome o;
    std::string sa = "SACL", sc = "CE";
    for (std::size_t i = 0; i < eps.size(); ++i) {
        sa += fmt(" %.4f", a.weighted_f1[i]);
        sc += fmt(" %.4f", c.weighted_f1[i]);
        if (eps[i] > 0 && a.weighted_f1[i] < c.weighted_f1[i]) o.pass = false;
    }
    if (increases(a.weighted_f1) > 1 || increases(c.weighted_f1) > 1) o.pass = false;
    o.detail = "eps 0,0.05,0.1,0.2,0.4,0.8,1.6: " + sa + " | " + sc + " | increases " +
               std::to_string(increases(a.weighted_f1)) + "/" + std::to_string(increases(c.weighted_f1)) +
               fmt(" (%.0fs attack)", secs);
    return o;
}

Outcome criterion7() {
    SyntheticStudy& s = study();
    const double ari_a = mean(s.sacl.ari), ari_c = mean(s.ce.ari), sc_a = mean(s.sacl.sc), sc_c = mean(s.ce.sc);
    Outcome o;
    o.pass = ari_a >= ari_c && sc_a >= sc_c;
    o.detail = fmt("mean ARI SACL %.4f vs CE %.4f", ari_a, ari_c) + fmt("; mean SC SACL %.4f vs CE %.4f", sc_a, sc_c);
    return o;
}

// --- 8 ------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::printf("  cli %s failed (%d): %s", args.at(0).c_str(), code, err.str().c_str());
    return code;
}

Outcome criterion8() {
    const fs::path root = fs::temp_directory_path() / ("sacl_acceptance_" + std::to_string(getpid()));
    fs::remove_all(root);
    fs::create_directories(root);

    json synth = read_json(kConfigDir / "synth.json");
    synth["train_dialogues"] = 24;
    synth["val_dialogues"] = 8;
    synth["test_dialogues"] = 8;
    synth["seed"] = 42;
    std::ofstream(root / "synth.json") << synth.dump(2);
    json train = read_json(kConfigDir / "sacl.json");
    train["epochs"] = 3;
    std::ofstream(root / "train.json") << train.dump(2);

    // Second run uses a different worker count; results must not depend on it.
    bool ok = true;
    for (const char* run : {"a", "b"}) {
        setenv("SACL_THREADS", run[0] == 'a' ? "1" : "2", 1);
        const fs::path d = root / run;
        const std::string data = (d / "data").string(), ck = (d / "train" / "seed7" / "checkpoint.json").string(),
                          test = (d / "data" / "test.jsonl").string();
        ok = ok && cli({"synth", "--config", (root / "synth.json").string(), "--out", data}) == 0;
        ok = ok && cli({"train", "--config", (root / "train.json").string(), "--data", data, "--seeds", "2",
                        "--seed", "7", "--out", (d / "train").string()}) == 0;
        ok = ok && cli({"eval", "--checkpoint", ck, "--data", test, "--out", (d / "eval").string()}) == 0;
        ok = ok && cli({"attack", "--model", "sacl=" + (d / "train").string(), "--data", test, "--eps",
                        "0,0.1,0.4", "--out", (d / "attack").string()}) == 0;
        ok = ok && cli({"cluster", "--checkpoint", ck, "--data", test, "--seed", "3", "--out",
                        (d / "cluster").string()}) == 0;
    }
    unsetenv("SACL_THREADS");

    std::size_t compared = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), root / "a");
        if (rel.filename() == "manifest.json") {
            const json ma = read_json(e.path()), mb = read_json(root / "b" / rel);
            for (const char* k : {"config", "seeds", "artifacts", "version", "command"}) {
                if (ma.at(k) != mb.at(k)) ++differing;
            }
            continue;
        }
        ++compared;
        if (!fs::exists(root / "b" / rel) || slurp(e.path()) != slurp(root / "b" / rel)) {
            ++differing;
            std::printf("  differs: %s\n", rel.string().c_str());
        }
    }
    fs::remove_all(root);
    Outcome o;
    o.pass = ok && differing == 0 && compared >= 15;
    o.detail = "synth, train, eval, attack, cluster run twice: " + std::to_string(compared) +
               " artifacts compared, " + std::to_string(differing) + " differ";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
        {"gradient oracles", criterion1},   {"degeneracy identities", criterion2},
        {"perturbation norm contract", criterion3}, {"metric oracles", criterion4},
        {"synthetic ablation direction", criterion5}, {"synthetic robustness direction", criterion6},
        {"clustering direction", criterion7}, {"determinism", criterion8},
    };
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
