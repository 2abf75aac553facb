#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sacl/core/error.hpp"
#include "sacl/model/model.hpp"
#include "sacl/objectives/losses.hpp"
#include "test_support.hpp"

using namespace sacl;
using sacl::testing::random_conversation;
using sacl::testing::random_tensor;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<Tensor> random_probs(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor p(Shape{k});
        double s = 0;
        for (std::size_t j = 0; j < k; ++j) s += (p[j] = std::exp(rng.normal()));
        for (std::size_t j = 0; j < k; ++j) p[j] /= s;
        out.push_back(p);
    }
    return out;
}

// Brute force of the SCL sum, written independently of the tape.
double brute_scl(const std::vector<Tensor>& z, const std::vector<int>& y, double tau) {
    double total = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        std::size_t pos = 0;
        double denom = 0;
        for (std::size_t a = 0; a < z.size(); ++a) {
            if (a == i) continue;
            double d = 0;
            for (std::size_t k = 0; k < z[i].size(); ++k) d += z[i][k] * z[a][k];
            denom += std::exp(d / tau);
            pos += y[a] == y[i];
        }
        if (pos == 0) continue;
        double acc = 0;
        for (std::size_t e = 0; e < z.size(); ++e) {
            if (e == i || y[e] != y[i]) continue;
            double d = 0;
            for (std::size_t k = 0; k < z[i].size(); ++k) d += z[i][k] * z[e][k];
            acc += std::log(std::exp(d / tau) / denom);
        }
        total += -acc / static_cast<double>(pos);
    }
    return total;
}

}  // namespace

TEST_CASE("ce_loss: perfect, analytic and additive") {
    const std::vector<Tensor> perfect{Tensor::vector({1, 0})};
    const std::vector<Tensor> half{Tensor::vector({0.5, 0.5})};
    const std::vector<int> y0{0};
    CHECK(ce_loss(perfect, y0) == 0.0);
    CHECK(ce_loss(half, y0) == doctest::Approx(kLn2).epsilon(1e-15));
    const std::vector<Tensor> both{perfect[0], half[0]};
    const std::vector<int> yy{0, 0};
    CHECK(ce_loss(both, yy) == doctest::Approx(0.6931).epsilon(1e-4));
    const std::vector<double> w{2.0, 1.0};
    CHECK(ce_loss(half, y0, w) == doctest::Approx(2 * kLn2));
}

TEST_CASE("ce_loss: label range and probability floor") {
    const std::vector<Tensor> p{Tensor::vector({1, 0})};
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(ce_loss(p, bad), DataError);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(ce_loss(p, neg), DataError);
    LossDiagnostics diag;
    const std::vector<int> y1{1};
    const double v = ce_loss(p, y1, {}, &diag);
    CHECK(v == doctest::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(v));
    CHECK(diag.clamped == 1);
}

TEST_CASE("focal_loss: reductions and analytic value") {
    Rng rng(1);
    const auto p = random_probs(rng, 5, 3);
    const std::vector<int> y{0, 2, 1, 1, 0};
    CHECK(focal_loss(p, y, 0.0) == ce_loss(p, y));
    const std::vector<Tensor> perfect{Tensor::vector({0, 1, 0})};
    const std::vector<int> y1{1};
    CHECK(focal_loss(perfect, y1, 2.0) == 0.0);
    CHECK(focal_loss(perfect, y1, 0.5) == 0.0);
    const std::vector<Tensor> half{Tensor::vector({0.5, 0.5})};
    const std::vector<int> y0{0};
    CHECK(focal_loss(half, y0, 2.0) == doctest::Approx(0.25 * kLn2).epsilon(1e-14));
    CHECK(focal_loss(half, y0, 2.0) == doctest::Approx(0.1733).epsilon(1e-3));
    const std::vector<double> w{3.0, 1.0};
    CHECK(focal_loss(half, y0, 2.0, w) == doctest::Approx(0.75 * kLn2));
    CHECK_THROWS_AS(focal_loss(half, y0, -1.0), ConfigError);
}

TEST_CASE("scl_loss: degenerate cases and the three-sample oracle") {
    const std::vector<Tensor> same{Tensor::vector({0.3, 0.4}), Tensor::vector({0.3, 0.4})};
    const std::vector<int> yy{1, 1};
    CHECK(scl_loss(same, yy, 0.1) == 0.0);
    const std::vector<int> distinct{0, 1};
    CHECK(scl_loss(same, distinct, 0.1) == 0.0);

    const std::vector<Tensor> z{Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({1, 1})};
    const std::vector<int> y{0, 0, 1};
    const double expected = 2 * std::log(1 + std::numbers::e);
    CHECK(scl_loss(z, y, 1.0) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(scl_loss(z, y, 1.0) == doctest::Approx(2.6265).epsilon(1e-4));

    const std::vector<Tensor> one{Tensor::vector({1, 2})};
    const std::vector<int> y1{0};
    CHECK(scl_loss(one, y1, 0.5) == 0.0);

    std::vector<Tensor> bad = z;
    bad[1][0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(scl_loss(bad, y, 1.0), NumericalError);
    CHECK_THROWS_AS(scl_loss(z, y, 0.0), ConfigError);
}

TEST_CASE("scl_loss: matches brute force on random batches, non-negative") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        std::vector<Tensor> z;
        std::vector<int> y;
        for (std::size_t i = 0; i < n; ++i) {
            z.push_back(random_tensor(rng, Shape{5}, 0.7));
            y.push_back(static_cast<int>(rng.below(3)));
        }
        const double tau = 0.1 + rng.uniform();
        const double v = scl_loss(z, y, tau);
        CHECK(v >= 0.0);
        CHECK(v == doctest::Approx(brute_scl(z, y, tau)).epsilon(1e-10));
    }
}

TEST_CASE("supcon_loss: unit-norm reduction and scale invariance") {
    const double s = 1 / std::sqrt(2.0);
    const std::vector<Tensor> unit{Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({s, s})};
    const std::vector<int> y{0, 0, 1};
    CHECK(supcon_loss(unit, y, 0.5) == doctest::Approx(scl_loss(unit, y, 0.5)).epsilon(1e-14));

    Rng rng(3);
    std::vector<Tensor> z;
    const std::vector<int> labels{0, 1, 0, 1, 2, 2};
    for (int i = 0; i < 6; ++i) z.push_back(random_tensor(rng, Shape{4}));
    std::vector<Tensor> big = z;
    for (auto& t : big) {
        for (std::size_t k = 0; k < t.size(); ++k) t[k] *= 10;
    }
    CHECK(supcon_loss(big, labels, 0.1) == doctest::Approx(supcon_loss(z, labels, 0.1)).epsilon(1e-12));
    CHECK(scl_loss(big, labels, 0.1) != doctest::Approx(scl_loss(z, labels, 0.1)));

    const std::vector<Tensor> twins{Tensor::vector({0.6, 0.8}), Tensor::vector({0.6, 0.8})};
    const std::vector<int> yy{3, 3};
    CHECK(supcon_loss(twins, yy, 0.1) == doctest::Approx(0.0).epsilon(1e-15));

    const std::vector<Tensor> zero{Tensor::vector({0, 0}), Tensor::vector({1, 0})};
    CHECK_THROWS(supcon_loss(zero, yy, 0.1));
}

TEST_CASE("soft_scl_loss: reductions, additivity, table value") {
    const std::vector<Tensor> probs{Tensor::vector({0.5, 0.5}), Tensor::vector({0.5, 0.5}),
                                    Tensor::vector({1.0, 0.0})};
    const std::vector<Tensor> z{Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({1, 1})};
    const std::vector<int> y{0, 0, 0};
    CHECK(soft_scl_loss(probs, z, y, 0.0, 1.0) == ce_loss(probs, y));
    CHECK(soft_scl_loss(probs, z, y, 1.0, 1.0) ==
          doctest::Approx(ce_loss(probs, y) + scl_loss(z, y, 1.0)).epsilon(1e-14));

    // CE = ln 2, SCL = 2 log(1+e), lambda = 0.05.
    const std::vector<Tensor> p2{Tensor::vector({1, 0}), Tensor::vector({0.5, 0.5}), Tensor::vector({0, 1})};
    const std::vector<int> y2{0, 0, 1};
    CHECK(soft_scl_loss(p2, z, y2, 0.05, 1.0) == doctest::Approx(0.8244).epsilon(1e-4));

    CeTerm focal;
    focal.focal_gamma = 2.0;
    CHECK(soft_scl_loss(p2, z, y2, 0.0, 1.0, focal) == doctest::Approx(0.25 * kLn2));
}

TEST_CASE("soft_scl_loss: affine in lambda, permutation invariant") {
    Rng rng(4);
    const auto probs = random_probs(rng, 7, 4);
    std::vector<Tensor> z;
    std::vector<int> y;
    for (int i = 0; i < 7; ++i) {
        z.push_back(random_tensor(rng, Shape{6}, 0.5));
        y.push_back(static_cast<int>(rng.below(4)));
    }
    const double l0 = soft_scl_loss(probs, z, y, 0.0, 0.3);
    const double l1 = soft_scl_loss(probs, z, y, 1.0, 0.3);
    CHECK(soft_scl_loss(probs, z, y, 0.37, 0.3) == doctest::Approx(l0 + 0.37 * (l1 - l0)).epsilon(1e-13));

    std::vector<std::size_t> perm{3, 0, 6, 2, 5, 1, 4};
    std::vector<Tensor> pp, zz;
    std::vector<int> yy;
    for (auto k : perm) {
        pp.push_back(probs[k]);
        zz.push_back(z[k]);
        yy.push_back(y[k]);
    }
    CHECK(soft_scl_loss(pp, zz, yy, 0.5, 0.3) == doctest::Approx(soft_scl_loss(probs, z, y, 0.5, 0.3)).epsilon(1e-13));
    CHECK(ce_loss(probs, y) >= 0);
    CHECK(focal_loss(probs, y, 1.5) >= 0);
}

TEST_CASE("sacl_total: degeneracies and errors") {
    Rng rng(5);
    const auto probs = random_probs(rng, 6, 3);
    std::vector<Tensor> z;
    const std::vector<int> y{0, 1, 0, 2, 1, 0};
    for (int i = 0; i < 6; ++i) z.push_back(random_tensor(rng, Shape{4}, 0.5));
    ContrastiveConfig cfg;
    cfg.lambda = cfg.lambda_radv = 0.3;
    cfg.tau = cfg.tau_radv = 0.2;
    const LabeledView view{probs, z};
    CHECK(sacl_total(view, view, y, cfg) == 2 * soft_scl_loss(probs, z, y, 0.3, 0.2));

    const auto probs2 = random_probs(rng, 6, 3);
    cfg.lambda = cfg.lambda_radv = 0.0;
    CHECK(sacl_total(view, LabeledView{probs2, z}, y, cfg) ==
          doctest::Approx(ce_loss(probs, y) + ce_loss(probs2, y)).epsilon(1e-14));

    const std::vector<Tensor> short_p(probs.begin(), probs.begin() + 5);
    const std::vector<Tensor> short_z(z.begin(), z.begin() + 5);
    CHECK_THROWS_AS(sacl_total(view, LabeledView{short_p, short_z}, y, cfg), ShapeError);
    cfg.tau_radv = 0.0;
    CHECK_THROWS_AS(sacl_total(view, view, y, cfg), ConfigError);
}

TEST_CASE("sacl_total: gradients through the model match finite differences") {
    ModelConfig mc;
    mc.d_u = 3;
    mc.d_h = 2;
    mc.num_classes = 3;
    mc.dropout = 0.0;
    const Model m(mc);
    Rng rng(6);
    ParamMap p = m.init_params(6);
    for (auto& [name, t] : p) t = random_tensor(rng, t.shape(), 0.6);
    std::vector<Conversation> data{random_conversation(rng, "a", {"A", "B", "A", "B", "A", "C"}, mc.d_u, 3)};
    const UtteranceBatch batch = make_batch(data);
    const std::vector<int> labels = batch.labels();
    PerturbationBundle adv;
    for (const SiteKey& k : m.site_keys(batch)) adv.entries.emplace(k, random_tensor(rng, Shape{mc.d_h}, 0.2));
    ContrastiveConfig cfg;
    cfg.lambda = 0.3;
    cfg.lambda_radv = 0.2;
    cfg.tau = 0.5;
    cfg.tau_radv = 0.7;
    CeTerm term;
    term.class_weights = {1.2, 0.7, 1.1};
    term.focal_gamma = 1.5;

    auto build = [&](ad::Tape& t, const ParamMap& params) {
        ForwardPass clean = m.forward(t, params, batch);
        ForwardOptions opt;
        opt.bundle = &adv;
        ForwardPass pert = m.forward(t, params, batch, opt);
        ad::Var loss = objectives::sacl_total(t, {clean.log_probs, clean.z}, {pert.log_probs, pert.z}, labels,
                                              cfg, term);
        return std::make_tuple(loss, std::move(clean.params), std::move(pert.params));
    };
    ad::Tape tape;
    auto [loss, pa, pb] = build(tape, p);
    tape.backward(loss);
    const double f0 = tape.value(loss).item();
    const double h = 1e-5, floor = 1e-6 * std::max(1.0, std::abs(f0));
    double worst = 0;
    for (auto& [name, t] : p) {
        REQUIRE(pa.at(name).id == pb.at(name).id);
        const Tensor g = tape.grad(pa.at(name));
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + h;
            ad::Tape tp;
            const double fp = tp.value(std::get<0>(build(tp, p))).item();
            t[i] = orig - h;
            ad::Tape tm;
            const double fm = tm.value(std::get<0>(build(tm, p))).item();
            t[i] = orig;
            const double n = (fp - fm) / (2 * h);
            worst = std::max(worst, std::abs(g[i] - n) / std::max({std::abs(g[i]), std::abs(n), floor}));
        }
    }
    CAPTURE(worst);
    CHECK(worst <= 1e-4);
}
