#include "sacl/model/inference.hpp"

#include <cmath>

#include "sacl/core/error.hpp"

namespace sacl {

int argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best);
}

Tensor classify(const Tensor& z, const Tensor& w_c, const Tensor& b_c) {
    if (w_c.rank() != 2 || z.shape() != Shape{w_c.shape()[0]} || b_c.shape() != Shape{w_c.shape()[1]}) {
        throw ShapeError("classify: z " + z.shape().str() + ", W_c " + w_c.shape().str() + ", b_c " +
                         b_c.shape().str());
    }
    ad::Tape t;
    ad::Var logits = t.add(t.matmul(t.constant(z), t.constant(w_c)), t.constant(b_c));
    Tensor p = t.value(t.log_softmax(logits));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(p[i]);
    return p;
}

Predictions infer(const Model& model, const ParamMap& params, std::span<const Conversation> data,
                  std::span<const PerturbationBundle> bundles) {
    if (!bundles.empty() && bundles.size() != data.size()) {
        throw std::invalid_argument("infer: one bundle per conversation required");
    }
    Predictions out;
    for (std::size_t c = 0; c < data.size(); ++c) {
        const Conversation* conv = &data[c];
        const UtteranceBatch batch = make_batch(std::span<const Conversation* const>(&conv, 1));
        ad::Tape tape;
        ForwardOptions opt;
        if (!bundles.empty() && !bundles[c].empty()) opt.bundle = &bundles[c];
        const ForwardPass pass = model.forward(tape, params, batch, opt);
        for (std::size_t i = 0; i < pass.z.size(); ++i) {
            Tensor p = tape.value(pass.log_probs[i]);
            for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(p[k]);
            out.labels.push_back(argmax(p.span()));
            out.probs.push_back(std::move(p));
            out.z.push_back(tape.value(pass.z[i]));
        }
    }
    return out;
}

}  // namespace sacl
