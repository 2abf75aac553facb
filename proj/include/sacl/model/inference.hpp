#pragma once

#include <span>
#include <vector>

#include "sacl/model/model.hpp"

namespace sacl {

// softmax(W_c^T z + b_c), W_c of shape [4 d_h, |Y|].
Tensor classify(const Tensor& z, const Tensor& w_c, const Tensor& b_c);

struct Predictions {
    std::vector<int> labels;       // argmax per utterance
    std::vector<Tensor> probs;
    std::vector<Tensor> z;
};

// Dropout-free forward over each conversation independently, concatenated in
// input order. `bundles`, when given, holds one bundle per conversation keyed
// with conversation index 0.
Predictions infer(const Model& model, const ParamMap& params, std::span<const Conversation> data,
                  std::span<const PerturbationBundle> bundles = {});

int argmax(std::span<const double> v);

}  // namespace sacl
