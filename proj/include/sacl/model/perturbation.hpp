#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sacl/core/tensor.hpp"

namespace sacl {

enum class Network : std::uint8_t { situation = 0, speaker = 1 };
enum class Direction : std::uint8_t { forward = 0, backward = 1 };
// Pre-activation channels of an LSTM cell, in the order they are laid out in
// the stacked 4*d_h gate vector.
enum class Channel : std::uint8_t { input_gate = 0, forget_gate = 1, output_gate = 2, cell = 3 };

inline constexpr std::size_t kNumChannels = 4;

// One injection site. `position` is the utterance position in its
// conversation (for the speaker network too, so keys never collide).
struct SiteKey {
    std::uint32_t conversation = 0;
    Network network = Network::situation;
    std::uint32_t layer = 0;
    Direction direction = Direction::forward;
    std::uint32_t position = 0;
    Channel channel = Channel::input_gate;

    auto operator<=>(const SiteKey&) const = default;
    std::string str() const;
};

// Per-site additive perturbations. Missing keys mean zero.
struct PerturbationBundle {
    std::map<SiteKey, Tensor> entries;

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
    const Tensor* find(const SiteKey& key) const {
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// Embedding-level perturbations, one per flattened utterance of a batch.
struct FeaturePerturbation {
    std::vector<Tensor> shifts;
};

}  // namespace sacl
