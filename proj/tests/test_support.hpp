#pragma once

#include <string>
#include <vector>

#include "sacl/core/rng.hpp"
#include "sacl/core/tensor.hpp"
#include "sacl/data/conversation.hpp"

namespace sacl::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Conversation with one utterance per entry of `speakers`; random features and labels.
inline Conversation random_conversation(Rng& rng, const std::string& id, const std::vector<std::string>& speakers,
                                        std::size_t d_u, int num_classes) {
    Conversation c;
    c.dialogue_id = id;
    for (const auto& s : speakers) {
        Utterance u;
        u.speaker = s;
        u.features = random_tensor(rng, Shape{d_u});
        u.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes)));
        c.utterances.push_back(std::move(u));
    }
    return c;
}

}  // namespace sacl::testing
