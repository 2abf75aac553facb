#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sacl/core/tensor.hpp"

namespace sacl {

struct Utterance {
    std::string speaker;
    Tensor features;
    int label = 0;
};

struct Conversation {
    std::string dialogue_id;
    std::vector<Utterance> utterances;
    // Optional declared roster. When non-empty every utterance speaker must
    // appear in it; when empty the roster is taken from the utterances.
    std::vector<std::string> speakers;

    std::size_t size() const { return utterances.size(); }
};

struct DatasetMeta {
    std::size_t d_u = 0;
    std::vector<std::string> label_names;
    std::string split;

    std::size_t num_classes() const { return label_names.size(); }
};

// A mini-batch of whole conversations plus the flattened utterance index set
// (conversation order, then position). Non-owning: the conversations must
// outlive the batch.
struct UtteranceRef {
    std::size_t conversation = 0;
    std::size_t position = 0;
};

struct UtteranceBatch {
    std::vector<const Conversation*> conversations;
    std::vector<UtteranceRef> index;

    std::size_t size() const { return index.size(); }
    const Utterance& utterance(std::size_t i) const {
        return conversations[index[i].conversation]->utterances[index[i].position];
    }
    std::vector<int> labels() const;
};

UtteranceBatch make_batch(std::span<const Conversation> conversations);
UtteranceBatch make_batch(std::span<const Conversation* const> conversations);

}  // namespace sacl
