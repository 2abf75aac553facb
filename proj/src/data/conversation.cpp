#include "sacl/data/conversation.hpp"

namespace sacl {

std::vector<int> UtteranceBatch::labels() const {
    std::vector<int> out;
    out.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) out.push_back(utterance(i).label);
    return out;
}

UtteranceBatch make_batch(std::span<const Conversation* const> conversations) {
    UtteranceBatch b;
    b.conversations.assign(conversations.begin(), conversations.end());
    for (std::size_t c = 0; c < b.conversations.size(); ++c) {
        for (std::size_t p = 0; p < b.conversations[c]->utterances.size(); ++p) b.index.push_back({c, p});
    }
    return b;
}

UtteranceBatch make_batch(std::span<const Conversation> conversations) {
    std::vector<const Conversation*> ptrs;
    ptrs.reserve(conversations.size());
    for (const Conversation& c : conversations) ptrs.push_back(&c);
    return make_batch(std::span<const Conversation* const>(ptrs));
}

}  // namespace sacl
