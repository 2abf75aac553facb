#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sacl/data/conversation.hpp"

namespace sacl {

// Dataset on disk: one JSON object per line,
//   {"dialogue_id": "...", "utterances": [{"speaker": "A", "features": [...], "label": 2}, ...]}
// plus a meta JSON {"d_u": 32, "label_names": [...]} (optionally "split").
// Labels may be class indices or label names.
struct Dataset {
    std::vector<Conversation> conversations;
    DatasetMeta meta;
};

DatasetMeta load_meta(const std::filesystem::path& meta_file);
void write_meta(const std::filesystem::path& meta_file, const DatasetMeta& meta);

Dataset load_dataset(const std::filesystem::path& features_file, const std::filesystem::path& meta_file);
// Parses JSONL text; `source` names the input in error messages.
std::vector<Conversation> parse_conversations(std::istream& in, const DatasetMeta& meta, const std::string& source);
void write_conversations(const std::filesystem::path& file, std::span<const Conversation> conversations);

// Throws DataError on empty dialogues, dimension or label-range violations.
void validate_conversations(std::span<const Conversation> conversations, const DatasetMeta& meta);

// Dialogue-level split; the validation part has round(fraction * n) dialogues (at least 1).
std::pair<std::vector<Conversation>, std::vector<Conversation>> split_train_val(
    std::span<const Conversation> conversations, double val_fraction, std::uint64_t seed);

// Conversation-level mini-batches; order is a seeded permutation when a seed
// is given, else input order. The last partial batch is kept.
std::vector<UtteranceBatch> batch_iter(std::span<const Conversation> conversations, std::size_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed);

struct SynthConfig {
    std::size_t num_classes = 4;
    std::size_t dim = 16;
    std::size_t train_dialogues = 400;
    std::size_t val_dialogues = 100;
    std::size_t test_dialogues = 100;
    std::size_t min_length = 6;
    std::size_t max_length = 16;
    std::size_t min_speakers = 2;
    std::size_t max_speakers = 3;
    double p_stay = 0.95;
    double alpha = 0.6;
    double separation = 1.0;
    double noise = 1.5;
    // Probability that a dialogue gets an extra one-utterance speaker.
    double cameo_rate = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct SynthData {
    std::vector<Conversation> train;
    std::vector<Conversation> val;
    std::vector<Conversation> test;
    DatasetMeta meta;
    std::vector<Tensor> prototypes;
    // e.g. dim < num_classes (prototypes cannot be orthogonal)
    std::vector<std::string> warnings;
};

SynthData synth_generate(const SynthConfig& config);

struct RepresentationRow {
    std::string dialogue_id;
    std::size_t position = 0;
    int label = 0;
    int prediction = 0;
    Tensor z;
};

// CSV with header dialogue_id,position,label,prediction,z0..z{d-1}.
std::string representations_csv(std::span<const RepresentationRow> rows);

}  // namespace sacl
