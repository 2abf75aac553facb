#include "sacl/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sacl/core/error.hpp"
#include "sacl/core/rng.hpp"

namespace sacl {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

int parse_label(const json& v, const DatasetMeta& meta) {
    const std::size_t c = meta.num_classes();
    if (v.is_number_integer()) {
        const auto y = v.get<long long>();
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw DataError("label " + std::to_string(y) + " out of range [0," + std::to_string(c) + ")");
        }
        return static_cast<int>(y);
    }
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        auto it = std::find(meta.label_names.begin(), meta.label_names.end(), s);
        if (it == meta.label_names.end()) throw DataError("unknown label '" + s + "'");
        return static_cast<int>(it - meta.label_names.begin());
    }
    throw DataError("label must be an integer index or a label name");
}

Conversation parse_line(const std::string& line, const DatasetMeta& meta) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("record is not a JSON object");
    Conversation c;
    try {
        c.dialogue_id = j.at("dialogue_id").get<std::string>();
        if (j.contains("speakers")) c.speakers = j.at("speakers").get<std::vector<std::string>>();
        const json& utts = j.at("utterances");
        if (!utts.is_array()) throw DataError("'utterances' must be an array");
        for (const json& u : utts) {
            Utterance x;
            x.speaker = u.at("speaker").get<std::string>();
            auto f = u.at("features").get<std::vector<double>>();
            if (f.size() != meta.d_u) {
                throw DataError("utterance " + std::to_string(c.utterances.size()) + " has " +
                                std::to_string(f.size()) + " features, expected d_u=" + std::to_string(meta.d_u));
            }
            x.features = Tensor::vector(std::move(f));
            if (!x.features.all_finite()) throw DataError("non-finite feature value");
            x.label = parse_label(u.at("label"), meta);
            c.utterances.push_back(std::move(x));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed record: ") + e.what());
    }
    if (c.utterances.empty()) throw DataError("dialogue '" + c.dialogue_id + "' has no utterances");
    return c;
}

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* kEmotionNames[] = {"neutral", "joy", "sadness", "anger", "surprise", "fear", "disgust"};

}  // namespace

DatasetMeta load_meta(const std::filesystem::path& meta_file) {
    auto in = open_in(meta_file);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(meta_file.string() + ": malformed JSON: " + e.what());
    }
    DatasetMeta m;
    try {
        m.d_u = j.at("d_u").get<std::size_t>();
        m.label_names = j.at("label_names").get<std::vector<std::string>>();
        m.split = j.value("split", "");
    } catch (const json::exception& e) {
        throw DataError(meta_file.string() + ": " + e.what());
    }
    if (m.d_u == 0) throw DataError(meta_file.string() + ": d_u must be positive");
    if (m.label_names.empty()) throw DataError(meta_file.string() + ": label_names is empty");
    std::set<std::string> uniq(m.label_names.begin(), m.label_names.end());
    if (uniq.size() != m.label_names.size()) throw DataError(meta_file.string() + ": label names are not unique");
    return m;
}

void write_meta(const std::filesystem::path& meta_file, const DatasetMeta& meta) {
    json j{{"d_u", meta.d_u}, {"label_names", meta.label_names}};
    if (!meta.split.empty()) j["split"] = meta.split;
    auto out = open_out(meta_file);
    out << j.dump(2) << '\n';
}

std::vector<Conversation> parse_conversations(std::istream& in, const DatasetMeta& meta, const std::string& source) {
    std::vector<Conversation> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Conversation c = parse_line(line, meta);
            if (!ids.insert(c.dialogue_id).second) throw DataError("duplicate dialogue_id '" + c.dialogue_id + "'");
            out.push_back(std::move(c));
        } catch (const DataError& e) {
            throw DataError(source + ": line " + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& features_file, const std::filesystem::path& meta_file) {
    Dataset d;
    d.meta = load_meta(meta_file);
    if (d.meta.split.empty()) d.meta.split = features_file.stem().string();
    auto in = open_in(features_file);
    d.conversations = parse_conversations(in, d.meta, features_file.string());
    return d;
}

void write_conversations(const std::filesystem::path& file, std::span<const Conversation> conversations) {
    auto out = open_out(file);
    for (const Conversation& c : conversations) {
        json utts = json::array();
        for (const Utterance& u : c.utterances) {
            utts.push_back(json{{"speaker", u.speaker}, {"features", u.features.values()}, {"label", u.label}});
        }
        json j{{"dialogue_id", c.dialogue_id}, {"utterances", std::move(utts)}};
        if (!c.speakers.empty()) j["speakers"] = c.speakers;
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("failed writing " + file.string());
}

void validate_conversations(std::span<const Conversation> conversations, const DatasetMeta& meta) {
    for (const Conversation& c : conversations) {
        if (c.utterances.empty()) throw DataError("dialogue '" + c.dialogue_id + "' has no utterances");
        for (const Utterance& u : c.utterances) {
            if (u.features.size() != meta.d_u) {
                throw DataError("dialogue '" + c.dialogue_id + "': feature dimension " +
                                std::to_string(u.features.size()) + " != d_u " + std::to_string(meta.d_u));
            }
            if (u.label < 0 || static_cast<std::size_t>(u.label) >= meta.num_classes()) {
                throw DataError("dialogue '" + c.dialogue_id + "': label " + std::to_string(u.label) + " out of range");
            }
        }
    }
}

std::pair<std::vector<Conversation>, std::vector<Conversation>> split_train_val(
    std::span<const Conversation> conversations, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0,1)");
    const std::size_t n = conversations.size();
    if (n < 2) throw DataError("split_train_val: need at least 2 dialogues, got " + std::to_string(n));
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(val_fraction * double(n))));
    if (n_val >= n) throw DataError("split_train_val: fraction leaves no training dialogues");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, streams::split));
    rng.shuffle(perm.begin(), perm.end());
    std::vector<char> is_val(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[perm[i]] = 1;
    std::pair<std::vector<Conversation>, std::vector<Conversation>> out;
    for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.second : out.first).push_back(conversations[i]);
    return out;
}

std::vector<UtteranceBatch> batch_iter(std::span<const Conversation> conversations, std::size_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    std::vector<const Conversation*> order;
    order.reserve(conversations.size());
    for (const Conversation& c : conversations) order.push_back(&c);
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order.begin(), order.end());
    }
    std::vector<UtteranceBatch> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - i);
        out.push_back(make_batch(std::span<const Conversation* const>(order.data() + i, len)));
    }
    return out;
}

void SynthConfig::validate() const {
    if (num_classes < 2) throw ConfigError("synthetic data needs num_classes >= 2 (got " + std::to_string(num_classes) + ")");
    if (dim == 0) throw ConfigError("synthetic feature dim must be positive");
    if (train_dialogues == 0 || val_dialogues == 0 || test_dialogues == 0) {
        throw ConfigError("every synthetic split needs at least one dialogue");
    }
    if (min_length == 0 || min_length > max_length) throw ConfigError("invalid dialogue length range");
    if (min_speakers == 0 || min_speakers > max_speakers) throw ConfigError("invalid speaker count range");
    if (!(p_stay > 0.0 && p_stay < 1.0)) throw ConfigError("p_stay must lie in (0,1)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0,1)");
    if (!(separation >= 0.0) || !(noise >= 0.0)) throw ConfigError("separation and noise must be non-negative");
    if (!(cameo_rate >= 0.0 && cameo_rate <= 1.0)) throw ConfigError("cameo_rate must lie in [0,1]");
}

json synth_config_to_json(const SynthConfig& c) {
    return json{{"num_classes", c.num_classes},   {"dim", c.dim},
                {"train_dialogues", c.train_dialogues}, {"val_dialogues", c.val_dialogues},
                {"test_dialogues", c.test_dialogues},   {"min_length", c.min_length},
                {"max_length", c.max_length},     {"min_speakers", c.min_speakers},
                {"max_speakers", c.max_speakers}, {"p_stay", c.p_stay},
                {"alpha", c.alpha},               {"separation", c.separation},
                {"noise", c.noise},               {"cameo_rate", c.cameo_rate},
                {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    const json known = synth_config_to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown synth config field '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
        };
        get("num_classes", c.num_classes);
        get("dim", c.dim);
        get("train_dialogues", c.train_dialogues);
        get("val_dialogues", c.val_dialogues);
        get("test_dialogues", c.test_dialogues);
        get("min_length", c.min_length);
        get("max_length", c.max_length);
        get("min_speakers", c.min_speakers);
        get("max_speakers", c.max_speakers);
        get("p_stay", c.p_stay);
        get("alpha", c.alpha);
        get("separation", c.separation);
        get("noise", c.noise);
        get("cameo_rate", c.cameo_rate);
        get("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

SynthData synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthData out;
    out.meta.d_u = cfg.dim;
    if (cfg.dim < cfg.num_classes) {
        out.warnings.push_back("dim " + std::to_string(cfg.dim) + " < num_classes " + std::to_string(cfg.num_classes) +
                               "; class prototypes overlap");
    }
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
        out.meta.label_names.push_back(k < std::size(kEmotionNames) ? kEmotionNames[k] : "class" + std::to_string(k));
    }

    Rng proto_rng(derive_seed(cfg.seed, streams::synth, 0));
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
        Tensor p(Shape{cfg.dim});
        double norm = 0.0;
        for (std::size_t i = 0; i < cfg.dim; ++i) {
            p[i] = proto_rng.normal();
            norm += p[i] * p[i];
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < cfg.dim; ++i) p[i] /= norm;
        out.prototypes.push_back(std::move(p));
    }

    auto make_split = [&](std::size_t count, std::uint32_t stream_k, const std::string& prefix) {
        Rng rng(derive_seed(cfg.seed, streams::synth, stream_k));
        std::vector<Conversation> convs;
        for (std::size_t d = 0; d < count; ++d) {
            Conversation c;
            char id[64];
            std::snprintf(id, sizeof id, "%s-%04zu", prefix.c_str(), d);
            c.dialogue_id = id;
            const std::size_t len = cfg.min_length + rng.below(cfg.max_length - cfg.min_length + 1);
            const std::size_t m = cfg.min_speakers + rng.below(cfg.max_speakers - cfg.min_speakers + 1);

            // Turn-taking: the next turn goes to another speaker with prob. 0.8.
            std::vector<std::size_t> turn(len);
            turn[0] = 0;
            for (std::size_t t = 1; t < len; ++t) {
                if (m > 1 && rng.bernoulli(0.8)) {
                    const std::size_t other = rng.below(m - 1);
                    turn[t] = other >= turn[t - 1] ? other + 1 : other;
                } else {
                    turn[t] = turn[t - 1];
                }
            }
            std::size_t speakers = m;
            if (len > 1 && rng.bernoulli(cfg.cameo_rate)) turn[1 + rng.below(len - 1)] = speakers++;

            // Sticky per-speaker emotion chains.
            std::vector<int> state(speakers, -1);
            Tensor prev(Shape{cfg.dim});
            for (std::size_t t = 0; t < len; ++t) {
                int& y = state[turn[t]];
                if (y < 0) {
                    y = static_cast<int>(rng.below(cfg.num_classes));
                } else if (!rng.bernoulli(cfg.p_stay)) {
                    const auto other = static_cast<int>(rng.below(cfg.num_classes - 1));
                    y = other >= y ? other + 1 : other;
                }
                Tensor u(Shape{cfg.dim});
                const Tensor& proto = out.prototypes[static_cast<std::size_t>(y)];
                for (std::size_t i = 0; i < cfg.dim; ++i) {
                    u[i] = cfg.separation * proto[i] + cfg.alpha * prev[i] + cfg.noise * rng.normal();
                }
                prev = u;
                c.utterances.push_back({"S" + std::to_string(turn[t]), std::move(u), y});
            }
            convs.push_back(std::move(c));
        }
        return convs;
    };
    out.train = make_split(cfg.train_dialogues, 1, "train");
    out.val = make_split(cfg.val_dialogues, 2, "val");
    out.test = make_split(cfg.test_dialogues, 3, "test");
    return out;
}

std::string representations_csv(std::span<const RepresentationRow> rows) {
    std::string out = "dialogue_id,position,label,prediction";
    const std::size_t d = rows.empty() ? 0 : rows[0].z.size();
    for (std::size_t k = 0; k < d; ++k) out += ",z" + std::to_string(k);
    out += "\n";
    for (const RepresentationRow& r : rows) {
        if (r.z.size() != d) throw ShapeError("representations_csv: rows differ in dimension");
        out += r.dialogue_id + "," + std::to_string(r.position) + "," + std::to_string(r.label) + "," +
               std::to_string(r.prediction);
        for (double v : r.z.values()) out += "," + g17(v);
        out += "\n";
    }
    return out;
}

}  // namespace sacl
