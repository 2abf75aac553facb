#include "sacl/model/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "sacl/core/error.hpp"

namespace sacl {

using nlohmann::json;

namespace {

const char* kind_name(ModelKind k) { return k == ModelKind::dual_lstm ? "dual-lstm" : "mlp"; }

ModelKind parse_kind(const std::string& s) {
    if (s == "dual-lstm") return ModelKind::dual_lstm;
    if (s == "mlp") return ModelKind::mlp;
    throw ConfigError("unknown model kind '" + s + "' (expected dual-lstm or mlp)");
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
    return json{{"model", kind_name(c.kind)},
                {"d_u", c.d_u},
                {"d_h", c.d_h},
                {"num_lstm_layers", c.num_lstm_layers},
                {"xi", c.xi},
                {"num_classes", c.num_classes},
                {"dropout", c.dropout},
                {"perturb_situation", c.perturb_situation},
                {"perturb_speaker", c.perturb_speaker}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    static const char* known[] = {"model", "d_u", "d_h", "num_lstm_layers", "xi", "num_classes",
                                  "dropout", "perturb_situation", "perturb_speaker"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError("unknown model config field '" + key + "'");
        }
    }
    if (j.contains("model")) c.kind = parse_kind(j.at("model").get<std::string>());
    read_field(j, "d_u", c.d_u);
    read_field(j, "d_h", c.d_h);
    read_field(j, "num_lstm_layers", c.num_lstm_layers);
    read_field(j, "xi", c.xi);
    read_field(j, "num_classes", c.num_classes);
    read_field(j, "dropout", c.dropout);
    read_field(j, "perturb_situation", c.perturb_situation);
    read_field(j, "perturb_speaker", c.perturb_speaker);
    c.validate();
    return c;
}

json tensor_to_json(const Tensor& t) { return json{{"shape", t.shape().dims()}, {"data", t.values()}}; }

Tensor tensor_from_json(const json& j) {
    const auto dims = j.at("shape").get<std::vector<std::size_t>>();
    return Tensor(Shape(std::span<const std::size_t>(dims)), j.at("data").get<std::vector<double>>());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json tensors = json::object();
    for (const auto& [name, t] : ckpt.params) tensors[name] = tensor_to_json(t);
    const json doc{{"format", "sacl-checkpoint"},
                   {"version", 1},
                   {"config", model_config_to_json(ckpt.config)},
                   {"tensors", std::move(tensors)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << doc.dump() << '\n';
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (doc.value("format", "") != "sacl-checkpoint") {
        throw DataError(path.string() + " is not a sacl checkpoint");
    }
    Checkpoint ckpt;
    ckpt.config = model_config_from_json(doc.at("config"));
    try {
        for (const auto& [name, t] : doc.at("tensors").items()) ckpt.params.emplace(name, tensor_from_json(t));
    } catch (const std::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    Model(ckpt.config).check_params(ckpt.params);
    return ckpt;
}

}  // namespace sacl
