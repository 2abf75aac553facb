#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sacl/core/error.hpp"
#include "sacl/data/dataset.hpp"
#include "sacl/metrics/metrics.hpp"
#include "sacl/model/checkpoint.hpp"
#include "sacl/model/inference.hpp"
#include "sacl/trainer/trainer.hpp"

namespace sacl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

json read_json_file(const fs::path& p, bool config) {
    std::ifstream in(p);
    if (!in) {
        if (config) throw ConfigError("cannot open " + p.string());
        throw DataError("cannot open " + p.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        const std::string msg = p.string() + " is not valid JSON: " + e.what();
        if (config) throw ConfigError(msg);
        throw DataError(msg);
    }
}

// Records every file a command writes.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw DataError("cannot create output directory " + dir_.string() + ": " + ec.message());
    }

    const fs::path& dir() const { return dir_; }

    fs::path path(const fs::path& rel) {
        const fs::path p = dir_ / rel;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw DataError("cannot create " + p.parent_path().string());
        std::lock_guard lock(mu_);
        artifacts_.push_back(rel.generic_string());
        return p;
    }

    void text(const fs::path& rel, const std::string& body) {
        const fs::path p = path(rel);
        std::ofstream o(p, std::ios::binary);
        o << body;
        if (!o) throw DataError("cannot write " + p.string());
    }

    void json_file(const fs::path& rel, const json& j) { text(rel, j.dump(2) + "\n"); }

    std::vector<std::string> artifacts() const {
        std::lock_guard lock(mu_);
        auto a = artifacts_;
        std::sort(a.begin(), a.end());
        return a;
    }

private:
    fs::path dir_;
    mutable std::mutex mu_;
    std::vector<std::string> artifacts_;
};

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::vector<std::uint64_t> seeds;
    std::string started = iso_now();
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    json extra = json::object();

    void write(Outputs& out) const {
        json j{{"tool", "sacl"},
               {"version", kToolVersion},
               {"command", command},
               {"argv", argv},
               {"config", config},
               {"seeds", seeds},
               {"artifacts", out.artifacts()},
               {"started_at", started},
               {"finished_at", iso_now()},
               {"wall_seconds",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        const fs::path p = out.dir() / "manifest.json";
        std::ofstream o(p);
        o << j.dump(2) << "\n";
        if (!o) throw DataError("cannot write " + p.string());
    }
};

std::string default_out(const std::string& cmd) {
    if (const char* env = std::getenv("SACL_OUT_DIR"); env != nullptr && *env != '\0') return (fs::path(env) / cmd).string();
    return (fs::path("sacl_out") / cmd).string();
}

std::size_t thread_cap() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SACL_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError("SACL_THREADS must be a positive integer");
        n = static_cast<std::size_t>(v);
    }
    return n;
}

fs::path meta_for(const fs::path& data, const std::string& meta) {
    if (!meta.empty()) return meta;
    return data.parent_path() / "meta.json";
}

// Checkpoint and data must agree before anything is computed.
void check_compatible(const Checkpoint& ck, const DatasetMeta& meta, const std::string& what) {
    if (ck.config.d_u != meta.d_u) {
        throw DataError(what + ": checkpoint expects d_u=" + std::to_string(ck.config.d_u) + ", data has " +
                        std::to_string(meta.d_u));
    }
    if (ck.config.num_classes != meta.num_classes()) {
        throw DataError(what + ": checkpoint has " + std::to_string(ck.config.num_classes) + " classes, data has " +
                        std::to_string(meta.num_classes()));
    }
}

void print_histogram(std::ostream& out, const std::string& split, std::span<const Conversation> convs,
                     const DatasetMeta& meta) {
    std::vector<std::size_t> hist(meta.num_classes(), 0);
    double turns = 0, parties = 0;
    std::size_t utts = 0;
    for (const Conversation& c : convs) {
        turns += double(c.size());
        parties += double(speaker_groups(c).size());
        for (const Utterance& u : c.utterances) ++hist[std::size_t(u.label)], ++utts;
    }
    const double n = double(std::max<std::size_t>(1, convs.size()));
    out << split << ": " << convs.size() << " dialogues, " << utts << " utterances, avg turns "
        << fmt("%.2f", turns / n) << ", avg parties " << fmt("%.2f", parties / n) << "\n";
    for (std::size_t k = 0; k < hist.size(); ++k) {
        char line[128];
        std::snprintf(line, sizeof line, "  %-10s %6zu  %5.1f%%\n", meta.label_names[k].c_str(), hist[k],
                      utts ? 100.0 * double(hist[k]) / double(utts) : 0.0);
        out << line;
    }
}

// --- synth --------------------------------------------------------------

struct SynthArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    SynthConfig cfg;
    if (!a.config.empty()) cfg = synth_config_from_json(read_json_file(a.config, true));
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    const SynthData d = synth_generate(cfg);

    Outputs o(a.out);
    write_conversations(o.path("train.jsonl"), d.train);
    write_conversations(o.path("val.jsonl"), d.val);
    write_conversations(o.path("test.jsonl"), d.test);
    write_meta(o.path("meta.json"), d.meta);
    o.json_file("synth_config.json", synth_config_to_json(cfg));

    for (const std::string& w : d.warnings) out << "warning: " << w << "\n";
    print_histogram(out, "train", d.train, d.meta);
    print_histogram(out, "val", d.val, d.meta);
    print_histogram(out, "test", d.test, d.meta);

    Manifest m;
    m.command = "synth";
    m.argv = argv;
    m.config = synth_config_to_json(cfg);
    m.seeds = {cfg.seed};
    m.write(o);
    return kOk;
}

// --- train --------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::size_t seeds = 1;
    std::optional<std::uint64_t> seed;
    std::string out;
    double val_fraction = 0.1;
};

Dataset load_split(const fs::path& dir, const std::string& split, const fs::path& meta) {
    return load_dataset(dir / (split + ".jsonl"), meta);
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const json raw = a.config.empty() ? json::object() : read_json_file(a.config, true);
    ExperimentConfig exp = experiment_config_from_json(raw);
    if (a.seed) exp.train.seed = *a.seed;
    if (a.seeds < 1) throw ConfigError("--seeds must be at least 1");

    const fs::path dir = a.data;
    const fs::path meta_path = dir / "meta.json";
    const Dataset train = load_split(dir, "train", meta_path);
    const bool have_val = fs::exists(dir / "val.jsonl");
    const Dataset val = have_val ? load_split(dir, "val", meta_path) : Dataset{{}, train.meta};
    const bool have_test = fs::exists(dir / "test.jsonl");
    const Dataset test = have_test ? load_split(dir, "test", meta_path) : Dataset{{}, train.meta};

    if (raw.contains("d_u") && exp.model.d_u != train.meta.d_u) {
        throw DataError("config d_u=" + std::to_string(exp.model.d_u) + " but data has d_u=" +
                        std::to_string(train.meta.d_u));
    }
    if (raw.contains("num_classes") && exp.model.num_classes != train.meta.num_classes()) {
        throw DataError("config num_classes=" + std::to_string(exp.model.num_classes) + " but data has " +
                        std::to_string(train.meta.num_classes()));
    }
    exp.model.d_u = train.meta.d_u;
    exp.model.num_classes = train.meta.num_classes();
    exp.model.validate();
    exp.train.validate();
    const Model model(exp.model);
    const DatasetMeta& meta = train.meta;

    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < a.seeds; ++k) seeds.push_back(exp.train.seed + k);

    Outputs o(a.out);
    o.json_file("config.json", experiment_config_to_json(exp));

    struct SeedResult {
        RunLog log;
        std::optional<ClassificationReport> test;
    };
    std::vector<SeedResult> results(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
            try {
                TrainConfig tc = exp.train;
                tc.seed = seeds[i];
                std::vector<Conversation> tr, va;
                if (have_val) {
                    tr = train.conversations;
                    va = val.conversations;
                } else {
                    std::tie(tr, va) = split_train_val(train.conversations, a.val_fraction, seeds[i]);
                }
                FitResult f = fit(model, tr, va, tc);
                const fs::path sd = "seed" + std::to_string(seeds[i]);
                save_checkpoint(o.path(sd / "checkpoint.json"), Checkpoint{exp.model, f.params});
                o.json_file(sd / "runlog.json", to_json(f.log));
                results[i].log = f.log;
                if (have_test) {
                    const Predictions p = infer(model, f.params, test.conversations);
                    results[i].test = classification_report(all_labels(test.conversations), p.labels,
                                                             meta.num_classes());
                    o.json_file(sd / "test_report.json", to_json(*results[i].test, meta.label_names));
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t nthreads = std::min(thread_cap(), seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    json agg{{"seeds", seeds}, {"objective", to_string(exp.train.objective)},
             {"strategy", to_string(exp.train.strategy)}};
    std::vector<double> val_wf1, wf1, acc;
    for (const SeedResult& r : results) {
        val_wf1.push_back(r.log.best_val_weighted_f1);
        if (r.test) wf1.push_back(r.test->weighted_f1), acc.push_back(r.test->accuracy);
    }
    agg["val_weighted_f1"] = val_wf1;
    agg["val_weighted_f1_mean_std"] = format_mean_std(val_wf1);
    out << "seed  best_epoch  val_wF1";
    if (have_test) out << "  test_wF1  test_acc";
    out << "\n";
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        char line[128];
        std::snprintf(line, sizeof line, "%4llu  %10zu  %7.2f", static_cast<unsigned long long>(seeds[i]),
                      results[i].log.best_epoch, 100.0 * val_wf1[i]);
        out << line;
        if (have_test) out << fmt("  %8.2f", 100.0 * wf1[i]) << fmt("  %8.2f", 100.0 * acc[i]);
        out << "\n";
    }
    if (have_test) {
        agg["test_weighted_f1"] = wf1;
        agg["test_accuracy"] = acc;
        agg["test_weighted_f1_mean_std"] = format_mean_std(wf1);
        agg["test_accuracy_mean_std"] = format_mean_std(acc);
        out << "test weighted-F1 " << format_mean_std(wf1) << ", accuracy " << format_mean_std(acc) << "\n";
    }
    o.json_file("aggregate.json", agg);

    Manifest m;
    m.command = "train";
    m.argv = argv;
    m.config = experiment_config_to_json(exp);
    m.seeds = seeds;
    json walls = json::array();
    for (const SeedResult& r : results) walls.push_back(r.log.wall_seconds);
    m.extra["seed_wall_seconds"] = walls;
    m.write(o);
    return kOk;
}

// --- eval ---------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string meta;
    std::string out;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const DatasetMeta meta = load_meta(meta_for(a.data, a.meta));
    check_compatible(ck, meta, "eval");
    Dataset d = load_dataset(a.data, meta_for(a.data, a.meta));
    const Model model(ck.config);
    model.check_params(ck.params);

    const Predictions p = infer(model, ck.params, d.conversations);
    const ClassificationReport r = classification_report(all_labels(d.conversations), p.labels, meta.num_classes());

    Outputs o(a.out);
    o.json_file("report.json", to_json(r, meta.label_names));
    o.text("per_class.csv", per_class_csv(r, meta.label_names));
    o.text("confusion.csv", confusion_csv(r, false));
    o.text("confusion_normalized.csv", confusion_csv(r, true));

    out << "accuracy " << fmt("%.2f", 100 * r.accuracy) << "  weighted-F1 " << fmt("%.2f", 100 * r.weighted_f1)
        << "  macro-F1 " << fmt("%.2f", 100 * r.macro_f1) << "\n";
    out << "class        precision  recall     f1  support\n";
    for (std::size_t k = 0; k < meta.num_classes(); ++k) {
        char line[160];
        std::snprintf(line, sizeof line, "%-12s %9.2f %7.2f %6.2f %8zu\n", meta.label_names[k].c_str(),
                      100 * r.precision[k], 100 * r.recall[k], 100 * r.per_class_f1[k], r.support[k]);
        out << line;
    }

    Manifest m;
    m.command = "eval";
    m.argv = argv;
    m.config = model_config_to_json(ck.config);
    m.write(o);
    return kOk;
}

// --- attack -------------------------------------------------------------

struct AttackArgs {
    std::vector<std::string> models;
    std::string data;
    std::string meta;
    std::string eps = "0,0.05,0.1,0.2,0.4,0.8,1.6";
    std::size_t seeds = 0;
    std::string out;
};

std::vector<double> parse_eps(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("bad epsilon '" + tok + "'");
        if (v < 0) throw ConfigError("attack epsilon must be non-negative, got " + tok);
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("--eps needs at least one value");
    return out;
}

// NAME=PATH[,PATH...] or PATH; a directory stands for its seed*/checkpoint.json files.
std::pair<std::string, std::vector<fs::path>> parse_model_spec(const std::string& spec) {
    std::string name, paths = spec;
    if (auto eq = spec.find('='); eq != std::string::npos) {
        name = spec.substr(0, eq);
        paths = spec.substr(eq + 1);
    }
    std::vector<fs::path> files;
    std::stringstream ss(paths);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const fs::path p = tok;
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.is_directory() && e.path().filename().string().rfind("seed", 0) == 0 &&
                    fs::exists(e.path() / "checkpoint.json")) {
                    found.push_back(e.path() / "checkpoint.json");
                }
            }
            std::sort(found.begin(), found.end());
            if (found.empty()) throw DataError("no seed*/checkpoint.json under " + p.string());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    if (files.empty()) throw ConfigError("empty model spec '" + spec + "'");
    if (name.empty()) name = fs::is_directory(paths) ? fs::path(paths).filename().string() : files[0].stem().string();
    return {name, files};
}

int cmd_attack(const AttackArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const std::vector<double> eps = parse_eps(a.eps);
    const fs::path meta_path = meta_for(a.data, a.meta);
    const DatasetMeta meta = load_meta(meta_path);

    std::vector<std::string> names;
    std::vector<std::pair<ModelConfig, std::vector<ParamMap>>> sets;
    for (const std::string& spec : a.models) {
        auto [name, files] = parse_model_spec(spec);
        if (a.seeds > 0 && files.size() > a.seeds) files.resize(a.seeds);
        std::vector<ParamMap> params;
        ModelConfig cfg;
        for (std::size_t i = 0; i < files.size(); ++i) {
            Checkpoint ck = load_checkpoint(files[i]);
            check_compatible(ck, meta, "attack " + files[i].string());
            if (i == 0) {
                cfg = ck.config;
            } else if (model_config_to_json(ck.config) != model_config_to_json(cfg)) {
                throw DataError("checkpoints of '" + name + "' have different model configs");
            }
            Model(ck.config).check_params(ck.params);
            params.push_back(std::move(ck.params));
        }
        names.push_back(name);
        sets.emplace_back(cfg, std::move(params));
    }
    const Dataset d = load_dataset(a.data, meta_path);

    std::vector<RobustnessCurve> curves;
    for (const auto& [cfg, params] : sets) {
        const Model model(cfg);
        curves.push_back(robustness_curve(model, params, d.conversations, eps));
    }

    Outputs o(a.out);
    o.text("curves.csv", curves_csv(curves, names));
    json j = json::object();
    for (std::size_t i = 0; i < curves.size(); ++i) j[names[i]] = to_json(curves[i]);
    o.json_file("curves.json", j);

    out << "epsilon";
    for (const auto& n : names) out << "  " << n;
    out << "\n";
    for (std::size_t e = 0; e < eps.size(); ++e) {
        out << fmt("%7.3f", eps[e]);
        for (const auto& c : curves) out << "  " << fmt("%.2f", 100 * c.weighted_f1[e]) << "±" << fmt("%.2f", 100 * c.std_dev[e]);
        out << "\n";
    }

    Manifest m;
    m.command = "attack";
    m.argv = argv;
    json models = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) {
        models[names[i]] = {{"checkpoints", sets[i].second.size()}, {"model", model_config_to_json(sets[i].first)}};
    }
    m.config = json{{"epsilons", eps}, {"models", models}};
    m.write(o);
    return kOk;
}

// --- cluster ------------------------------------------------------------

struct ClusterArgs {
    std::string checkpoint;
    std::string data;
    std::string meta;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_cluster(const ClusterArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const fs::path meta_path = meta_for(a.data, a.meta);
    const DatasetMeta meta = load_meta(meta_path);
    check_compatible(ck, meta, "cluster");
    const Dataset d = load_dataset(a.data, meta_path);
    const Model model(ck.config);
    model.check_params(ck.params);
    const std::size_t k = a.k == 0 ? meta.num_classes() : a.k;
    if (k < 2) throw ConfigError("--k must be at least 2");

    const Predictions p = infer(model, ck.params, d.conversations);
    if (k > p.z.size()) {
        throw ConfigError("--k " + std::to_string(k) + " exceeds the number of utterances (" +
                          std::to_string(p.z.size()) + ")");
    }
    const std::vector<int> labels = all_labels(d.conversations);
    const ClusteringReport r = clustering_report(p.z, labels, k, a.seed);

    std::vector<RepresentationRow> rows;
    std::size_t flat = 0;
    for (const Conversation& c : d.conversations) {
        for (std::size_t t = 0; t < c.size(); ++t, ++flat) {
            rows.push_back({c.dialogue_id, t, labels[flat], p.labels[flat], p.z[flat]});
        }
    }

    Outputs o(a.out);
    o.json_file("clustering.json", to_json(r));
    o.text("representations.csv", representations_csv(rows));

    out << "K=" << k << " seed=" << a.seed << "\n";
    out << "ARI " << fmt("%.4f", r.supervised.ari) << "  NMI " << fmt("%.4f", r.supervised.nmi) << "  FMI "
        << fmt("%.4f", r.supervised.fmi) << "\n";
    out << "SC  " << fmt("%.4f", r.unsupervised.sc) << "  CHI " << fmt("%.4f", r.unsupervised.chi) << "  DBI "
        << fmt("%.4f", r.unsupervised.dbi) << "\n";

    Manifest m;
    m.command = "cluster";
    m.argv = argv;
    m.config = json{{"k", k}, {"model", model_config_to_json(ck.config)}};
    m.seeds = {a.seed};
    m.write(o);
    return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_replay(const std::string& manifest, std::ostream& out, std::ostream& err) {
    const json j = read_json_file(manifest, true);
    if (!j.contains("argv") || !j.at("argv").is_array()) throw ConfigError(manifest + " has no argv");
    const auto argv = j.at("argv").get<std::vector<std::string>>();
    if (!argv.empty() && argv[0] == "replay") throw ConfigError("refusing to replay a replay manifest");
    return dispatch(argv, out, err);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Supervised adversarial contrastive learning for conversation emotion recognition"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthArgs sa;
    sa.out = default_out("synth");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic conversation dataset");
    synth->add_option("--config", sa.config, "SynthConfig JSON")->check(CLI::ExistingFile);
    synth->add_option("--seed", sa.seed, "Override the config seed");
    synth->add_option("--out", sa.out, "Output directory");

    TrainArgs ta;
    ta.out = default_out("train");
    auto* train = app.add_subcommand("train", "Train one model per seed and aggregate test metrics");
    train->add_option("--config", ta.config, "Experiment config JSON")->check(CLI::ExistingFile);
    train->add_option("--data", ta.data, "Directory with train/val/test .jsonl and meta.json")->required();
    train->add_option("--seeds", ta.seeds, "Number of seeds");
    train->add_option("--seed", ta.seed, "First seed (default: config seed)");
    train->add_option("--val-fraction", ta.val_fraction, "Used only when val.jsonl is absent");
    train->add_option("--out", ta.out, "Output directory");

    EvalArgs ea;
    ea.out = default_out("eval");
    auto* eval = app.add_subcommand("eval", "Classification report for a checkpoint");
    eval->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", ea.data, "JSONL file")->required()->check(CLI::ExistingFile);
    eval->add_option("--meta", ea.meta, "Meta JSON (default: meta.json next to the data)");
    eval->add_option("--out", ea.out, "Output directory");

    AttackArgs aa;
    aa.out = default_out("attack");
    auto* attack = app.add_subcommand("attack", "Robust weighted-F1 under a CE-based CAT attack");
    attack->add_option("--model", aa.models, "NAME=PATH[,PATH...]; a directory means its seed*/checkpoint.json")
        ->required();
    attack->add_option("--data", aa.data, "JSONL file")->required()->check(CLI::ExistingFile);
    attack->add_option("--meta", aa.meta);
    attack->add_option("--eps", aa.eps, "Comma-separated, strictly increasing");
    attack->add_option("--seeds", aa.seeds, "Use at most this many checkpoints per model");
    attack->add_option("--out", aa.out, "Output directory");

    ClusterArgs ca;
    ca.out = default_out("cluster");
    auto* cluster = app.add_subcommand("cluster", "K-means on representations plus six clustering scores");
    cluster->add_option("--checkpoint", ca.checkpoint)->required()->check(CLI::ExistingFile);
    cluster->add_option("--data", ca.data)->required()->check(CLI::ExistingFile);
    cluster->add_option("--meta", ca.meta);
    cluster->add_option("--k", ca.k, "Number of clusters (default: class count)");
    cluster->add_option("--seed", ca.seed);
    cluster->add_option("--out", ca.out, "Output directory");

    std::string manifest;
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);

    std::vector<const char*> cargv{"sacl"};
    for (const auto& s : args) cargv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    if (synth->parsed()) return cmd_synth(sa, args, out);
    if (train->parsed()) return cmd_train(ta, args, out);
    if (eval->parsed()) return cmd_eval(ea, args, out);
    if (attack->parsed()) return cmd_attack(aa, args, out);
    if (cluster->parsed()) return cmd_cluster(ca, args, out);
    if (replay->parsed()) return cmd_replay(manifest, out, err);
    return kConfigError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sacl::cli
