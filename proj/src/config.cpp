#include "sega/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "sega/errors.hpp"

using json = nlohmann::json;

namespace sega {

void RunConfig::apply_seed() {
    pretrain.seed = seed;
    finetune.seed = seed;
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.text_provider.stub_seed = 1;
    cfg.prompt_provider.stub_seed = 2;
    cfg.pretrain.temperature = defaults::kTemperature;
    cfg.pretrain.negatives = defaults::kNegatives;
    cfg.pretrain.epochs = defaults::kPretrainEpochs;
    cfg.pretrain.batch_size = defaults::kBatchSize;
    cfg.pretrain.lr = defaults::kLearningRate;
    cfg.finetune.lambda = defaults::kLambda;
    cfg.finetune.epochs = defaults::kFinetuneEpochs;
    cfg.finetune.batch_size = defaults::kBatchSize;
    cfg.finetune.lr = defaults::kLearningRate;
    cfg.apply_seed();
    return cfg;
}

namespace {

ProviderBackend parse_backend(const std::string& name) {
    if (name == "stub") return ProviderBackend::stub;
    if (name == "file") return ProviderBackend::file;
    if (name == "http") return ProviderBackend::http;
    throw UsageError("config: unknown provider backend '" + name + "'");
}

void read_provider(const json& j, RoleProviderConfig& cfg) {
    if (j.contains("backend")) cfg.backend = parse_backend(j["backend"].get<std::string>());
    if (j.contains("seed")) cfg.stub_seed = j["seed"].get<uint64_t>();
    if (j.contains("file")) cfg.file_path = j["file"].get<std::string>();
    if (j.contains("endpoint")) cfg.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("cache")) cfg.cache_path = j["cache"].get<std::string>();
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    RunConfig cfg = default_run_config();
    try {
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
        if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
        if (j.contains("provider")) {
            const auto& p = j["provider"];
            if (p.contains("text")) read_provider(p["text"], cfg.text_provider);
            if (p.contains("prompt")) read_provider(p["prompt"], cfg.prompt_provider);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            if (m.contains("text_dim")) cfg.model.text_dim = m["text_dim"].get<int>();
            if (m.contains("hidden_dim")) cfg.model.hidden_dim = m["hidden_dim"].get<int>();
            if (m.contains("encoder_dim")) cfg.model.encoder_dim = m["encoder_dim"].get<int>();
            if (m.contains("user_dim")) cfg.model.user_dim = m["user_dim"].get<int>();
            if (m.contains("contrastive_dim"))
                cfg.model.contrastive_dim = m["contrastive_dim"].get<int>();
            if (m.contains("heads")) cfg.model.heads = m["heads"].get<int>();
            if (m.contains("layers")) cfg.model.layers = m["layers"].get<int>();
            if (m.contains("dropout")) cfg.model.dropout = m["dropout"].get<float>();
            if (m.contains("leaky_slope")) cfg.model.leaky_slope = m["leaky_slope"].get<float>();
        }
        if (j.contains("pretrain")) {
            const auto& p = j["pretrain"];
            if (p.contains("temperature")) cfg.pretrain.temperature = p["temperature"].get<double>();
            if (p.contains("negatives")) cfg.pretrain.negatives = p["negatives"].get<int>();
            if (p.contains("epochs")) cfg.pretrain.epochs = p["epochs"].get<int>();
            if (p.contains("batch_size")) cfg.pretrain.batch_size = p["batch_size"].get<int>();
            if (p.contains("lr")) cfg.pretrain.lr = p["lr"].get<double>();
            if (p.contains("template")) {
                auto k = parse_template_kind(p["template"].get<std::string>());
                if (!k) throw UsageError("config: unknown template '" +
                                         p["template"].get<std::string>() + "'");
                cfg.pretrain.template_kind = *k;
            }
            if (p.contains("objective")) {
                auto o = parse_objective(p["objective"].get<std::string>());
                if (!o) throw UsageError("config: unknown objective '" +
                                         p["objective"].get<std::string>() + "'");
                cfg.pretrain.objective = *o;
            }
        }
        if (j.contains("finetune")) {
            const auto& f = j["finetune"];
            if (f.contains("lambda")) cfg.finetune.lambda = f["lambda"].get<double>();
            if (f.contains("epochs")) cfg.finetune.epochs = f["epochs"].get<int>();
            if (f.contains("batch_size")) cfg.finetune.batch_size = f["batch_size"].get<int>();
            if (f.contains("lr")) cfg.finetune.lr = f["lr"].get<double>();
        }
        if (j.contains("ablation")) {
            const auto& a = j["ablation"];
            if (a.contains("no_list")) cfg.no_list = a["no_list"].get<bool>();
            if (a.contains("no_pretrain")) cfg.no_pretrain = a["no_pretrain"].get<bool>();
        }
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    cfg.apply_seed();
    return cfg;
}

std::optional<std::string> env_value(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

EmbeddingProvider make_provider(const RoleProviderConfig& cfg, ProviderRole role) {
    ProviderConfig pc;
    pc.backend = cfg.backend;
    pc.role = role;
    pc.stub_seed = cfg.stub_seed;
    pc.file_path = cfg.file_path;
    pc.endpoint = cfg.endpoint;
    pc.cache_path = cfg.cache_path;
    if (pc.backend == ProviderBackend::http && pc.endpoint.empty())
        if (auto env = env_value("SEGA_EMB_ENDPOINT")) pc.endpoint = *env;
    return EmbeddingProvider(pc);
}

}  // namespace sega
