// sega: synthesis, preference extraction, pre-training, fine-tuning,
// evaluation, and embedding export for anomalous-user detection over a
// heterogeneous user/list graph.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>

#include <CLI11.hpp>

#include "sega/checkpoint.hpp"
#include "sega/config.hpp"
#include "sega/detector.hpp"
#include "sega/errors.hpp"
#include "sega/features.hpp"
#include "sega/graph.hpp"
#include "sega/model.hpp"
#include "sega/pca.hpp"
#include "sega/preference.hpp"
#include "sega/pretrain.hpp"
#include "sega/synth.hpp"

namespace fs = std::filesystem;
using namespace sega;

namespace {

struct Pipeline {
    std::unique_ptr<HeteroGraph> graph;
    std::unique_ptr<GraphIndex> index;
    DatasetFeatures features;
    GraphInputsT<float> inputs;
};

Pipeline load_pipeline(const RunConfig& cfg) {
    Pipeline p;
    p.graph = std::make_unique<HeteroGraph>(load_dataset(cfg.dataset));
    if (cfg.no_list) *p.graph = strip_lists(*p.graph);
    p.index = std::make_unique<GraphIndex>(GraphIndex::build(*p.graph));
    auto text_provider = make_provider(cfg.text_provider, ProviderRole::text);
    p.features = build_features(*p.graph, text_provider);
    p.inputs = make_graph_inputs<float>(*p.index, p.features);
    return p;
}

std::map<std::string, StringPairList> load_dataset_prefs(const RunConfig& cfg) {
    const auto path = fs::path(cfg.dataset) / "prefs.jsonl";
    if (!fs::exists(path))
        throw DataError("preferences: " + path.string() +
                        " not found; run `sega prefs` (or `sega synth`) first");
    return load_prefs(path.string());
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << content;
}

int ensure_prefs(const RunConfig& cfg) {
    auto graph = load_dataset(cfg.dataset);
    const auto path = (fs::path(cfg.dataset) / "prefs.jsonl").string();
    std::map<std::string, StringPairList> cache;
    if (fs::exists(path)) cache = load_prefs(path);

    std::vector<std::string> missing;
    for (const auto& u : graph.users)
        if (!u.tweets.empty() && !cache.count(u.id)) missing.push_back(u.id);
    if (missing.empty()) {
        std::cout << "prefs: cache complete for " << cache.size() << " users, nothing to do\n";
        return 0;
    }

    auto endpoint = env_value("SEGA_LLM_ENDPOINT");
    if (!endpoint) {
        std::string msg = "preferences: no LLM endpoint (SEGA_LLM_ENDPOINT) and " +
                          std::to_string(missing.size()) + " users lack cached pairs:";
        for (const auto& id : missing) msg += " " + id;
        throw DataError(msg);
    }
    LlmClient client(*endpoint, env_value("SEGA_LLM_API_KEY").value_or(""));
    PreferenceOracle oracle(cache, &client);
    for (const auto& u : graph.users)
        if (!u.tweets.empty()) oracle.extract_pairs(u);
    save_prefs(path, oracle.cache());
    std::cout << "prefs: extracted pairs for " << missing.size() << " users ("
              << client.network_calls() << " calls)\n";
    return 0;
}

struct TrainArtifacts {
    FinetuneResult finetune;
    std::vector<double> pretrain_losses;
    bool pretrained = false;
};

TrainArtifacts run_training(const RunConfig& cfg, bool do_pretrain, std::ostream& log) {
    Pipeline p = load_pipeline(cfg);
    Model model(cfg.model);
    model.init_params(cfg.seed);

    TrainArtifacts art;
    if (do_pretrain) {
        auto prefs = load_dataset_prefs(cfg);
        auto anchors = build_anchor_set(*p.graph, prefs, cfg.pretrain.template_kind);
        auto prompt_provider = make_provider(cfg.prompt_provider, ProviderRole::prompt);
        PretrainState state(AdamWConfig{.lr = cfg.pretrain.lr});
        auto result = pretrain(model, p.inputs, anchors, prompt_provider, cfg.pretrain, state);
        art.pretrain_losses = result.epoch_losses;
        art.pretrained = true;
        log << "stage pretrain: " << result.epoch_losses.size() << " epochs over "
            << result.anchors << " anchors (" << objective_name(cfg.pretrain.objective) << ", "
            << template_kind_name(cfg.pretrain.template_kind) << " template)\n";
        if (!cfg.out_dir.empty()) {
            save_train_checkpoint((fs::path(cfg.out_dir) / "ckpt_pretrain.bin").string(), model,
                                  &state);
            write_loss_log((fs::path(cfg.out_dir) / "pretrain_loss.csv").string(),
                           cfg.pretrain.objective, result.epoch_losses);
        }
    } else {
        log << "stage pretrain: skipped (no_pretrain)\n";
    }

    FinetuneConfig fcfg = cfg.finetune;
    art.finetune = finetune(model, *p.index, p.inputs, fcfg);
    log << "stage finetune: " << fcfg.epochs << " epochs, best validation epoch "
        << (art.finetune.best_epoch + 1) << "\n";
    if (!cfg.out_dir.empty()) {
        save_train_checkpoint((fs::path(cfg.out_dir) / "ckpt_finetune.bin").string(), model,
                              nullptr);
        write_epoch_log((fs::path(cfg.out_dir) / "finetune_log.csv").string(), art.finetune.log);
        write_text((fs::path(cfg.out_dir) / "metrics.json").string(),
                   metrics_to_json(art.finetune.test) + "\n");
    }
    return art;
}

int cmd_export(const RunConfig& cfg, const std::string& ckpt_path, const std::string& out_csv,
               bool pca2, const std::string& filter) {
    Pipeline p = load_pipeline(cfg);
    Model model(cfg.model);
    model.load_values(load_checkpoint(ckpt_path));

    // resolve the filter before running the encoder
    std::vector<int> rows;
    if (filter.empty()) {
        for (int i = 0; i < p.graph->user_count(); ++i) rows.push_back(i);
    } else {
        const auto eq = filter.find('=');
        if (eq == std::string::npos)
            throw UsageError("export: filter must look like field=value, got '" + filter + "'");
        const std::string field = filter.substr(0, eq);
        const std::string value = filter.substr(eq + 1);
        if (field == "label") {
            auto cls = parse_class(value);
            if (!cls) throw UsageError("export: unknown label '" + value + "'");
            for (int i = 0; i < p.graph->user_count(); ++i)
                if (p.graph->users[i].label == *cls) rows.push_back(i);
        } else if (field == "majority" || field == "minority") {
            const auto colon = value.find(':');
            if (colon == std::string::npos)
                throw UsageError("export: " + field + " filter needs topic:emotion");
            const PairKey want{parse_topic(value.substr(0, colon)),
                               parse_emotion(value.substr(colon + 1))};
            auto prefs = load_dataset_prefs(cfg);
            PreferenceOracle oracle(prefs);
            for (int i = 0; i < p.graph->user_count(); ++i) {
                auto profile = oracle.extract_pairs(p.graph->users[i]);
                if (!profile) continue;
                auto summary = preference_summary(*profile);
                const PairKey got = field == "majority" ? summary.max_pair : summary.min_pair;
                if (got == want) rows.push_back(i);
            }
        } else {
            throw UsageError("export: unknown filter field '" + field + "'");
        }
    }

    const auto zu = compute_user_embeddings(model, p.inputs);
    const int d = cfg.model.user_dim;
    std::string csv;
    if (pca2) {
        std::vector<double> data;
        data.reserve(rows.size() * d);
        for (int r : rows)
            for (int j = 0; j < d; ++j) data.push_back(zu[static_cast<size_t>(r) * d + j]);
        if (rows.empty()) throw DataError("export: filter matched no users");
        auto pca = pca_fit(data, static_cast<int>(rows.size()), d, 2);
        auto proj = pca_transform(pca, data, static_cast<int>(rows.size()));
        csv = "user_id,label,pc1,pc2\n";
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto& u = p.graph->users[rows[i]];
            csv += u.id + "," + (u.label ? class_name(*u.label) : "unlabeled") + "," +
                   fmt_float(static_cast<float>(proj[i * 2])) + "," +
                   fmt_float(static_cast<float>(proj[i * 2 + 1])) + "\n";
        }
    } else {
        csv = "user_id,label";
        for (int j = 0; j < d; ++j) csv += ",e" + std::to_string(j);
        csv += "\n";
        for (int r : rows) {
            const auto& u = p.graph->users[r];
            csv += u.id + "," + (u.label ? class_name(*u.label) : "unlabeled");
            for (int j = 0; j < d; ++j) csv += "," + fmt_float(zu[static_cast<size_t>(r) * d + j]);
            csv += "\n";
        }
    }
    write_text(out_csv, csv);
    std::cout << "export: wrote " << rows.size() << " rows to " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anomalous-user detection over a heterogeneous user/list graph"};
    app.require_subcommand(1);
    app.fallthrough();  // global --seed/--data/--out may follow the subcommand

    std::string config_path, data_path, out_path;
    uint64_t seed = defaults::kSeed;
    bool seed_set = false, data_set = false, out_set = false;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    auto* seed_opt = app.add_option("--seed", seed, "run seed");
    auto* data_opt = app.add_option("--data", data_path, "dataset directory");
    auto* out_opt = app.add_option("--out", out_path, "output directory/file");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string preset = "default";
    synth_cmd->add_option("--preset", preset, "default | list_signal");
    int synth_users = -1;
    synth_cmd->add_option("--users", synth_users, "override total user count, keeping class skew");

    auto* prefs_cmd = app.add_subcommand("prefs", "extract preference pairs into prefs.jsonl");
    auto* pretrain_cmd = app.add_subcommand("pretrain", "contrastive pre-training only");
    auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune the detector");
    std::string init_ckpt;
    finetune_cmd->add_option("--init", init_ckpt, "checkpoint to initialize from");
    auto* train_cmd = app.add_subcommand("train", "pre-train then fine-tune");
    std::vector<std::string> ablations;
    train_cmd->add_option("--ablation", ablations, "no_list | no_pretrain (repeatable)");
    std::string template_name, objective_name_arg;
    for (auto* cmd : {pretrain_cmd, train_cmd}) {
        cmd->add_option("--template", template_name, "default | short | topic | emotion | tandem");
        cmd->add_option("--objective", objective_name_arg, "contrastive | multilabel");
    }
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_split = "test";
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--split", eval_split, "train | valid | test");
    auto* export_cmd = app.add_subcommand("export-emb", "export user embeddings as CSV");
    std::string export_ckpt, export_filter;
    bool export_pca2 = false;
    export_cmd->add_option("--ckpt", export_ckpt, "checkpoint path")->required();
    export_cmd->add_flag("--pca2", export_pca2, "project to 2 dimensions with PCA");
    export_cmd->add_option("--filter", export_filter,
                           "label=<class> | majority=<topic>:<emotion> | minority=<topic>:<emotion>");

    try {
        app.parse(argc, argv);
        seed_set = seed_opt->count() > 0;
        data_set = data_opt->count() > 0;
        out_set = out_opt->count() > 0;

        RunConfig cfg =
            config_path.empty() ? default_run_config() : load_run_config(config_path);
        if (seed_set) cfg.seed = seed;
        if (data_set) cfg.dataset = data_path;
        if (out_set) cfg.out_dir = out_path;
        for (const auto& a : ablations) {
            if (a == "no_list") cfg.no_list = true;
            else if (a == "no_pretrain") cfg.no_pretrain = true;
            else throw UsageError("unknown ablation '" + a + "' (use no_list or no_pretrain)");
        }
        if (!template_name.empty()) {
            auto k = parse_template_kind(template_name);
            if (!k) throw UsageError("unknown template '" + template_name + "'");
            cfg.pretrain.template_kind = *k;
        }
        if (!objective_name_arg.empty()) {
            auto o = parse_objective(objective_name_arg);
            if (!o) throw UsageError("unknown objective '" + objective_name_arg + "'");
            cfg.pretrain.objective = *o;
        }
        cfg.apply_seed();

        if (synth_cmd->parsed()) {
            if (cfg.out_dir.empty())
                throw UsageError("synth: --out <directory> is required\n" + app.help());
            SynthConfig scfg =
                preset == "list_signal" ? synth_list_signal_config() : synth_default_config();
            if (preset != "default" && preset != "list_signal")
                throw UsageError("synth: unknown preset '" + preset + "'");
            scfg.seed = cfg.seed;
            if (synth_users > 0) {
                const double scale = static_cast<double>(synth_users) /
                                     (scfg.normal_users + scfg.bot_users + scfg.troll_users);
                scfg.normal_users = std::max(1, static_cast<int>(scfg.normal_users * scale));
                scfg.bot_users = std::max(1, static_cast<int>(scfg.bot_users * scale));
                scfg.troll_users = std::max(1, static_cast<int>(scfg.troll_users * scale));
                scfg.list_count = std::max(1, static_cast<int>(scfg.list_count * scale));
            }
            synth_generate(scfg, cfg.out_dir);
            std::cout << "synth: wrote dataset to " << cfg.out_dir << " (seed " << scfg.seed
                      << ")\n";
            return 0;
        }

        if (cfg.dataset.empty())
            throw UsageError("--data <dataset directory> (or a config with one) is required");

        if (prefs_cmd->parsed()) return ensure_prefs(cfg);

        if (pretrain_cmd->parsed() || train_cmd->parsed() || finetune_cmd->parsed()) {
            if (cfg.out_dir.empty()) throw UsageError("--out <directory> is required");
            fs::create_directories(cfg.out_dir);
            std::ofstream log((fs::path(cfg.out_dir) / "run.log").string());

            if (pretrain_cmd->parsed()) {
                Pipeline p = load_pipeline(cfg);
                Model model(cfg.model);
                model.init_params(cfg.seed);
                auto prefs = load_dataset_prefs(cfg);
                auto anchors = build_anchor_set(*p.graph, prefs, cfg.pretrain.template_kind);
                auto prompt_provider = make_provider(cfg.prompt_provider, ProviderRole::prompt);
                PretrainState state(AdamWConfig{.lr = cfg.pretrain.lr});
                auto result =
                    pretrain(model, p.inputs, anchors, prompt_provider, cfg.pretrain, state);
                save_train_checkpoint((fs::path(cfg.out_dir) / "ckpt_pretrain.bin").string(),
                                      model, &state);
                write_loss_log((fs::path(cfg.out_dir) / "pretrain_loss.csv").string(),
                               cfg.pretrain.objective, result.epoch_losses);
                log << "stage pretrain: " << result.epoch_losses.size() << " epochs over "
                    << result.anchors << " anchors\n";
                std::cout << "pretrain: final epoch loss "
                          << (result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back())
                          << "\n";
                return 0;
            }
            if (finetune_cmd->parsed()) {
                Pipeline p = load_pipeline(cfg);
                Model model(cfg.model);
                model.init_params(cfg.seed);
                if (!init_ckpt.empty()) model.load_values(load_checkpoint(init_ckpt));
                auto result = finetune(model, *p.index, p.inputs, cfg.finetune);
                save_train_checkpoint((fs::path(cfg.out_dir) / "ckpt_finetune.bin").string(),
                                      model, nullptr);
                write_epoch_log((fs::path(cfg.out_dir) / "finetune_log.csv").string(), result.log);
                write_text((fs::path(cfg.out_dir) / "metrics.json").string(),
                           metrics_to_json(result.test) + "\n");
                log << "stage finetune: best validation epoch " << (result.best_epoch + 1) << "\n";
                std::cout << "finetune: test macro F1 " << result.test.macro.f1 << "\n";
                return 0;
            }
            // train: both stages
            auto art = run_training(cfg, !cfg.no_pretrain, log);
            std::cout << "train: test macro F1 " << art.finetune.test.macro.f1 << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            auto split = parse_split(eval_split);
            if (!split) throw UsageError("eval: unknown split '" + eval_split + "'");
            Pipeline p = load_pipeline(cfg);
            Model model(cfg.model);
            model.load_values(load_checkpoint(eval_ckpt));
            std::vector<int> rows;
            std::vector<UserClass> labels;
            for (int i = 0; i < p.graph->user_count(); ++i)
                if (p.graph->users[i].split == *split && p.graph->users[i].label) {
                    rows.push_back(i);
                    labels.push_back(*p.graph->users[i].label);
                }
            if (rows.empty()) throw DataError("eval: split has no labeled users");
            auto metrics = evaluate(predict_classes(model, p.inputs, rows), labels);
            const std::string json_text = metrics_to_json(metrics) + "\n";
            if (!cfg.out_dir.empty()) write_text(cfg.out_dir, json_text);
            std::cout << json_text;
            return 0;
        }

        if (export_cmd->parsed()) {
            if (cfg.out_dir.empty()) throw UsageError("export-emb: --out <csv path> is required");
            return cmd_export(cfg, export_ckpt, cfg.out_dir, export_pca2, export_filter);
        }

        throw UsageError("no subcommand given\n" + app.help());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
