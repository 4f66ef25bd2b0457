#pragma once

// Fine-tuning stage: softmax classification of users into normal/bot/troll
// with summed cross-entropy plus an explicit L2 term over the whole parameter
// registry. Model selection keeps the epoch with the best validation macro-F1.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sega/adamw.hpp"
#include "sega/model.hpp"

namespace sega {

struct FinetuneConfig {
    double lambda = 3e-5;  // L2 weight
    int epochs = 150;
    int batch_size = 2048;
    double lr = 0.001;
    uint64_t seed = 7;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    std::array<ClassMetrics, 3> per_class;  // normal, bot, troll
    ClassMetrics macro;
    std::array<std::array<int64_t, 3>, 3> confusion{};  // [true][predicted]
};

// Per-class precision/recall/F1 from the confusion matrix; macro metrics are
// unweighted means over the three classes; 0/0 counts as 0.
MetricsReport evaluate(const std::vector<UserClass>& predictions,
                       const std::vector<UserClass>& labels);

std::string metrics_to_json(const MetricsReport& m);

struct EpochLogRow {
    int epoch;
    double train_loss;
    double valid_macro_f1;
};

struct FinetuneResult {
    MetricsReport valid;
    MetricsReport test;
    std::vector<EpochLogRow> log;
    int best_epoch = -1;
};

FinetuneResult finetune(Model& model, const GraphIndex& gi, const GraphInputsT<float>& inputs,
                        const FinetuneConfig& cfg);

// eval-mode class predictions for the given users (graph user indices)
std::vector<UserClass> predict_classes(Model& model, const GraphInputsT<float>& inputs,
                                       const std::vector<int>& user_rows);

// eval-mode class probabilities, rows parallel to user_rows
std::vector<float> predict_probabilities(Model& model, const GraphInputsT<float>& inputs,
                                         const std::vector<int>& user_rows);

// eval-mode user embeddings z^u for every user, row-major [n_users x d_u]
std::vector<float> compute_user_embeddings(Model& model, const GraphInputsT<float>& inputs);

void write_epoch_log(const std::string& path, const std::vector<EpochLogRow>& rows);

}  // namespace sega
