#pragma once

// Raw node features -> numeric matrices: indicator encoding, z-score
// normalization with train-split statistics, and provider-backed text
// embeddings (tweet embeddings averaged per node).

#include <array>
#include <string>
#include <vector>

#include "sega/embedding.hpp"
#include "sega/graph.hpp"

namespace sega {

struct NormStats {
    std::array<double, kUserNumericals> user_mean{}, user_std{};
    std::array<double, kListNumericals> list_mean{}, list_std{};

    // User statistics come from train-split users only (population standard
    // deviation); lists carry no split, so list statistics use all lists.
    // Falls back to all users when no train split exists.
    static NormStats fit(const HeteroGraph& g);
};

// booleans to {0,1} floats; arity must match the node kind
std::vector<float> encode_indicators(const std::vector<bool>& indicators, NodeKind kind);

// (v - mean) / std per feature; degenerate std == 0 maps to 0
std::vector<float> zscore(const std::vector<float>& values, const std::vector<double>& mean,
                          const std::vector<double>& std_dev);

// x_des = embed(description); x_twe = mean of per-tweet embeddings (zero
// vector when the node has no tweets)
std::pair<std::vector<float>, std::vector<float>> encode_texts(
    const std::string& description, const std::vector<std::string>& tweets,
    EmbeddingProvider& provider);

// Per-kind feature matrices in canonical node order.
struct KindFeatures {
    int count = 0;
    std::vector<float> ind;  // count x arity
    std::vector<float> num;  // count x arity, z-scored
    std::vector<float> des;  // count x 768
    std::vector<float> twe;  // count x 768
};

struct DatasetFeatures {
    KindFeatures user;
    KindFeatures list;
    NormStats stats;
};

DatasetFeatures build_features(const HeteroGraph& g, EmbeddingProvider& text_provider);

}  // namespace sega
