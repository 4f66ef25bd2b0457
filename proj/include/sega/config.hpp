#pragma once

// Run configuration: a flat JSON file mirrored by CLI flags (flags override
// file values). Every default matches the shipped hyperparameter set.

#include <cstdint>
#include <optional>
#include <string>

#include "sega/detector.hpp"
#include "sega/embedding.hpp"
#include "sega/model.hpp"
#include "sega/pretrain.hpp"

namespace sega {
namespace defaults {

inline constexpr double kTemperature = 0.1;
inline constexpr int kNegatives = 100;
inline constexpr int kPretrainEpochs = 100;
inline constexpr int kFinetuneEpochs = 150;
inline constexpr int kBatchSize = 2048;
inline constexpr double kLambda = 3e-5;
inline constexpr double kLearningRate = 0.001;
inline constexpr float kDropout = 0.3f;
inline constexpr int kHiddenDim = 32;       // d_h
inline constexpr int kEncoderDim = 128;     // d_out
inline constexpr int kUserDim = 64;         // d_u
inline constexpr int kContrastiveDim = 64;  // d_a
inline constexpr int kTextDim = 768;        // d_des = d_twe = d_p
inline constexpr int kLayers = 2;           // g
inline constexpr int kMaxTweetsPerNode = 20;  // q
inline constexpr int kMaxWords = 50;          // s = L
inline constexpr int kHeads = 4;
inline constexpr float kLeakySlope = 0.01f;
inline constexpr uint64_t kSeed = 7;

}  // namespace defaults

struct RoleProviderConfig {
    ProviderBackend backend = ProviderBackend::stub;
    uint64_t stub_seed = 1;
    std::string file_path;
    std::string endpoint;  // falls back to SEGA_EMB_ENDPOINT
    std::string cache_path;
};

struct RunConfig {
    uint64_t seed = defaults::kSeed;
    std::string dataset;
    std::string out_dir;

    RoleProviderConfig text_provider;    // descriptions and tweets
    RoleProviderConfig prompt_provider;  // pseudo-label prompts

    ModelConfig model;
    PretrainConfig pretrain;
    FinetuneConfig finetune;

    bool no_list = false;
    bool no_pretrain = false;

    // propagate the run seed into the stage configs
    void apply_seed();
};

RunConfig default_run_config();

// Reads a JSON config file section-by-section over the defaults.
RunConfig load_run_config(const std::string& path);

EmbeddingProvider make_provider(const RoleProviderConfig& cfg, ProviderRole role);

std::optional<std::string> env_value(const char* name);

}  // namespace sega
