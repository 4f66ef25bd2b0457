#pragma once

// Pluggable 768-dimensional text embedding provider. Two independently
// configured instances cover the two roles: description/tweet text and
// pseudo-label prompts. Backends: a precomputed file store, a deterministic
// stub, or an HTTP service. Texts are truncated to their first 50 whitespace
// tokens before hashing or lookup.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace sega {

inline constexpr int kEmbeddingDim = 768;
inline constexpr int kMaxTextTokens = 50;  // s = L

enum class ProviderRole { text, prompt };
enum class ProviderBackend { stub, file, http };

const char* provider_role_name(ProviderRole r);

struct ProviderConfig {
    ProviderBackend backend = ProviderBackend::stub;
    ProviderRole role = ProviderRole::text;
    std::string file_path;   // embedding store for the file backend
    std::string endpoint;    // base URL for the http backend
    std::string cache_path;  // optional persistent cache, same format as the store
    uint64_t stub_seed = 1;
};

class EmbeddingProvider {
public:
    explicit EmbeddingProvider(ProviderConfig cfg);

    // deterministic per (backend, truncated text); results cached in memory
    std::vector<float> embed_text(const std::string& text);
    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts);

    // whitespace-token truncation, rejoined with single spaces
    static std::string truncate_text(const std::string& text);

    size_t backend_calls() const { return backend_calls_; }
    const ProviderConfig& config() const { return cfg_; }

    // persist the in-memory cache to the configured cache path (no-op when
    // no cache path is set); loaded back on construction
    void save_cache() const;

private:
    std::vector<float> compute(const std::string& truncated);

    ProviderConfig cfg_;
    std::unordered_map<uint64_t, std::vector<float>> store_;  // file backend contents
    std::unordered_map<uint64_t, std::vector<float>> cache_;
    size_t backend_calls_ = 0;
};

// Embedding file: magic "SEGAEMB1", u32 count, u32 dim, then per entry a u64
// FNV-1a key of the truncated text and dim little-endian f32 values.
void write_embedding_file(const std::string& path,
                          const std::vector<std::pair<uint64_t, std::vector<float>>>& entries);
std::unordered_map<uint64_t, std::vector<float>> read_embedding_file(const std::string& path);

}  // namespace sega
