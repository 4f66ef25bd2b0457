#include "sega/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "sega/errors.hpp"
#include "sega/rng.hpp"

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "embedding file I/O assumes a little-endian host");

namespace sega {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'G', 'A', 'E', 'M', 'B', '1'};

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

const char* provider_role_name(ProviderRole r) {
    return r == ProviderRole::text ? "text" : "prompt";
}

std::string EmbeddingProvider::truncate_text(const std::string& text) {
    std::istringstream in(text);
    std::string token, out;
    int count = 0;
    while (count < kMaxTextTokens && in >> token) {
        if (count) out += ' ';
        out += token;
        ++count;
    }
    return out;
}

EmbeddingProvider::EmbeddingProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.backend == ProviderBackend::file) {
        if (cfg_.file_path.empty())
            throw DataError("embedding provider: file backend needs a file path");
        store_ = read_embedding_file(cfg_.file_path);
    }
    if (cfg_.backend == ProviderBackend::http && cfg_.endpoint.empty())
        throw DataError("embedding provider: http backend needs an endpoint (SEGA_EMB_ENDPOINT)");
    if (!cfg_.cache_path.empty() && std::ifstream(cfg_.cache_path).good())
        cache_ = read_embedding_file(cfg_.cache_path);
}

void EmbeddingProvider::save_cache() const {
    if (cfg_.cache_path.empty()) return;
    std::vector<std::pair<uint64_t, std::vector<float>>> entries(cache_.begin(), cache_.end());
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    write_embedding_file(cfg_.cache_path, entries);
}

std::vector<float> EmbeddingProvider::embed_text(const std::string& text) {
    const std::string truncated = truncate_text(text);
    const uint64_t key = fnv1a64(truncated);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto vec = compute(truncated);
    cache_.emplace(key, vec);
    return vec;
}

std::vector<std::vector<float>> EmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(embed_text(texts[i]));
        } catch (const std::exception& e) {
            throw DataError("embed_batch: element " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::vector<float> EmbeddingProvider::compute(const std::string& truncated) {
    switch (cfg_.backend) {
        case ProviderBackend::stub: {
            std::vector<float> v(kEmbeddingDim, 0.0f);
            if (truncated.empty()) return v;  // empty text embeds to the zero vector
            Rng rng(fnv1a64(truncated) ^ cfg_.stub_seed);
            double norm = 0.0;
            for (auto& x : v) {
                x = static_cast<float>(rng.normal());
                norm += static_cast<double>(x) * x;
            }
            norm = std::sqrt(norm);
            for (auto& x : v) x = static_cast<float>(x / norm);
            return v;
        }
        case ProviderBackend::file: {
            auto it = store_.find(fnv1a64(truncated));
            if (it == store_.end())
                throw DataError("embedding file " + cfg_.file_path + " has no entry for text hash " +
                                hash_hex(fnv1a64(truncated)));
            return it->second;
        }
        case ProviderBackend::http: {
            json req;
            req["texts"] = json::array({truncated});
            req["role"] = provider_role_name(cfg_.role);
            std::string last_error;
            for (int attempt = 1; attempt <= 3; ++attempt) {
                ++backend_calls_;
                httplib::Client client(cfg_.endpoint);
                client.set_read_timeout(10, 0);
                auto res = client.Post("/embed", req.dump(), "application/json");
                if (!res) {
                    last_error = "connection failed";
                    continue;
                }
                if (res->status != 200) {
                    last_error = "status " + std::to_string(res->status);
                    continue;
                }
                try {
                    json body = json::parse(res->body);
                    auto vec = body.at("vectors").at(0).get<std::vector<float>>();
                    if (static_cast<int>(vec.size()) != kEmbeddingDim)
                        throw DataError("embedding service returned dimension " +
                                        std::to_string(vec.size()));
                    return vec;
                } catch (const json::exception& e) {
                    last_error = std::string("bad response: ") + e.what();
                }
            }
            throw DataError("embedding service " + cfg_.endpoint + " failed after 3 attempts: " +
                            last_error);
        }
    }
    throw DataError("embedding provider: unknown backend");
}

void write_embedding_file(const std::string& path,
                          const std::vector<std::pair<uint64_t, std::vector<float>>>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("embedding file: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const uint32_t count = static_cast<uint32_t>(entries.size());
    const uint32_t dim = kEmbeddingDim;
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    for (const auto& [key, vec] : entries) {
        if (static_cast<int>(vec.size()) != kEmbeddingDim)
            throw DataError("embedding file: entry has wrong dimension");
        out.write(reinterpret_cast<const char*>(&key), sizeof(key));
        out.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(vec.size() * sizeof(float)));
    }
    if (!out) throw DataError("embedding file: write failed for " + path);
}

std::unordered_map<uint64_t, std::vector<float>> read_embedding_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("embedding file: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("embedding file: bad magic in " + path);
    uint32_t count = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    if (!in || dim != kEmbeddingDim)
        throw DataError("embedding file: expected dimension " + std::to_string(kEmbeddingDim) +
                        " in " + path);
    std::unordered_map<uint64_t, std::vector<float>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint64_t key = 0;
        in.read(reinterpret_cast<char*>(&key), sizeof(key));
        std::vector<float> vec(kEmbeddingDim);
        in.read(reinterpret_cast<char*>(vec.data()),
                static_cast<std::streamsize>(vec.size() * sizeof(float)));
        if (!in) throw DataError("embedding file: truncated entry " + std::to_string(i) + " in " + path);
        out.emplace(key, std::move(vec));
    }
    return out;
}

}  // namespace sega
