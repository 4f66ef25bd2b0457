#include "sega/features.hpp"

#include <cmath>

#include "sega/errors.hpp"

namespace sega {

NormStats NormStats::fit(const HeteroGraph& g) {
    NormStats s;
    {
        std::vector<const UserRecord*> pool;
        for (const auto& u : g.users)
            if (u.split == Split::train) pool.push_back(&u);
        if (pool.empty())
            for (const auto& u : g.users) pool.push_back(&u);
        if (!pool.empty()) {
            for (int f = 0; f < kUserNumericals; ++f) {
                double sum = 0.0;
                for (const auto* u : pool) sum += u->numericals[f];
                const double mean = sum / static_cast<double>(pool.size());
                double var = 0.0;
                for (const auto* u : pool) {
                    const double d = u->numericals[f] - mean;
                    var += d * d;
                }
                s.user_mean[f] = mean;
                s.user_std[f] = std::sqrt(var / static_cast<double>(pool.size()));
            }
        }
    }
    if (!g.lists.empty()) {
        for (int f = 0; f < kListNumericals; ++f) {
            double sum = 0.0;
            for (const auto& l : g.lists) sum += l.numericals[f];
            const double mean = sum / static_cast<double>(g.lists.size());
            double var = 0.0;
            for (const auto& l : g.lists) {
                const double d = l.numericals[f] - mean;
                var += d * d;
            }
            s.list_mean[f] = mean;
            s.list_std[f] = std::sqrt(var / static_cast<double>(g.lists.size()));
        }
    }
    return s;
}

std::vector<float> encode_indicators(const std::vector<bool>& indicators, NodeKind kind) {
    const size_t expected = kind == NodeKind::user ? kUserIndicators : kListIndicators;
    if (indicators.size() != expected)
        throw ShapeError("encode_indicators: expected " + std::to_string(expected) +
                         " indicators for a " + (kind == NodeKind::user ? "user" : "list") +
                         ", got " + std::to_string(indicators.size()));
    std::vector<float> out(indicators.size());
    for (size_t i = 0; i < indicators.size(); ++i) out[i] = indicators[i] ? 1.0f : 0.0f;
    return out;
}

std::vector<float> zscore(const std::vector<float>& values, const std::vector<double>& mean,
                          const std::vector<double>& std_dev) {
    if (values.size() != mean.size() || values.size() != std_dev.size())
        throw ShapeError("zscore: feature count mismatch");
    std::vector<float> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw NumericError("zscore: non-finite input value");
        out[i] = std_dev[i] == 0.0
                     ? 0.0f
                     : static_cast<float>((values[i] - mean[i]) / std_dev[i]);
    }
    return out;
}

std::pair<std::vector<float>, std::vector<float>> encode_texts(
    const std::string& description, const std::vector<std::string>& tweets,
    EmbeddingProvider& provider) {
    auto des = provider.embed_text(description);
    std::vector<float> twe(kEmbeddingDim, 0.0f);
    if (!tweets.empty()) {
        std::vector<double> acc(kEmbeddingDim, 0.0);
        for (const auto& t : tweets) {
            auto v = provider.embed_text(t);
            for (int i = 0; i < kEmbeddingDim; ++i) acc[i] += v[i];
        }
        for (int i = 0; i < kEmbeddingDim; ++i)
            twe[i] = static_cast<float>(acc[i] / static_cast<double>(tweets.size()));
    }
    return {std::move(des), std::move(twe)};
}

DatasetFeatures build_features(const HeteroGraph& g, EmbeddingProvider& text_provider) {
    DatasetFeatures out;
    out.stats = NormStats::fit(g);
    out.user.count = g.user_count();
    out.list.count = g.list_count();

    const std::vector<double> umean(out.stats.user_mean.begin(), out.stats.user_mean.end());
    const std::vector<double> ustd(out.stats.user_std.begin(), out.stats.user_std.end());
    for (const auto& u : g.users) {
        auto ind =
            encode_indicators(std::vector<bool>(u.indicators.begin(), u.indicators.end()),
                              NodeKind::user);
        auto num = zscore(std::vector<float>(u.numericals.begin(), u.numericals.end()), umean, ustd);
        auto [des, twe] = encode_texts(u.description, u.tweets, text_provider);
        out.user.ind.insert(out.user.ind.end(), ind.begin(), ind.end());
        out.user.num.insert(out.user.num.end(), num.begin(), num.end());
        out.user.des.insert(out.user.des.end(), des.begin(), des.end());
        out.user.twe.insert(out.user.twe.end(), twe.begin(), twe.end());
    }
    const std::vector<double> lmean(out.stats.list_mean.begin(), out.stats.list_mean.end());
    const std::vector<double> lstd(out.stats.list_std.begin(), out.stats.list_std.end());
    for (const auto& l : g.lists) {
        auto ind =
            encode_indicators(std::vector<bool>(l.indicators.begin(), l.indicators.end()),
                              NodeKind::list);
        auto num = zscore(std::vector<float>(l.numericals.begin(), l.numericals.end()), lmean, lstd);
        auto [des, twe] = encode_texts(l.description, l.tweets, text_provider);
        out.list.ind.insert(out.list.ind.end(), ind.begin(), ind.end());
        out.list.num.insert(out.list.num.end(), num.begin(), num.end());
        out.list.des.insert(out.list.des.end(), des.begin(), des.end());
        out.list.twe.insert(out.list.twe.end(), twe.begin(), twe.end());
    }
    return out;
}

}  // namespace sega
