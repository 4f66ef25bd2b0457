#pragma once

// Per-user topic-emotion preference extraction and pseudo-label prompt
// rendering. Pairs come from an LLM (or a pre-seeded cache); the summary
// keeps the most and least frequently used pair, and the renderer turns it
// into one of five prompt templates.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sega/graph.hpp"

namespace sega {

// 16 platform topic categories plus "others"
enum class Topic : int {
    arts_culture = 0,
    business_finance,
    careers,
    entertainment,
    fashion_beauty,
    food,
    gaming,
    hobbies_interests,
    movies_tv,
    music,
    news,
    outdoors,
    science,
    sports,
    technology,
    travel,
    others,
};
inline constexpr int kTopicCount = 17;

// 8 Plutchik emotions plus "others"
enum class Emotion : int {
    joy = 0,
    sadness,
    anger,
    fear,
    trust,
    disgust,
    surprise,
    anticipation,
    others,
};
inline constexpr int kEmotionCount = 9;

inline constexpr int kPairCount = kTopicCount * kEmotionCount;  // 153
inline constexpr int kMaxPromptPosts = 10;

const char* topic_name(Topic t);
const char* emotion_name(Emotion e);
Topic parse_topic(const std::string& name);      // case-insensitive; unknown -> others
Emotion parse_emotion(const std::string& name);  // case-insensitive; unknown -> others

using PairKey = std::pair<Topic, Emotion>;

inline int pair_index(PairKey p) {
    return static_cast<int>(p.first) * kEmotionCount + static_cast<int>(p.second);
}

struct PreferenceProfile {
    std::string user_id;
    std::map<PairKey, int> counts;  // from up to 10 posts
};

struct PreferenceSummary {
    PairKey max_pair;
    PairKey min_pair;
};

enum class TemplateKind { default_prompt, short_prompt, topic_prompt, emotion_prompt, tandem_prompt };

const char* template_kind_name(TemplateKind k);
std::optional<TemplateKind> parse_template_kind(const std::string& name);

struct PseudoLabel {
    TemplateKind kind;
    std::string text;
    PairKey max_pair;
    PairKey min_pair;
};

// One pair per line matching "<number>[:.] <topic> - <emotion>"; unmatched
// lines are skipped, unknown category names map to others.
std::vector<PairKey> parse_llm_response(const std::string& text);

// Most/least frequent pair. Ties go to the lexicographically smallest pair in
// enum order; the min slot prefers a pair different from the chosen max when
// one exists. Empty profile -> DataError.
PreferenceSummary preference_summary(const PreferenceProfile& profile);

// Renders the pseudo-label for the given template kind. Topic/emotion/tandem
// variants compute their marginal frequencies from the profile independently.
PseudoLabel render_prompt(const PreferenceProfile& profile, TemplateKind kind);

// ---- LLM client and preference cache ----------------------------------------

// The instruction prompt sent ahead of the numbered posts.
extern const char* const kInstructionPrompt;

std::string build_llm_prompt(const std::vector<std::string>& recent_tweets);

class LlmClient {
public:
    LlmClient(std::string endpoint, std::string api_key)
        : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)) {}

    // POST {"prompt": ...}; returns the response's "text" field
    std::string complete(const std::string& prompt);

    size_t network_calls() const { return network_calls_; }

private:
    std::string endpoint_;
    std::string api_key_;
    size_t network_calls_ = 0;
};

using StringPairList = std::vector<std::pair<std::string, std::string>>;

// prefs.jsonl: one {"id", "pairs": [["news","anger"], ...]} object per user
std::map<std::string, StringPairList> load_prefs(const std::string& path);
void save_prefs(const std::string& path, const std::map<std::string, StringPairList>& prefs);

// Cache-first pair extraction over a dataset's users.
class PreferenceOracle {
public:
    // `client` may be null (cache-only mode)
    PreferenceOracle(std::map<std::string, StringPairList> cache, LlmClient* client = nullptr)
        : cache_(std::move(cache)), client_(client) {}

    // nullopt when the user has no posts (excluded from pre-training)
    std::optional<PreferenceProfile> extract_pairs(const UserRecord& user);

    const std::map<std::string, StringPairList>& cache() const { return cache_; }

private:
    std::map<std::string, StringPairList> cache_;
    LlmClient* client_;
};

}  // namespace sega
