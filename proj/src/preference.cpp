#include "sega/preference.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "sega/errors.hpp"

using json = nlohmann::ordered_json;

namespace sega {

namespace {

const char* kTopicNames[kTopicCount] = {
    "arts & culture", "business & finance", "careers",  "entertainment", "fashion & beauty",
    "food",           "gaming",             "hobbies & interests",       "movies & TV",
    "music",          "news",               "outdoors", "science",       "sports",
    "technology",     "travel",             "others"};

const char* kEmotionNames[kEmotionCount] = {"joy",     "sadness",  "anger",        "fear", "trust",
                                            "disgust", "surprise", "anticipation", "others"};

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// max = lexicographically smallest key among the highest counts; min = the
// smallest key among the lowest counts, preferring a key different from max
template <typename K>
std::pair<K, K> count_extremes(const std::map<K, int>& counts) {
    K max_key = counts.begin()->first;
    int max_count = counts.begin()->second;
    for (const auto& [k, c] : counts)
        if (c > max_count) {
            max_key = k;
            max_count = c;
        }
    bool have_min = false;
    K min_key = max_key;
    int min_count = max_count;
    for (const auto& [k, c] : counts) {
        if (k == max_key) continue;
        if (!have_min || c < min_count) {
            min_key = k;
            min_count = c;
            have_min = true;
        }
    }
    return {max_key, min_key};
}

// splits "http://host:port/some/path" into base and path
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) return {url, "/"};
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

const char* topic_name(Topic t) { return kTopicNames[static_cast<int>(t)]; }
const char* emotion_name(Emotion e) { return kEmotionNames[static_cast<int>(e)]; }

Topic parse_topic(const std::string& name) {
    const std::string n = lower(name);
    for (int i = 0; i < kTopicCount; ++i)
        if (n == lower(kTopicNames[i])) return static_cast<Topic>(i);
    return Topic::others;
}

Emotion parse_emotion(const std::string& name) {
    const std::string n = lower(name);
    for (int i = 0; i < kEmotionCount; ++i)
        if (n == lower(kEmotionNames[i])) return static_cast<Emotion>(i);
    return Emotion::others;
}

const char* template_kind_name(TemplateKind k) {
    switch (k) {
        case TemplateKind::default_prompt: return "default";
        case TemplateKind::short_prompt: return "short";
        case TemplateKind::topic_prompt: return "topic";
        case TemplateKind::emotion_prompt: return "emotion";
        case TemplateKind::tandem_prompt: return "tandem";
    }
    return "?";
}

std::optional<TemplateKind> parse_template_kind(const std::string& name) {
    for (TemplateKind k :
         {TemplateKind::default_prompt, TemplateKind::short_prompt, TemplateKind::topic_prompt,
          TemplateKind::emotion_prompt, TemplateKind::tandem_prompt})
        if (name == template_kind_name(k)) return k;
    return std::nullopt;
}

std::vector<PairKey> parse_llm_response(const std::string& text) {
    static const std::regex line_re(R"(^\s*\d+\s*[:.]?\s*(.+?)\s*-\s*(.+?)\s*$)");
    std::vector<PairKey> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (std::regex_match(line, m, line_re))
            out.emplace_back(parse_topic(m[1].str()), parse_emotion(m[2].str()));
    }
    return out;
}

PreferenceSummary preference_summary(const PreferenceProfile& profile) {
    if (profile.counts.empty())
        throw DataError("preference_summary: empty profile for user '" + profile.user_id + "'");
    auto [max_pair, min_pair] = count_extremes(profile.counts);
    return {max_pair, min_pair};
}

PseudoLabel render_prompt(const PreferenceProfile& profile, TemplateKind kind) {
    const PreferenceSummary summary = preference_summary(profile);
    const auto [tmax, emax] = summary.max_pair;
    const auto [tmin, emin] = summary.min_pair;

    auto topic_marginals = [&] {
        std::map<Topic, int> m;
        for (const auto& [k, c] : profile.counts) m[k.first] += c;
        return count_extremes(m);
    };
    auto emotion_marginals = [&] {
        std::map<Emotion, int> m;
        for (const auto& [k, c] : profile.counts) m[k.second] += c;
        return count_extremes(m);
    };
    auto topic_sentence = [&] {
        auto [hi, lo] = topic_marginals();
        return std::string("The majority of the posts express ") + topic_name(hi) +
               ", while a minority of them express " + topic_name(lo) + ".";
    };
    auto emotion_sentence = [&] {
        auto [hi, lo] = emotion_marginals();
        return std::string("The majority of the posts express ") + emotion_name(hi) +
               ", while a minority of them express " + emotion_name(lo) + ".";
    };

    std::string text;
    switch (kind) {
        case TemplateKind::default_prompt:
            text = std::string("The majority of the posts express ") + topic_name(tmax) + " with " +
                   emotion_name(emax) + " emotion, while a minority of them express " +
                   topic_name(tmin) + " with " + emotion_name(emin) + ".";
            break;
        case TemplateKind::short_prompt:
            text = std::string("Majority: ") + topic_name(tmax) + " - " + emotion_name(emax) +
                   ", minority: " + topic_name(tmin) + " - " + emotion_name(emin) + ".";
            break;
        case TemplateKind::topic_prompt:
            text = topic_sentence();
            break;
        case TemplateKind::emotion_prompt:
            text = emotion_sentence();
            break;
        case TemplateKind::tandem_prompt:
            text = topic_sentence() + " " + emotion_sentence();
            break;
    }
    return PseudoLabel{kind, std::move(text), summary.max_pair, summary.min_pair};
}

const char* const kInstructionPrompt =
    "Please classify each tweet into the topics and corresponding emotions for the following ten "
    "posts. The available topics are arts & culture, business & finance, careers, entertainment, "
    "fashion & beauty, food, gaming, hobbies & interests, movies & TV, music, news, outdoors, "
    "science, sports, technology, and travel. The emotions to consider are joy, sadness, anger, "
    "fear, trust, disgust, surprise, and anticipation. Please provide the classification for each "
    "post in the format 'topic - emotion'. Limit the response to less than 100 words. Following "
    "are the ten tweets numbered with '#'.";

std::string build_llm_prompt(const std::vector<std::string>& recent_tweets) {
    std::string prompt = std::string(kInstructionPrompt) + "\n";
    for (size_t i = 0; i < recent_tweets.size(); ++i)
        prompt += "#" + std::to_string(i + 1) + ": " + recent_tweets[i] + "\n";
    return prompt;
}

std::string LlmClient::complete(const std::string& prompt) {
    auto [base, path] = split_url(endpoint_);
    json req;
    req["prompt"] = prompt;
    std::string last_error;
    for (int attempt = 1; attempt <= 3; ++attempt) {
        ++network_calls_;
        httplib::Client client(base);
        client.set_read_timeout(30, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(path, headers, req.dump(), "application/json");
        if (!res) {
            last_error = "connection failed";
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        try {
            return json::parse(res->body).at("text").get<std::string>();
        } catch (const json::exception& e) {
            last_error = std::string("bad response: ") + e.what();
        }
    }
    throw DataError("llm endpoint " + endpoint_ + " failed after 3 attempts: " + last_error);
}

std::map<std::string, StringPairList> load_prefs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("prefs: cannot open " + path);
    std::map<std::string, StringPairList> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!j.contains("id") || !j.contains("pairs") || !j["pairs"].is_array())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected {id, pairs}");
        StringPairList pairs;
        for (const auto& p : j["pairs"]) {
            if (!p.is_array() || p.size() != 2)
                throw DataError(path + ":" + std::to_string(line_no) + ": pair must be [topic, emotion]");
            pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
        out[j["id"].get<std::string>()] = std::move(pairs);
    }
    return out;
}

void save_prefs(const std::string& path, const std::map<std::string, StringPairList>& prefs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("prefs: cannot open " + path + " for writing");
    for (const auto& [id, pairs] : prefs) {
        json j;
        j["id"] = id;
        json arr = json::array();
        for (const auto& [t, e] : pairs) arr.push_back(json::array({t, e}));
        j["pairs"] = std::move(arr);
        out << j.dump() << "\n";
    }
}

std::optional<PreferenceProfile> PreferenceOracle::extract_pairs(const UserRecord& user) {
    if (user.tweets.empty()) return std::nullopt;  // NoPosts: excluded from pre-training
    StringPairList raw;
    auto it = cache_.find(user.id);
    if (it != cache_.end()) {
        raw = it->second;
    } else {
        if (!client_)
            throw DataError("preferences: no cached pairs for user '" + user.id +
                            "' and no LLM endpoint configured");
        const size_t n = std::min<size_t>(kMaxPromptPosts, user.tweets.size());
        std::vector<std::string> recent(user.tweets.end() - n, user.tweets.end());
        const auto pairs = parse_llm_response(client_->complete(build_llm_prompt(recent)));
        for (auto [t, e] : pairs) raw.emplace_back(topic_name(t), emotion_name(e));
        cache_[user.id] = raw;
    }
    PreferenceProfile profile;
    profile.user_id = user.id;
    const size_t keep = std::min<size_t>(kMaxPromptPosts, raw.size());
    for (size_t i = raw.size() - keep; i < raw.size(); ++i)
        ++profile.counts[{parse_topic(raw[i].first), parse_emotion(raw[i].second)}];
    if (profile.counts.empty()) return std::nullopt;
    return profile;
}

}  // namespace sega
