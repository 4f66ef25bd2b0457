#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sega/errors.hpp"
#include "sega/preference.hpp"
#include "sega/rng.hpp"

using namespace sega;
namespace fs = std::filesystem;

namespace {

// the worked example response: ten classified posts
const char* kExampleResponse =
    "1: news - anger\n"
    "2: news - anger\n"
    "3: news - anger\n"
    "4: news - anger\n"
    "5: news - anger\n"
    "6: news - anticipation\n"
    "7: news - anticipation\n"
    "8: news - joy\n"
    "9: news - anger\n"
    "10: news - anger\n";

PreferenceProfile example_profile() {
    PreferenceProfile p;
    p.user_id = "u1";
    for (auto pair : parse_llm_response(kExampleResponse)) ++p.counts[pair];
    return p;
}

}  // namespace

TEST_CASE("parse_llm_response") {
    SUBCASE("single well-formed line") {
        auto pairs = parse_llm_response("1: news - anger");
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == PairKey{Topic::news, Emotion::anger});
    }
    SUBCASE("unknown categories map to others") {
        auto pairs = parse_llm_response("1: politics - rage");
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == PairKey{Topic::others, Emotion::others});
    }
    SUBCASE("garbage lines are skipped") {
        CHECK(parse_llm_response("garbage line").empty());
        CHECK(parse_llm_response("").empty());
        CHECK(parse_llm_response("no leading number - anger").empty());
    }
    SUBCASE("period separators, extra spacing, case folding") {
        auto pairs = parse_llm_response("  3.   Movies & TV  -  Surprise  ");
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == PairKey{Topic::movies_tv, Emotion::surprise});
    }
    SUBCASE("the worked ten-line example") {
        auto p = example_profile();
        CHECK(p.counts.size() == 3);
        CHECK(p.counts[{Topic::news, Emotion::anger}] == 7);
        CHECK(p.counts[{Topic::news, Emotion::anticipation}] == 2);
        CHECK(p.counts[{Topic::news, Emotion::joy}] == 1);
    }
}

TEST_CASE("category names round-trip through parsing for all 17 x 9 pairs") {
    for (int t = 0; t < kTopicCount; ++t)
        for (int e = 0; e < kEmotionCount; ++e) {
            CHECK(parse_topic(topic_name(static_cast<Topic>(t))) == static_cast<Topic>(t));
            CHECK(parse_emotion(emotion_name(static_cast<Emotion>(e))) == static_cast<Emotion>(e));
        }
    CHECK(parse_topic("NEWS") == Topic::news);
    CHECK(parse_emotion("Anger") == Emotion::anger);
}

TEST_CASE("preference_summary") {
    SUBCASE("worked example: max news-anger, min news-joy") {
        auto s = preference_summary(example_profile());
        CHECK(s.max_pair == PairKey{Topic::news, Emotion::anger});
        CHECK(s.min_pair == PairKey{Topic::news, Emotion::joy});
    }
    SUBCASE("single pair: max equals min") {
        PreferenceProfile p;
        p.user_id = "u";
        p.counts[{Topic::food, Emotion::joy}] = 10;
        auto s = preference_summary(p);
        CHECK(s.max_pair == s.min_pair);
        CHECK(s.max_pair == PairKey{Topic::food, Emotion::joy});
    }
    SUBCASE("ties break lexicographically and select both pairs once") {
        PreferenceProfile p;
        p.user_id = "u";
        p.counts[{Topic::food, Emotion::joy}] = 5;
        p.counts[{Topic::music, Emotion::joy}] = 5;
        auto s = preference_summary(p);
        CHECK(s.max_pair == PairKey{Topic::food, Emotion::joy});
        CHECK(s.min_pair == PairKey{Topic::music, Emotion::joy});
    }
    SUBCASE("empty profile is an error") {
        PreferenceProfile p;
        p.user_id = "empty";
        CHECK_THROWS_WITH_AS(preference_summary(p), doctest::Contains("empty"), DataError);
    }
    SUBCASE("max count is never below min count on random profiles") {
        Rng rng(42);
        for (int trial = 0; trial < 200; ++trial) {
            PreferenceProfile p;
            p.user_id = "r";
            const int n = 1 + static_cast<int>(rng.uniform_int(10));
            for (int i = 0; i < n; ++i) {
                PairKey k{static_cast<Topic>(rng.uniform_int(kTopicCount)),
                          static_cast<Emotion>(rng.uniform_int(kEmotionCount))};
                ++p.counts[k];
            }
            auto s = preference_summary(p);
            CHECK(p.counts.at(s.max_pair) >= p.counts.at(s.min_pair));
        }
    }
}

TEST_CASE("render_prompt templates") {
    auto profile = example_profile();

    SUBCASE("default renders the exact sentence") {
        CHECK(render_prompt(profile, TemplateKind::default_prompt).text ==
              "The majority of the posts express news with anger emotion, while a minority of "
              "them express news with joy.");
    }
    SUBCASE("short variant") {
        CHECK(render_prompt(profile, TemplateKind::short_prompt).text ==
              "Majority: news - anger, minority: news - joy.");
    }
    SUBCASE("topic variant uses independent topic marginals") {
        CHECK(render_prompt(profile, TemplateKind::topic_prompt).text ==
              "The majority of the posts express news, while a minority of them express news.");
    }
    SUBCASE("emotion variant uses independent emotion marginals") {
        CHECK(render_prompt(profile, TemplateKind::emotion_prompt).text ==
              "The majority of the posts express anger, while a minority of them express joy.");
    }
    SUBCASE("tandem variant joins the topic and emotion sentences") {
        CHECK(render_prompt(profile, TemplateKind::tandem_prompt).text ==
              "The majority of the posts express news, while a minority of them express news. "
              "The majority of the posts express anger, while a minority of them express joy.");
    }
    SUBCASE("others renders as the literal word") {
        PreferenceProfile p;
        p.user_id = "u";
        p.counts[{Topic::others, Emotion::others}] = 3;
        CHECK(render_prompt(p, TemplateKind::default_prompt).text ==
              "The majority of the posts express others with others emotion, while a minority of "
              "them express others with others.");
    }
    SUBCASE("distinct summaries render distinct default prompts") {
        Rng rng(7);
        std::map<std::string, std::pair<PairKey, PairKey>> seen;
        for (int trial = 0; trial < 300; ++trial) {
            PreferenceProfile p;
            p.user_id = "r";
            p.counts[{static_cast<Topic>(rng.uniform_int(kTopicCount)),
                      static_cast<Emotion>(rng.uniform_int(kEmotionCount))}] = 5;
            PairKey other{static_cast<Topic>(rng.uniform_int(kTopicCount)),
                          static_cast<Emotion>(rng.uniform_int(kEmotionCount))};
            p.counts[other] = std::max(1, static_cast<int>(p.counts[other]));
            auto s = preference_summary(p);
            auto text = render_prompt(p, TemplateKind::default_prompt).text;
            auto it = seen.find(text);
            if (it != seen.end()) {
                CHECK(it->second == std::make_pair(s.max_pair, s.min_pair));
            } else {
                seen.emplace(text, std::make_pair(s.max_pair, s.min_pair));
            }
        }
    }
}

TEST_CASE("prompt construction") {
    auto prompt = build_llm_prompt({"first tweet", "second tweet"});
    CHECK(prompt.find(kInstructionPrompt) == 0);
    CHECK(prompt.find("#1: first tweet\n") != std::string::npos);
    CHECK(prompt.find("#2: second tweet\n") != std::string::npos);
    // the instruction lists all 16 topics and 8 emotions
    CHECK(std::string(kInstructionPrompt).find("arts & culture") != std::string::npos);
    CHECK(std::string(kInstructionPrompt).find("anticipation") != std::string::npos);
    CHECK(std::string(kInstructionPrompt).find("'topic - emotion'") != std::string::npos);
}

TEST_CASE("prefs cache file round-trip and errors") {
    const auto path = (fs::temp_directory_path() / "sega_prefs_test.jsonl").string();
    std::map<std::string, StringPairList> prefs;
    prefs["u1"] = {{"news", "anger"}, {"news", "joy"}};
    prefs["u2"] = {{"food", "joy"}};
    save_prefs(path, prefs);
    CHECK(load_prefs(path) == prefs);

    std::ofstream out(path, std::ios::app);
    out << "{broken\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_prefs(path), doctest::Contains(":3"), DataError);
    fs::remove(path);
}

TEST_CASE("extract_pairs") {
    UserRecord user;
    user.id = "u1";
    for (int i = 0; i < 12; ++i) user.tweets.push_back("tweet " + std::to_string(i));

    SUBCASE("zero tweets signals no posts") {
        UserRecord empty;
        empty.id = "u0";
        PreferenceOracle oracle({});
        CHECK(!oracle.extract_pairs(empty).has_value());
    }
    SUBCASE("cache hit requires no client") {
        std::map<std::string, StringPairList> cache;
        cache["u1"] = {{"news", "anger"}, {"news", "anger"}, {"food", "joy"}};
        PreferenceOracle oracle(cache);
        auto p = oracle.extract_pairs(user);
        REQUIRE(p.has_value());
        CHECK(p->counts.at({Topic::news, Emotion::anger}) == 2);
        CHECK(p->counts.at({Topic::food, Emotion::joy}) == 1);
    }
    SUBCASE("at most 10 pairs are kept from the cache") {
        std::map<std::string, StringPairList> cache;
        StringPairList pairs;
        for (int i = 0; i < 14; ++i) pairs.emplace_back("news", i < 4 ? "joy" : "anger");
        cache["u1"] = pairs;
        PreferenceOracle oracle(cache);
        auto p = oracle.extract_pairs(user);
        REQUIRE(p.has_value());
        int total = 0;
        for (const auto& [k, c] : p->counts) total += c;
        CHECK(total == 10);
        CHECK(p->counts.at({Topic::news, Emotion::anger}) == 10);  // the last 10 entries
    }
    SUBCASE("uncached user without a client is an error") {
        PreferenceOracle oracle({});
        CHECK_THROWS_WITH_AS(oracle.extract_pairs(user), doctest::Contains("u1"), DataError);
    }
    SUBCASE("three tweets yield at most three pairs") {
        UserRecord few;
        few.id = "u3";
        few.tweets = {"a", "b", "c"};
        std::map<std::string, StringPairList> cache;
        cache["u3"] = {{"news", "anger"}, {"food", "joy"}, {"food", "joy"}};
        PreferenceOracle oracle(cache);
        auto p = oracle.extract_pairs(few);
        int total = 0;
        for (const auto& [k, c] : p->counts) total += c;
        CHECK(total <= 3);
    }
}

TEST_CASE("llm client extraction with caching") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("prompt").get<std::string>().find(kInstructionPrompt) == 0);
        CHECK(req.get_header_value("Authorization") == "Bearer test-key");
        nlohmann::json out;
        out["text"] = kExampleResponse;
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    LlmClient client("http://127.0.0.1:" + std::to_string(port) + "/v1/complete", "test-key");
    PreferenceOracle oracle({}, &client);

    UserRecord user;
    user.id = "u9";
    for (int i = 0; i < 10; ++i) user.tweets.push_back("angry news post " + std::to_string(i));

    auto p1 = oracle.extract_pairs(user);
    REQUIRE(p1.has_value());
    CHECK(p1->counts.at({Topic::news, Emotion::anger}) == 7);
    CHECK(client.network_calls() == 1);

    // second extraction is served from the cache: zero further network calls
    auto p2 = oracle.extract_pairs(user);
    REQUIRE(p2.has_value());
    CHECK(client.network_calls() == 1);
    CHECK(p1->counts == p2->counts);

    server.stop();
    th.join();
}
