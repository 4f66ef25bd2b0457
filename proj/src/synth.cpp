#include "sega/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "sega/errors.hpp"
#include "sega/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace sega {

namespace {

const char* kNoiseWords[] = {"coffee",  "rain",    "monday", "library", "sunset", "bus",
                             "lunch",   "weekend", "city",   "garden",  "quiet",  "walk",
                             "morning", "river",   "street", "window"};

int sample_count(Rng& rng, double mean) {
    const int base = static_cast<int>(mean);
    const double frac = mean - base;
    return base + (rng.uniform() < frac ? 1 : 0);
}

const PairWeight& draw_pair(Rng& rng, const std::vector<PairWeight>& signal) {
    double total = 0.0;
    for (const auto& p : signal) total += p.weight;
    double r = rng.uniform() * total;
    for (const auto& p : signal) {
        r -= p.weight;
        if (r <= 0.0) return p;
    }
    return signal.back();
}

std::string pair_tweet(Rng& rng, const PairWeight& p) {
    // a handful of shared templates per pair keeps same-preference users
    // textually close without making tweets literally constant
    switch (rng.uniform_int(3)) {
        case 0: return "so much " + p.topic + " today, feeling " + p.emotion + " about it all";
        case 1: return "can't stop thinking about " + p.topic + ", pure " + p.emotion;
        default: return p.topic + " again and all I feel is " + p.emotion;
    }
}

std::string noise_tweet(Rng& rng, const std::string& id, int k) {
    std::string w1 = kNoiseWords[rng.uniform_int(std::size(kNoiseWords))];
    std::string w2 = kNoiseWords[rng.uniform_int(std::size(kNoiseWords))];
    return "musing " + id + "-" + std::to_string(k) + " about " + w1 + " and " + w2;
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return s;
}

float fclamp(double v, double lo, double hi) {
    return static_cast<float>(std::min(std::max(v, lo), hi));
}

void sample_user_meta(Rng& rng, UserClass effective, UserRecord& u) {
    if (effective == UserClass::bot) {
        u.indicators = {rng.uniform() < 0.35, rng.uniform() < 0.03, rng.uniform() < 0.01};
        u.numericals[0] = static_cast<float>(rng.uniform_range(1.55e9, 1.68e9));
        u.numericals[1] = fclamp(rng.normal() * 4.0 + 17.0, 3.0, 40.0);
        u.numericals[2] = static_cast<float>(std::exp(rng.normal() * 1.1 + 2.5));
        u.numericals[3] = static_cast<float>(std::exp(rng.normal() * 0.8 + 6.5));
        u.numericals[4] = static_cast<float>(std::exp(rng.normal() * 1.0 + 7.0));
    } else {
        u.indicators = {rng.uniform() < 0.9, rng.uniform() < 0.1, rng.uniform() < 0.08};
        u.numericals[0] = static_cast<float>(rng.uniform_range(1.2e9, 1.55e9));
        u.numericals[1] = fclamp(rng.normal() * 3.0 + 11.0, 3.0, 40.0);
        u.numericals[2] = static_cast<float>(std::exp(rng.normal() * 1.2 + 5.0));
        u.numericals[3] = static_cast<float>(std::exp(rng.normal() * 1.0 + 4.8));
        u.numericals[4] = static_cast<float>(std::exp(rng.normal() * 1.3 + 5.5));
    }
}

}  // namespace

SynthConfig synth_default_config() {
    SynthConfig cfg;
    cfg.normal_signal = {{"food", "joy", 0.4},
                         {"music", "joy", 0.3},
                         {"travel", "joy", 0.15},
                         {"sports", "anticipation", 0.15}};
    cfg.bot_signal = {{"business & finance", "trust", 0.45},
                      {"technology", "anticipation", 0.35},
                      {"news", "fear", 0.2}};
    cfg.troll_signal = {{"food", "joy", 0.3},
                        {"music", "joy", 0.15},
                        {"news", "anger", 0.35},
                        {"news", "disgust", 0.2}};
    return cfg;
}

SynthConfig synth_list_signal_config() {
    SynthConfig cfg = synth_default_config();
    cfg.seed = 7;
    // user-level text is nearly class-neutral; flavored lists carry the signal
    cfg.troll_text_mimicry = 0.85;
    cfg.intra_class_bias = 0.25;
    cfg.list_class_bias = 0.92;
    cfg.memberships_per_list = 8.0;
    cfg.followed_per_list = 5.0;
    cfg.list_tweets = 12;
    return cfg;
}

void synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    const int n_users = cfg.normal_users + cfg.bot_users + cfg.troll_users;
    if (n_users <= 0) throw DataError("synth: at least one user is required");
    if (cfg.normal_users < 0 || cfg.bot_users < 0 || cfg.troll_users < 0 || cfg.list_count < 0)
        throw DataError("synth: counts must be non-negative");
    if (cfg.train_frac < 0 || cfg.valid_frac < 0 || cfg.train_frac + cfg.valid_frac > 1.0)
        throw DataError("synth: split fractions must be non-negative and sum to at most 1");
    for (const auto* sig : {&cfg.normal_signal, &cfg.bot_signal, &cfg.troll_signal})
        if (sig->empty()) throw DataError("synth: every class needs a preference signal");

    Rng rng(stream_seed(cfg.seed, "synth"));

    // class assignment shuffled over sequential ids
    std::vector<UserClass> cls;
    cls.insert(cls.end(), cfg.normal_users, UserClass::normal);
    cls.insert(cls.end(), cfg.bot_users, UserClass::bot);
    cls.insert(cls.end(), cfg.troll_users, UserClass::troll);
    for (int i = n_users - 1; i > 0; --i)
        std::swap(cls[i], cls[rng.uniform_int(static_cast<uint64_t>(i) + 1)]);

    const int uw = std::max(4, static_cast<int>(std::to_string(n_users).size()) + 1);
    HeteroGraph g;
    g.users.resize(n_users);
    std::vector<std::vector<std::pair<std::string, std::string>>> planted(n_users);

    const auto& signal_for = [&](UserClass c) -> const std::vector<PairWeight>& {
        switch (c) {
            case UserClass::bot: return cfg.bot_signal;
            case UserClass::troll: return cfg.troll_signal;
            default: return cfg.normal_signal;
        }
    };

    for (int i = 0; i < n_users; ++i) {
        auto& u = g.users[i];
        u.id = "u" + zero_pad(i + 1, uw);
        u.label = cls[i];
        // trolls mimic normal metadata
        sample_user_meta(rng, cls[i] == UserClass::troll ? UserClass::normal : cls[i], u);
        u.description = "account " + u.id + " sharing daily updates";
        std::vector<std::pair<std::string, std::string>> pairs;
        for (int k = 0; k < cfg.noise_tweets; ++k) {
            u.tweets.push_back(noise_tweet(rng, u.id, k));
            pairs.emplace_back("others", "others");
        }
        for (int k = 0; k < cfg.signal_tweets; ++k) {
            const auto& sig = (cls[i] == UserClass::troll && rng.uniform() < cfg.troll_text_mimicry)
                                  ? cfg.normal_signal
                                  : signal_for(cls[i]);
            const auto& p = draw_pair(rng, sig);
            u.tweets.push_back(pair_tweet(rng, p));
            pairs.emplace_back(p.topic, p.emotion);
        }
        // planted preference pairs for the 10 most recent tweets
        const size_t keep = std::min<size_t>(10, pairs.size());
        planted[i].assign(pairs.end() - keep, pairs.end());
    }

    // users of each class, for biased edge targeting
    std::array<std::vector<int>, 3> by_class;
    for (int i = 0; i < n_users; ++i) by_class[static_cast<int>(cls[i])].push_back(i);

    auto pick_user = [&](std::optional<UserClass> prefer, double bias) -> int {
        if (prefer && !by_class[static_cast<int>(*prefer)].empty() && rng.uniform() < bias) {
            const auto& pool = by_class[static_cast<int>(*prefer)];
            return pool[rng.uniform_int(pool.size())];
        }
        return static_cast<int>(rng.uniform_int(n_users));
    };

    std::array<std::set<std::pair<std::string, std::string>>, kRelationCount> edge_sets;
    auto add_edge = [&](Relation r, const std::string& s, const std::string& d) {
        edge_sets[static_cast<int>(r)].emplace(s, d);
    };

    for (int i = 0; i < n_users; ++i) {
        const bool anomalous = cls[i] != UserClass::normal;
        const int nf = sample_count(rng, cfg.following_per_user);
        for (int k = 0; k < nf; ++k) {
            int j = pick_user(anomalous ? std::optional<UserClass>(cls[i]) : std::nullopt,
                              cfg.intra_class_bias);
            if (j != i) add_edge(Relation::following, g.users[i].id, g.users[j].id);
        }
        const int nr = sample_count(rng, cfg.followers_per_user);
        for (int k = 0; k < nr; ++k) {
            int j = pick_user(anomalous ? std::optional<UserClass>(cls[i]) : std::nullopt,
                              cfg.intra_class_bias);
            if (j != i) add_edge(Relation::followers, g.users[i].id, g.users[j].id);
        }
    }

    const int lw = std::max(3, static_cast<int>(std::to_string(std::max(cfg.list_count, 1)).size()));
    g.lists.resize(cfg.list_count);
    for (int i = 0; i < cfg.list_count; ++i) {
        auto& l = g.lists[i];
        l.id = "l" + zero_pad(i + 1, lw);
        const double r = rng.uniform();
        const UserClass flavor =
            r < 0.5 ? UserClass::normal : (r < 0.75 ? UserClass::bot : UserClass::troll);
        l.indicators = {rng.uniform() < 0.15};
        l.numericals[0] = static_cast<float>(rng.uniform_range(1.3e9, 1.6e9));
        l.numericals[1] = fclamp(rng.normal() * 4.0 + 14.0, 3.0, 40.0);
        l.numericals[2] = static_cast<float>(std::exp(rng.normal() + 3.0));
        l.numericals[3] = static_cast<float>(std::exp(rng.normal() + 2.5));
        l.description = "curated list " + l.id;
        for (int k = 0; k < cfg.list_tweets; ++k)
            l.tweets.push_back(pair_tweet(rng, draw_pair(rng, signal_for(flavor))));

        const int owners = sample_count(rng, cfg.owners_per_list);
        for (int k = 0; k < owners; ++k)
            add_edge(Relation::own, g.users[pick_user(flavor, cfg.list_class_bias)].id, l.id);
        const int members = sample_count(rng, cfg.memberships_per_list);
        for (int k = 0; k < members; ++k)
            add_edge(Relation::membership, l.id, g.users[pick_user(flavor, cfg.list_class_bias)].id);
        const int followers = sample_count(rng, cfg.followed_per_list);
        for (int k = 0; k < followers; ++k)
            add_edge(Relation::followed, g.users[pick_user(flavor, cfg.list_class_bias)].id, l.id);
    }

    for (int r = 0; r < kRelationCount; ++r)
        for (const auto& [s, d] : edge_sets[r])
            g.edges[r].push_back(RawEdge{s, d});

    // stratified splits
    for (int c = 0; c < 3; ++c) {
        auto pool = by_class[c];
        for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
            std::swap(pool[i], pool[rng.uniform_int(static_cast<uint64_t>(i) + 1)]);
        const int nt = static_cast<int>(std::round(cfg.train_frac * pool.size()));
        const int nv = static_cast<int>(std::round(cfg.valid_frac * pool.size()));
        for (int i = 0; i < static_cast<int>(pool.size()); ++i)
            g.users[pool[i]].split = i < nt ? Split::train : (i < nt + nv ? Split::valid : Split::test);
    }

    auto violations = validate(g);
    if (!violations.empty())
        throw DataError("synth: generated graph failed validation: " + violations.front());
    save_dataset(g, out_dir);

    // planted preference pairs, in the canonical (id-sorted) user order
    std::vector<int> order(n_users);
    for (int i = 0; i < n_users; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return g.users[a].id < g.users[b].id; });
    std::ofstream out(fs::path(out_dir) / "prefs.jsonl");
    for (int i : order) {
        json j;
        j["id"] = g.users[i].id;
        json arr = json::array();
        for (const auto& [t, e] : planted[i]) arr.push_back(json::array({t, e}));
        j["pairs"] = std::move(arr);
        out << j.dump() << "\n";
    }
}

}  // namespace sega
