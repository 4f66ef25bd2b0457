#pragma once

// Synthetic desk-scale benchmark generator. Trolls draw indicator/numerical
// metadata from the normal-user distributions (mimicry) but their tweets come
// from the troll preference signal; bots differ in both. The generator also
// writes prefs.jsonl with the planted topic-emotion pair of each of the 10
// most recent tweets, so the LLM path is optional for synthetic data.

#include <cstdint>
#include <string>
#include <vector>

#include "sega/graph.hpp"

namespace sega {

struct PairWeight {
    std::string topic;
    std::string emotion;
    double weight = 1.0;
};

struct SynthConfig {
    uint64_t seed = 7;
    int normal_users = 250;
    int bot_users = 30;
    int troll_users = 20;
    int list_count = 40;

    // mean out-degree per relation
    double following_per_user = 5.0;
    double followers_per_user = 2.5;
    double memberships_per_list = 6.0;
    double followed_per_list = 3.0;
    double owners_per_list = 1.0;

    // probability an anomalous user's user-user edge stays within its class
    double intra_class_bias = 0.6;
    // probability a list's membership/followed/own edge targets its own class
    double list_class_bias = 0.75;

    int signal_tweets = 10;  // drawn from the class preference signal, most recent
    int noise_tweets = 6;    // unique filler text, oldest
    int list_tweets = 8;

    // fraction of troll signal tweets drawn from the normal signal instead
    double troll_text_mimicry = 0.55;

    double train_frac = 0.3;
    double valid_frac = 0.2;

    // class-conditional preference signal
    std::vector<PairWeight> normal_signal;
    std::vector<PairWeight> bot_signal;
    std::vector<PairWeight> troll_signal;
};

// Default desk configuration (class skew 250/30/20 over 40 lists).
SynthConfig synth_default_config();

// Variant whose troll/bot signal is mostly routed through list membership:
// user tweets are nearly class-neutral while flavored lists carry the signal.
SynthConfig synth_list_signal_config();

// Writes nodes.jsonl, tweets.jsonl, edges.csv, labels.csv, splits.csv and
// prefs.jsonl into `out_dir`. Deterministic for a fixed seed.
void synth_generate(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace sega
