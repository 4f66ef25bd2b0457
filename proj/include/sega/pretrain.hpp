#pragma once

// Preference-aware self-contrastive pre-training: anchors are users with a
// pseudo-label, positives are their projected pseudo-label embeddings,
// negatives are sampled from the pool of other pseudo-labels. A multi-label
// classification objective over topic-emotion pairs is available as an
// alternative pre-training task.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sega/adamw.hpp"
#include "sega/embedding.hpp"
#include "sega/model.hpp"
#include "sega/preference.hpp"

namespace sega {

enum class PretrainObjective { contrastive, multilabel };

const char* objective_name(PretrainObjective o);
std::optional<PretrainObjective> parse_objective(const std::string& name);

struct PretrainConfig {
    double temperature = 0.1;  // tau
    int negatives = 100;       // sampled per anchor per epoch
    int epochs = 100;
    int batch_size = 2048;
    double lr = 0.001;
    TemplateKind template_kind = TemplateKind::default_prompt;
    PretrainObjective objective = PretrainObjective::contrastive;
    uint64_t seed = 7;
};

// Users eligible for pre-training (non-empty preference profile), their
// profiles, rendered pseudo-labels, and the deduplicated label pool.
struct AnchorSet {
    std::vector<int> users;       // indices into graph.users, canonical order
    std::vector<PreferenceProfile> profiles;
    std::vector<int> label_index;             // per anchor: index into unique_labels
    std::vector<std::string> unique_labels;   // distinct rendered pseudo-label strings
};

AnchorSet build_anchor_set(const HeteroGraph& g,
                           const std::map<std::string, StringPairList>& prefs, TemplateKind kind);

// Uniform sample without replacement from pool entries whose rendered string
// differs from the anchor's. Returns fewer than k when the pool is small and
// an empty vector when no eligible entry exists.
std::vector<int> sample_negatives(int anchor_label, int pool_size, int k, Rng& rng);

// 153-wide multi-hot target for the multi-label objective
std::vector<float> multilabel_targets(const PreferenceProfile& profile);

struct PretrainResult {
    std::vector<double> epoch_losses;  // summed over batches
    int anchors = 0;
    int skipped_anchors = 0;  // anchor-epochs skipped for lack of eligible negatives
};

// Optimizer state plus epoch cursor, so a run can resume from a checkpoint.
struct PretrainState {
    AdamW optimizer;
    int next_epoch = 0;

    explicit PretrainState(AdamWConfig cfg = {}) : optimizer(cfg) {}
};

PretrainResult pretrain(Model& model, const GraphInputsT<float>& inputs, const AnchorSet& anchors,
                        EmbeddingProvider& prompt_provider, const PretrainConfig& cfg,
                        PretrainState& state);

// Checkpoint carrying model parameters, optimizer moments, and the epoch
// cursor (extra entries are ignored by plain parameter loads).
void save_train_checkpoint(const std::string& path, const Model& model,
                           const PretrainState* state);
void load_train_checkpoint(const std::string& path, Model& model, PretrainState* state);

// parameters optimized during pre-training (detector head excluded)
std::vector<Tensor*> pretrain_param_set(Model& model, PretrainObjective objective);

void write_loss_log(const std::string& path, PretrainObjective objective,
                    const std::vector<double>& losses);

}  // namespace sega
