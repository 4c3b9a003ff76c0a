#pragma once
// Interaction-log ingestion, leave-last-out splitting, and the synthetic
// Markov corpus used for acceptance testing (items grouped into categories,
// category-concentrated transitions, titles drawn from per-category word
// pools so text carries category signal).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cove/catalog.hpp"
#include "cove/mat.hpp"
#include "cove/prompt.hpp"

namespace cove {

struct InteractionSequence {
    std::string user_id;
    std::vector<int32_t> items;  // chronological item_index values
};

struct DatasetSplit {
    std::vector<PromptSample> train;
    std::vector<PromptSample> validation;
    std::vector<PromptSample> test;
};

struct LoadResult {
    ItemCatalog catalog;
    std::vector<InteractionSequence> sequences;
    std::size_t dropped_short = 0;  // sequences of length < 2
};

// JSON-lines with fields user_id, external_item_id, title and an optional
// timestamp (file order is used when absent). Catalog indexed by first
// appearance; duplicate external ids collapse to one item.
LoadResult load_interactions(const std::filesystem::path& path);

void save_interactions(const std::filesystem::path& path, const ItemCatalog& catalog,
                       const std::vector<InteractionSequence>& sequences);

struct SplitOptions {
    int32_t max_history = 20;       // H
    std::string instruction;
    bool include_titles = true;
    double val_fraction = 0.05;     // carved from training, by sequence
    uint64_t seed = 42;
};

// Per sequence: the final item is the test target (history = preceding <= H
// items); every earlier (history, next) pair becomes a training sample.
DatasetSplit leave_last_out_split(const std::vector<InteractionSequence>& sequences,
                                  const ItemCatalog& catalog, const SplitOptions& options);

struct SyntheticSpec {
    int32_t n_items = 200;
    int32_t n_categories = 10;
    double alpha = 0.1;             // transition concentration (Dirichlet)
    int32_t title_words = 2;        // words per item title
    int32_t words_per_category = 8; // category word-pool size
    int32_t min_len = 8;
    int32_t max_len = 20;
    int32_t n_sequences = 5000;
    uint64_t seed = 1;

    void validate() const;
};

struct SyntheticData {
    ItemCatalog catalog;
    std::vector<InteractionSequence> sequences;
    Matrix<double> transitions;  // n_items x n_items, rows are distributions
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

void save_transitions(const std::filesystem::path& path, const Matrix<double>& transitions);
Matrix<double> load_transitions(const std::filesystem::path& path);

// Ranks items by true next-step probability from the last history item.
std::vector<int32_t> oracle_ranking(const Matrix<double>& transitions, int32_t last_item);

// Fixed ranking by training-target frequency (ties and unseen items by
// ascending index).
std::vector<int32_t> popularity_baseline(const std::vector<PromptSample>& train,
                                         int32_t item_count);

// Split manifests: JSON-lines of PromptSample records.
void save_samples(const std::filesystem::path& path, const std::vector<PromptSample>& samples);
std::vector<PromptSample> load_samples(const std::filesystem::path& path);

}  // namespace cove
