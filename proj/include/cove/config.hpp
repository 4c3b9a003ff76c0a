#pragma once
// Run configuration: one JSON file, dotted-path flag overrides, and a
// fingerprint that every written artifact embeds.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cove/model.hpp"
#include "cove/training.hpp"

namespace cove {

struct DataConfig {
    std::string catalog;
    std::string train_split;
    std::string val_split;
    std::string test_split;
    int32_t max_history = 20;
    std::string instruction =
        "Given the list of items the user has interacted with before, recommend the next item. "
        "History:";
    bool include_titles = true;
    double val_fraction = 0.05;
};

struct RunConfig {
    uint64_t seed = 42;
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    std::vector<int32_t> eval_ks = {5, 10, 20};
    std::string out_dir = "out";
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Canonical form: every field materialized, keys sorted by nlohmann.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Overrides use dotted paths, e.g. "train.learning_rate=0.001".
void apply_override(nlohmann::json& j, const std::string& assignment);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides);
RunConfig default_run_config_with(std::span<const std::string> overrides);

// FNV-1a over the canonical dump, as hex.
std::string fingerprint(const RunConfig& cfg);

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);
const char* to_string(LossScope scope);
LossScope loss_scope_from_string(const std::string& s);

}  // namespace cove
