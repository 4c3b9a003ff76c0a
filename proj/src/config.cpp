#include "cove/config.hpp"

#include <cstdio>

#include "cove/errors.hpp"
#include "cove/io.hpp"
#include "cove/rng.hpp"

namespace cove {

const char* to_string(TrainMode mode) { return mode == TrainMode::lora ? "lora" : "full"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "full") return TrainMode::full;
    if (s == "lora") return TrainMode::lora;
    throw UsageError("unknown train mode: " + s);
}

const char* to_string(LossScope scope) {
    return scope == LossScope::output_only ? "output_only" : "all";
}

LossScope loss_scope_from_string(const std::string& s) {
    if (s == "all") return LossScope::all;
    if (s == "output_only") return LossScope::output_only;
    throw UsageError("unknown loss scope: " + s);
}

nlohmann::json to_json(const ModelConfig& cfg) {
    return {
        {"layers", cfg.layers},
        {"heads", cfg.heads},
        {"dim", cfg.dim},
        {"ff_dim", cfg.ff_dim},
        {"max_seq_len", cfg.max_seq_len},
        {"base_vocab", cfg.base_vocab},
        {"item_count", cfg.item_count},
        {"rate", cfg.rate},
        {"k", cfg.k},
        {"tied_item_head", cfg.tied_item_head},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.layers = j.value("layers", cfg.layers);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.ff_dim = j.value("ff_dim", cfg.ff_dim);
    cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
    cfg.base_vocab = j.value("base_vocab", cfg.base_vocab);
    cfg.item_count = j.value("item_count", cfg.item_count);
    cfg.rate = j.value("rate", cfg.rate);
    cfg.k = j.value("k", cfg.k);
    cfg.tied_item_head = j.value("tied_item_head", cfg.tied_item_head);
    return cfg;
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {
        {"learning_rate", cfg.learning_rate},
        {"batch_size", cfg.batch_size},
        {"max_epochs", cfg.max_epochs},
        {"max_steps", cfg.max_steps},
        {"mode", to_string(cfg.mode)},
        {"lora_rank", cfg.lora_rank},
        {"lora_alpha", cfg.lora_alpha},
        {"freeze_item_table", cfg.freeze_item_table},
        {"include_titles", cfg.include_titles},
        {"loss_scope", to_string(cfg.loss_scope)},
        {"seed", cfg.seed},
        {"adam_beta1", cfg.adam_beta1},
        {"adam_beta2", cfg.adam_beta2},
        {"adam_eps", cfg.adam_eps},
        {"grad_clip", cfg.grad_clip},
        {"init_checkpoint", cfg.init_checkpoint},
        {"log_every", cfg.log_every},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.max_steps = j.value("max_steps", cfg.max_steps);
    if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
    cfg.lora_rank = j.value("lora_rank", cfg.lora_rank);
    cfg.lora_alpha = j.value("lora_alpha", cfg.lora_alpha);
    cfg.freeze_item_table = j.value("freeze_item_table", cfg.freeze_item_table);
    cfg.include_titles = j.value("include_titles", cfg.include_titles);
    if (j.contains("loss_scope"))
        cfg.loss_scope = loss_scope_from_string(j.at("loss_scope").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.init_checkpoint = j.value("init_checkpoint", cfg.init_checkpoint);
    cfg.log_every = j.value("log_every", cfg.log_every);
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["data"] = {
        {"catalog", cfg.data.catalog},
        {"train_split", cfg.data.train_split},
        {"val_split", cfg.data.val_split},
        {"test_split", cfg.data.test_split},
        {"max_history", cfg.data.max_history},
        {"instruction", cfg.data.instruction},
        {"include_titles", cfg.data.include_titles},
        {"val_fraction", cfg.data.val_fraction},
    };
    j["model"] = to_json(cfg.model);
    j["train"] = to_json(cfg.train);
    j["eval_ks"] = cfg.eval_ks;
    j["out_dir"] = cfg.out_dir;
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfg.data.catalog = d.value("catalog", cfg.data.catalog);
        cfg.data.train_split = d.value("train_split", cfg.data.train_split);
        cfg.data.val_split = d.value("val_split", cfg.data.val_split);
        cfg.data.test_split = d.value("test_split", cfg.data.test_split);
        cfg.data.max_history = d.value("max_history", cfg.data.max_history);
        cfg.data.instruction = d.value("instruction", cfg.data.instruction);
        cfg.data.include_titles = d.value("include_titles", cfg.data.include_titles);
        cfg.data.val_fraction = d.value("val_fraction", cfg.data.val_fraction);
    }
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("eval_ks")) cfg.eval_ks = j.at("eval_ks").get<std::vector<int32_t>>();
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("override must look like path.to.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw UsageError("empty key in override path: " + assignment);
        if (dot == std::string::npos) {
            auto parsed = nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
            // unparseable values (bare words) are taken as strings
            (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text(path));
    } catch (const std::exception& e) {
        throw UsageError("cannot parse config " + path.string() + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return run_config_from_json(j);
}

RunConfig default_run_config_with(std::span<const std::string> overrides) {
    nlohmann::json j = to_json(RunConfig{});
    for (const auto& o : overrides) apply_override(j, o);
    return run_config_from_json(j);
}

std::string fingerprint(const RunConfig& cfg) {
    const uint64_t h = rng::fnv1a64(to_json(cfg).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cove
