// cove: train and evaluate the compressed-vocabulary recommender from the
// command line. Exit codes: 0 ok, 1 internal failure, 2 bad input.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cove/config.hpp"
#include "cove/datasets.hpp"
#include "cove/errors.hpp"
#include "cove/evaluate.hpp"
#include "cove/io.hpp"
#include "cove/kernels.hpp"
#include "cove/training.hpp"

namespace fs = std::filesystem;
using namespace cove;

namespace {

struct PreparedRun {
    ItemCatalog catalog;
    DatasetSplit split;
    std::string instruction;
};

PreparedRun load_prepared(const RunConfig& cfg) {
    PreparedRun run;
    if (cfg.data.catalog.empty() || cfg.data.train_split.empty() || cfg.data.test_split.empty())
        throw UsageError("config must set data.catalog, data.train_split and data.test_split");
    run.catalog = ItemCatalog::load_jsonl(cfg.data.catalog);
    run.split.train = load_samples(cfg.data.train_split);
    if (!cfg.data.val_split.empty()) run.split.validation = load_samples(cfg.data.val_split);
    run.split.test = load_samples(cfg.data.test_split);
    if (run.split.train.empty()) throw UsageError("training split is empty");
    run.instruction = run.split.train.front().instruction;
    return run;
}

struct BuiltVocab {
    BaseTokenizer tok;
    ExpandedVocabulary vocab;
};

BuiltVocab build_vocab(const ItemCatalog& catalog, const std::string& instruction) {
    BuiltVocab b{build_tokenizer_for(catalog, instruction), {}};
    b.vocab = expand_vocabulary(b.tok, catalog);
    return b;
}

void write_metrics(const fs::path& dir, const std::string& stem, const MetricReport& report,
                   const std::string& fp, uint64_t seed, bool with_throughput = false) {
    fs::create_directories(dir);
    auto j = nlohmann::json::parse(report.to_json_string(with_throughput));
    j["fingerprint"] = fp;
    j["seed"] = seed;
    io::write_text(dir / (stem + ".json"), j.dump(2) + "\n");
    io::write_text(dir / (stem + ".csv"),
                   "# fingerprint=" + fp + " seed=" + std::to_string(seed) + "\n" +
                       report.to_csv_string());
}

TrainResult train_leg(const RunConfig& cfg, const PreparedRun& run, const fs::path& out_dir) {
    const BuiltVocab bv = build_vocab(run.catalog, run.instruction);
    ModelConfig model = cfg.model;
    model.base_vocab = bv.vocab.base_size;
    model.item_count = bv.vocab.item_count;

    TrainInputs inputs;
    inputs.train = encode_samples(bv.vocab, bv.tok, run.split.train, cfg.train.loss_scope,
                                  cfg.train.include_titles);
    inputs.validation = encode_samples(bv.vocab, bv.tok, run.split.validation,
                                       cfg.train.loss_scope, cfg.train.include_titles);
    inputs.model = model;
    inputs.config = cfg.train;
    inputs.out_dir = out_dir / "checkpoint";
    inputs.tokenizer = &bv.tok;
    inputs.fingerprint = fingerprint(cfg);
    inputs.instruction = run.instruction;
    return train(inputs);
}

MetricReport eval_checkpoint(const Checkpoint& ck, const std::vector<PromptSample>& test,
                             std::span<const int32_t> ks) {
    if (test.empty()) throw UsageError("evaluation split is empty");
    const ExpandedVocabulary vocab{ck.weights.config.base_vocab, ck.weights.config.item_count};
    std::vector<PromptSample> prompts = test;
    for (auto& s : prompts) s.include_titles = ck.include_titles;
    const auto eval_set = encode_eval_set(vocab, ck.tokenizer, prompts);
    const LoraSet<float>* lora = ck.lora.empty() ? nullptr : &ck.lora;
    return evaluate(ck.weights, lora, eval_set, ks);
}

int cmd_prepare(const std::string& input, const std::string& out, int32_t max_history,
                const std::string& instruction, bool no_titles, double val_fraction,
                uint64_t seed) {
    if (!fs::exists(input)) throw UsageError("input file does not exist: " + input);
    const LoadResult loaded = load_interactions(input);  // validates before any output
    SplitOptions options;
    options.max_history = max_history;
    options.instruction = instruction;
    options.include_titles = !no_titles;
    options.val_fraction = val_fraction;
    options.seed = seed;
    const DatasetSplit split = leave_last_out_split(loaded.sequences, loaded.catalog, options);

    fs::create_directories(out);
    loaded.catalog.save_jsonl(fs::path(out) / "catalog.jsonl");
    save_samples(fs::path(out) / "train.jsonl", split.train);
    save_samples(fs::path(out) / "val.jsonl", split.validation);
    save_samples(fs::path(out) / "test.jsonl", split.test);
    std::printf("prepared %zu train / %zu val / %zu test samples over %d items\n",
                split.train.size(), split.validation.size(), split.test.size(),
                loaded.catalog.count());
    return 0;
}

int cmd_synth(const std::string& out, const SyntheticSpec& spec) {
    const SyntheticData data = generate_synthetic(spec);
    fs::create_directories(out);
    save_interactions(fs::path(out) / "interactions.jsonl", data.catalog, data.sequences);
    save_transitions(fs::path(out) / "transitions.json", data.transitions);
    std::printf("generated %zu sequences over %d items (%d categories)\n",
                data.sequences.size(), spec.n_items, spec.n_categories);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const PreparedRun run = load_prepared(cfg);
    const fs::path out_dir = cfg.out_dir;
    const TrainResult result = train_leg(cfg, run, out_dir);
    std::printf("trained %lld steps; best epoch %d", static_cast<long long>(result.steps_run),
                result.best_epoch);
    if (result.best_val_loss >= 0.0) std::printf(" (val loss %.6f)", result.best_val_loss);
    std::printf("\ncheckpoint: %s\n", (out_dir / "checkpoint").string().c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& split_path,
             const std::string& config_path, const std::vector<std::string>& overrides,
             std::vector<int32_t> ks, const std::string& out) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!config_path.empty()) {
        const RunConfig cfg = load_run_config(config_path, overrides);
        if (fingerprint(cfg) != ck.fingerprint)
            throw UsageError("config fingerprint " + fingerprint(cfg) +
                             " does not match checkpoint fingerprint " + ck.fingerprint);
    }
    const auto test = load_samples(split_path);
    if (ks.empty()) ks = {5, 10, 20};
    MetricReport report = eval_checkpoint(ck, test, ks);
    report.mode = "eval";
    write_metrics(out, "metrics", report, ck.fingerprint, ck.seed);
    std::printf("%s", report.to_json_string(false).c_str());
    return 0;
}

int cmd_sweep(const RunConfig& base_cfg, const std::vector<double>& rates, bool parallel,
              const std::string& out) {
    if (rates.empty()) throw UsageError("sweep needs at least one rate");
    for (const double r : rates)
        if (r < 1.0) throw UsageError("compression rates must be >= 1");
    const PreparedRun run = load_prepared(base_cfg);
    const fs::path out_dir = out;
    fs::create_directories(out_dir);

    struct Leg {
        double rate;
        MetricReport report;
        bool ok = false;
        std::string error;
    };
    std::vector<Leg> legs(rates.size());
    for (std::size_t i = 0; i < rates.size(); ++i) legs[i].rate = rates[i];

    auto run_leg = [&](Leg& leg) {
        try {
            RunConfig cfg = base_cfg;
            cfg.model.rate = leg.rate;
            char tag[32];
            std::snprintf(tag, sizeof(tag), "rate-%g", leg.rate);
            const fs::path leg_dir = out_dir / tag;
            const TrainResult result = train_leg(cfg, run, leg_dir);
            const Checkpoint ck = load_checkpoint(leg_dir / "checkpoint");
            leg.report = eval_checkpoint(ck, run.split.test, cfg.eval_ks);
            leg.report.mode = tag;
            write_metrics(leg_dir, "metrics", leg.report, fingerprint(cfg), cfg.seed);
            leg.ok = true;
        } catch (const std::exception& e) {
            leg.error = e.what();
        }
    };

    if (parallel) {
        std::vector<std::thread> threads;
        threads.reserve(legs.size());
        for (auto& leg : legs) threads.emplace_back(run_leg, std::ref(leg));
        for (auto& t : threads) t.join();
    } else {
        for (auto& leg : legs) {
            run_leg(leg);
            if (!leg.ok) break;  // abort remaining legs, keep finished results
        }
    }

    std::string csv = "# fingerprint=" + fingerprint(base_cfg) +
                      " seed=" + std::to_string(base_cfg.seed) + "\nrate";
    for (const int32_t k : base_cfg.eval_ks)
        csv += ",ng@" + std::to_string(k) + ",hr@" + std::to_string(k);
    csv += "\n";
    for (const auto& leg : legs) {
        if (!leg.ok) continue;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g", leg.rate);
        csv += buf;
        for (const int32_t k : base_cfg.eval_ks) {
            std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", leg.report.ng.at(k),
                          leg.report.hr.at(k));
            csv += buf;
        }
        csv += "\n";
    }
    io::write_text(out_dir / "sweep_summary.csv", csv);

    for (const auto& leg : legs)
        if (!leg.ok && !leg.error.empty())
            throw std::runtime_error("sweep leg rate " + std::to_string(leg.rate) +
                                     " failed: " + leg.error);
    std::printf("sweep summary: %s\n", (out_dir / "sweep_summary.csv").string().c_str());
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out) {
    const PreparedRun run = load_prepared(cfg);
    const fs::path out_dir = out;
    fs::create_directories(out_dir);
    const AblationVariant variants[] = {AblationVariant::both, AblationVariant::no_titles,
                                        AblationVariant::frozen_table};
    nlohmann::json grid = nlohmann::json::object();
    std::string csv = "# fingerprint=" + fingerprint(cfg) +
                      " seed=" + std::to_string(cfg.seed) + "\nvariant";
    for (const int32_t k : cfg.eval_ks)
        csv += ",ng@" + std::to_string(k) + ",hr@" + std::to_string(k);
    csv += "\n";
    for (const AblationVariant v : variants) {
        const auto outcome = run_ablation(run.catalog, run.split, cfg.model, cfg.train, v,
                                          cfg.eval_ks, out_dir / ablation_name(v));
        grid[ablation_name(v)] = nlohmann::json::parse(outcome.report.to_json_string(false));
        csv += ablation_name(v);
        char buf[64];
        for (const int32_t k : cfg.eval_ks) {
            std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", outcome.report.ng.at(k),
                          outcome.report.hr.at(k));
            csv += buf;
        }
        csv += "\n";
        std::printf("%s done\n", ablation_name(v));
    }
    nlohmann::json j;
    j["fingerprint"] = fingerprint(cfg);
    j["seed"] = cfg.seed;
    j["variants"] = std::move(grid);
    io::write_text(out_dir / "ablation.json", j.dump(2) + "\n");
    io::write_text(out_dir / "ablation.csv", csv);
    std::printf("ablation grid: %s\n", (out_dir / "ablation.json").string().c_str());
    return 0;
}

int cmd_bench(const std::string& checkpoint, const std::string& split_path,
              const std::string& catalog_path, int32_t n_samples, const std::string& out) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const ItemCatalog catalog = ItemCatalog::load_jsonl(catalog_path);
    const auto test = load_samples(split_path);
    const ExpandedVocabulary vocab{ck.weights.config.base_vocab, ck.weights.config.item_count};

    std::vector<PromptSample> prompts = test;
    for (auto& s : prompts) s.include_titles = ck.include_titles;
    if (static_cast<int32_t>(prompts.size()) > n_samples)
        prompts.resize(static_cast<std::size_t>(n_samples));
    const auto samples = encode_eval_set(vocab, ck.tokenizer, prompts);

    std::vector<int32_t> title_lengths(static_cast<std::size_t>(catalog.count()));
    for (int32_t i = 0; i < catalog.count(); ++i)
        title_lengths[static_cast<std::size_t>(i)] =
            static_cast<int32_t>(ck.tokenizer.encode(catalog.item(i).title).size());

    const LoraSet<float>* lora = ck.lora.empty() ? nullptr : &ck.lora;
    const BenchResult logits_result =
        throughput_bench(ck.weights, lora, samples, BenchMode::logits, title_lengths);
    const BenchResult gen_result =
        throughput_bench(ck.weights, lora, samples, BenchMode::generative, title_lengths);

    fs::create_directories(out);
    nlohmann::json j;
    j["fingerprint"] = ck.fingerprint;
    j["seed"] = ck.seed;
    for (const BenchResult* r : {&logits_result, &gen_result}) {
        j[r->mode] = {{"samples_per_second", r->samples_per_second},
                      {"forward_passes", r->forward_passes},
                      {"mean_passes_per_sample", r->mean_passes_per_sample},
                      {"mean_title_tokens", r->mean_title_tokens}};
        io::write_text(fs::path(out) / ("latency_" + r->mode + ".csv"), r->latency_csv());
    }
    j["speedup"] = logits_result.samples_per_second / gen_result.samples_per_second;
    io::write_text(fs::path(out) / "bench.json", j.dump(2) + "\n");
    std::printf("logits: %.3f samples/s (1 pass each)\ngenerative: %.3f samples/s (%.2f passes each)\nspeedup: %.1fx\n",
                logits_result.samples_per_second, gen_result.samples_per_second,
                gen_result.mean_passes_per_sample,
                logits_result.samples_per_second / gen_result.samples_per_second);
    return 0;
}

int cmd_probe(const std::string& checkpoint, const std::string& catalog_path, int32_t n,
              const std::string& out) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!ck.include_titles)
        throw UsageError("checkpoint was trained without item titles; the probe is undefined");
    const ItemCatalog catalog = ItemCatalog::load_jsonl(catalog_path);
    const ExpandedVocabulary vocab{ck.weights.config.base_vocab, ck.weights.config.item_count};
    const LoraSet<float>* lora = ck.lora.empty() ? nullptr : &ck.lora;
    const ProbeResult result = id_title_probe(ck.weights, lora, ck.tokenizer, vocab, catalog,
                                              ck.instruction, n, ck.include_titles, ck.seed);
    fs::create_directories(out);
    nlohmann::json j;
    j["fingerprint"] = ck.fingerprint;
    j["seed"] = ck.seed;
    j["items_probed"] = result.items_probed;
    j["fraction"] = result.fraction;
    io::write_text(fs::path(out) / "probe.json", j.dump(2) + "\n");
    io::write_text(fs::path(out) / "probe.txt",
                   "# fingerprint=" + ck.fingerprint + " seed=" + std::to_string(ck.seed) + "\n" +
                       result.transcript);
    std::printf("probe fraction: %.4f over %d items\ntranscript: %s\n", result.fraction,
                result.items_probed, (fs::path(out) / "probe.txt").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compressed-vocabulary sequential recommender"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "split an interaction log into train/val/test");
    std::string in_path, out_dir = "data";
    int32_t max_history = 20;
    std::string instruction = DataConfig{}.instruction;
    bool no_titles = false;
    double val_fraction = 0.05;
    uint64_t seed = 42;
    prepare->add_option("--input", in_path, "interactions JSONL")->required();
    prepare->add_option("--out", out_dir, "output directory");
    prepare->add_option("--max-history", max_history, "history items kept per prompt");
    prepare->add_option("--instruction", instruction, "prompt preamble");
    prepare->add_flag("--no-titles", no_titles, "omit titles from prompts");
    prepare->add_option("--val-fraction", val_fraction, "validation share of sequences");
    prepare->add_option("--seed", seed, "split seed");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic Markov corpus");
    SyntheticSpec spec;
    std::string synth_out = "synth";
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--items", spec.n_items, "catalog size");
    synth->add_option("--categories", spec.n_categories, "category count");
    synth->add_option("--alpha", spec.alpha, "transition concentration");
    synth->add_option("--title-words", spec.title_words, "words per title");
    synth->add_option("--words-per-category", spec.words_per_category, "category pool size");
    synth->add_option("--min-len", spec.min_len, "min sequence length");
    synth->add_option("--max-len", spec.max_len, "max sequence length");
    synth->add_option("--sequences", spec.n_sequences, "number of sequences");
    synth->add_option("--seed", spec.seed, "generation seed");

    // shared config options
    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config JSON");
        cmd->add_option("--set", overrides, "dotted override, e.g. train.learning_rate=0.001");
    };
    auto resolve_config = [&]() {
        return config_path.empty() ? default_run_config_with(overrides)
                                   : load_run_config(config_path, overrides);
    };

    auto* train_cmd = app.add_subcommand("train", "train a model from prepared splits");
    add_config_opts(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string ck_path, split_path, eval_out = "eval";
    std::vector<int32_t> eval_ks;
    eval_cmd->add_option("--checkpoint", ck_path, "checkpoint directory")->required();
    eval_cmd->add_option("--split", split_path, "split manifest JSONL")->required();
    eval_cmd->add_option("--config", config_path, "config to fingerprint-check");
    eval_cmd->add_option("--set", overrides, "config overrides");
    eval_cmd->add_option("--ks", eval_ks, "metric cutoffs");
    eval_cmd->add_option("--out", eval_out, "output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "train/evaluate across compression rates");
    std::vector<double> rates{2, 4, 8, 16};
    bool parallel = false;
    std::string sweep_out = "sweep";
    add_config_opts(sweep_cmd);
    sweep_cmd->add_option("--rates", rates, "compression rates");
    sweep_cmd->add_flag("--parallel", parallel, "run legs concurrently");
    sweep_cmd->add_option("--out", sweep_out, "output directory");

    auto* ablate_cmd = app.add_subcommand("ablate", "BOTH / no-titles / frozen-table grid");
    std::string ablate_out = "ablation";
    add_config_opts(ablate_cmd);
    ablate_cmd->add_option("--out", ablate_out, "output directory");

    auto* bench_cmd = app.add_subcommand("bench", "single-pass vs generative throughput");
    std::string bench_split, bench_catalog, bench_out = "bench";
    int32_t bench_samples = 150;
    bench_cmd->add_option("--checkpoint", ck_path, "checkpoint directory")->required();
    bench_cmd->add_option("--split", bench_split, "split manifest JSONL")->required();
    bench_cmd->add_option("--catalog", bench_catalog, "catalog JSONL")->required();
    bench_cmd->add_option("--samples", bench_samples, "samples to time");
    bench_cmd->add_option("--out", bench_out, "output directory");

    auto* probe_cmd = app.add_subcommand("probe", "ID-to-title memorization probe");
    std::string probe_catalog, probe_out = "probe";
    int32_t probe_n = 50;
    probe_cmd->add_option("--checkpoint", ck_path, "checkpoint directory")->required();
    probe_cmd->add_option("--catalog", probe_catalog, "catalog JSONL")->required();
    probe_cmd->add_option("--n", probe_n, "items to probe");
    probe_cmd->add_option("--out", probe_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed())
            return cmd_prepare(in_path, out_dir, max_history, instruction, no_titles,
                               val_fraction, seed);
        if (synth->parsed()) return cmd_synth(synth_out, spec);
        if (train_cmd->parsed()) return cmd_train(resolve_config());
        if (eval_cmd->parsed())
            return cmd_eval(ck_path, split_path, config_path, overrides, eval_ks, eval_out);
        if (sweep_cmd->parsed()) return cmd_sweep(resolve_config(), rates, parallel, sweep_out);
        if (ablate_cmd->parsed()) return cmd_ablate(resolve_config(), ablate_out);
        if (bench_cmd->parsed())
            return cmd_bench(ck_path, bench_split, bench_catalog, bench_samples, bench_out);
        if (probe_cmd->parsed()) return cmd_probe(ck_path, probe_catalog, probe_n, probe_out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 0;
}
