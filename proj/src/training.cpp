#include "cove/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cove/config.hpp"
#include "cove/errors.hpp"
#include "cove/evaluate.hpp"
#include "cove/io.hpp"
#include "cove/kernels.hpp"
#include "cove/rng.hpp"

namespace cove {
namespace {

namespace fs = std::filesystem;

template <typename T>
T ce_row(const T* logits, std::size_t width, TokenId target, Matrix<T>* dlogits,
         std::size_t drow, T scale) {
    T mx = logits[0];
    for (std::size_t j = 1; j < width; ++j) mx = logits[j] > mx ? logits[j] : mx;
    T sum{};
    for (std::size_t j = 0; j < width; ++j) sum += std::exp(logits[j] - mx);
    const T loss = mx + std::log(sum) - logits[static_cast<std::size_t>(target)];
    if (dlogits != nullptr) {
        const T inv = T(1) / sum;
        T* d = dlogits->row(drow);
        for (std::size_t j = 0; j < width; ++j)
            d[j] += scale * std::exp(logits[j] - mx) * inv;
        d[static_cast<std::size_t>(target)] -= scale;
    }
    return loss;
}

template <typename T>
T masked_loss_impl(const Matrix<T>& logits, std::span<const TokenId> tokens,
                   std::span<const uint8_t> mask, Matrix<T>* dlogits, T grad_weight) {
    if (logits.rows() != tokens.size() || mask.size() != tokens.size())
        throw std::invalid_argument("loss inputs misaligned");
    std::size_t count = 0;
    for (std::size_t i = 1; i < tokens.size(); ++i) count += mask[i] ? 1 : 0;
    if (count == 0) throw std::invalid_argument("loss mask selects no positions");
    const T scale = grad_weight / static_cast<T>(count);
    T total{};
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (!mask[i]) continue;
        total += ce_row(logits.row(i - 1), logits.cols(), tokens[i], dlogits, i - 1, scale);
    }
    return total / static_cast<T>(count);
}

LoraSet<float>* lora_ptr(TrainState& state) {
    return state.lora.empty() ? nullptr : &state.lora;
}

struct RefBundle {
    std::vector<TensorRef<float>> weights, grads, m, v;
};

RefBundle make_refs(TrainState& state) {
    LoraSet<float>* lora = lora_ptr(state);
    RefBundle refs;
    refs.weights = tensor_refs(state.weights, lora);
    refs.grads = tensor_refs(state.grads, state.weights.config, lora);
    refs.m = tensor_refs(state.adam_m, state.weights.config, lora);
    refs.v = tensor_refs(state.adam_v, state.weights.config, lora);
    return refs;
}

std::string curve_csv(const std::vector<LossPoint>& curve, const std::string& fingerprint,
                      uint64_t seed) {
    std::ostringstream out;
    out << "# fingerprint=" << fingerprint << " seed=" << seed << '\n';
    out << "step,train_loss,val_loss\n";
    out.precision(17);  // lossless double round-trip; resume replays exactly
    for (const auto& p : curve) {
        out << p.step << ',' << p.train_loss << ',';
        if (p.val_loss >= 0.0) out << p.val_loss;
        out << '\n';
    }
    return out.str();
}

std::vector<LossPoint> curve_from_csv(const std::string& text) {
    std::vector<LossPoint> curve;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
        LossPoint p;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        p.step = std::stoll(line.substr(0, c1));
        p.train_loss = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        const auto val = line.substr(c2 + 1);
        p.val_loss = val.empty() ? -1.0 : std::stod(val);
        curve.push_back(p);
    }
    return curve;
}

// Zeroed weight tensors with the checkpoint's exact hash functions.
TransformerWeights<float> weight_shell(const ModelConfig& cfg, std::size_t shared_rows,
                                       std::vector<HashParams> hashes) {
    TransformerWeights<float> w;
    w.config = cfg;
    const auto d = static_cast<std::size_t>(cfg.dim);
    w.tok_embed.resize(static_cast<std::size_t>(cfg.base_vocab), d);
    w.pos_embed.resize(static_cast<std::size_t>(cfg.max_seq_len), d);
    w.item_table =
        CompressedItemTable<float>(cfg.item_count, d, shared_rows, std::move(hashes));
    w.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& layer : w.layers) {
        layer.ln1_g.resize(1, d);
        layer.ln1_b.resize(1, d);
        layer.ln2_g.resize(1, d);
        layer.ln2_b.resize(1, d);
        layer.wq.resize(d, d);
        layer.wk.resize(d, d);
        layer.wv.resize(d, d);
        layer.wo.resize(d, d);
        layer.ff1.resize(static_cast<std::size_t>(cfg.ff_dim), d);
        layer.ff2.resize(d, static_cast<std::size_t>(cfg.ff_dim));
    }
    w.ln_f_g.resize(1, d);
    w.ln_f_b.resize(1, d);
    w.head_base.resize(static_cast<std::size_t>(cfg.base_vocab), d);
    if (!cfg.tied_item_head)
        w.head_item.resize(static_cast<std::size_t>(cfg.item_count), d);
    return w;
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (mode == TrainMode::lora) {
        if (lora_rank < 1) throw std::invalid_argument("lora_rank must be >= 1 in lora mode");
        if (lora_alpha <= 0.0) throw std::invalid_argument("lora_alpha must be > 0 in lora mode");
    }
    if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
}

bool is_trainable(ParamGroup group, const TrainConfig& config) {
    switch (group) {
        case ParamGroup::lora_a:
        case ParamGroup::lora_b:
            return config.mode == TrainMode::lora;
        case ParamGroup::item_shared:
            return !config.freeze_item_table;
        case ParamGroup::head_item:
            return true;  // the expanded head slab tunes in both modes
        default:
            return config.mode == TrainMode::full;
    }
}

double next_token_loss(const Matrix<float>& logits, std::span<const TokenId> tokens,
                       std::span<const uint8_t> mask) {
    return masked_loss_impl<float>(logits, tokens, mask, nullptr, 0.0f);
}

double next_token_loss(const Matrix<double>& logits, std::span<const TokenId> tokens,
                       std::span<const uint8_t> mask) {
    return masked_loss_impl<double>(logits, tokens, mask, nullptr, 0.0);
}

template <typename T>
T masked_loss_and_dlogits(const Matrix<T>& logits, std::span<const TokenId> tokens,
                          std::span<const uint8_t> mask, T grad_weight, Matrix<T>& dlogits) {
    return masked_loss_impl<T>(logits, tokens, mask, &dlogits, grad_weight);
}

template float masked_loss_and_dlogits(const Matrix<float>&, std::span<const TokenId>,
                                       std::span<const uint8_t>, float, Matrix<float>&);
template double masked_loss_and_dlogits(const Matrix<double>&, std::span<const TokenId>,
                                        std::span<const uint8_t>, double, Matrix<double>&);

TrainState make_train_state(TransformerWeights<float> weights, LoraSet<float> lora,
                            TrainConfig config) {
    TrainState state;
    state.weights = std::move(weights);
    state.lora = std::move(lora);
    state.config = std::move(config);
    LoraSet<float>* lp = lora_ptr(state);
    state.grads = make_grads(state.weights, lp);
    state.adam_m = make_grads(state.weights, lp);
    state.adam_v = make_grads(state.weights, lp);
    return state;
}

double train_step(TrainState& state, std::span<const EncodedSample* const> batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    state.grads.zero();
    const LoraSet<float>* lora = lora_ptr(state);
    const float batch_weight = 1.0f / static_cast<float>(batch.size());

    double total_loss = 0.0;
    ForwardCache<float> cache;
    for (const EncodedSample* sample : batch) {
        const Matrix<float> logits = forward_cached(state.weights, lora, sample->tokens, cache);
        Matrix<float> dlogits(logits.rows(), logits.cols());
        const double loss = masked_loss_and_dlogits<float>(logits, sample->tokens,
                                                           sample->loss_mask, batch_weight,
                                                           dlogits);
        if (!std::isfinite(loss))
            throw std::runtime_error("non-finite loss at step " + std::to_string(state.step) +
                                     " (loss=" + std::to_string(loss) + "); aborting training");
        total_loss += loss;
        backward(state.weights, lora, cache, dlogits, state.grads);
    }

    RefBundle refs = make_refs(state);
    const TrainConfig& cfg = state.config;

    float clip_scale = 1.0f;
    if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (std::size_t i = 0; i < refs.grads.size(); ++i) {
            if (!is_trainable(refs.grads[i].group, cfg)) continue;
            sq += kern::sq_norm(refs.grads[i].tensor->data(), refs.grads[i].tensor->size());
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) clip_scale = static_cast<float>(cfg.grad_clip / norm);
    }

    const int64_t t = state.step + 1;
    const float b1 = static_cast<float>(cfg.adam_beta1);
    const float b2 = static_cast<float>(cfg.adam_beta2);
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t));
    const float lr = static_cast<float>(cfg.learning_rate);
    const float eps = static_cast<float>(cfg.adam_eps);
    for (std::size_t i = 0; i < refs.grads.size(); ++i) {
        if (!is_trainable(refs.grads[i].group, cfg)) continue;
        float* g = refs.grads[i].tensor->data();
        float* m = refs.m[i].tensor->data();
        float* v = refs.v[i].tensor->data();
        float* w = refs.weights[i].tensor->data();
        const std::size_t n = refs.grads[i].tensor->size();
        for (std::size_t e = 0; e < n; ++e) {
            const float gi = g[e] * clip_scale;
            m[e] = b1 * m[e] + (1.0f - b1) * gi;
            v[e] = b2 * v[e] + (1.0f - b2) * gi * gi;
            w[e] -= lr * (m[e] / bc1) / (std::sqrt(v[e] / bc2) + eps);
        }
    }
    ++state.step;
    return total_loss / static_cast<double>(batch.size());
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
    fs::create_directories(dir / "optim");
    auto& mutable_ck = const_cast<Checkpoint&>(ck);  // enumeration only
    LoraSet<float>* lora = mutable_ck.lora.empty() ? nullptr : &mutable_ck.lora;
    const auto wrefs = tensor_refs(mutable_ck.weights, lora);
    const auto mrefs = tensor_refs(mutable_ck.adam_m, ck.weights.config, lora);
    const auto vrefs = tensor_refs(mutable_ck.adam_v, ck.weights.config, lora);

    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["fingerprint"] = ck.fingerprint;
    manifest["seed"] = ck.seed;
    manifest["epoch"] = ck.epoch;
    manifest["step"] = ck.step;
    manifest["best_val_loss"] = ck.best_val_loss;
    manifest["mode"] = to_string(ck.mode);
    manifest["include_titles"] = ck.include_titles;
    manifest["loss_scope"] = to_string(ck.loss_scope);
    manifest["instruction"] = ck.instruction;
    manifest["model"] = to_json(ck.weights.config);

    const auto& table = ck.weights.item_table;
    nlohmann::json hashes = nlohmann::json::array();
    for (const auto& h : table.hashes())
        hashes.push_back({{"a", h.a}, {"b", h.b}, {"p", h.p}, {"m", h.m}});
    manifest["item_table"] = {{"k", table.k()},
                              {"shared_rows", table.shared_rows()},
                              {"dim", table.dim()},
                              {"hashes", std::move(hashes)}};
    if (lora != nullptr && !lora->adapters.empty())
        manifest["lora"] = {{"rank", lora->adapters.front().rank},
                            {"alpha", lora->adapters.front().alpha}};

    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& ref : wrefs) {
        tensors.push_back(ref.path);
        io::write_matrix(dir / (ref.path + ".bin"), *ref.tensor);
    }
    manifest["tensors"] = std::move(tensors);
    for (std::size_t i = 0; i < mrefs.size(); ++i) {
        io::write_matrix(dir / "optim" / ("m." + mrefs[i].path + ".bin"), *mrefs[i].tensor);
        io::write_matrix(dir / "optim" / ("v." + vrefs[i].path + ".bin"), *vrefs[i].tensor);
    }
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    ck.tokenizer.save_json(dir / "tokenizer.json");
    io::write_text(dir / "loss_curve.csv", curve_csv(ck.curve, ck.fingerprint, ck.seed));
}

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json"))
        throw UsageError("no checkpoint manifest under " + dir.string());
    const auto manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));

    Checkpoint ck;
    ck.fingerprint = manifest.at("fingerprint").get<std::string>();
    ck.seed = manifest.at("seed").get<uint64_t>();
    ck.epoch = manifest.at("epoch").get<int32_t>();
    ck.step = manifest.at("step").get<int64_t>();
    ck.best_val_loss = manifest.at("best_val_loss").get<double>();
    ck.mode = train_mode_from_string(manifest.at("mode").get<std::string>());
    ck.include_titles = manifest.at("include_titles").get<bool>();
    ck.loss_scope = loss_scope_from_string(manifest.at("loss_scope").get<std::string>());
    ck.instruction = manifest.value("instruction", std::string{});

    const ModelConfig cfg = model_config_from_json(manifest.at("model"));
    const auto& table_json = manifest.at("item_table");
    std::vector<HashParams> hashes;
    for (const auto& h : table_json.at("hashes"))
        hashes.push_back(HashParams{h.at("a").get<uint64_t>(), h.at("b").get<uint64_t>(),
                                    h.at("p").get<uint64_t>(), h.at("m").get<uint64_t>()});
    ck.weights = weight_shell(cfg, table_json.at("shared_rows").get<std::size_t>(),
                              std::move(hashes));

    if (manifest.contains("lora")) {
        auto stream = rng::substream(ck.seed, "lora");
        ck.lora = make_attention_adapters<float>(
            cfg, manifest.at("lora").at("rank").get<int32_t>(),
            manifest.at("lora").at("alpha").get<float>(), stream);
    }
    LoraSet<float>* lora = ck.lora.empty() ? nullptr : &ck.lora;
    for (const auto& ref : tensor_refs(ck.weights, lora))
        io::read_matrix(dir / (ref.path + ".bin"), *ref.tensor);
    ck.adam_m = make_grads(ck.weights, lora);
    ck.adam_v = make_grads(ck.weights, lora);
    for (const auto& ref : tensor_refs(ck.adam_m, cfg, lora))
        io::read_matrix(dir / "optim" / ("m." + ref.path + ".bin"), *ref.tensor);
    for (const auto& ref : tensor_refs(ck.adam_v, cfg, lora))
        io::read_matrix(dir / "optim" / ("v." + ref.path + ".bin"), *ref.tensor);
    ck.tokenizer = BaseTokenizer::load_json(dir / "tokenizer.json");
    ck.curve = curve_from_csv(io::read_text(dir / "loss_curve.csv"));
    return ck;
}

TrainResult train(const TrainInputs& inputs) {
    inputs.config.validate();
    inputs.model.validate();
    if (inputs.train.empty()) throw UsageError("training dataset is empty");

    const int32_t width = inputs.model.logit_width();
    auto check_samples = [&](std::span<const EncodedSample> samples, const char* which) {
        for (const auto& s : samples) {
            if (static_cast<int32_t>(s.tokens.size()) > inputs.model.max_seq_len)
                throw UsageError(std::string(which) + " sample of length " +
                                 std::to_string(s.tokens.size()) + " exceeds max_seq_len");
            for (const TokenId t : s.tokens)
                if (t < 0 || t >= width)
                    throw UsageError(std::string(which) +
                                     " sample token outside the model vocabulary: " +
                                     std::to_string(t));
        }
    };
    check_samples(inputs.train, "train");
    check_samples(inputs.validation, "validation");

    TrainState state;
    int32_t start_epoch = 0;
    std::vector<LossPoint> curve;
    double best_val = std::numeric_limits<double>::infinity();
    int32_t best_epoch = 0;

    if (inputs.resume != nullptr) {
        state = make_train_state(inputs.resume->weights, inputs.resume->lora, inputs.config);
        state.adam_m = inputs.resume->adam_m;
        state.adam_v = inputs.resume->adam_v;
        state.step = inputs.resume->step;
        start_epoch = inputs.resume->epoch;
        curve = inputs.resume->curve;
        best_val = inputs.resume->best_val_loss;
        best_epoch = inputs.resume->epoch;
    } else if (inputs.config.mode == TrainMode::lora && !inputs.config.init_checkpoint.empty()) {
        Checkpoint base = load_checkpoint(inputs.config.init_checkpoint);
        if (to_json(base.weights.config) != to_json(inputs.model))
            throw UsageError("init checkpoint model shape does not match the configured model");
        auto lora_stream = rng::substream(inputs.config.seed, "lora");
        auto adapters = make_attention_adapters<float>(
            inputs.model, inputs.config.lora_rank,
            static_cast<float>(inputs.config.lora_alpha), lora_stream);
        state = make_train_state(std::move(base.weights), std::move(adapters), inputs.config);
    } else {
        auto weights = init_weights<float>(inputs.model, inputs.config.seed);
        LoraSet<float> adapters;
        if (inputs.config.mode == TrainMode::lora) {
            auto lora_stream = rng::substream(inputs.config.seed, "lora");
            adapters = make_attention_adapters<float>(inputs.model, inputs.config.lora_rank,
                                                      static_cast<float>(inputs.config.lora_alpha),
                                                      lora_stream);
        }
        state = make_train_state(std::move(weights), std::move(adapters), inputs.config);
    }

    TransformerWeights<float> best_weights = state.weights;
    LoraSet<float> best_lora = state.lora;
    ModelGrads<float> best_m = state.adam_m;
    ModelGrads<float> best_v = state.adam_v;
    int64_t best_step = state.step;

    const TrainConfig& cfg = state.config;
    std::vector<std::size_t> order(inputs.train.size());
    std::iota(order.begin(), order.end(), 0);

    double window_sum = 0.0;
    int64_t window_n = 0;
    bool steps_exhausted = false;

    auto snapshot_best = [&](int32_t epoch_done) {
        best_weights = state.weights;
        best_lora = state.lora;
        best_m = state.adam_m;
        best_v = state.adam_v;
        best_step = state.step;
        best_epoch = epoch_done;
    };

    int32_t epochs_done = start_epoch;
    for (int32_t epoch = start_epoch; epoch < cfg.max_epochs && !steps_exhausted; ++epoch) {
        // the order must depend only on (seed, epoch) so resumed runs replay it
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_stream = rng::substream(cfg.seed, "epoch" + std::to_string(epoch));
        shuffle_stream.shuffle(order.begin(), order.end());

        std::vector<const EncodedSample*> batch;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            if (cfg.max_steps > 0 && state.step >= cfg.max_steps) {
                steps_exhausted = true;
                break;
            }
            batch.clear();
            const std::size_t end =
                std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            for (std::size_t i = pos; i < end; ++i) batch.push_back(&inputs.train[order[i]]);
            const double loss = train_step(state, batch);
            window_sum += loss;
            ++window_n;
            if (state.step % cfg.log_every == 0) {
                curve.push_back({state.step, window_sum / static_cast<double>(window_n), -1.0});
                window_sum = 0.0;
                window_n = 0;
            }
        }

        epochs_done = epoch + 1;
        double val = -1.0;
        if (!inputs.validation.empty())
            val = mean_loss(state.weights, lora_ptr(state), inputs.validation);
        const double train_mark =
            window_n > 0 ? window_sum / static_cast<double>(window_n)
                         : (curve.empty() ? 0.0 : curve.back().train_loss);
        curve.push_back({state.step, train_mark, val});
        window_sum = 0.0;
        window_n = 0;

        const bool improved = inputs.validation.empty() || val < best_val;
        if (improved) {
            if (!inputs.validation.empty()) best_val = val;
            snapshot_best(epochs_done);
        }
    }

    if (best_step == 0 && state.step > 0) snapshot_best(epochs_done);  // never improved

    TrainResult result;
    result.weights = std::move(best_weights);
    result.lora = std::move(best_lora);
    result.curve = curve;
    result.best_val_loss = std::isfinite(best_val) ? best_val : -1.0;
    result.best_epoch = best_epoch;
    result.steps_run = state.step;

    if (!inputs.out_dir.empty()) {
        Checkpoint ck;
        ck.weights = result.weights;
        ck.lora = result.lora;
        ck.adam_m = std::move(best_m);
        ck.adam_v = std::move(best_v);
        ck.step = best_step;
        ck.epoch = best_epoch;
        ck.best_val_loss = result.best_val_loss;
        ck.fingerprint = inputs.fingerprint;
        ck.mode = cfg.mode;
        ck.include_titles = cfg.include_titles;
        ck.loss_scope = cfg.loss_scope;
        ck.seed = cfg.seed;
        ck.instruction = inputs.instruction;
        if (inputs.tokenizer != nullptr) ck.tokenizer = *inputs.tokenizer;
        ck.curve = curve;
        save_checkpoint(inputs.out_dir, ck);
    }
    return result;
}

BaseTokenizer build_tokenizer_for(const ItemCatalog& catalog, const std::string& instruction,
                                  int freq_floor) {
    std::vector<std::string> corpus;
    corpus.reserve(static_cast<std::size_t>(catalog.count()) + 1);
    for (const auto& item : catalog.items()) corpus.push_back(item.title);
    corpus.push_back(instruction);
    return BaseTokenizer::build(corpus, freq_floor);
}

std::vector<EncodedSample> encode_samples(const ExpandedVocabulary& vocab,
                                          const BaseTokenizer& tok,
                                          const std::vector<PromptSample>& samples,
                                          LossScope scope,
                                          std::optional<bool> include_titles_override) {
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (!include_titles_override.has_value()) {
            out.push_back(encode_sample(vocab, tok, s, scope));
        } else {
            PromptSample copy = s;
            copy.include_titles = *include_titles_override;
            out.push_back(encode_sample(vocab, tok, copy, scope));
        }
    }
    return out;
}

double mean_loss(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                 std::span<const EncodedSample> samples) {
    if (samples.empty()) throw std::invalid_argument("empty loss set");
    double total = 0.0;
    for (const auto& s : samples) {
        const Matrix<float> logits = forward(weights, lora, s.tokens, LogitsAt::all);
        total += next_token_loss(logits, s.tokens, s.loss_mask);
    }
    return total / static_cast<double>(samples.size());
}

const char* ablation_name(AblationVariant variant) {
    switch (variant) {
        case AblationVariant::both:
            return "BOTH";
        case AblationVariant::no_titles:
            return "E";
        case AblationVariant::frozen_table:
            return "I";
    }
    return "?";
}

AblationOutcome run_ablation(const ItemCatalog& catalog, const DatasetSplit& split,
                             ModelConfig model, TrainConfig config, AblationVariant variant,
                             std::span<const int32_t> ks, const fs::path& out_dir) {
    if (split.train.empty() || split.test.empty())
        throw std::invalid_argument("ablation needs train and test splits");

    bool titles = true;
    switch (variant) {
        case AblationVariant::both:
            config.freeze_item_table = false;
            break;
        case AblationVariant::no_titles:
            titles = false;
            config.freeze_item_table = false;
            break;
        case AblationVariant::frozen_table:
            config.freeze_item_table = true;
            break;
    }
    config.include_titles = titles;

    const std::string& instruction = split.train.front().instruction;
    const BaseTokenizer tok = build_tokenizer_for(catalog, instruction);
    const ExpandedVocabulary vocab = expand_vocabulary(tok, catalog);
    model.base_vocab = vocab.base_size;
    model.item_count = vocab.item_count;

    TrainInputs inputs;
    inputs.train = encode_samples(vocab, tok, split.train, config.loss_scope, titles);
    inputs.validation = encode_samples(vocab, tok, split.validation, config.loss_scope, titles);
    inputs.model = model;
    inputs.config = config;
    inputs.out_dir = out_dir;
    inputs.tokenizer = &tok;
    inputs.instruction = instruction;

    AblationOutcome outcome;
    outcome.result = train(inputs);

    std::vector<PromptSample> test = split.test;
    for (auto& s : test) s.include_titles = titles;
    const auto eval_set = encode_eval_set(vocab, tok, test);
    const LoraSet<float>* lora = outcome.result.lora.empty() ? nullptr : &outcome.result.lora;
    outcome.report = evaluate(outcome.result.weights, lora, eval_set, ks);
    outcome.report.mode = ablation_name(variant);
    return outcome;
}

}  // namespace cove
