#include "cove/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cove/kernels.hpp"

namespace cove {
namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475)));
    const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
    return cdf + x * pdf;
}

// y = g * (x - mu) / sqrt(var + eps) + b, rowwise.
template <typename T>
void layernorm_forward(const Matrix<T>& x, const Matrix<T>& g, const Matrix<T>& b, Matrix<T>& y,
                       Matrix<T>& xhat, std::vector<T>& inv) {
    const std::size_t n = x.rows(), d = x.cols();
    y.resize(n, d);
    xhat.resize(n, d);
    inv.assign(n, T{});
    for (std::size_t t = 0; t < n; ++t) {
        const T* xr = x.row(t);
        T mu{};
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        T var{};
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xr[j] - mu;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T iv = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        inv[t] = iv;
        T* xh = xhat.row(t);
        T* yr = y.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mu) * iv;
            yr[j] = g.data()[j] * xh[j] + b.data()[j];
        }
    }
}

template <typename T>
void layernorm_backward(const Matrix<T>& dy, const Matrix<T>& g, const Matrix<T>& xhat,
                        const std::vector<T>& inv, Matrix<T>& dx, Matrix<T>& dg, Matrix<T>& db) {
    const std::size_t n = dy.rows(), d = dy.cols();
    std::vector<T> dxhat(d);
    for (std::size_t t = 0; t < n; ++t) {
        const T* dyr = dy.row(t);
        const T* xh = xhat.row(t);
        T m1{}, m2{};
        for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = dyr[j] * g.data()[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
            dg.data()[j] += dyr[j] * xh[j];
            db.data()[j] += dyr[j];
        }
        m1 /= static_cast<T>(d);
        m2 /= static_cast<T>(d);
        T* dxr = dx.row(t);
        for (std::size_t j = 0; j < d; ++j) dxr[j] += inv[t] * (dxhat[j] - m1 - xh[j] * m2);
    }
}

// Y(n x out) = X(n x in) W^T, optionally + scaled LoRA path. The scaled
// intermediate Zs = (alpha/rank) X A^T is kept for the backward pass.
template <typename T>
void linear_forward(const Matrix<T>& x, const Matrix<T>& w, const LoraAdapter<T>* ad, Matrix<T>& y,
                    Matrix<T>& zs) {
    const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
    y.resize(n, out);
    kern::gemm_nt(n, out, in, x.data(), in, w.data(), in, y.data(), out);
    if (ad != nullptr) {
        const auto r = static_cast<std::size_t>(ad->rank);
        zs.resize(n, r);
        kern::gemm_nt(n, r, in, x.data(), in, ad->a.data(), in, zs.data(), r);
        kern::scal(ad->scaling(), zs.data(), zs.size());
        kern::gemm_nt(n, out, r, zs.data(), r, ad->b.data(), r, y.data(), out);
    }
}

template <typename T>
void linear_backward(const Matrix<T>& dy, const Matrix<T>& x, const Matrix<T>& w,
                     const LoraAdapter<T>* ad, const Matrix<T>& zs, Matrix<T>& dx, Matrix<T>& dw,
                     Matrix<T>* da, Matrix<T>* db) {
    const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
    kern::gemm_tn(out, in, n, dy.data(), out, x.data(), in, dw.data(), in);
    kern::gemm_nn(n, in, out, dy.data(), out, w.data(), in, dx.data(), in);
    if (ad != nullptr) {
        const auto r = static_cast<std::size_t>(ad->rank);
        kern::gemm_tn(out, r, n, dy.data(), out, zs.data(), r, db->data(), r);
        Matrix<T> u(n, r);  // dZs, then scaled down to dZ's contribution
        kern::gemm_nn(n, r, out, dy.data(), out, ad->b.data(), r, u.data(), r);
        kern::scal(ad->scaling(), u.data(), u.size());
        kern::gemm_tn(r, in, n, u.data(), r, x.data(), in, da->data(), in);
        kern::gemm_nn(n, in, r, u.data(), r, ad->a.data(), in, dx.data(), in);
    }
}

template <typename T>
void init_uniform(Matrix<T>& m, rng::Stream& stream, double scale) {
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<T>(stream.uniform(-scale, scale));
}

template <typename T>
void check_tokens(const ModelConfig& cfg, std::span<const TokenId> tokens) {
    if (tokens.empty()) throw std::invalid_argument("empty token sequence");
    if (static_cast<int32_t>(tokens.size()) > cfg.max_seq_len)
        throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    for (const TokenId t : tokens)
        if (t < 0 || t >= cfg.logit_width())
            throw std::out_of_range("token id out of vocabulary: " + std::to_string(t));
}

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || dim < 1 || ff_dim < 1 || max_seq_len < 1)
        throw std::invalid_argument("model dimensions must be positive");
    if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");
    if (base_vocab < BaseTokenizer::kNumSpecials)
        throw std::invalid_argument("base vocabulary is missing the special tokens");
    if (item_count < 1) throw std::invalid_argument("item_count must be >= 1");
    if (rate < 1.0) throw std::invalid_argument("compression rate must be >= 1");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
}

template <typename T>
const LoraAdapter<T>* LoraSet<T>::find(const std::string& target) const {
    for (const auto& ad : adapters)
        if (ad.target == target) return &ad;
    return nullptr;
}

template <typename T>
LoraSet<T> make_attention_adapters(const ModelConfig& cfg, int32_t rank, T alpha,
                                   rng::Stream& init) {
    if (rank < 1) throw std::invalid_argument("LoRA rank must be >= 1");
    LoraSet<T> set;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    const char* names[] = {"wq", "wk", "wv", "wo"};
    for (int32_t l = 0; l < cfg.layers; ++l) {
        for (const char* name : names) {
            LoraAdapter<T> ad;
            ad.target = "layer" + std::to_string(l) + "." + name;
            ad.rank = rank;
            ad.alpha = alpha;
            ad.a.resize(static_cast<std::size_t>(rank), static_cast<std::size_t>(cfg.dim));
            ad.b.resize(static_cast<std::size_t>(cfg.dim), static_cast<std::size_t>(rank));
            init_uniform(ad.a, init, scale);
            // ad.b stays zero: a fresh adapter must not change the forward pass
            set.adapters.push_back(std::move(ad));
        }
    }
    return set;
}

template <typename T>
TransformerWeights<T> init_weights(const ModelConfig& cfg, uint64_t root_seed) {
    cfg.validate();
    auto init = rng::substream(root_seed, "init");
    auto hash = rng::substream(root_seed, "hash");

    TransformerWeights<T> w;
    w.config = cfg;
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto f = static_cast<std::size_t>(cfg.ff_dim);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sf = 1.0 / std::sqrt(static_cast<double>(f));

    w.tok_embed.resize(static_cast<std::size_t>(cfg.base_vocab), d);
    init_uniform(w.tok_embed, init, sd);
    w.pos_embed.resize(static_cast<std::size_t>(cfg.max_seq_len), d);
    init_uniform(w.pos_embed, init, sd);
    w.item_table = build_table<T>(cfg.item_count, d, cfg.rate,
                                  static_cast<std::size_t>(cfg.k), hash, init);

    w.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& layer : w.layers) {
        layer.ln1_g.resize(1, d);
        layer.ln1_b.resize(1, d);
        layer.ln2_g.resize(1, d);
        layer.ln2_b.resize(1, d);
        std::fill_n(layer.ln1_g.data(), d, T(1));
        std::fill_n(layer.ln2_g.data(), d, T(1));
        layer.wq.resize(d, d);
        layer.wk.resize(d, d);
        layer.wv.resize(d, d);
        layer.wo.resize(d, d);
        init_uniform(layer.wq, init, sd);
        init_uniform(layer.wk, init, sd);
        init_uniform(layer.wv, init, sd);
        init_uniform(layer.wo, init, sd);
        layer.ff1.resize(f, d);
        layer.ff2.resize(d, f);
        init_uniform(layer.ff1, init, sd);
        init_uniform(layer.ff2, init, sf);
    }
    w.ln_f_g.resize(1, d);
    w.ln_f_b.resize(1, d);
    std::fill_n(w.ln_f_g.data(), d, T(1));
    // half-scale head init keeps initial logits tight (loss ~ ln(width))
    w.head_base.resize(static_cast<std::size_t>(cfg.base_vocab), d);
    init_uniform(w.head_base, init, 0.5 * sd);
    if (!cfg.tied_item_head) {
        w.head_item.resize(static_cast<std::size_t>(cfg.item_count), d);
        init_uniform(w.head_item, init, 0.5 * sd);
    }
    return w;
}

template <typename T>
Matrix<T> embed_tokens(const TransformerWeights<T>& w, std::span<const TokenId> tokens) {
    check_tokens<T>(w.config, tokens);
    const auto d = static_cast<std::size_t>(w.config.dim);
    Matrix<T> x(tokens.size(), d);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const TokenId tok = tokens[t];
        if (tok < w.config.base_vocab) {
            std::memcpy(x.row(t), w.tok_embed.row(static_cast<std::size_t>(tok)), d * sizeof(T));
        } else {
            w.item_table.item_embedding(tok - w.config.base_vocab, x.row(t));
        }
    }
    return x;
}

template <typename T>
std::vector<T> apply_lora(const Matrix<T>& w, const LoraAdapter<T>& ad, std::span<const T> x) {
    const std::size_t in = w.cols(), out = w.rows();
    if (x.size() != in || ad.a.cols() != in || ad.b.rows() != out ||
        ad.a.rows() != static_cast<std::size_t>(ad.rank) ||
        ad.b.cols() != static_cast<std::size_t>(ad.rank))
        throw std::invalid_argument("apply_lora shape mismatch");
    std::vector<T> y(out);
    for (std::size_t o = 0; o < out; ++o) y[o] = kern::dot(w.row(o), x.data(), in);
    std::vector<T> z(static_cast<std::size_t>(ad.rank));
    for (std::size_t r = 0; r < z.size(); ++r) z[r] = kern::dot(ad.a.row(r), x.data(), in);
    const T s = ad.scaling();
    for (std::size_t o = 0; o < out; ++o)
        y[o] += s * kern::dot(ad.b.row(o), z.data(), z.size());
    return y;
}

template <typename T>
Matrix<T> forward_cached(const TransformerWeights<T>& w,
                         std::type_identity_t<const LoraSet<T>*> lora,
                         std::span<const TokenId> tokens, ForwardCache<T>& cache) {
    const ModelConfig& cfg = w.config;
    check_tokens<T>(cfg, tokens);
    const std::size_t n = tokens.size();
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));

    cache.tokens.assign(tokens.begin(), tokens.end());
    cache.x0 = embed_tokens(w, tokens);
    for (std::size_t t = 0; t < n; ++t)
        kern::axpy(T(1), w.pos_embed.row(t), cache.x0.row(t), d);

    cache.layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache<T>{});
    Matrix<T> x = cache.x0;

    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const LayerWeights<T>& lw = w.layers[l];
        LayerCache<T>& lc = cache.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        const LoraAdapter<T>* ad_q = lora != nullptr ? lora->find(prefix + "wq") : nullptr;
        const LoraAdapter<T>* ad_k = lora != nullptr ? lora->find(prefix + "wk") : nullptr;
        const LoraAdapter<T>* ad_v = lora != nullptr ? lora->find(prefix + "wv") : nullptr;
        const LoraAdapter<T>* ad_o = lora != nullptr ? lora->find(prefix + "wo") : nullptr;

        lc.a_in = x;
        layernorm_forward(x, lw.ln1_g, lw.ln1_b, lc.xn1, lc.xhat1, lc.inv1);
        linear_forward(lc.xn1, lw.wq, ad_q, lc.q, lc.zq);
        linear_forward(lc.xn1, lw.wk, ad_k, lc.k, lc.zk);
        linear_forward(lc.xn1, lw.wv, ad_v, lc.v, lc.zv);

        lc.attn_concat.resize(n, d);
        lc.probs.assign(heads, Matrix<T>{});
        for (std::size_t h = 0; h < heads; ++h) {
            Matrix<T>& p = lc.probs[h];
            p.resize(n, n);
            kern::gemm_nt(n, n, hd, lc.q.data() + h * hd, d, lc.k.data() + h * hd, d, p.data(), n);
            kern::scal(scale, p.data(), p.size());
            for (std::size_t t = 0; t < n; ++t) {
                kern::softmax_row(p.row(t), t + 1);
                std::fill(p.row(t) + t + 1, p.row(t) + n, T{});
            }
            kern::gemm_nn(n, hd, n, p.data(), n, lc.v.data() + h * hd, d,
                          lc.attn_concat.data() + h * hd, d);
        }

        Matrix<T> attn_out;
        linear_forward(lc.attn_concat, lw.wo, ad_o, attn_out, lc.zo);
        for (std::size_t t = 0; t < n; ++t) kern::axpy(T(1), lc.a_in.row(t), attn_out.row(t), d);
        lc.b_in = std::move(attn_out);

        layernorm_forward(lc.b_in, lw.ln2_g, lw.ln2_b, lc.xn2, lc.xhat2, lc.inv2);
        Matrix<T> zs_unused;
        linear_forward(lc.xn2, lw.ff1, static_cast<const LoraAdapter<T>*>(nullptr), lc.f1,
                       zs_unused);
        lc.g.resize(n, lc.f1.cols());
        for (std::size_t i = 0; i < lc.f1.size(); ++i) lc.g.data()[i] = gelu(lc.f1.data()[i]);
        Matrix<T> f2;
        linear_forward(lc.g, lw.ff2, static_cast<const LoraAdapter<T>*>(nullptr), f2, zs_unused);
        for (std::size_t t = 0; t < n; ++t) kern::axpy(T(1), lc.b_in.row(t), f2.row(t), d);
        x = std::move(f2);
    }

    cache.x_final = x;
    layernorm_forward(cache.x_final, w.ln_f_g, w.ln_f_b, cache.xf, cache.xhatf, cache.invf);

    // head over every position
    const auto vb = static_cast<std::size_t>(cfg.base_vocab);
    const auto ic = static_cast<std::size_t>(cfg.item_count);
    const std::size_t width = vb + ic;
    Matrix<T> logits(n, width);
    kern::gemm_nt(n, vb, d, cache.xf.data(), d, w.head_base.data(), d, logits.data(), width);
    if (cfg.tied_item_head) {
        const auto& table = w.item_table;
        const std::size_t srows = table.shared_rows();
        Matrix<T> s(n, srows);
        kern::gemm_nt(n, srows, d, cache.xf.data(), d, table.shared().data(), d, s.data(), srows);
        const T invk = T(1) / static_cast<T>(table.k());
        for (std::size_t t = 0; t < n; ++t) {
            const T* srow = s.row(t);
            T* lrow = logits.row(t) + vb;
            for (std::size_t i = 0; i < ic; ++i) {
                T acc{};
                for (std::size_t j = 0; j < table.k(); ++j)
                    acc += srow[table.code(static_cast<int32_t>(i), j)];
                lrow[i] = acc * invk;
            }
        }
    } else {
        kern::gemm_nt(n, ic, d, cache.xf.data(), d, w.head_item.data(), d,
                      logits.data() + vb, width);
    }
    return logits;
}

template <typename T>
Matrix<T> forward(const TransformerWeights<T>& w,
                  std::type_identity_t<const LoraSet<T>*> lora, std::span<const TokenId> tokens,
                  LogitsAt at) {
    ForwardCache<T> cache;
    Matrix<T> logits = forward_cached(w, lora, tokens, cache);
    if (at == LogitsAt::all || logits.rows() == 1) return logits;
    Matrix<T> last(1, logits.cols());
    std::memcpy(last.row(0), logits.row(logits.rows() - 1), logits.cols() * sizeof(T));
    return last;
}

template <typename T>
std::vector<T> item_logits(std::span<const T> logits, int32_t item_count) {
    if (item_count < 0 || static_cast<std::size_t>(item_count) > logits.size())
        throw std::invalid_argument("item_count exceeds logits width");
    return std::vector<T>(logits.end() - item_count, logits.end());
}

template <typename T>
std::vector<std::pair<int32_t, T>> rank_items(std::span<const T> item_scores, int32_t k) {
    const auto count = static_cast<int32_t>(item_scores.size());
    std::vector<int32_t> order(item_scores.size());
    for (int32_t i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int32_t lhs, int32_t rhs) {
        if (item_scores[static_cast<std::size_t>(lhs)] != item_scores[static_cast<std::size_t>(rhs)])
            return item_scores[static_cast<std::size_t>(lhs)] >
                   item_scores[static_cast<std::size_t>(rhs)];
        return lhs < rhs;
    });
    const auto take = static_cast<std::size_t>(std::min(std::max(k, 0), count));
    std::vector<std::pair<int32_t, T>> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.emplace_back(order[i], item_scores[static_cast<std::size_t>(order[i])]);
    return out;
}

template <typename T>
std::vector<std::pair<int32_t, T>> recommend_top_k(const TransformerWeights<T>& w,
                                                   std::type_identity_t<const LoraSet<T>*> lora,
                                                   std::span<const TokenId> prompt, int32_t k) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    const Matrix<T> logits = forward(w, lora, prompt, LogitsAt::last);
    const auto scores =
        item_logits(std::span<const T>(logits.row(0), logits.cols()), w.config.item_count);
    return rank_items(std::span<const T>(scores), k);
}

template <typename T>
void ModelGrads<T>::zero() {
    tok_embed.zero();
    pos_embed.zero();
    item_shared.zero();
    for (auto& l : layers) {
        l.ln1_g.zero();
        l.ln1_b.zero();
        l.wq.zero();
        l.wk.zero();
        l.wv.zero();
        l.wo.zero();
        l.ln2_g.zero();
        l.ln2_b.zero();
        l.ff1.zero();
        l.ff2.zero();
    }
    ln_f_g.zero();
    ln_f_b.zero();
    head_base.zero();
    head_item.zero();
    for (auto& lg : lora) {
        lg.a.zero();
        lg.b.zero();
    }
}

template <typename T>
ModelGrads<T> make_grads(const TransformerWeights<T>& w,
                         std::type_identity_t<const LoraSet<T>*> lora) {
    ModelGrads<T> g;
    g.tok_embed.resize(w.tok_embed.rows(), w.tok_embed.cols());
    g.pos_embed.resize(w.pos_embed.rows(), w.pos_embed.cols());
    g.item_shared.resize(w.item_table.shared().rows(), w.item_table.shared().cols());
    g.layers.resize(w.layers.size());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& lw = w.layers[l];
        auto& lg = g.layers[l];
        lg.ln1_g.resize(1, lw.ln1_g.cols());
        lg.ln1_b.resize(1, lw.ln1_b.cols());
        lg.wq.resize(lw.wq.rows(), lw.wq.cols());
        lg.wk.resize(lw.wk.rows(), lw.wk.cols());
        lg.wv.resize(lw.wv.rows(), lw.wv.cols());
        lg.wo.resize(lw.wo.rows(), lw.wo.cols());
        lg.ln2_g.resize(1, lw.ln2_g.cols());
        lg.ln2_b.resize(1, lw.ln2_b.cols());
        lg.ff1.resize(lw.ff1.rows(), lw.ff1.cols());
        lg.ff2.resize(lw.ff2.rows(), lw.ff2.cols());
    }
    g.ln_f_g.resize(1, w.ln_f_g.cols());
    g.ln_f_b.resize(1, w.ln_f_b.cols());
    g.head_base.resize(w.head_base.rows(), w.head_base.cols());
    if (!w.config.tied_item_head) g.head_item.resize(w.head_item.rows(), w.head_item.cols());
    if (lora != nullptr) {
        g.lora.resize(lora->adapters.size());
        for (std::size_t i = 0; i < lora->adapters.size(); ++i) {
            g.lora[i].a.resize(lora->adapters[i].a.rows(), lora->adapters[i].a.cols());
            g.lora[i].b.resize(lora->adapters[i].b.rows(), lora->adapters[i].b.cols());
        }
    }
    return g;
}

template <typename T>
void backward(const TransformerWeights<T>& w, std::type_identity_t<const LoraSet<T>*> lora,
              const ForwardCache<T>& cache, const Matrix<T>& dlogits, ModelGrads<T>& grads) {
    const ModelConfig& cfg = w.config;
    const std::size_t n = cache.tokens.size();
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = d / heads;
    const auto vb = static_cast<std::size_t>(cfg.base_vocab);
    const auto ic = static_cast<std::size_t>(cfg.item_count);
    const std::size_t width = vb + ic;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    if (dlogits.rows() != n || dlogits.cols() != width)
        throw std::invalid_argument("dlogits shape mismatch");

    // head
    Matrix<T> dxf(n, d);
    kern::gemm_tn(vb, d, n, dlogits.data(), width, cache.xf.data(), d, grads.head_base.data(), d);
    kern::gemm_nn(n, d, vb, dlogits.data(), width, w.head_base.data(), d, dxf.data(), d);
    if (cfg.tied_item_head) {
        const auto& table = w.item_table;
        const std::size_t srows = table.shared_rows();
        Matrix<T> ds(n, srows);
        const T invk = T(1) / static_cast<T>(table.k());
        for (std::size_t t = 0; t < n; ++t) {
            const T* dl = dlogits.row(t) + vb;
            T* dsr = ds.row(t);
            for (std::size_t i = 0; i < ic; ++i) {
                const T up = dl[i] * invk;
                if (up == T{}) continue;
                for (std::size_t j = 0; j < table.k(); ++j)
                    dsr[table.code(static_cast<int32_t>(i), j)] += up;
            }
        }
        kern::gemm_tn(srows, d, n, ds.data(), srows, cache.xf.data(), d, grads.item_shared.data(),
                      d);
        kern::gemm_nn(n, d, srows, ds.data(), srows, table.shared().data(), d, dxf.data(), d);
    } else {
        kern::gemm_tn(ic, d, n, dlogits.data() + vb, width, cache.xf.data(), d,
                      grads.head_item.data(), d);
        kern::gemm_nn(n, d, ic, dlogits.data() + vb, width, w.head_item.data(), d, dxf.data(), d);
    }

    // final norm
    Matrix<T> dx(n, d);
    layernorm_backward(dxf, w.ln_f_g, cache.xhatf, cache.invf, dx, grads.ln_f_g, grads.ln_f_b);

    // transformer blocks, reversed
    for (std::size_t li = w.layers.size(); li-- > 0;) {
        const LayerWeights<T>& lw = w.layers[li];
        const LayerCache<T>& lc = cache.layers[li];
        LayerWeights<T>& lg = grads.layers[li];
        const std::string prefix = "layer" + std::to_string(li) + ".";

        const LoraAdapter<T>* ad_q = lora != nullptr ? lora->find(prefix + "wq") : nullptr;
        const LoraAdapter<T>* ad_k = lora != nullptr ? lora->find(prefix + "wk") : nullptr;
        const LoraAdapter<T>* ad_v = lora != nullptr ? lora->find(prefix + "wv") : nullptr;
        const LoraAdapter<T>* ad_o = lora != nullptr ? lora->find(prefix + "wo") : nullptr;
        auto lora_grad = [&](const LoraAdapter<T>* ad,
                             Matrix<T>** da, Matrix<T>** db) {
            *da = nullptr;
            *db = nullptr;
            if (ad == nullptr || lora == nullptr) return;
            for (std::size_t i = 0; i < lora->adapters.size(); ++i) {
                if (&lora->adapters[i] == ad) {
                    *da = &grads.lora[i].a;
                    *db = &grads.lora[i].b;
                    return;
                }
            }
        };

        // feed-forward sub-block
        Matrix<T> dg(n, lc.g.cols());
        linear_backward(dx, lc.g, lw.ff2, static_cast<const LoraAdapter<T>*>(nullptr), lc.g, dg,
                        lg.ff2, static_cast<Matrix<T>*>(nullptr), static_cast<Matrix<T>*>(nullptr));
        for (std::size_t i = 0; i < dg.size(); ++i)
            dg.data()[i] *= gelu_grad(lc.f1.data()[i]);
        Matrix<T> dxn2(n, d);
        linear_backward(dg, lc.xn2, lw.ff1, static_cast<const LoraAdapter<T>*>(nullptr), lc.xn2,
                        dxn2, lg.ff1, static_cast<Matrix<T>*>(nullptr),
                        static_cast<Matrix<T>*>(nullptr));
        Matrix<T> dmid = dx;  // residual branch
        layernorm_backward(dxn2, lw.ln2_g, lc.xhat2, lc.inv2, dmid, lg.ln2_g, lg.ln2_b);

        // attention sub-block
        Matrix<T> dao(n, d);
        {
            Matrix<T>*da, *db;
            lora_grad(ad_o, &da, &db);
            linear_backward(dmid, lc.attn_concat, lw.wo, ad_o, lc.zo, dao, lg.wo, da, db);
        }
        Matrix<T> dq(n, d), dk(n, d), dv(n, d);
        Matrix<T> dp(n, n);
        for (std::size_t h = 0; h < heads; ++h) {
            const Matrix<T>& p = lc.probs[h];
            dp.zero();
            kern::gemm_nt(n, n, hd, dao.data() + h * hd, d, lc.v.data() + h * hd, d, dp.data(), n);
            kern::gemm_tn(n, hd, n, p.data(), n, dao.data() + h * hd, d, dv.data() + h * hd, d);
            for (std::size_t t = 0; t < n; ++t) {
                const T* pr = p.row(t);
                T* dpr = dp.row(t);
                const T dot = kern::dot(dpr, pr, n);
                for (std::size_t u = 0; u < n; ++u) dpr[u] = pr[u] * (dpr[u] - dot) * scale;
            }
            kern::gemm_nn(n, hd, n, dp.data(), n, lc.k.data() + h * hd, d, dq.data() + h * hd, d);
            kern::gemm_tn(n, hd, n, dp.data(), n, lc.q.data() + h * hd, d, dk.data() + h * hd, d);
        }
        Matrix<T> dxn1(n, d);
        {
            Matrix<T>*da, *db;
            lora_grad(ad_q, &da, &db);
            linear_backward(dq, lc.xn1, lw.wq, ad_q, lc.zq, dxn1, lg.wq, da, db);
            lora_grad(ad_k, &da, &db);
            linear_backward(dk, lc.xn1, lw.wk, ad_k, lc.zk, dxn1, lg.wk, da, db);
            lora_grad(ad_v, &da, &db);
            linear_backward(dv, lc.xn1, lw.wv, ad_v, lc.zv, dxn1, lg.wv, da, db);
        }
        layernorm_backward(dxn1, lw.ln1_g, lc.xhat1, lc.inv1, dmid, lg.ln1_g, lg.ln1_b);
        dx = std::move(dmid);
    }

    // embeddings
    for (std::size_t t = 0; t < n; ++t) {
        const TokenId tok = cache.tokens[t];
        const T* row = dx.row(t);
        if (tok < cfg.base_vocab) {
            kern::axpy(T(1), row, grads.tok_embed.row(static_cast<std::size_t>(tok)), d);
        } else {
            w.item_table.accumulate_gradient(tok - cfg.base_vocab, row, grads.item_shared);
        }
        kern::axpy(T(1), row, grads.pos_embed.row(t), d);
    }
}

template <typename T>
std::vector<TensorRef<T>> tensor_refs(TransformerWeights<T>& w,
                                      std::type_identity_t<LoraSet<T>*> lora) {
    std::vector<TensorRef<T>> refs;
    refs.push_back({"tok_embed", ParamGroup::base_embed, &w.tok_embed});
    refs.push_back({"pos_embed", ParamGroup::pos_embed, &w.pos_embed});
    refs.push_back({"item_table.shared", ParamGroup::item_shared, &w.item_table.shared()});
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& lw = w.layers[l];
        refs.push_back({p + "ln1.g", ParamGroup::norm, &lw.ln1_g});
        refs.push_back({p + "ln1.b", ParamGroup::norm, &lw.ln1_b});
        refs.push_back({p + "wq", ParamGroup::attention, &lw.wq});
        refs.push_back({p + "wk", ParamGroup::attention, &lw.wk});
        refs.push_back({p + "wv", ParamGroup::attention, &lw.wv});
        refs.push_back({p + "wo", ParamGroup::attention, &lw.wo});
        refs.push_back({p + "ln2.g", ParamGroup::norm, &lw.ln2_g});
        refs.push_back({p + "ln2.b", ParamGroup::norm, &lw.ln2_b});
        refs.push_back({p + "ff1", ParamGroup::feed_forward, &lw.ff1});
        refs.push_back({p + "ff2", ParamGroup::feed_forward, &lw.ff2});
    }
    refs.push_back({"ln_f.g", ParamGroup::norm, &w.ln_f_g});
    refs.push_back({"ln_f.b", ParamGroup::norm, &w.ln_f_b});
    refs.push_back({"head_base", ParamGroup::head_base, &w.head_base});
    if (!w.config.tied_item_head)
        refs.push_back({"head_item", ParamGroup::head_item, &w.head_item});
    if (lora != nullptr) {
        for (auto& ad : lora->adapters) {
            refs.push_back({"lora." + ad.target + ".a", ParamGroup::lora_a, &ad.a});
            refs.push_back({"lora." + ad.target + ".b", ParamGroup::lora_b, &ad.b});
        }
    }
    return refs;
}

template <typename T>
std::vector<TensorRef<T>> tensor_refs(ModelGrads<T>& g, const ModelConfig& cfg,
                                      std::type_identity_t<const LoraSet<T>*> lora) {
    std::vector<TensorRef<T>> refs;
    refs.push_back({"tok_embed", ParamGroup::base_embed, &g.tok_embed});
    refs.push_back({"pos_embed", ParamGroup::pos_embed, &g.pos_embed});
    refs.push_back({"item_table.shared", ParamGroup::item_shared, &g.item_shared});
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& lg = g.layers[l];
        refs.push_back({p + "ln1.g", ParamGroup::norm, &lg.ln1_g});
        refs.push_back({p + "ln1.b", ParamGroup::norm, &lg.ln1_b});
        refs.push_back({p + "wq", ParamGroup::attention, &lg.wq});
        refs.push_back({p + "wk", ParamGroup::attention, &lg.wk});
        refs.push_back({p + "wv", ParamGroup::attention, &lg.wv});
        refs.push_back({p + "wo", ParamGroup::attention, &lg.wo});
        refs.push_back({p + "ln2.g", ParamGroup::norm, &lg.ln2_g});
        refs.push_back({p + "ln2.b", ParamGroup::norm, &lg.ln2_b});
        refs.push_back({p + "ff1", ParamGroup::feed_forward, &lg.ff1});
        refs.push_back({p + "ff2", ParamGroup::feed_forward, &lg.ff2});
    }
    refs.push_back({"ln_f.g", ParamGroup::norm, &g.ln_f_g});
    refs.push_back({"ln_f.b", ParamGroup::norm, &g.ln_f_b});
    refs.push_back({"head_base", ParamGroup::head_base, &g.head_base});
    if (!cfg.tied_item_head) refs.push_back({"head_item", ParamGroup::head_item, &g.head_item});
    if (lora != nullptr) {
        for (std::size_t i = 0; i < lora->adapters.size(); ++i) {
            const auto& target = lora->adapters[i].target;
            refs.push_back({"lora." + target + ".a", ParamGroup::lora_a, &g.lora[i].a});
            refs.push_back({"lora." + target + ".b", ParamGroup::lora_b, &g.lora[i].b});
        }
    }
    return refs;
}

// explicit instantiations
template struct LoraAdapter<float>;
template struct LoraAdapter<double>;
template struct LoraSet<float>;
template struct LoraSet<double>;
template struct TransformerWeights<float>;
template struct TransformerWeights<double>;

template LoraSet<float> make_attention_adapters(const ModelConfig&, int32_t, float, rng::Stream&);
template LoraSet<double> make_attention_adapters(const ModelConfig&, int32_t, double,
                                                 rng::Stream&);
template TransformerWeights<float> init_weights(const ModelConfig&, uint64_t);
template TransformerWeights<double> init_weights(const ModelConfig&, uint64_t);
template Matrix<float> embed_tokens(const TransformerWeights<float>&, std::span<const TokenId>);
template Matrix<double> embed_tokens(const TransformerWeights<double>&, std::span<const TokenId>);
template std::vector<float> apply_lora(const Matrix<float>&, const LoraAdapter<float>&,
                                       std::span<const float>);
template std::vector<double> apply_lora(const Matrix<double>&, const LoraAdapter<double>&,
                                        std::span<const double>);
template Matrix<float> forward(const TransformerWeights<float>&, const LoraSet<float>*,
                               std::span<const TokenId>, LogitsAt);
template Matrix<double> forward(const TransformerWeights<double>&, const LoraSet<double>*,
                                std::span<const TokenId>, LogitsAt);
template std::vector<float> item_logits(std::span<const float>, int32_t);
template std::vector<double> item_logits(std::span<const double>, int32_t);
template std::vector<std::pair<int32_t, float>> rank_items(std::span<const float>, int32_t);
template std::vector<std::pair<int32_t, double>> rank_items(std::span<const double>, int32_t);
template std::vector<std::pair<int32_t, float>> recommend_top_k(const TransformerWeights<float>&,
                                                                const LoraSet<float>*,
                                                                std::span<const TokenId>, int32_t);
template std::vector<std::pair<int32_t, double>> recommend_top_k(
    const TransformerWeights<double>&, const LoraSet<double>*, std::span<const TokenId>, int32_t);
template struct ModelGrads<float>;
template struct ModelGrads<double>;
template ModelGrads<float> make_grads(const TransformerWeights<float>&, const LoraSet<float>*);
template ModelGrads<double> make_grads(const TransformerWeights<double>&, const LoraSet<double>*);
template Matrix<float> forward_cached(const TransformerWeights<float>&, const LoraSet<float>*,
                                      std::span<const TokenId>, ForwardCache<float>&);
template Matrix<double> forward_cached(const TransformerWeights<double>&, const LoraSet<double>*,
                                       std::span<const TokenId>, ForwardCache<double>&);
template void backward(const TransformerWeights<float>&, const LoraSet<float>*,
                       const ForwardCache<float>&, const Matrix<float>&, ModelGrads<float>&);
template void backward(const TransformerWeights<double>&, const LoraSet<double>*,
                       const ForwardCache<double>&, const Matrix<double>&, ModelGrads<double>&);
template std::vector<TensorRef<float>> tensor_refs(TransformerWeights<float>&, LoraSet<float>*);
template std::vector<TensorRef<double>> tensor_refs(TransformerWeights<double>&, LoraSet<double>*);
template std::vector<TensorRef<float>> tensor_refs(ModelGrads<float>&, const ModelConfig&,
                                                   const LoraSet<float>*);
template std::vector<TensorRef<double>> tensor_refs(ModelGrads<double>&, const ModelConfig&,
                                                    const LoraSet<double>*);

}  // namespace cove
