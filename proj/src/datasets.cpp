#include "cove/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "cove/errors.hpp"
#include "cove/io.hpp"
#include "cove/rng.hpp"

namespace cove {
namespace {

struct RawRecord {
    std::string user_id;
    int32_t item_index;
    double timestamp;
    std::size_t file_order;
};

PromptSample make_sample(const ItemCatalog& catalog, const std::vector<int32_t>& items,
                         std::size_t target_pos, int32_t max_history,
                         const SplitOptions& options) {
    PromptSample s;
    s.instruction = options.instruction;
    s.include_titles = options.include_titles;
    const std::size_t first =
        target_pos > static_cast<std::size_t>(max_history) ? target_pos - max_history : 0;
    for (std::size_t i = first; i < target_pos; ++i)
        s.history.emplace_back(items[i], catalog.item(items[i]).title);
    s.target = items[target_pos];
    return s;
}

}  // namespace

LoadResult load_interactions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open interactions file: " + path.string());

    LoadResult result;
    // user -> per-record (timestamp, file order) so sorting is stable for
    // records without timestamps
    std::vector<RawRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": malformed JSON: " + e.what());
        }
        if (!rec.contains("user_id") || !rec.contains("external_item_id") ||
            !rec.contains("title"))
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": record needs user_id, external_item_id, title");
        RawRecord raw;
        try {
            raw.user_id = rec.at("user_id").get<std::string>();
            const auto ext = rec.at("external_item_id").get<std::string>();
            raw.item_index =
                result.catalog.add_or_get(ext, rec.at("title").get<std::string>());
            raw.timestamp = rec.contains("timestamp") ? rec.at("timestamp").get<double>()
                                                      : static_cast<double>(line_no);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": bad field type: " + e.what());
        }
        raw.file_order = line_no;
        records.push_back(std::move(raw));
    }

    // group by user, preserving first-appearance order of users
    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<RawRecord>> by_user;
    for (auto& r : records) {
        auto it = by_user.find(r.user_id);
        if (it == by_user.end()) {
            user_order.push_back(r.user_id);
            it = by_user.emplace(r.user_id, std::vector<RawRecord>{}).first;
        }
        it->second.push_back(std::move(r));
    }
    for (const auto& user : user_order) {
        auto& recs = by_user.at(user);
        std::stable_sort(recs.begin(), recs.end(), [](const RawRecord& a, const RawRecord& b) {
            return a.timestamp < b.timestamp;
        });
        if (recs.size() < 2) {
            ++result.dropped_short;
            std::fprintf(stderr, "warning: dropping sequence for user %s (length %zu < 2)\n",
                         user.c_str(), recs.size());
            continue;
        }
        InteractionSequence seq;
        seq.user_id = user;
        seq.items.reserve(recs.size());
        for (const auto& r : recs) seq.items.push_back(r.item_index);
        result.sequences.push_back(std::move(seq));
    }
    return result;
}

void save_interactions(const std::filesystem::path& path, const ItemCatalog& catalog,
                       const std::vector<InteractionSequence>& sequences) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    for (const auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.items.size(); ++i) {
            const Item& item = catalog.item(seq.items[i]);
            nlohmann::json rec;
            rec["user_id"] = seq.user_id;
            rec["external_item_id"] = item.external_id;
            rec["title"] = item.title;
            rec["timestamp"] = static_cast<double>(i);
            out << rec.dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

DatasetSplit leave_last_out_split(const std::vector<InteractionSequence>& sequences,
                                  const ItemCatalog& catalog, const SplitOptions& options) {
    if (options.max_history < 1) throw std::invalid_argument("max_history must be >= 1");
    DatasetSplit split;
    // validation is carved per sequence so near-duplicate prefixes of one
    // sequence never straddle the train/val boundary
    auto stream = rng::substream(options.seed, "valsplit");
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    stream.shuffle(order.begin(), order.end());
    const std::size_t n_val =
        static_cast<std::size_t>(options.val_fraction * static_cast<double>(sequences.size()));
    std::set<std::size_t> val_set(order.begin(), order.begin() + static_cast<long>(n_val));

    for (std::size_t si = 0; si < sequences.size(); ++si) {
        const auto& items = sequences[si].items;
        if (items.size() < 2) continue;
        auto& train_sink = val_set.contains(si) ? split.validation : split.train;
        for (std::size_t j = 1; j + 1 < items.size(); ++j)
            train_sink.push_back(make_sample(catalog, items, j, options.max_history, options));
        split.test.push_back(
            make_sample(catalog, items, items.size() - 1, options.max_history, options));
    }
    return split;
}

void SyntheticSpec::validate() const {
    if (n_items < 1 || n_categories < 1) throw std::invalid_argument("need items and categories");
    if (n_categories > n_items) throw std::invalid_argument("more categories than items");
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be > 0");
    if (title_words < 1 || words_per_category < 1)
        throw std::invalid_argument("title settings must be positive");
    if (min_len < 2 || max_len < min_len) throw std::invalid_argument("bad length range");
    if (n_sequences < 1) throw std::invalid_argument("n_sequences must be >= 1");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData data;

    // per-category word pools; pseudo-words kept globally unique so titles
    // identify their category
    static const char* kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ha", "ki", "lo",
                                       "ma", "ne", "or", "pi", "qua", "re", "su", "ta",
                                       "ul", "ve", "wo", "xi", "yo", "zu", "br", "sk"};
    constexpr std::size_t kNumSyllables = sizeof(kSyllables) / sizeof(kSyllables[0]);
    auto title_stream = rng::substream(spec.seed, "titles");
    std::set<std::string> used_words;
    std::vector<std::vector<std::string>> pools(static_cast<std::size_t>(spec.n_categories));
    for (auto& pool : pools) {
        while (pool.size() < static_cast<std::size_t>(spec.words_per_category)) {
            const auto n_syll = 2 + title_stream.below(2);  // 2 or 3
            std::string word;
            for (uint64_t s = 0; s < n_syll; ++s)
                word += kSyllables[title_stream.below(kNumSyllables)];
            if (used_words.insert(word).second) pool.push_back(std::move(word));
        }
    }

    for (int32_t i = 0; i < spec.n_items; ++i) {
        const auto cat = static_cast<std::size_t>(i % spec.n_categories);
        const auto& pool = pools[cat];
        std::vector<std::size_t> pick(pool.size());
        std::iota(pick.begin(), pick.end(), 0);
        title_stream.shuffle(pick.begin(), pick.end());
        std::string title;
        for (int32_t wi = 0; wi < spec.title_words; ++wi) {
            if (wi > 0) title += ' ';
            title += pool[pick[static_cast<std::size_t>(wi) % pick.size()]];
        }
        char ext[32];
        std::snprintf(ext, sizeof(ext), "synth-%05d", i);
        data.catalog.add(ext, title);
    }

    // Dirichlet(alpha) transition rows concentrated on the successor
    // category, normalized in log space so alpha -> 0 degrades gracefully to
    // near-deterministic rows instead of underflowing:
    // Gamma(a) = Gamma(a+1) * U^(1/a)  =>  log G = log Gamma(a+1) + log(U)/a
    auto trans_stream = rng::substream(spec.seed, "transitions");
    data.transitions.resize(static_cast<std::size_t>(spec.n_items),
                            static_cast<std::size_t>(spec.n_items));
    for (int32_t i = 0; i < spec.n_items; ++i) {
        const int32_t next_cat = (i % spec.n_categories + 1) % spec.n_categories;
        std::vector<std::pair<int32_t, double>> log_weights;
        double mx = -std::numeric_limits<double>::infinity();
        for (int32_t j = next_cat; j < spec.n_items; j += spec.n_categories) {
            double u = trans_stream.uniform01();
            while (u == 0.0) u = trans_stream.uniform01();
            const double lw =
                std::log(trans_stream.gamma(spec.alpha + 1.0)) + std::log(u) / spec.alpha;
            log_weights.emplace_back(j, lw);
            mx = std::max(mx, lw);
        }
        double total = 0.0;
        double* row = data.transitions.row(static_cast<std::size_t>(i));
        for (auto& [j, lw] : log_weights) {
            lw = std::exp(lw - mx);
            total += lw;
        }
        for (const auto& [j, w] : log_weights) row[static_cast<std::size_t>(j)] = w / total;
    }

    // sequences, each from its own derived stream
    data.sequences.reserve(static_cast<std::size_t>(spec.n_sequences));
    for (int32_t s = 0; s < spec.n_sequences; ++s) {
        auto seq_stream = rng::substream(spec.seed, "sequence" + std::to_string(s));
        const auto len = static_cast<std::size_t>(
            seq_stream.uniform_int(spec.min_len, spec.max_len));
        InteractionSequence seq;
        char uid[32];
        std::snprintf(uid, sizeof(uid), "user-%05d", s);
        seq.user_id = uid;
        int32_t cur = static_cast<int32_t>(seq_stream.below(static_cast<uint64_t>(spec.n_items)));
        seq.items.push_back(cur);
        while (seq.items.size() < len) {
            const double u = seq_stream.uniform01();
            const double* row = data.transitions.row(static_cast<std::size_t>(cur));
            double cum = 0.0;
            int32_t next = -1;
            for (int32_t j = 0; j < spec.n_items; ++j) {
                cum += row[static_cast<std::size_t>(j)];
                if (u < cum) {
                    next = j;
                    break;
                }
            }
            if (next < 0) next = spec.n_items - 1;  // guard for rounding at u ~ 1
            seq.items.push_back(next);
            cur = next;
        }
        data.sequences.push_back(std::move(seq));
    }
    return data;
}

void save_transitions(const std::filesystem::path& path, const Matrix<double>& transitions) {
    nlohmann::json j;
    j["n_items"] = transitions.rows();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < transitions.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < transitions.cols(); ++c) row.push_back(transitions(i, c));
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    io::write_text(path, j.dump() + "\n");
}

Matrix<double> load_transitions(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(io::read_text(path));
    const auto n = j.at("n_items").get<std::size_t>();
    Matrix<double> m(n, n);
    const auto& rows = j.at("rows");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < n; ++c) m(i, c) = rows.at(i).at(c).get<double>();
    return m;
}

std::vector<int32_t> oracle_ranking(const Matrix<double>& transitions, int32_t last_item) {
    const auto n = static_cast<int32_t>(transitions.rows());
    if (last_item < 0 || last_item >= n) throw std::out_of_range("last_item out of range");
    const double* row = transitions.row(static_cast<std::size_t>(last_item));
    std::vector<int32_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        if (row[static_cast<std::size_t>(a)] != row[static_cast<std::size_t>(b)])
            return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)];
        return a < b;
    });
    return order;
}

std::vector<int32_t> popularity_baseline(const std::vector<PromptSample>& train,
                                         int32_t item_count) {
    if (train.empty()) throw std::invalid_argument("empty training split");
    std::vector<int64_t> freq(static_cast<std::size_t>(item_count), 0);
    for (const auto& s : train) {
        if (s.target < 0 || s.target >= item_count)
            throw std::out_of_range("training target outside catalog");
        ++freq[static_cast<std::size_t>(s.target)];
    }
    std::vector<int32_t> order(static_cast<std::size_t>(item_count));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        if (freq[static_cast<std::size_t>(a)] != freq[static_cast<std::size_t>(b)])
            return freq[static_cast<std::size_t>(a)] > freq[static_cast<std::size_t>(b)];
        return a < b;
    });
    return order;
}

void save_samples(const std::filesystem::path& path, const std::vector<PromptSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    for (const auto& s : samples) {
        nlohmann::json rec;
        rec["instruction"] = s.instruction;
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& [idx, title] : s.history) hist.push_back({idx, title});
        rec["history"] = std::move(hist);
        rec["target"] = s.target;
        rec["include_titles"] = s.include_titles;
        out << rec.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<PromptSample> load_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open split manifest: " + path.string());
    std::vector<PromptSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            PromptSample s;
            s.instruction = rec.at("instruction").get<std::string>();
            for (const auto& h : rec.at("history"))
                s.history.emplace_back(h.at(0).get<int32_t>(), h.at(1).get<std::string>());
            s.target = rec.at("target").get<int32_t>();
            s.include_titles = rec.at("include_titles").get<bool>();
            samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": malformed sample: " + e.what());
        }
    }
    return samples;
}

}  // namespace cove
