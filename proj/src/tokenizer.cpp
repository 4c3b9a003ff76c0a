#include "cove/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "cove/io.hpp"

namespace cove {
namespace {

constexpr const char* kSpecialNames[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) fn(text.substr(start, i - start));
    }
}

}  // namespace

BaseTokenizer BaseTokenizer::build(const std::vector<std::string>& corpus, int freq_floor) {
    if (corpus.empty()) throw std::invalid_argument("tokenizer corpus is empty");
    if (freq_floor < 1) throw std::invalid_argument("freq_floor must be >= 1");
    // std::map keeps the surviving words in lexicographic order, which fixes
    // the id assignment independent of hash-table iteration order.
    std::map<std::string, int64_t> counts;
    for (const auto& text : corpus)
        for_each_word(text, [&](std::string_view w) { ++counts[std::string(w)]; });

    BaseTokenizer tok;
    for (const auto& [word, count] : counts)
        if (count >= freq_floor) tok.id_to_word_.push_back(word);
    tok.rebuild_index();
    return tok;
}

void BaseTokenizer::rebuild_index() {
    word_to_id_.clear();
    word_to_id_.reserve(id_to_word_.size());
    for (std::size_t i = 0; i < id_to_word_.size(); ++i)
        word_to_id_.emplace(id_to_word_[i], static_cast<TokenId>(i) + kNumSpecials);
}

TokenId BaseTokenizer::word_id(std::string_view word) const {
    const auto it = word_to_id_.find(std::string(word));
    return it == word_to_id_.end() ? kUnk : it->second;
}

std::vector<TokenId> BaseTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> out;
    for_each_word(text, [&](std::string_view w) { out.push_back(word_id(w)); });
    return out;
}

std::string BaseTokenizer::decode_token(TokenId id) const {
    if (id >= 0 && id < kNumSpecials) return kSpecialNames[id];
    const auto idx = static_cast<std::size_t>(id - kNumSpecials);
    if (id < kNumSpecials || idx >= id_to_word_.size())
        throw std::out_of_range("token id out of base vocabulary: " + std::to_string(id));
    return id_to_word_[idx];
}

std::string BaseTokenizer::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ' ';
        out += decode_token(ids[i]);
    }
    return out;
}

void BaseTokenizer::save_json(const std::filesystem::path& path) const {
    nlohmann::json manifest;
    manifest["specials"] = {{"pad", kPad}, {"unk", kUnk}, {"bos", kBos}, {"eos", kEos}};
    nlohmann::json tokens = nlohmann::json::object();
    for (std::size_t i = 0; i < id_to_word_.size(); ++i)
        tokens[id_to_word_[i]] = static_cast<TokenId>(i) + kNumSpecials;
    manifest["tokens"] = std::move(tokens);
    manifest["vocab_size"] = vocab_size();
    io::write_text(path, manifest.dump(2) + "\n");
}

BaseTokenizer BaseTokenizer::load_json(const std::filesystem::path& path) {
    const auto manifest = nlohmann::json::parse(io::read_text(path));
    const auto& tokens = manifest.at("tokens");
    BaseTokenizer tok;
    tok.id_to_word_.resize(tokens.size());
    for (const auto& [word, id] : tokens.items()) {
        const auto idx = id.get<TokenId>() - kNumSpecials;
        if (idx < 0 || static_cast<std::size_t>(idx) >= tok.id_to_word_.size())
            throw std::runtime_error("tokenizer manifest ids are not contiguous: " + path.string());
        tok.id_to_word_[static_cast<std::size_t>(idx)] = word;
    }
    tok.rebuild_index();
    if (tok.vocab_size() != manifest.at("vocab_size").get<int32_t>())
        throw std::runtime_error("tokenizer manifest vocab_size mismatch: " + path.string());
    return tok;
}

TokenId ExpandedVocabulary::item_token_id(int32_t item_index) const {
    if (item_index < 0 || item_index >= item_count)
        throw std::out_of_range("item_index out of range: " + std::to_string(item_index));
    return base_size + item_index;
}

std::optional<int32_t> ExpandedVocabulary::token_to_item(TokenId token) const {
    if (token < base_size || token >= base_size + item_count) return std::nullopt;
    return token - base_size;
}

ExpandedVocabulary expand_vocabulary(const BaseTokenizer& tok, const ItemCatalog& catalog) {
    return ExpandedVocabulary{tok.vocab_size(), catalog.count()};
}

}  // namespace cove
