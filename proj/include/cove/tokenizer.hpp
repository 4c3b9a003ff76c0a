#pragma once
// Word-level base tokenizer plus the vocabulary expansion that appends one
// token per catalog item after the base vocabulary.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cove/catalog.hpp"

namespace cove {

using TokenId = int32_t;

class BaseTokenizer {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kBos = 2;
    static constexpr TokenId kEos = 3;
    static constexpr TokenId kNumSpecials = 4;

    // Builds the vocabulary from whitespace-delimited words that occur at
    // least freq_floor times across the corpus. Word ids follow the four
    // specials in lexicographic order. Throws on an empty corpus.
    static BaseTokenizer build(const std::vector<std::string>& corpus, int freq_floor = 1);

    int32_t vocab_size() const { return static_cast<int32_t>(id_to_word_.size()) + kNumSpecials; }

    TokenId word_id(std::string_view word) const;           // kUnk when unknown
    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode_token(TokenId id) const;             // specials render as <pad> etc.
    std::string decode(const std::vector<TokenId>& ids) const;

    void save_json(const std::filesystem::path& path) const;
    static BaseTokenizer load_json(const std::filesystem::path& path);

    bool operator==(const BaseTokenizer& other) const { return id_to_word_ == other.id_to_word_; }

private:
    std::vector<std::string> id_to_word_;                   // ids offset by kNumSpecials
    std::unordered_map<std::string, TokenId> word_to_id_;
    void rebuild_index();
};

// Item i <-> token V_base + i.
struct ExpandedVocabulary {
    int32_t base_size = 0;
    int32_t item_count = 0;

    int32_t total_size() const { return base_size + item_count; }
    TokenId item_token_id(int32_t item_index) const;        // throws when out of range
    std::optional<int32_t> token_to_item(TokenId token) const;
    bool is_item_token(TokenId token) const {
        return token >= base_size && token < base_size + item_count;
    }
};

ExpandedVocabulary expand_vocabulary(const BaseTokenizer& tok, const ItemCatalog& catalog);

}  // namespace cove
