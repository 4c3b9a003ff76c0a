#include "cove/prompt.hpp"

#include <stdexcept>

namespace cove {
namespace {

void append_history(std::vector<TokenId>& tokens, const ExpandedVocabulary& vocab,
                    const BaseTokenizer& tok, const PromptSample& sample) {
    for (const auto& [item_index, title] : sample.history) {
        tokens.push_back(vocab.item_token_id(item_index));
        if (sample.include_titles) {
            const auto title_tokens = tok.encode(title);
            tokens.insert(tokens.end(), title_tokens.begin(), title_tokens.end());
        }
    }
}

}  // namespace

EncodedSample encode_sample(const ExpandedVocabulary& vocab, const BaseTokenizer& tok,
                            const PromptSample& sample, LossScope scope) {
    if (sample.history.empty()) throw std::invalid_argument("prompt history is empty");

    EncodedSample out;
    out.target_item = sample.target;
    out.tokens.push_back(BaseTokenizer::kBos);
    const auto instruction = tok.encode(sample.instruction);
    out.tokens.insert(out.tokens.end(), instruction.begin(), instruction.end());
    append_history(out.tokens, vocab, tok, sample);
    const std::size_t target_pos = out.tokens.size();
    out.tokens.push_back(vocab.item_token_id(sample.target));
    out.tokens.push_back(BaseTokenizer::kEos);

    out.loss_mask.assign(out.tokens.size(), 0);
    if (scope == LossScope::all) {
        for (std::size_t i = 1; i < out.tokens.size(); ++i) out.loss_mask[i] = 1;
    } else {
        out.loss_mask[target_pos] = 1;      // the target item token
        out.loss_mask[target_pos + 1] = 1;  // and the closing EOS
    }
    return out;
}

std::vector<TokenId> encode_prompt(const ExpandedVocabulary& vocab, const BaseTokenizer& tok,
                                   const PromptSample& sample) {
    if (sample.history.empty()) throw std::invalid_argument("prompt history is empty");
    std::vector<TokenId> tokens;
    tokens.push_back(BaseTokenizer::kBos);
    const auto instruction = tok.encode(sample.instruction);
    tokens.insert(tokens.end(), instruction.begin(), instruction.end());
    append_history(tokens, vocab, tok, sample);
    return tokens;
}

}  // namespace cove
