#pragma once
// Prompt samples and their token encoding. A training sequence is
//   BOS  instruction-words  { item-token [title-words] }*  target-item-token  EOS
// and the loss mask selects which token positions the next-token loss covers.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cove/tokenizer.hpp"

namespace cove {

enum class LossScope { all, output_only };

struct PromptSample {
    std::string instruction;
    std::vector<std::pair<int32_t, std::string>> history;  // (item_index, title), chronological
    int32_t target = -1;
    bool include_titles = true;
};

struct EncodedSample {
    std::vector<TokenId> tokens;
    // mask[i] == 1 when token i is a prediction target for the loss
    // (the loss reads logits at i-1). mask[0] is always 0.
    std::vector<uint8_t> loss_mask;
    int32_t target_item = -1;
};

// Full training encoding (prompt + target + EOS).
EncodedSample encode_sample(const ExpandedVocabulary& vocab, const BaseTokenizer& tok,
                            const PromptSample& sample, LossScope scope = LossScope::all);

// Prompt-only encoding: stops where the target item token would begin.
std::vector<TokenId> encode_prompt(const ExpandedVocabulary& vocab, const BaseTokenizer& tok,
                                   const PromptSample& sample);

}  // namespace cove
