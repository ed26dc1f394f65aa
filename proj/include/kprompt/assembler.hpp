#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kprompt/prompt.hpp"
#include "kprompt/rng.hpp"
#include "kprompt/vocab.hpp"

namespace kprompt {

constexpr int kIgnoreLabel = -1;
constexpr int kDefaultMaxSeqLen = 256;

struct PromptSpan {
    int begin;       // first token of the prompt block ([K])
    int end;         // one past [/K]
    int trig_open;   // [K] position
    int trig_close;  // [/K] position
};

// One encoder input: [CLS] context [SEP] P_1 .. P_m. Context rows carry
// segment 0 and prompt_index 0; prompt u carries segment 1 and prompt_index u.
// Every prompt's position ids restart at context_len + 1. The additive mask
// holds -inf exactly where two tokens sit in different prompts.
struct InputSequence {
    std::vector<int> token_ids;
    std::vector<int> position_ids;
    std::vector<int> segment_ids;
    std::vector<int> prompt_index;
    std::vector<std::vector<double>> mask;
    std::vector<PromptSpan> prompt_spans;
    std::vector<int> mlm_labels;  // kIgnoreLabel where unsupervised
    int context_len = 0;          // sentence tokens, excluding [CLS]/[SEP]
    bool mlm_applied = false;
    bool mlm_skipped = false;  // context too short to mask

    std::size_t length() const { return token_ids.size(); }
    std::vector<int> mask_positions() const;  // positions holding the [MASK] id
};

// Indices of `prompts` in canonical order (lexicographic over encoded ids);
// callers sort before assembly so downstream runs are order-independent.
std::vector<std::size_t> canonical_prompt_order(const std::vector<KnowledgePrompt>& prompts,
                                                const Vocab& vocab);

InputSequence assemble(const std::vector<std::string>& sentence_tokens,
                       const std::vector<KnowledgePrompt>& prompts, const Vocab& vocab,
                       int max_len = kDefaultMaxSeqLen);

// BERT-style corruption over context words only: ceil(rate * context_len)
// positions, 80% -> [MASK], 10% -> random vocab id, 10% unchanged. Labels get
// the original ids. Fewer than 2 maskable tokens -> unchanged, mlm_skipped set.
InputSequence apply_mlm_masking(const InputSequence& seq, const Vocab& vocab, Rng& rng,
                                double rate = 0.15);

}  // namespace kprompt
