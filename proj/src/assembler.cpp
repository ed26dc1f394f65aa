#include "kprompt/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kprompt/errors.hpp"

namespace kprompt {

std::vector<int> InputSequence::mask_positions() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < token_ids.size(); ++i)
        if (token_ids[i] == Vocab::kMaskId) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<std::size_t> canonical_prompt_order(const std::vector<KnowledgePrompt>& prompts,
                                                const Vocab& vocab) {
    std::vector<std::vector<int>> keys;
    keys.reserve(prompts.size());
    for (const auto& p : prompts) keys.push_back(vocab.encode(p.tokens));
    std::vector<std::size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    return order;
}

InputSequence assemble(const std::vector<std::string>& sentence_tokens,
                       const std::vector<KnowledgePrompt>& prompts, const Vocab& vocab,
                       int max_len) {
    if (sentence_tokens.empty()) throw DataError("assemble: empty sentence");

    std::size_t total = sentence_tokens.size() + 2;
    for (const auto& p : prompts) total += p.tokens.size();
    if (total > static_cast<std::size_t>(max_len)) {
        std::string head;
        for (std::size_t i = 0; i < sentence_tokens.size() && i < 6; ++i)
            head += (i ? " " : "") + sentence_tokens[i];
        throw DataError("assemble: sequence length " + std::to_string(total) + " exceeds " +
                        std::to_string(max_len) + " for sentence starting \"" + head + "\"");
    }

    InputSequence seq;
    seq.context_len = static_cast<int>(sentence_tokens.size());
    seq.token_ids.reserve(total);
    seq.position_ids.reserve(total);
    seq.segment_ids.reserve(total);
    seq.prompt_index.reserve(total);

    auto push = [&](int tok, int pos, int seg, int pidx) {
        seq.token_ids.push_back(tok);
        seq.position_ids.push_back(pos);
        seq.segment_ids.push_back(seg);
        seq.prompt_index.push_back(pidx);
    };

    push(Vocab::kClsId, 0, 0, 0);
    for (std::size_t i = 0; i < sentence_tokens.size(); ++i)
        push(vocab.id(sentence_tokens[i]), static_cast<int>(i) + 1, 0, 0);
    push(Vocab::kSepId, seq.context_len + 1, 0, 0);

    int prompt_start_pos = seq.context_len + 1;
    for (std::size_t u = 0; u < prompts.size(); ++u) {
        const auto& p = prompts[u];
        if (p.tokens.empty()) throw DataError("assemble: empty prompt");
        PromptSpan span{};
        span.begin = static_cast<int>(seq.token_ids.size());
        for (std::size_t i = 0; i < p.tokens.size(); ++i)
            push(vocab.id(p.tokens[i]), prompt_start_pos + static_cast<int>(i), 1,
                 static_cast<int>(u) + 1);
        span.end = static_cast<int>(seq.token_ids.size());
        span.trig_open = span.begin;
        span.trig_close = span.end - 1;
        if (seq.token_ids[span.trig_open] != Vocab::kTrigOpenId ||
            seq.token_ids[span.trig_close] != Vocab::kTrigCloseId)
            throw DataError("assemble: prompt not delimited by trigger tokens");
        seq.prompt_spans.push_back(span);
    }

    std::size_t n = seq.token_ids.size();
    const double ninf = -std::numeric_limits<double>::infinity();
    seq.mask.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            int pi = seq.prompt_index[i];
            int pj = seq.prompt_index[j];
            if (pi > 0 && pj > 0 && pi != pj) seq.mask[i][j] = ninf;
        }

    seq.mlm_labels.assign(n, kIgnoreLabel);
    return seq;
}

InputSequence apply_mlm_masking(const InputSequence& seq, const Vocab& vocab, Rng& rng,
                                double rate) {
    if (seq.mlm_applied) throw DataError("apply_mlm_masking: sequence already masked");
    InputSequence out = seq;
    out.mlm_applied = true;

    // Maskable region: the sentence words between [CLS] and [SEP].
    if (seq.context_len < 2) {
        out.mlm_skipped = true;
        return out;
    }

    int n_select = static_cast<int>(std::ceil(rate * seq.context_len));
    std::vector<int> positions(static_cast<std::size_t>(seq.context_len));
    std::iota(positions.begin(), positions.end(), 1);
    rng.shuffle(positions);
    positions.resize(static_cast<std::size_t>(n_select));
    std::sort(positions.begin(), positions.end());

    for (int pos : positions) {
        out.mlm_labels[static_cast<std::size_t>(pos)] = seq.token_ids[static_cast<std::size_t>(pos)];
        double u = rng.uniform01();
        if (u < 0.8)
            out.token_ids[static_cast<std::size_t>(pos)] = Vocab::kMaskId;
        else if (u < 0.9)
            out.token_ids[static_cast<std::size_t>(pos)] =
                static_cast<int>(rng.uniform_index(vocab.size()));
        // else: keep the original token.
    }
    return out;
}

}  // namespace kprompt
