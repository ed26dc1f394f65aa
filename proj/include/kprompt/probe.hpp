#pragma once

#include <map>
#include <string>
#include <vector>

#include "kprompt/corpus.hpp"
#include "kprompt/encoder.hpp"
#include "kprompt/vocab.hpp"

namespace kprompt {

struct ProbeResult {
    double overall = 0.0;  // P@1 across all cases
    int total = 0;
    std::map<std::string, double> group_p1;
    std::map<std::string, int> group_n;
};

// Cloze evaluation: each template is encoded without prompts, the MLM head is
// scored at the single [MASK], and the argmax over the candidate ids (ties ->
// earliest candidate) must be the answer. Unknown candidate or answer tokens
// raise DataError naming them.
ProbeResult run_probe(const ModelParams& params, const Vocab& vocab,
                      const std::vector<ProbeCase>& cases);

}  // namespace kprompt
