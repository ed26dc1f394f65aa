#include "kprompt/probe.hpp"

#include <limits>
#include <string>

#include "kprompt/assembler.hpp"
#include "kprompt/errors.hpp"
#include "kprompt/objectives.hpp"

namespace kprompt {

namespace {

bool known(const Vocab& vocab, const std::string& tok) {
    return vocab.id(tok) != Vocab::kUnkId || tok == vocab.token(Vocab::kUnkId);
}

}  // namespace

ProbeResult run_probe(const ModelParams& params, const Vocab& vocab,
                      const std::vector<ProbeCase>& cases) {
    if (cases.empty()) throw DataError("probe: no cases to score");

    std::string missing;
    for (const ProbeCase& pc : cases) {
        for (const std::string& c : pc.candidates)
            if (!known(vocab, c)) missing += (missing.empty() ? "" : ", ") + c;
        if (!known(vocab, pc.answer)) missing += (missing.empty() ? "" : ", ") + pc.answer;
    }
    if (!missing.empty())
        throw DataError("probe: tokens absent from the vocabulary: " + missing);

    ProbeResult res;
    std::map<std::string, int> hits;
    for (const ProbeCase& pc : cases) {
        InputSequence seq = assemble(pc.template_tokens, {}, vocab);
        std::vector<int> masks = seq.mask_positions();
        if (masks.size() != 1)
            throw DataError("probe: template must carry exactly one [MASK]: " + pc.subject);

        auto [hidden, tape] = forward(params, seq);
        std::vector<double> logits = mlm_logits(hidden, masks[0], params);

        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pc.candidates.size(); ++i) {
            double v = logits[static_cast<std::size_t>(vocab.id(pc.candidates[i]))];
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }

        bool hit = pc.candidates[best] == pc.answer;
        hits[pc.group] += hit ? 1 : 0;
        res.group_n[pc.group] += 1;
        res.total += 1;
        if (hit) res.overall += 1.0;
    }

    res.overall /= res.total;
    for (const auto& [group, n] : res.group_n)
        res.group_p1[group] = static_cast<double>(hits[group]) / n;
    return res;
}

}  // namespace kprompt
