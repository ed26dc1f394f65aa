#include "kprompt/pipeline.hpp"

#include <algorithm>
#include <unordered_set>

#include "kprompt/errors.hpp"

namespace kprompt {

void PipelineConfig::validate() const {
    if (k < 1 || k > 4) throw ConfigError("pipeline: k must lie in 1..4");
    if (max_seq_len < 8) throw ConfigError("pipeline: max sequence length too small");
    if (num_negatives < 1) throw ConfigError("pipeline: need at least one negative");
    if (mlm_rate < 0.0 || mlm_rate > 1.0) throw ConfigError("pipeline: mlm rate must lie in [0,1]");
}

PreparedSentence prepare_sentence(const SentenceRecord& rec, const KnowledgeGraph& kg,
                                  const MentionLexicon& lex, const Vocab& vocab,
                                  const PipelineConfig& pcfg) {
    PreparedSentence ps;
    ps.tokens = tokenize(rec.text);
    if (ps.tokens.empty()) throw DataError("sentence has no tokens: \"" + rec.text + "\"");

    EntityId topic = kg.find_entity(rec.topic);
    if (topic == kNoEntity) throw DataError("unknown topic entity '" + rec.topic + "'");
    ps.topic = topic;

    std::unordered_set<EntityId> mentions;
    for (const auto& span : link_mentions(ps.tokens, lex)) mentions.insert(span.entity);

    auto raw = build_raw_subgraph(kg, ps.topic, pcfg.k);
    ContextSubgraph sg = prune(raw, ps.topic, mentions);
    ps.entity_set = sg.entity_set;

    for (const auto& sub : enumerate_substructures(sg, mentions))
        ps.prompts.push_back(render(sub, kg, pcfg.with_pseudo));

    auto order = canonical_prompt_order(ps.prompts, vocab);
    std::vector<KnowledgePrompt> sorted;
    sorted.reserve(ps.prompts.size());
    for (std::size_t idx : order) sorted.push_back(std::move(ps.prompts[idx]));
    ps.prompts = std::move(sorted);

    // Keep the sequence within budget; prompts are dropped from the tail of
    // the canonical order so the choice stays deterministic.
    std::size_t budget = static_cast<std::size_t>(pcfg.max_seq_len);
    std::size_t total = ps.tokens.size() + 2;
    std::size_t kept = 0;
    for (; kept < ps.prompts.size(); ++kept) {
        if (total + ps.prompts[kept].tokens.size() > budget) break;
        total += ps.prompts[kept].tokens.size();
    }
    if (ps.tokens.size() + 2 > budget)
        throw DataError("sentence exceeds max sequence length: \"" + rec.text + "\"");
    ps.prompts.resize(kept);

    ps.q = pagerank(kg, ps.entity_set);
    return ps;
}

ExampleSupervision build_example(const PreparedSentence& ps, const KnowledgeGraph& kg,
                                 const Vocab& vocab, const PipelineConfig& pcfg, int pri_label,
                                 Rng& rng) {
    std::vector<KnowledgePrompt> prompts = ps.prompts;
    int m = static_cast<int>(prompts.size());

    // The example stream is identical for every supervision switch setting:
    // prompt reservation, corruption, and entity masking always happen, and the
    // enable_* flags only gate which loss terms see the example. Ablations
    // therefore train on the same inputs and differ purely in training signal.
    int u = -1;
    int label = pri_label ? 1 : 0;
    if (m >= 1) {
        u = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(m)));
        if (label == 0) {
            std::unordered_set<EntityId> shield(ps.entity_set.begin(), ps.entity_set.end());
            prompts[static_cast<std::size_t>(u)] =
                make_negative(ps.prompts[static_cast<std::size_t>(u)], kg, shield, rng);
        }
    }

    int w = -1;
    EntityId positive = kNoEntity;
    if (m >= 2) {
        w = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(m - 1)));
        if (w >= u) ++w;
        auto masked = mask_entity(ps.prompts[static_cast<std::size_t>(w)], rng);
        prompts[static_cast<std::size_t>(w)] = std::move(masked.first);
        positive = masked.second;
    }

    ExampleSupervision ex;
    ex.seq = assemble(ps.tokens, prompts, vocab, pcfg.max_seq_len);
    if (!pcfg.with_mask_matrix)
        for (auto& row : ex.seq.mask) std::fill(row.begin(), row.end(), 0.0);
    ex.seq = apply_mlm_masking(ex.seq, vocab, rng, pcfg.mlm_rate);

    if (pcfg.enable_pri && u >= 0) {
        const PromptSpan& span = ex.seq.prompt_spans[static_cast<std::size_t>(u)];
        ex.pri = PriExample{u, span.trig_open, span.trig_close, label};
    }
    if (pcfg.enable_mpm && w >= 0) {
        const PromptSpan& span = ex.seq.prompt_spans[static_cast<std::size_t>(w)];
        int mask_pos = -1;
        for (int i = span.begin; i < span.end; ++i)
            if (ex.seq.token_ids[static_cast<std::size_t>(i)] == Vocab::kMaskId) {
                if (mask_pos >= 0) throw DataError("masked prompt holds multiple [MASK] tokens");
                mask_pos = i;
            }
        if (mask_pos < 0) throw DataError("masked prompt lost its [MASK] token");

        MpmExample mpm;
        mpm.prompt_idx = w;
        mpm.mask_pos = mask_pos;
        mpm.positive = positive;
        mpm.negatives = sample_negatives(ps.q, {positive}, pcfg.num_negatives, kg, rng);
        double fallback_q = 1.0 / static_cast<double>(kg.entity_count());
        mpm.q[positive] = ps.q.contains(positive) ? ps.q.score(positive) : fallback_q;
        for (EntityId neg : mpm.negatives)
            mpm.q[neg] = ps.q.contains(neg) ? ps.q.score(neg) : fallback_q;
        ex.mpm = std::move(mpm);
    }
    return ex;
}

DataBundle load_bundle(const DataPaths& paths, const PipelineConfig& pcfg) {
    pcfg.validate();
    DataBundle b;
    b.kg = KnowledgeGraph::load_triples(paths.triples);
    b.lex = paths.aliases.empty() ? MentionLexicon::build(b.kg)
                                  : MentionLexicon::build(b.kg, paths.aliases);
    b.verb = VerbalizerTable::build(b.kg, b.lex);

    auto records = load_corpus(paths.corpus);

    std::vector<std::vector<std::string>> texts;
    texts.reserve(records.size());
    for (const auto& rec : records) texts.push_back(tokenize(rec.text));
    for (EntityId e = 0; e < static_cast<EntityId>(b.kg.entity_count()); ++e)
        for (const auto& mention : b.verb.verbalize(e)) texts.push_back(mention);
    for (RelationId r = 0; r < static_cast<RelationId>(b.kg.relation_count()); ++r) {
        std::string name = b.kg.relation_name(r);
        for (char& c : name)
            if (c == '_') c = ' ';
        texts.push_back(tokenize(name));
    }
    b.vocab = Vocab::build(texts);

    std::size_t total_prompts = 0;
    b.prepared.reserve(records.size());
    for (const auto& rec : records) {
        b.prepared.push_back(prepare_sentence(rec, b.kg, b.lex, b.vocab, pcfg));
        total_prompts += b.prepared.back().prompts.size();
    }
    b.prompts_per_sentence =
        records.empty() ? 0.0 : static_cast<double>(total_prompts) / records.size();
    return b;
}

}  // namespace kprompt
