#include "kprompt/prompt.hpp"

#include <algorithm>

#include "kprompt/errors.hpp"

namespace kprompt {

namespace tokens {

std::string pseudo(int i) {
    if (i < 1 || i > kPseudoCount) throw ConfigError("pseudo token index out of range");
    return "[P" + std::to_string(i) + "]";
}

bool is_pseudo(const std::string& tok) {
    if (tok.size() != 4 || tok[0] != '[' || tok[1] != 'P' || tok[3] != ']') return false;
    return tok[2] >= '1' && tok[2] <= '0' + kPseudoCount;
}

bool is_special(const std::string& tok) {
    return tok == kPad || tok == kUnk || tok == kCls || tok == kSep || tok == kMask ||
           tok == kTrigOpen || tok == kTrigClose || is_pseudo(tok);
}

}  // namespace tokens

VerbalizerTable VerbalizerTable::build(const KnowledgeGraph& kg, const MentionLexicon& lex) {
    VerbalizerTable table;
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count()); ++e) {
        auto mentions = lex.aliases_of(e);
        if (mentions.empty()) mentions.push_back(tokenize(kg.entity_name(e)));
        table.mentions_[e] = std::move(mentions);
    }
    return table;
}

const std::vector<std::vector<std::string>>& VerbalizerTable::verbalize(EntityId e) const {
    auto it = mentions_.find(e);
    if (it == mentions_.end()) throw DataError("verbalizer: unknown entity id " + std::to_string(e));
    return it->second;
}

bool VerbalizerTable::contains(EntityId e) const { return mentions_.count(e) > 0; }

namespace {

void append_entity(KnowledgePrompt& p, EntityId e, const KnowledgeGraph& kg) {
    auto words = tokenize(kg.entity_name(e));
    EntitySpan span{static_cast<int>(p.tokens.size()),
                    static_cast<int>(p.tokens.size() + words.size()), e};
    p.tokens.insert(p.tokens.end(), words.begin(), words.end());
    p.entity_spans.push_back(span);
}

void append_relation(KnowledgePrompt& p, RelationId r, const KnowledgeGraph& kg) {
    // Snake_case relation identifiers surface as their space-joined words.
    std::string name = kg.relation_name(r);
    for (char& c : name)
        if (c == '_') c = ' ';
    auto words = tokenize(name);
    p.tokens.insert(p.tokens.end(), words.begin(), words.end());
}

void append_pseudo(KnowledgePrompt& p, int i, bool with_pseudo) {
    if (with_pseudo) p.tokens.push_back(tokens::pseudo(i));
}

}  // namespace

KnowledgePrompt render(const SubStructure& sub, const KnowledgeGraph& kg, bool with_pseudo) {
    KnowledgePrompt p;
    p.source = sub;
    p.tokens.push_back(tokens::kTrigOpen);

    switch (sub.kind) {
        case SubStructureKind::OneHopOneChain: {
            if (sub.paths.size() != 1 || sub.paths[0].length() != 1)
                throw DataError("1h1c sub-structure must hold one 1-hop path");
            const auto& path = sub.paths[0];
            append_entity(p, path.origin, kg);
            append_pseudo(p, 1, with_pseudo);
            append_relation(p, path.hops[0].first, kg);
            append_pseudo(p, 2, with_pseudo);
            append_entity(p, path.hops[0].second, kg);
            break;
        }
        case SubStructureKind::TwoHopOneChain: {
            if (sub.paths.size() != 1 || sub.paths[0].length() != 2)
                throw DataError("2h1c sub-structure must hold one 2-hop path");
            const auto& path = sub.paths[0];
            append_entity(p, path.origin, kg);
            append_pseudo(p, 1, with_pseudo);
            append_relation(p, path.hops[0].first, kg);
            append_pseudo(p, 2, with_pseudo);
            append_entity(p, path.hops[0].second, kg);
            append_pseudo(p, 3, with_pseudo);
            append_relation(p, path.hops[1].first, kg);
            append_pseudo(p, 4, with_pseudo);
            append_entity(p, path.hops[1].second, kg);
            break;
        }
        case SubStructureKind::TwoHopTwoChain: {
            if (sub.paths.size() != 2 || sub.paths[0].length() != 2 || sub.paths[1].length() != 2)
                throw DataError("2h2c sub-structure must hold two 2-hop paths");
            if (sub.paths[0].hops[0] != sub.paths[1].hops[0])
                throw DataError("2h2c paths must share their first hop");
            const auto& a = sub.paths[0];
            const auto& b = sub.paths[1];
            append_entity(p, a.origin, kg);
            append_pseudo(p, 1, with_pseudo);
            append_relation(p, a.hops[0].first, kg);
            append_pseudo(p, 2, with_pseudo);
            append_entity(p, a.hops[0].second, kg);
            append_pseudo(p, 3, with_pseudo);
            append_relation(p, a.hops[1].first, kg);
            append_pseudo(p, 4, with_pseudo);
            append_entity(p, a.hops[1].second, kg);
            append_pseudo(p, 5, with_pseudo);
            append_relation(p, b.hops[1].first, kg);
            append_pseudo(p, 6, with_pseudo);
            append_entity(p, b.hops[1].second, kg);
            break;
        }
    }

    p.tokens.push_back(tokens::kTrigClose);
    return p;
}

namespace {

// Indices into entity_spans whose entity differs from the prompt's topic.
std::vector<std::size_t> non_topic_spans(const KnowledgePrompt& p) {
    if (p.source.paths.empty()) throw DataError("prompt has no source paths");
    EntityId topic = p.source.paths[0].origin;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.entity_spans.size(); ++i)
        if (p.entity_spans[i].entity != topic) out.push_back(i);
    if (out.empty()) throw DataError("prompt has no non-topic entity span");
    return out;
}

// Splices `words` over [start,end) and shifts later spans by the length delta.
void replace_span(KnowledgePrompt& p, std::size_t span_idx,
                  const std::vector<std::string>& words) {
    EntitySpan& span = p.entity_spans[span_idx];
    int delta = static_cast<int>(words.size()) - (span.end - span.start);
    p.tokens.erase(p.tokens.begin() + span.start, p.tokens.begin() + span.end);
    p.tokens.insert(p.tokens.begin() + span.start, words.begin(), words.end());
    span.end = span.start + static_cast<int>(words.size());
    for (auto& other : p.entity_spans) {
        if (&other == &span) continue;
        if (other.start > span.start) {
            other.start += delta;
            other.end += delta;
        }
    }
}

}  // namespace

KnowledgePrompt make_negative(const KnowledgePrompt& p, const KnowledgeGraph& kg,
                              const std::unordered_set<EntityId>& subgraph_entities, Rng& rng) {
    auto candidates = non_topic_spans(p);
    std::size_t span_idx = candidates[rng.uniform_index(candidates.size())];
    EntityId original = p.entity_spans[span_idx].entity;

    std::vector<EntityId> pool;
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count()); ++e)
        if (!subgraph_entities.count(e) && e != original) pool.push_back(e);
    if (pool.empty()) throw DataError("no corruption candidates outside the sub-graph");
    EntityId replacement = pool[rng.uniform_index(pool.size())];

    KnowledgePrompt out = p;
    replace_span(out, span_idx, tokenize(kg.entity_name(replacement)));
    out.entity_spans[span_idx].entity = replacement;
    out.label = PromptLabel::Negative;
    return out;
}

std::pair<KnowledgePrompt, EntityId> mask_entity(const KnowledgePrompt& p, Rng& rng) {
    auto candidates = non_topic_spans(p);
    std::size_t span_idx = candidates[rng.uniform_index(candidates.size())];
    EntityId masked = p.entity_spans[span_idx].entity;

    KnowledgePrompt out = p;
    replace_span(out, span_idx, {tokens::kMask});
    out.entity_spans.erase(out.entity_spans.begin() + span_idx);
    out.masked_entity = masked;
    return {out, masked};
}

}  // namespace kprompt
