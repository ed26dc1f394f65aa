#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kprompt/kb.hpp"
#include "kprompt/linker.hpp"
#include "kprompt/rng.hpp"
#include "kprompt/subgraph.hpp"

namespace kprompt {

namespace tokens {
inline const std::string kPad = "[PAD]";
inline const std::string kUnk = "[UNK]";
inline const std::string kCls = "[CLS]";
inline const std::string kSep = "[SEP]";
inline const std::string kMask = "[MASK]";
inline const std::string kTrigOpen = "[K]";
inline const std::string kTrigClose = "[/K]";
constexpr int kPseudoCount = 6;
std::string pseudo(int i);  // 1-based: "[P1]".."[P6]"
bool is_pseudo(const std::string& tok);
bool is_special(const std::string& tok);
}  // namespace tokens

struct EntitySpan {
    int start;
    int end;  // exclusive
    EntityId entity;

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

enum class PromptLabel { Unlabeled, Positive, Negative };

// Continuous prompt: trigger-delimited token sequence mixing surface words
// with pseudo tokens, annotated with entity spans.
struct KnowledgePrompt {
    std::vector<std::string> tokens;
    std::vector<EntitySpan> entity_spans;
    SubStructure source;
    PromptLabel label = PromptLabel::Unlabeled;
    std::optional<EntityId> masked_entity;
};

// Entity -> union of its mention token lists (canonical name plus aliases).
class VerbalizerTable {
public:
    static VerbalizerTable build(const KnowledgeGraph& kg, const MentionLexicon& lex);

    // Deterministic deduplicated mention list; throws on unknown entity.
    const std::vector<std::vector<std::string>>& verbalize(EntityId e) const;

    bool contains(EntityId e) const;

private:
    std::unordered_map<EntityId, std::vector<std::vector<std::string>>> mentions_;
};

// Templates, with entities and relations rendered as tokenized surface names:
//   1h1c: [K] e_S [P1] r1 [P2] e1 [/K]
//   2h1c: [K] e_S [P1] r1 [P2] e1 [P3] r2 [P4] e2 [/K]
//   2h2c: [K] e_S [P1] r1 [P2] e1 [P3] r2 [P4] e2 [P5] r3 [P6] e3 [/K]
// `with_pseudo=false` drops the [Pi] tokens (ablation switch).
KnowledgePrompt render(const SubStructure& sub, const KnowledgeGraph& kg,
                       bool with_pseudo = true);

// Corrupts one uniformly chosen non-topic entity span with a uniformly chosen
// KB entity outside the sentence's sub-graph entity set; label flips to
// Negative. Spans are re-indexed for the new surface length.
KnowledgePrompt make_negative(const KnowledgePrompt& p, const KnowledgeGraph& kg,
                              const std::unordered_set<EntityId>& subgraph_entities, Rng& rng);

// Replaces one uniformly chosen non-topic entity span with a single [MASK]
// token; returns the masked prompt and the masked entity.
std::pair<KnowledgePrompt, EntityId> mask_entity(const KnowledgePrompt& p, Rng& rng);

}  // namespace kprompt
