#pragma once

#include <string>
#include <vector>

#include "kprompt/assembler.hpp"
#include "kprompt/corpus.hpp"
#include "kprompt/kb.hpp"
#include "kprompt/linker.hpp"
#include "kprompt/objectives.hpp"
#include "kprompt/prompt.hpp"
#include "kprompt/rng.hpp"
#include "kprompt/subgraph.hpp"
#include "kprompt/vocab.hpp"

namespace kprompt {

struct PipelineConfig {
    int k = 2;
    int max_seq_len = kDefaultMaxSeqLen;
    int num_negatives = 10;  // N
    double mlm_rate = 0.15;
    bool with_pseudo = true;       // ablation: drop [Pi] tokens
    bool with_mask_matrix = true;  // ablation: all-zero attention mask
    bool enable_pri = true;
    bool enable_mpm = true;

    void validate() const;
};

// Sentence-level artifacts that do not depend on the epoch seed.
struct PreparedSentence {
    std::vector<std::string> tokens;
    EntityId topic = kNoEntity;
    std::vector<KnowledgePrompt> prompts;  // canonical order
    std::vector<EntityId> entity_set;      // pruned sub-graph entities
    EntityScoreMap q;                      // pagerank over entity_set
};

PreparedSentence prepare_sentence(const SentenceRecord& rec, const KnowledgeGraph& kg,
                                  const MentionLexicon& lex, const Vocab& vocab,
                                  const PipelineConfig& pcfg);

// Epoch-seeded supervision: one PRI prompt (pri_label chooses the class;
// negatives corrupt an entity), one different masked MPM prompt, MLM masking
// over the context. Sentences with one prompt get PRI only; with none, MLM only.
// enable_pri / enable_mpm gate only which supervision records are emitted; the
// input construction (reservation, corruption, masking) never changes, so the
// ablation variants train on identical example streams.
ExampleSupervision build_example(const PreparedSentence& ps, const KnowledgeGraph& kg,
                                 const Vocab& vocab, const PipelineConfig& pcfg, int pri_label,
                                 Rng& rng);

struct DataPaths {
    std::string triples;
    std::string aliases;  // empty -> canonical names only
    std::string corpus;
};

struct DataBundle {
    KnowledgeGraph kg;
    MentionLexicon lex;
    VerbalizerTable verb;
    Vocab vocab;
    std::vector<PreparedSentence> prepared;
    double prompts_per_sentence = 0.0;
};

DataBundle load_bundle(const DataPaths& paths, const PipelineConfig& pcfg);

}  // namespace kprompt
