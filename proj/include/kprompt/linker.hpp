#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kprompt/kb.hpp"

namespace kprompt {

// Lowercases and splits on whitespace; punctuation becomes single-character
// tokens. '-' and '\'' are kept inside words ("covid-19" stays one token).
std::vector<std::string> tokenize(const std::string& text);

std::string lowercase(const std::string& s);

struct MentionSpan {
    int start;  // token index
    int end;    // exclusive
    EntityId entity;

    friend bool operator==(const MentionSpan&, const MentionSpan&) = default;
};

// Alias -> entity table with greedy longest-match lookup. Keys are lowercased
// token sequences; canonical entity names are always included.
class MentionLexicon {
public:
    // Alias file: entity-id<TAB>alias per line, '#' comments. Canonical names
    // are added automatically; colliding aliases resolve to the entity whose
    // canonical name is lexicographically smallest.
    static MentionLexicon build(const KnowledgeGraph& kg, const std::string& alias_path);
    static MentionLexicon build(const KnowledgeGraph& kg);

    void add_alias(const KnowledgeGraph& kg, EntityId e, const std::string& alias);

    // kNoEntity when the token window is not an alias.
    EntityId lookup(const std::vector<std::string>& tokens, std::size_t start,
                    std::size_t len) const;

    std::size_t max_alias_tokens() const { return max_alias_tokens_; }
    std::size_t size() const { return table_.size(); }

    // All aliases registered for e, as lowercased token lists (canonical name
    // first, then file order), deduplicated.
    std::vector<std::vector<std::string>> aliases_of(EntityId e) const;

private:
    void insert(const std::string& alias_text, EntityId e);

    std::unordered_map<std::string, EntityId> table_;  // key: tokens joined by ' '
    std::vector<std::pair<std::string, EntityId>> insertion_order_;
    std::size_t max_alias_tokens_ = 0;
};

// Greedy left-to-right longest-match linking; spans never overlap and come
// out sorted by start.
std::vector<MentionSpan> link_mentions(const std::vector<std::string>& tokens,
                                       const MentionLexicon& lex);

}  // namespace kprompt
