#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "kprompt/kb.hpp"

namespace kprompt {

// A chain of connected triples starting at the topic entity.
struct RelationPath {
    EntityId origin;
    std::vector<std::pair<RelationId, EntityId>> hops;  // 1..k entries

    std::size_t length() const { return hops.size(); }
    EntityId tail() const { return hops.back().second; }

    friend bool operator==(const RelationPath&, const RelationPath&) = default;
    friend auto operator<=>(const RelationPath&, const RelationPath&) = default;
};

// Per-sentence pruned sub-graph: retained paths plus the entity set they span.
struct ContextSubgraph {
    EntityId topic = kNoEntity;
    std::vector<RelationPath> paths;  // canonically sorted
    std::vector<EntityId> entity_set;  // sorted, always contains topic

    bool contains_entity(EntityId e) const;
};

enum class SubStructureKind { OneHopOneChain, TwoHopOneChain, TwoHopTwoChain };

// Prompt building block: a single path, or a pair of 2-hop paths sharing
// their first hop.
struct SubStructure {
    SubStructureKind kind;
    std::vector<RelationPath> paths;  // 1 entry, or 2 for TwoHopTwoChain
};

// All simple relation paths of length 1..k from the topic, in canonical
// (sorted) order; paths never revisit an entity.
std::vector<RelationPath> build_raw_subgraph(const KnowledgeGraph& kg, EntityId topic, int k);

// Two-pass pruning. Longest paths first: the tail of a maximal-length path
// must be mentioned or the tail entity is dropped with every path touching
// it; then interior levels keep an unmentioned tail only when it still sits
// on a longer surviving path.
ContextSubgraph prune(const std::vector<RelationPath>& raw, EntityId topic,
                      const std::unordered_set<EntityId>& mentions);

// Deterministic cover: 2-hop paths grouped by shared first hop and paired
// greedily into two-chains, leftovers become one-chains, then every 1-hop
// path with a mentioned tail becomes a single-triple block.
std::vector<SubStructure> enumerate_substructures(const ContextSubgraph& sg,
                                                  const std::unordered_set<EntityId>& mentions);

std::string path_to_string(const KnowledgeGraph& kg, const RelationPath& p);

}  // namespace kprompt
