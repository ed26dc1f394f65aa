#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kprompt/rng.hpp"

namespace kprompt {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
constexpr EntityId kNoEntity = -1;

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Entity/relation ids are interned integers; surface names live in side tables.
// Adjacency holds exactly the outgoing edges, sorted by (relation, tail).
class KnowledgeGraph {
public:
    // File format: head<TAB>relation<TAB>tail per line, UTF-8, '#' comments.
    static KnowledgeGraph load_triples(const std::string& path);

    EntityId add_entity(const std::string& name);
    RelationId add_relation(const std::string& name);
    // Returns false if the triple already exists.
    bool add_triple(EntityId head, RelationId relation, EntityId tail);

    EntityId find_entity(const std::string& name) const;  // kNoEntity if missing
    RelationId find_relation(const std::string& name) const;

    const std::string& entity_name(EntityId e) const;
    const std::string& relation_name(RelationId r) const;

    std::size_t entity_count() const { return entity_names_.size(); }
    std::size_t relation_count() const { return relation_names_.size(); }
    std::size_t triple_count() const { return triple_count_; }

    // Outgoing edges of e, sorted by (relation, tail). Throws on unknown entity.
    const std::vector<std::pair<RelationId, EntityId>>& neighbors(EntityId e) const;

    std::vector<Triple> triples() const;

private:
    void check_entity(EntityId e) const;

    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, EntityId> entity_index_;
    std::unordered_map<std::string, RelationId> relation_index_;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> adjacency_;
    std::size_t triple_count_ = 0;
};

// Probability scores over a fixed entity set; entries sorted by entity id.
struct EntityScoreMap {
    std::vector<std::pair<EntityId, double>> scores;

    double score(EntityId e) const;
    bool contains(EntityId e) const;
    double sum() const;
    std::size_t size() const { return scores.size(); }
};

// Damped PageRank by power iteration over the node set `restrict` (all
// entities when absent). Each triple within the node set contributes a walk
// edge in both directions; nodes without edges redistribute their mass
// uniformly. Stops when the L1 change drops below tol or after max_iter.
EntityScoreMap pagerank(const KnowledgeGraph& kg,
                        const std::optional<std::vector<EntityId>>& restrict_nodes = std::nullopt,
                        double damping = 0.85, double tol = 1e-10, int max_iter = 100);

// Draws `n` distinct entities proportionally to q, never returning anything in
// `exclude`; once q's domain is exhausted tops up uniformly from the fallback
// graph's entity set. Deterministic given the generator state.
std::vector<EntityId> sample_negatives(const EntityScoreMap& q,
                                       const std::unordered_set<EntityId>& exclude, int n,
                                       const KnowledgeGraph& fallback, Rng& rng);

}  // namespace kprompt
