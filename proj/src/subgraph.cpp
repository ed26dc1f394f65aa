#include "kprompt/subgraph.hpp"

#include <algorithm>
#include <map>

#include "kprompt/errors.hpp"

namespace kprompt {

bool ContextSubgraph::contains_entity(EntityId e) const {
    return std::binary_search(entity_set.begin(), entity_set.end(), e);
}

namespace {

void extend_paths(const KnowledgeGraph& kg, EntityId topic, int k, RelationPath& current,
                  std::vector<EntityId>& visited, std::vector<RelationPath>& out) {
    if (static_cast<int>(current.length()) == k) return;
    const EntityId from = current.hops.empty() ? topic : current.tail();
    for (const auto& [r, t] : kg.neighbors(from)) {
        if (t == topic || std::find(visited.begin(), visited.end(), t) != visited.end()) continue;
        current.hops.emplace_back(r, t);
        visited.push_back(t);
        out.push_back(current);
        extend_paths(kg, topic, k, current, visited, out);
        visited.pop_back();
        current.hops.pop_back();
    }
}

}  // namespace

std::vector<RelationPath> build_raw_subgraph(const KnowledgeGraph& kg, EntityId topic, int k) {
    kg.entity_name(topic);  // validates
    if (k < 1 || k > 4) throw ConfigError("build_raw_subgraph: k must be in 1..4");
    std::vector<RelationPath> out;
    RelationPath current{topic, {}};
    std::vector<EntityId> visited;
    extend_paths(kg, topic, k, current, visited, out);
    std::sort(out.begin(), out.end());
    return out;
}

ContextSubgraph prune(const std::vector<RelationPath>& raw, EntityId topic,
                      const std::unordered_set<EntityId>& mentions) {
    std::vector<RelationPath> paths = raw;
    std::size_t max_len = 0;
    for (const auto& p : paths) max_len = std::max(max_len, p.length());

    // Level L: drop every unmentioned tail of a length-L path that no longer
    // surviving path still contains; removal takes every path touching the
    // entity with it. Decisions at one level are simultaneous.
    for (std::size_t level = max_len; level >= 1; --level) {
        std::unordered_set<EntityId> on_longer;
        for (const auto& p : paths)
            if (p.length() > level)
                for (const auto& [r, e] : p.hops) on_longer.insert(e);

        std::unordered_set<EntityId> doomed;
        for (const auto& p : paths) {
            if (p.length() != level) continue;
            const EntityId t = p.tail();
            if (!mentions.count(t) && !on_longer.count(t)) doomed.insert(t);
        }
        if (!doomed.empty()) {
            std::erase_if(paths, [&](const RelationPath& p) {
                for (const auto& [r, e] : p.hops)
                    if (doomed.count(e)) return true;
                return false;
            });
        }
        if (level == 1) break;
    }

    ContextSubgraph sg;
    sg.topic = topic;
    sg.paths = std::move(paths);
    std::sort(sg.paths.begin(), sg.paths.end());
    sg.entity_set.push_back(topic);
    for (const auto& p : sg.paths)
        for (const auto& [r, e] : p.hops) sg.entity_set.push_back(e);
    std::sort(sg.entity_set.begin(), sg.entity_set.end());
    sg.entity_set.erase(std::unique(sg.entity_set.begin(), sg.entity_set.end()),
                        sg.entity_set.end());
    return sg;
}

std::vector<SubStructure> enumerate_substructures(const ContextSubgraph& sg,
                                                  const std::unordered_set<EntityId>& mentions) {
    std::vector<SubStructure> out;

    // 2-hop paths grouped by shared first hop; map keys keep groups sorted.
    std::map<std::pair<RelationId, EntityId>, std::vector<RelationPath>> groups;
    for (const auto& p : sg.paths)
        if (p.length() == 2) groups[p.hops[0]].push_back(p);

    for (auto& [prefix, members] : groups) {
        std::sort(members.begin(), members.end());
        std::size_t i = 0;
        for (; i + 1 < members.size(); i += 2)
            out.push_back({SubStructureKind::TwoHopTwoChain, {members[i], members[i + 1]}});
        if (i < members.size())
            out.push_back({SubStructureKind::TwoHopOneChain, {members[i]}});
    }

    std::vector<RelationPath> singles;
    for (const auto& p : sg.paths)
        if (p.length() == 1 && mentions.count(p.tail())) singles.push_back(p);
    std::sort(singles.begin(), singles.end());
    for (const auto& p : singles) out.push_back({SubStructureKind::OneHopOneChain, {p}});

    return out;
}

std::string path_to_string(const KnowledgeGraph& kg, const RelationPath& p) {
    std::string s = kg.entity_name(p.origin);
    for (const auto& [r, e] : p.hops) {
        s += " -(" + kg.relation_name(r) + ")-> ";
        s += kg.entity_name(e);
    }
    return s;
}

}  // namespace kprompt
