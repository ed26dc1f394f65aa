#include "kprompt/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kprompt/errors.hpp"

namespace kprompt {

EntityId KnowledgeGraph::add_entity(const std::string& name) {
    auto it = entity_index_.find(name);
    if (it != entity_index_.end()) return it->second;
    EntityId id = static_cast<EntityId>(entity_names_.size());
    entity_names_.push_back(name);
    entity_index_.emplace(name, id);
    adjacency_.emplace_back();
    return id;
}

RelationId KnowledgeGraph::add_relation(const std::string& name) {
    auto it = relation_index_.find(name);
    if (it != relation_index_.end()) return it->second;
    RelationId id = static_cast<RelationId>(relation_names_.size());
    relation_names_.push_back(name);
    relation_index_.emplace(name, id);
    return id;
}

bool KnowledgeGraph::add_triple(EntityId head, RelationId relation, EntityId tail) {
    check_entity(head);
    check_entity(tail);
    if (relation < 0 || static_cast<std::size_t>(relation) >= relation_names_.size())
        throw DataError("add_triple: unknown relation id " + std::to_string(relation));
    auto& edges = adjacency_[head];
    const std::pair<RelationId, EntityId> edge{relation, tail};
    auto pos = std::lower_bound(edges.begin(), edges.end(), edge);
    if (pos != edges.end() && *pos == edge) return false;
    edges.insert(pos, edge);
    ++triple_count_;
    return true;
}

EntityId KnowledgeGraph::find_entity(const std::string& name) const {
    auto it = entity_index_.find(name);
    return it == entity_index_.end() ? kNoEntity : it->second;
}

RelationId KnowledgeGraph::find_relation(const std::string& name) const {
    auto it = relation_index_.find(name);
    return it == relation_index_.end() ? -1 : it->second;
}

const std::string& KnowledgeGraph::entity_name(EntityId e) const {
    check_entity(e);
    return entity_names_[e];
}

const std::string& KnowledgeGraph::relation_name(RelationId r) const {
    if (r < 0 || static_cast<std::size_t>(r) >= relation_names_.size())
        throw DataError("unknown relation id " + std::to_string(r));
    return relation_names_[r];
}

const std::vector<std::pair<RelationId, EntityId>>& KnowledgeGraph::neighbors(EntityId e) const {
    check_entity(e);
    return adjacency_[e];
}

std::vector<Triple> KnowledgeGraph::triples() const {
    std::vector<Triple> out;
    out.reserve(triple_count_);
    for (EntityId h = 0; h < static_cast<EntityId>(adjacency_.size()); ++h)
        for (const auto& [r, t] : adjacency_[h]) out.push_back({h, r, t});
    return out;
}

void KnowledgeGraph::check_entity(EntityId e) const {
    if (e < 0 || static_cast<std::size_t>(e) >= entity_names_.size())
        throw DataError("unknown entity id " + std::to_string(e));
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open triples file: " + path);
    KnowledgeGraph kg;
    std::string line;
    std::size_t line_no = 0;
    bool saw_data = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected head<TAB>relation<TAB>tail");
        saw_data = true;
        EntityId h = kg.add_entity(fields[0]);
        RelationId r = kg.add_relation(fields[1]);
        EntityId t = kg.add_entity(fields[2]);
        kg.add_triple(h, r, t);
    }
    if (!saw_data) throw DataError("triples file has no triples: " + path);
    return kg;
}

double EntityScoreMap::score(EntityId e) const {
    auto it = std::lower_bound(scores.begin(), scores.end(), e,
                               [](const auto& p, EntityId id) { return p.first < id; });
    if (it == scores.end() || it->first != e)
        throw DataError("entity " + std::to_string(e) + " not in score map");
    return it->second;
}

bool EntityScoreMap::contains(EntityId e) const {
    auto it = std::lower_bound(scores.begin(), scores.end(), e,
                               [](const auto& p, EntityId id) { return p.first < id; });
    return it != scores.end() && it->first == e;
}

double EntityScoreMap::sum() const {
    double s = 0.0;
    for (const auto& [_, v] : scores) s += v;
    return s;
}

EntityScoreMap pagerank(const KnowledgeGraph& kg,
                        const std::optional<std::vector<EntityId>>& restrict_nodes,
                        double damping, double tol, int max_iter) {
    if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("pagerank: damping must be in (0,1)");

    std::vector<EntityId> nodes;
    if (restrict_nodes) {
        nodes = *restrict_nodes;
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        for (EntityId e : nodes) kg.entity_name(e);  // validates membership
    } else {
        nodes.resize(kg.entity_count());
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = static_cast<EntityId>(i);
    }
    const std::size_t n = nodes.size();
    if (n == 0) throw DataError("pagerank: empty node set");

    std::unordered_map<EntityId, std::size_t> index;
    index.reserve(n);
    for (std::size_t i = 0; i < n; ++i) index.emplace(nodes[i], i);

    // Symmetrized walk edges induced on the node set; parallel edges kept,
    // they just add weight.
    std::vector<std::vector<std::size_t>> out_links(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [r, t] : kg.neighbors(nodes[i])) {
            auto it = index.find(t);
            if (it == index.end()) continue;
            out_links[i].push_back(it->second);
            out_links[it->second].push_back(i);
        }
    }

    std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
    const double teleport = (1.0 - damping) / static_cast<double>(n);
    for (int iter = 0; iter < max_iter; ++iter) {
        double dangling_mass = 0.0;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (out_links[i].empty()) {
                dangling_mass += p[i];
                continue;
            }
            const double share = p[i] / static_cast<double>(out_links[i].size());
            for (std::size_t j : out_links[i]) next[j] += share;
        }
        const double spread = damping * dangling_mass / static_cast<double>(n);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = teleport + damping * next[i] + spread;
            delta += std::abs(next[i] - p[i]);
        }
        p.swap(next);
        if (delta < tol) break;
    }

    double total = 0.0;
    for (double v : p) total += v;
    EntityScoreMap result;
    result.scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) result.scores.emplace_back(nodes[i], p[i] / total);
    return result;
}

std::vector<EntityId> sample_negatives(const EntityScoreMap& q,
                                       const std::unordered_set<EntityId>& exclude, int n,
                                       const KnowledgeGraph& fallback, Rng& rng) {
    if (n < 1) throw ConfigError("sample_negatives: n must be >= 1");

    std::vector<std::pair<EntityId, double>> pool;
    pool.reserve(q.scores.size());
    for (const auto& [e, w] : q.scores)
        if (!exclude.count(e)) pool.emplace_back(e, w);

    std::vector<EntityId> picked;
    picked.reserve(n);
    std::unordered_set<EntityId> taken;

    // Proportional-to-q draws without replacement.
    while (static_cast<int>(picked.size()) < n && !pool.empty()) {
        double total = 0.0;
        for (const auto& [_, w] : pool) total += w;
        std::size_t chosen = pool.size() - 1;
        if (total > 0.0) {
            const double u = rng.uniform01() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                acc += pool[i].second;
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = rng.uniform_index(pool.size());
        }
        picked.push_back(pool[chosen].first);
        taken.insert(pool[chosen].first);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
    }

    // Uniform top-up from the whole entity set.
    if (static_cast<int>(picked.size()) < n) {
        std::vector<EntityId> rest;
        for (EntityId e = 0; e < static_cast<EntityId>(fallback.entity_count()); ++e)
            if (!exclude.count(e) && !taken.count(e) && !q.contains(e)) rest.push_back(e);
        const int need = n - static_cast<int>(picked.size());
        if (static_cast<int>(rest.size()) < need)
            throw DataError("sample_negatives: need " + std::to_string(need) +
                            " more entities but only " + std::to_string(rest.size()) +
                            " available");
        for (int i = 0; i < need; ++i) {
            std::size_t j = rng.uniform_index(rest.size());
            picked.push_back(rest[j]);
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
        }
    }
    return picked;
}

}  // namespace kprompt
