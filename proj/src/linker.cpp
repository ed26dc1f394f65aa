#include "kprompt/linker.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "kprompt/errors.hpp"

namespace kprompt {

std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '-' || c == '\''; }

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t start,
                        std::size_t len) {
    std::string key;
    for (std::size_t i = start; i < start + len; ++i) {
        if (i > start) key += ' ';
        key += lowercase(tokens[i]);
    }
    return key;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else if (is_word_char(c)) {
            current += static_cast<char>(std::tolower(c));
        } else {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
            tokens.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

void MentionLexicon::insert(const std::string& alias_text, EntityId e) {
    auto tokens = tokenize(alias_text);
    if (tokens.empty()) return;
    const std::string key = join_tokens(tokens, 0, tokens.size());
    auto it = table_.find(key);
    if (it == table_.end()) {
        table_.emplace(key, e);
        insertion_order_.emplace_back(key, e);
        max_alias_tokens_ = std::max(max_alias_tokens_, tokens.size());
        return;
    }
    // Collision: the smallest entity id wins, independent of insertion order.
    if (e < it->second) {
        for (auto& [k, v] : insertion_order_)
            if (k == key) v = e;
        it->second = e;
    }
}

void MentionLexicon::add_alias(const KnowledgeGraph& kg, EntityId e, const std::string& alias) {
    kg.entity_name(e);  // validates
    insert(alias, e);
}

MentionLexicon MentionLexicon::build(const KnowledgeGraph& kg) {
    MentionLexicon lex;
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count()); ++e)
        lex.insert(kg.entity_name(e), e);
    return lex;
}

MentionLexicon MentionLexicon::build(const KnowledgeGraph& kg, const std::string& alias_path) {
    MentionLexicon lex = build(kg);
    std::ifstream in(alias_path);
    if (!in) throw DataError("cannot open alias file: " + alias_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw DataError(alias_path + ":" + std::to_string(line_no) +
                            ": expected entity-id<TAB>alias");
        const std::string name = line.substr(0, tab);
        const std::string alias = line.substr(tab + 1);
        const EntityId e = kg.find_entity(name);
        if (e == kNoEntity)
            throw DataError(alias_path + ":" + std::to_string(line_no) + ": unknown entity '" +
                            name + "'");
        lex.insert(alias, e);
    }
    return lex;
}

EntityId MentionLexicon::lookup(const std::vector<std::string>& tokens, std::size_t start,
                                std::size_t len) const {
    if (len == 0 || start + len > tokens.size()) return kNoEntity;
    auto it = table_.find(join_tokens(tokens, start, len));
    return it == table_.end() ? kNoEntity : it->second;
}

std::vector<std::vector<std::string>> MentionLexicon::aliases_of(EntityId e) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& [key, ent] : insertion_order_) {
        if (ent != e) continue;
        std::vector<std::string> toks;
        std::string cur;
        for (char c : key) {
            if (c == ' ') {
                toks.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) toks.push_back(cur);
        if (std::find(out.begin(), out.end(), toks) == out.end()) out.push_back(std::move(toks));
    }
    return out;
}

std::vector<MentionSpan> link_mentions(const std::vector<std::string>& tokens,
                                       const MentionLexicon& lex) {
    if (tokens.empty()) throw DataError("link_mentions: empty token list");
    std::vector<MentionSpan> spans;
    std::size_t i = 0;
    while (i < tokens.size()) {
        const std::size_t longest = std::min(lex.max_alias_tokens(), tokens.size() - i);
        bool matched = false;
        for (std::size_t len = longest; len >= 1; --len) {
            const EntityId e = lex.lookup(tokens, i, len);
            if (e != kNoEntity) {
                spans.push_back({static_cast<int>(i), static_cast<int>(i + len), e});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return spans;
}

}  // namespace kprompt
