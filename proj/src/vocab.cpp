#include "kprompt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "kprompt/errors.hpp"
#include "kprompt/prompt.hpp"

namespace kprompt {

namespace {

std::vector<std::string> special_tokens() {
    std::vector<std::string> out = {tokens::kPad,  tokens::kUnk,      tokens::kCls,
                                    tokens::kSep,  tokens::kMask,     tokens::kTrigOpen,
                                    tokens::kTrigClose};
    for (int i = 1; i <= tokens::kPseudoCount; ++i) out.push_back(tokens::pseudo(i));
    return out;
}

}  // namespace

void Vocab::index() {
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& texts) {
    std::set<std::string> words;
    for (const auto& text : texts)
        for (const auto& tok : text)
            if (!tokens::is_special(tok)) words.insert(tok);

    Vocab v;
    v.tokens_ = special_tokens();
    v.tokens_.insert(v.tokens_.end(), words.begin(), words.end());
    v.index();
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocab file: " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected token<TAB>id");
        std::string tok = line.substr(0, tab);
        if (std::stoul(line.substr(tab + 1)) != v.tokens_.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": ids must be dense and in order");
        v.tokens_.push_back(tok);
    }
    auto specials = special_tokens();
    if (v.tokens_.size() < specials.size() ||
        !std::equal(specials.begin(), specials.end(), v.tokens_.begin()))
        throw DataError("vocab file missing special-token prefix: " + path);
    v.index();
    if (v.ids_.size() != v.tokens_.size()) throw DataError("vocab file has duplicates: " + path);
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
        throw DataError("vocab id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) out.push_back(id(tok));
    return out;
}

int Vocab::pseudo_id(int i) const {
    if (i < 1 || i > tokens::kPseudoCount) throw ConfigError("pseudo token index out of range");
    return kFirstPseudoId + i - 1;
}

}  // namespace kprompt
