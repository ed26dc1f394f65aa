#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace kprompt {

// Word-level vocabulary. Special tokens occupy a fixed id prefix so ids stay
// stable across rebuilds; surface words follow in lexicographic order.
class Vocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kClsId = 2;
    static constexpr int kSepId = 3;
    static constexpr int kMaskId = 4;
    static constexpr int kTrigOpenId = 5;
    static constexpr int kTrigCloseId = 6;
    static constexpr int kFirstPseudoId = 7;  // [P1]..[P6] -> 7..12
    static constexpr int kNumSpecial = 13;

    static Vocab build(const std::vector<std::vector<std::string>>& texts);
    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    int id(const std::string& token) const;  // kUnkId when absent
    const std::string& token(int id) const;
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::size_t size() const { return tokens_.size(); }
    bool is_special(int id) const { return id >= 0 && id < kNumSpecial; }
    int pseudo_id(int i) const;  // 1-based

private:
    void index();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace kprompt
