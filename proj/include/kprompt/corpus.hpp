#pragma once

#include <string>
#include <vector>

namespace kprompt {

struct SentenceRecord {
    std::string text;
    std::string topic;  // entity identifier string
};

// JSON Lines: {"text": ..., "topic_entity": ...}
std::vector<SentenceRecord> load_corpus(const std::string& path);

struct ProbeCase {
    std::vector<std::string> template_tokens;  // exactly one [MASK]
    std::string subject;
    std::string answer;  // single vocabulary token
    std::vector<std::string> candidates;
    std::string group;
};

// JSON Lines: {"template": "... [MASK] ...", "subject": ..., "answer": ...,
//              "candidates": [...], "group": ...}
std::vector<ProbeCase> load_probe_cases(const std::string& path);

// Whitespace split where "[MASK]" survives verbatim and everything else runs
// through the linker tokenizer.
std::vector<std::string> tokenize_template(const std::string& text);

}  // namespace kprompt
