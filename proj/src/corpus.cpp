#include "kprompt/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kprompt/errors.hpp"
#include "kprompt/linker.hpp"
#include "kprompt/prompt.hpp"

namespace kprompt {

namespace {

using nlohmann::json;

json parse_line(const std::string& line, const std::string& path, std::size_t line_no) {
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
        throw DataError(path + ":" + std::to_string(line_no) + ": invalid JSON object");
    return obj;
}

std::string require_string(const json& obj, const char* field, const std::string& path,
                           std::size_t line_no) {
    if (!obj.contains(field) || !obj[field].is_string())
        throw DataError(path + ":" + std::to_string(line_no) + ": missing string field '" +
                        field + "'");
    return obj[field].get<std::string>();
}

}  // namespace

std::vector<SentenceRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read corpus file: " + path);
    std::vector<SentenceRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = parse_line(line, path, line_no);
        SentenceRecord rec;
        rec.text = require_string(obj, "text", path, line_no);
        rec.topic = require_string(obj, "topic_entity", path, line_no);
        if (rec.text.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty text");
        out.push_back(std::move(rec));
    }
    if (out.empty()) throw DataError("corpus file has no records: " + path);
    return out;
}

std::vector<std::string> tokenize_template(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream stream(text);
    std::string chunk;
    while (stream >> chunk) {
        if (chunk == tokens::kMask) {
            out.push_back(tokens::kMask);
            continue;
        }
        auto words = tokenize(chunk);
        out.insert(out.end(), words.begin(), words.end());
    }
    return out;
}

std::vector<ProbeCase> load_probe_cases(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read probe cases: " + path);
    std::vector<ProbeCase> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = parse_line(line, path, line_no);
        ProbeCase pc;
        pc.template_tokens = tokenize_template(require_string(obj, "template", path, line_no));
        pc.subject = require_string(obj, "subject", path, line_no);
        pc.answer = require_string(obj, "answer", path, line_no);
        pc.group = require_string(obj, "group", path, line_no);
        if (!obj.contains("candidates") || !obj["candidates"].is_array())
            throw DataError(path + ":" + std::to_string(line_no) + ": missing candidates array");
        for (const auto& c : obj["candidates"]) {
            if (!c.is_string())
                throw DataError(path + ":" + std::to_string(line_no) + ": candidate is not a string");
            pc.candidates.push_back(c.get<std::string>());
        }

        int masks = 0;
        for (const auto& tok : pc.template_tokens)
            if (tok == tokens::kMask) ++masks;
        if (masks != 1)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": template must hold exactly one [MASK]");
        if (pc.candidates.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty candidate set");
        bool gold_present = false;
        for (const auto& c : pc.candidates) gold_present = gold_present || c == pc.answer;
        if (!gold_present)
            throw DataError(path + ":" + std::to_string(line_no) + ": answer not among candidates");
        out.push_back(std::move(pc));
    }
    if (out.empty()) throw DataError("probe file has no cases: " + path);
    return out;
}

}  // namespace kprompt
