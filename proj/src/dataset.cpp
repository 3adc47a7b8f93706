#include "firststep/dataset.hpp"

#include "firststep/annot.hpp"
#include "firststep/errors.hpp"
#include "firststep/extraction.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace firststep::dataset {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string file_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

[[noreturn]] void record_error(const std::string& path, std::size_t line, const std::string& msg) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + msg);
}

json parse_json_line(const std::string& path, std::size_t line_no, const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        record_error(path, line_no, "not a JSON object");
    }
    return j;
}

std::string require_string(const json& j, const char* field, const std::string& path,
                           std::size_t line) {
    if (!j.contains(field) || !j[field].is_string()) {
        record_error(path, line, std::string("missing or non-string field '") + field + "'");
    }
    return j[field].get<std::string>();
}

// Exact numeric conversion: JSON integers convert directly, floats go through
// their shortest decimal form so 17.5 stays 17.5.
Number number_from_json(const json& v, const char* field, const std::string& path,
                        std::size_t line) {
    if (v.is_number_integer()) return Number(v.get<long long>());
    if (v.is_number()) {
        auto parsed = Number::parse_decimal(v.dump());
        if (parsed) return *parsed;
        record_error(path, line, std::string("field '") + field + "' is not a finite decimal");
    }
    if (v.is_string()) return parse_gold_answer(v.get<std::string>());
    record_error(path, line, std::string("field '") + field + "' is not numeric");
}

void for_each_jsonl(const std::string& path, std::ifstream& in,
                    const std::function<void(std::size_t, const std::string&)>& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        fn(line_no, line);
    }
}

void finalize(ProblemSet& set, const std::string& path) {
    if (set.problems.empty()) throw ParseError(path + ": no records");
    std::set<std::string> ids;
    for (const auto& p : set.problems) {
        if (!ids.insert(p.id).second) {
            throw ParseError(path + ": duplicate problem id '" + p.id + "'");
        }
    }
}

std::string synth_id(Format f, std::size_t index1) {
    std::ostringstream os;
    os << to_string(f) << "-";
    std::string n = std::to_string(index1);
    for (std::size_t i = n.size(); i < 4; ++i) os << '0';
    os << n;
    return os.str();
}

}  // namespace

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    if (name == "dev") return Split::Dev;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

Format parse_format(std::string_view name) {
    if (name == "gsm8k") return Format::Gsm8k;
    if (name == "svamp") return Format::Svamp;
    if (name == "asdiv") return Format::Asdiv;
    if (name == "multiarith") return Format::Multiarith;
    if (name == "generic") return Format::Generic;
    throw ConfigError("unknown dataset format '" + std::string(name) + "'");
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Dev: return "dev";
    }
    return "test";
}

std::string to_string(Format f) {
    switch (f) {
        case Format::Gsm8k: return "gsm8k";
        case Format::Svamp: return "svamp";
        case Format::Asdiv: return "asdiv";
        case Format::Multiarith: return "multiarith";
        case Format::Generic: return "generic";
    }
    return "generic";
}

const Problem* ProblemSet::find(const std::string& id) const {
    for (const auto& p : problems) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

Number parse_gold_answer(std::string_view answer_field) {
    std::string_view tail = answer_field;
    std::size_t marker = answer_field.rfind("####");
    if (marker != std::string_view::npos) tail = answer_field.substr(marker + 4);
    auto toks = extraction::scan_numbers(tail);
    if (toks.empty()) {
        throw ExtractionError("no numeric answer in \"" + std::string(answer_field) + "\"");
    }
    return toks.front().value;
}

int count_steps(std::string_view gold_solution) {
    return static_cast<int>(annot::parse_annotations(gold_solution).size());
}

ProblemSet load_problem_set(const std::string& path, Format format, std::string name,
                            Split split) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset file: " + path);

    ProblemSet set;
    set.name = name.empty() ? file_stem(path) : std::move(name);
    set.split = split;

    switch (format) {
        case Format::Gsm8k:
            for_each_jsonl(path, in, [&](std::size_t line_no, const std::string& line) {
                json j = parse_json_line(path, line_no, line);
                Problem p;
                p.id = synth_id(format, set.problems.size() + 1);
                p.question = require_string(j, "question", path, line_no);
                p.gold_solution = require_string(j, "answer", path, line_no);
                try {
                    p.gold_answer = parse_gold_answer(p.gold_solution);
                } catch (const ExtractionError& e) {
                    record_error(path, line_no, std::string("field 'answer': ") + e.what());
                }
                p.steps = count_steps(p.gold_solution);
                if (p.steps < 1) {
                    record_error(path, line_no,
                                 "field 'answer': worked solution has no calculator annotations");
                }
                set.problems.push_back(std::move(p));
            });
            break;

        case Format::Svamp: {
            std::stringstream buf;
            buf << in.rdbuf();
            json root = json::parse(buf.str(), nullptr, false);
            if (root.is_discarded() || !root.is_array()) {
                throw ParseError(path + ": expected a JSON array");
            }
            std::size_t idx = 0;
            for (const auto& j : root) {
                ++idx;
                if (!j.is_object()) record_error(path, idx, "not a JSON object");
                Problem p;
                p.id = synth_id(format, idx);
                p.question = require_string(j, "Body", path, idx) + " " +
                             require_string(j, "Question", path, idx);
                if (!j.contains("Answer")) record_error(path, idx, "missing field 'Answer'");
                p.gold_answer = number_from_json(j["Answer"], "Answer", path, idx);
                set.problems.push_back(std::move(p));
            }
            break;
        }

        case Format::Asdiv:
        case Format::Multiarith:
            for_each_jsonl(path, in, [&](std::size_t line_no, const std::string& line) {
                json j = parse_json_line(path, line_no, line);
                Problem p;
                p.id = synth_id(format, set.problems.size() + 1);
                p.question = require_string(j, "question", path, line_no);
                if (!j.contains("answer")) record_error(path, line_no, "missing field 'answer'");
                p.gold_answer = number_from_json(j["answer"], "answer", path, line_no);
                set.problems.push_back(std::move(p));
            });
            break;

        case Format::Generic:
            for_each_jsonl(path, in, [&](std::size_t line_no, const std::string& line) {
                json j = parse_json_line(path, line_no, line);
                Problem p;
                p.id = require_string(j, "id", path, line_no);
                p.question = require_string(j, "question", path, line_no);
                if (!j.contains("answer")) record_error(path, line_no, "missing field 'answer'");
                try {
                    p.gold_answer = number_from_json(j["answer"], "answer", path, line_no);
                } catch (const ExtractionError& e) {
                    record_error(path, line_no, std::string("field 'answer': ") + e.what());
                }
                if (j.contains("solution")) {
                    p.gold_solution = require_string(j, "solution", path, line_no);
                    p.steps = count_steps(p.gold_solution);
                }
                set.problems.push_back(std::move(p));
            });
            break;
    }

    finalize(set, path);
    return set;
}

void save_problem_set(const ProblemSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write dataset file: " + path);
    for (const auto& p : set.problems) {
        ordered_json j;
        j["id"] = p.id;
        j["question"] = p.question;
        j["answer"] = p.gold_answer.str();
        if (!p.gold_solution.empty()) j["solution"] = p.gold_solution;
        out << j.dump() << "\n";
    }
}

}  // namespace firststep::dataset
