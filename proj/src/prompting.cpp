#include "firststep/prompting.hpp"

#include "firststep/errors.hpp"
#include "firststep/extraction.hpp"
#include "firststep/sha256.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>

namespace firststep::prompting {

using ordered_json = nlohmann::ordered_json;

const char* const kDefaultPreamble =
    "Below is an instruction that describes a task, paired with an ### Input that provides "
    "further context. Write a ### Response that appropriately completes the request.";

const char* const kDefaultInstruction =
    "Solve the given math problem step by step, and put your final answer after 'Final "
    "answer:'.";

const char* const kFirstStepInstruction =
    "Below is a math word problem that requires multiple steps to solve it. Your job is to "
    "only provide the first step of the solution and not to reveal the final answer. The "
    "first step consists of only one equation in it.";

const char* const kDefaultEot = "<eot_id>";
const char* const kStopSequence = "### Input:";

Strategy parse_strategy(std::string_view name) {
    if (name == "cot") return Strategy::CoT;
    if (name == "questcot") return Strategy::QuestCoT;
    if (name == "subques") return Strategy::Subques;
    if (name == "guided") return Strategy::GuidedCoT;
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::CoT: return "cot";
        case Strategy::QuestCoT: return "questcot";
        case Strategy::Subques: return "subques";
        case Strategy::GuidedCoT: return "guided";
        case Strategy::FirstStepGen: return "firststep";
    }
    return "cot";
}

std::vector<Exemplar> load_exemplar_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open exemplar store: " + path);
    std::vector<Exemplar> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& msg) -> void {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
        };
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
        Exemplar ex;
        if (j.contains("id")) ex.id = j["id"].get<std::string>();
        if (!j.contains("question") || !j["question"].is_string()) fail("missing 'question'");
        if (!j.contains("response") || !j["response"].is_string()) fail("missing 'response'");
        ex.question = j["question"].get<std::string>();
        ex.response = j["response"].get<std::string>();
        if (j.contains("subquestion")) ex.subquestion = j["subquestion"].get<std::string>();
        if (j.contains("subquestion_chain")) {
            if (!j["subquestion_chain"].is_array()) fail("'subquestion_chain' must be an array");
            for (const auto& pair : j["subquestion_chain"]) {
                if (!pair.is_object() || !pair.contains("q") || !pair.contains("a")) {
                    fail("'subquestion_chain' entries need 'q' and 'a'");
                }
                ex.subquestion_chain.emplace_back(pair["q"].get<std::string>(),
                                                  pair["a"].get<std::string>());
            }
        }
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw ParseError(path + ": no exemplars");
    return out;
}

void save_exemplar_store(const std::vector<Exemplar>& store, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write exemplar store: " + path);
    for (const auto& ex : store) {
        ordered_json j;
        if (!ex.id.empty()) j["id"] = ex.id;
        j["question"] = ex.question;
        j["response"] = ex.response;
        if (!ex.subquestion.empty()) j["subquestion"] = ex.subquestion;
        if (!ex.subquestion_chain.empty()) {
            ordered_json chain = ordered_json::array();
            for (const auto& [q, a] : ex.subquestion_chain) {
                chain.push_back(ordered_json{{"q", q}, {"a", a}});
            }
            j["subquestion_chain"] = chain;
        }
        out << j.dump() << "\n";
    }
}

namespace {

// Partial Fisher-Yates with raw mt19937_64 draws: std::uniform_int_distribution
// is not bit-identical across standard libraries, the engine itself is.
std::vector<std::size_t> pick_indices(std::size_t n, int k, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

void check_pool(std::size_t n, int k, const char* what) {
    if (k < 1) throw ConfigError("shot count must be >= 1");
    if (n < static_cast<std::size_t>(k)) {
        throw ConfigError(std::string(what) + " has " + std::to_string(n) +
                          " usable entries; need " + std::to_string(k));
    }
}

}  // namespace

std::vector<Exemplar> select_exemplars(const std::vector<Exemplar>& pool, int k,
                                       std::uint64_t seed) {
    check_pool(pool.size(), k, "exemplar pool");
    std::vector<Exemplar> out;
    for (std::size_t i : pick_indices(pool.size(), k, seed)) out.push_back(pool[i]);
    return out;
}

std::vector<Exemplar> select_exemplars(const dataset::ProblemSet& pool, int k,
                                       std::uint64_t seed) {
    std::vector<const dataset::Problem*> solved;
    for (const auto& p : pool.problems) {
        if (!p.gold_solution.empty()) solved.push_back(&p);
    }
    check_pool(solved.size(), k, "problem pool (worked solutions only)");
    std::vector<Exemplar> out;
    for (std::size_t i : pick_indices(solved.size(), k, seed)) {
        out.push_back(exemplar_from_problem(*solved[i]));
    }
    return out;
}

Exemplar exemplar_from_problem(const dataset::Problem& p) {
    if (p.gold_solution.empty()) {
        throw ConfigError("problem '" + p.id + "' has no worked solution");
    }
    Exemplar ex;
    ex.id = p.id;
    ex.question = p.question;
    std::string body = p.gold_solution;
    std::size_t marker = body.rfind("####");
    if (marker != std::string::npos) body.erase(marker);
    while (!body.empty() && (body.back() == '\n' || body.back() == ' ' || body.back() == '\r')) {
        body.pop_back();
    }
    ex.response = body + " Final Answer: " + p.gold_answer.str();
    return ex;
}

std::string exemplar_response_for(Strategy strategy, const Exemplar& ex) {
    switch (strategy) {
        case Strategy::CoT:
        case Strategy::GuidedCoT:
            return ex.response;
        case Strategy::QuestCoT: {
            if (ex.subquestion.empty()) {
                throw TemplateError("exemplar '" + ex.id + "' lacks a subquestion");
            }
            return ex.subquestion + " " + ex.response;
        }
        case Strategy::Subques: {
            if (ex.subquestion_chain.empty()) {
                throw TemplateError("exemplar '" + ex.id + "' lacks a subquestion chain");
            }
            auto final_answer = extraction::extract_answer(ex.response);
            if (!final_answer.value) {
                throw TemplateError("exemplar '" + ex.id + "' response has no final answer");
            }
            std::ostringstream os;
            for (const auto& [q, a] : ex.subquestion_chain) {
                os << "Q: " << q << "\nA: " << a << "\n";
            }
            os << "Final Answer: " << final_answer.value->str();
            return os.str();
        }
        case Strategy::FirstStepGen:
            throw TemplateError("first-step prompts take no exemplars");
    }
    throw TemplateError("unhandled strategy");
}

PromptSpec render_prompt(Strategy strategy, const PromptTemplate& tmpl,
                         const std::vector<Exemplar>& exemplars, const std::string& target_id,
                         const std::string& target_question,
                         const std::optional<std::string>& guidance_prefix) {
    if (strategy == Strategy::GuidedCoT && !guidance_prefix) {
        throw TemplateError("guided prompt requires a guidance prefix");
    }
    if (strategy != Strategy::GuidedCoT && guidance_prefix) {
        throw TemplateError("guidance prefix is only valid for the guided strategy");
    }
    if (strategy == Strategy::FirstStepGen) {
        throw TemplateError("use render_first_step_prompt for teacher prompts");
    }
    PromptSpec spec;
    spec.strategy = strategy;
    spec.instruction_header = tmpl.instruction;
    spec.exemplars = exemplars;
    spec.target_id = target_id;
    spec.target_question = target_question;
    spec.guidance_prefix = guidance_prefix;

    std::ostringstream os;
    os << tmpl.preamble << "\n\n### Instruction:\n" << tmpl.instruction;
    for (const auto& ex : exemplars) {
        os << "\n\n### Input:\n" << ex.question << "\n\n### Response:\n"
           << exemplar_response_for(strategy, ex) << " " << tmpl.eot;
    }
    os << "\n\n### Input:\n" << target_question << "\n\n### Response:\n";
    if (guidance_prefix) os << *guidance_prefix << " ";
    spec.rendered = os.str();
    spec.prompt_hash = sha256_hex(to_string(strategy) + "\n" + spec.rendered);
    return spec;
}

PromptSpec render_first_step_prompt(const std::string& target_id,
                                    const std::string& target_question) {
    PromptSpec spec;
    spec.strategy = Strategy::FirstStepGen;
    spec.instruction_header = kFirstStepInstruction;
    spec.target_id = target_id;
    spec.target_question = target_question;
    spec.rendered = std::string(kFirstStepInstruction) + "\n\n### Input:\n" + target_question +
                    "\n\n### Response:\n";
    spec.prompt_hash = sha256_hex(to_string(spec.strategy) + "\n" + spec.rendered);
    return spec;
}

namespace {

std::vector<std::string> split_on(const std::string& text, const std::string& sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    for (;;) {
        std::size_t hit = text.find(sep, pos);
        if (hit == std::string::npos) {
            parts.push_back(text.substr(pos));
            return parts;
        }
        parts.push_back(text.substr(pos, hit - pos));
        pos = hit + sep.size();
    }
}

}  // namespace

std::vector<std::string> diff_strategies(const PromptSpec& cot, const PromptSpec& questcot) {
    const std::string input_sep = "\n\n### Input:\n";
    const std::string response_sep = "\n\n### Response:\n";
    auto a_blocks = split_on(cot.rendered, input_sep);
    auto b_blocks = split_on(questcot.rendered, input_sep);
    if (a_blocks.size() != b_blocks.size()) {
        throw TemplateError("prompts have different numbers of input blocks");
    }
    if (a_blocks.front() != b_blocks.front()) {
        throw TemplateError("instruction headers differ");
    }
    if (a_blocks.back() != b_blocks.back()) {
        throw TemplateError("target blocks differ");
    }
    std::vector<std::string> insertions;
    for (std::size_t i = 1; i + 1 < a_blocks.size(); ++i) {
        auto a_parts = split_on(a_blocks[i], response_sep);
        auto b_parts = split_on(b_blocks[i], response_sep);
        if (a_parts.size() != 2 || b_parts.size() != 2) {
            throw TemplateError("malformed exemplar block");
        }
        if (a_parts[0] != b_parts[0]) {
            throw TemplateError("exemplar questions differ");
        }
        const std::string& a_resp = a_parts[1];
        const std::string& b_resp = b_parts[1];
        if (b_resp.size() < a_resp.size() ||
            b_resp.compare(b_resp.size() - a_resp.size(), a_resp.size(), a_resp) != 0) {
            throw TemplateError("response is not a pure front-insertion");
        }
        std::string inserted = b_resp.substr(0, b_resp.size() - a_resp.size());
        if (inserted.empty()) continue;
        std::string stripped = inserted;
        while (!stripped.empty() && stripped.back() == ' ') stripped.pop_back();
        if (stripped.empty() || stripped.back() != '?') {
            throw TemplateError("inserted text is not a question: \"" + inserted + "\"");
        }
        insertions.push_back(stripped);
    }
    return insertions;
}

}  // namespace firststep::prompting
