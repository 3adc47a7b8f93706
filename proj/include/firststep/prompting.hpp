#pragma once

#include "firststep/dataset.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace firststep::prompting {

// FirstStepGen is the teacher-side prompt for producing a first step; it is
// not a CLI-selectable evaluation strategy.
enum class Strategy { CoT, QuestCoT, Subques, GuidedCoT, FirstStepGen };

Strategy parse_strategy(std::string_view name);  // "cot"|"questcot"|"subques"|"guided"
std::string to_string(Strategy s);

extern const char* const kDefaultPreamble;
extern const char* const kDefaultInstruction;
extern const char* const kFirstStepInstruction;
extern const char* const kDefaultEot;
extern const char* const kStopSequence;  // generation stop: "### Input:"

struct Exemplar {
    std::string id;
    std::string question;
    std::string response;     // worked chain ending "Final Answer: <number>"
    std::string subquestion;  // leading question (QuestCoT); empty when absent
    std::vector<std::pair<std::string, std::string>> subquestion_chain;  // Subques Q/A steps
};

struct PromptTemplate {
    std::string preamble = kDefaultPreamble;
    std::string instruction = kDefaultInstruction;
    std::string eot = kDefaultEot;
};

struct PromptSpec {
    Strategy strategy = Strategy::CoT;
    std::string instruction_header;
    std::vector<Exemplar> exemplars;
    std::string target_id;
    std::string target_question;
    std::optional<std::string> guidance_prefix;  // present iff GuidedCoT
    std::string rendered;
    std::string prompt_hash;
};

// JSONL store: {id?, question, response, subquestion?, subquestion_chain?}
// where subquestion_chain is an array of {"q":..., "a":...} objects.
std::vector<Exemplar> load_exemplar_store(const std::string& path);
void save_exemplar_store(const std::vector<Exemplar>& store, const std::string& path);

// k distinct picks, deterministic in seed across platforms and reruns.
std::vector<Exemplar> select_exemplars(const std::vector<Exemplar>& pool, int k,
                                       std::uint64_t seed);
std::vector<Exemplar> select_exemplars(const dataset::ProblemSet& pool, int k,
                                       std::uint64_t seed);

// Turns a problem with a worked solution into a CoT exemplar: the trailing
// "#### <n>" marker becomes "Final Answer: <n>". No subquestion fields.
Exemplar exemplar_from_problem(const dataset::Problem& p);

// The response block for one exemplar under a strategy (QuestCoT prepends the
// subquestion plus a space; Subques renders the Q/A decomposition).
std::string exemplar_response_for(Strategy strategy, const Exemplar& ex);

PromptSpec render_prompt(Strategy strategy, const PromptTemplate& tmpl,
                         const std::vector<Exemplar>& exemplars, const std::string& target_id,
                         const std::string& target_question,
                         const std::optional<std::string>& guidance_prefix = std::nullopt);

// Teacher prompt: first-step instruction + the bare target question.
PromptSpec render_first_step_prompt(const std::string& target_id,
                                    const std::string& target_question);

// Structural comparison of a CoT prompt against its QuestCoT twin: everything
// must match except one leading question inserted per exemplar response.
// Returns the insertions; any other difference raises TemplateError.
std::vector<std::string> diff_strategies(const PromptSpec& cot, const PromptSpec& questcot);

}  // namespace firststep::prompting
