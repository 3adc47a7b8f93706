#pragma once

#include "firststep/backend.hpp"
#include "firststep/dataset.hpp"
#include "firststep/numeric.hpp"
#include "firststep/prompting.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace firststep::guidance {

struct FirstStep {
    std::string problem_id;
    std::string teacher_model;
    std::string text;  // one-equation prefix, trailing whitespace stripped
    std::optional<Number> equation_value;
    bool leak_checked = false;
    bool leaked = false;
    bool unguidable = false;  // teacher never produced an equation
    int attempts = 0;

    nlohmann::ordered_json to_json() const;
    static FirstStep from_json(const nlohmann::json& j);
};

struct TeacherOptions {
    int max_regen_attempts = 3;      // resampled tries after the greedy one
    double regen_temperature = 0.7;  // greedy first, then sampled retries
    int max_tokens = 512;
};

// Prompts the teacher with the first-step instruction, truncates its output
// at the first equation, and enforces the one-equation limit. Retries with
// sampling when the output has no equation; gives up as unguidable.
// Backend failures propagate.
FirstStep generate_first_step(backend::Backend& teacher, const dataset::Problem& problem,
                              const TeacherOptions& opts = {});

// leaked := any number the step carries (annotation values, bare-equation
// side values, or any literal) equals the gold answer. Marks the step checked.
bool check_leakage(FirstStep& step, const Number& gold_answer);

struct LeakReport {
    std::map<std::string, bool> per_problem;  // id -> leaked
    long long clean_count = 0;
    long long leaked_count = 0;
    long long total = 0;  // == clean_count + leaked_count
    std::vector<std::string> failed_ids;  // unguidable or teacher failure

    nlohmann::ordered_json to_json() const;
};

// Generates and leak-checks a first step for every problem. Per-problem
// failures land in failed_ids; the report stays partial rather than aborting.
// Writes the report as JSON when persist_path is non-empty; collects the
// generated steps into steps_out when given.
LeakReport audit_dev_set(backend::Backend& teacher, const dataset::ProblemSet& devset,
                         const TeacherOptions& opts = {}, const std::string& persist_path = "",
                         std::vector<FirstStep>* steps_out = nullptr);

// Builds the guided prompt whose open response block starts with the step.
// Hard gate: refuses (RefusalError) unless the step is leak-checked, clean,
// guidable, and contains exactly one equation.
prompting::PromptSpec inject_guidance(const dataset::Problem& problem, const FirstStep& step,
                                      const std::vector<prompting::Exemplar>& exemplars,
                                      const prompting::PromptTemplate& tmpl = {});

// JSONL store, one FirstStep per line; reusable across student runs.
void save_first_steps(const std::vector<FirstStep>& steps, const std::string& path);
std::vector<FirstStep> load_first_steps(const std::string& path);

}  // namespace firststep::guidance
