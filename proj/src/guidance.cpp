#include "firststep/guidance.hpp"

#include "firststep/annot.hpp"
#include "firststep/errors.hpp"
#include "firststep/extraction.hpp"

#include <fstream>

namespace firststep::guidance {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string rstrip(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' ||
                          s.back() == '\r')) {
        s.pop_back();
    }
    return s;
}

std::string number_str(const Number& n) { return n.str(); }

Number number_from_str(const std::string& s) {
    std::size_t slash = s.find('/');
    if (slash != std::string::npos) {
        auto num = Number::parse_decimal(s.substr(0, slash));
        auto den = Number::parse_decimal(s.substr(slash + 1));
        if (num && den && !den->is_zero()) return *num / *den;
    } else if (auto v = Number::parse_decimal(s)) {
        return *v;
    }
    throw ParseError("bad number '" + s + "' in first-step store");
}

std::optional<Number> equation_value_of(const std::string& text) {
    auto anns = annot::parse_annotations(text);
    if (!anns.empty()) return anns.front().computed;
    if (auto bare = annot::find_bare_equation(text)) {
        if (bare->rhs_value) return bare->rhs_value;
        return bare->lhs_value;
    }
    return std::nullopt;
}

}  // namespace

ordered_json FirstStep::to_json() const {
    ordered_json j;
    j["problem_id"] = problem_id;
    j["teacher_model"] = teacher_model;
    j["text"] = text;
    if (equation_value) {
        j["equation_value"] = number_str(*equation_value);
    } else {
        j["equation_value"] = nullptr;
    }
    j["leak_checked"] = leak_checked;
    j["leaked"] = leaked;
    j["unguidable"] = unguidable;
    j["attempts"] = attempts;
    return j;
}

FirstStep FirstStep::from_json(const json& j) {
    FirstStep s;
    s.problem_id = j.at("problem_id").get<std::string>();
    s.teacher_model = j.at("teacher_model").get<std::string>();
    s.text = j.at("text").get<std::string>();
    if (j.contains("equation_value") && !j["equation_value"].is_null()) {
        s.equation_value = number_from_str(j["equation_value"].get<std::string>());
    }
    s.leak_checked = j.at("leak_checked").get<bool>();
    s.leaked = j.at("leaked").get<bool>();
    s.unguidable = j.at("unguidable").get<bool>();
    s.attempts = j.at("attempts").get<int>();
    return s;
}

FirstStep generate_first_step(backend::Backend& teacher, const dataset::Problem& problem,
                              const TeacherOptions& opts) {
    FirstStep step;
    step.problem_id = problem.id;
    step.teacher_model = teacher.model();

    prompting::PromptSpec prompt =
        prompting::render_first_step_prompt(problem.id, problem.question);

    for (int attempt = 0; attempt <= opts.max_regen_attempts; ++attempt) {
        backend::SamplingParams params;
        params.max_tokens = opts.max_tokens;
        if (attempt > 0) {
            params.temperature = opts.regen_temperature;
            params.seed = static_cast<std::uint64_t>(attempt);
        }
        backend::GenerationRecord rec = teacher.complete_one(prompt, params, attempt);
        step.attempts = attempt + 1;
        auto cut = annot::truncate_at_first_equation(rec.text);
        if (cut.no_equation) continue;
        std::string prefix = rstrip(cut.prefix);
        if (annot::count_equations(prefix) != 1) continue;
        step.text = prefix;
        step.equation_value = equation_value_of(prefix);
        return step;
    }
    step.unguidable = true;
    return step;
}

bool check_leakage(FirstStep& step, const Number& gold_answer) {
    if (step.text.empty()) {
        throw EvalError("cannot leak-check an empty first step (problem " + step.problem_id +
                        ")");
    }
    std::vector<Number> candidates;
    for (const auto& a : annot::parse_annotations(step.text)) {
        candidates.push_back(a.claimed);
        candidates.push_back(a.computed);
    }
    if (auto bare = annot::find_bare_equation(step.text)) {
        if (bare->lhs_value) candidates.push_back(*bare->lhs_value);
        if (bare->rhs_value) candidates.push_back(*bare->rhs_value);
    }
    for (const auto& tok : extraction::scan_numbers(step.text)) {
        candidates.push_back(tok.value);
    }
    bool leaked = false;
    for (const auto& c : candidates) {
        if (extraction::answers_equal(c, gold_answer)) {
            leaked = true;
            break;
        }
    }
    step.leak_checked = true;
    step.leaked = leaked;
    return leaked;
}

ordered_json LeakReport::to_json() const {
    ordered_json j;
    j["total"] = total;
    j["clean_count"] = clean_count;
    j["leaked_count"] = leaked_count;
    j["failed_ids"] = failed_ids;
    ordered_json per = ordered_json::object();
    for (const auto& [id, leaked] : per_problem) per[id] = leaked;
    j["per_problem"] = per;
    return j;
}

LeakReport audit_dev_set(backend::Backend& teacher, const dataset::ProblemSet& devset,
                         const TeacherOptions& opts, const std::string& persist_path,
                         std::vector<FirstStep>* steps_out) {
    if (devset.problems.empty()) throw ConfigError("audit needs a non-empty dev set");
    LeakReport report;
    for (const auto& problem : devset.problems) {
        FirstStep step;
        try {
            step = generate_first_step(teacher, problem, opts);
        } catch (const BackendError&) {
            report.failed_ids.push_back(problem.id);
            continue;
        }
        if (step.unguidable) {
            report.failed_ids.push_back(problem.id);
            if (steps_out) steps_out->push_back(std::move(step));
            continue;
        }
        bool leaked = check_leakage(step, problem.gold_answer);
        report.per_problem[problem.id] = leaked;
        if (leaked) {
            ++report.leaked_count;
        } else {
            ++report.clean_count;
        }
        ++report.total;
        if (steps_out) steps_out->push_back(std::move(step));
    }
    if (!persist_path.empty()) {
        std::ofstream out(persist_path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write leak report: " + persist_path);
        out << report.to_json().dump(2) << "\n";
    }
    return report;
}

prompting::PromptSpec inject_guidance(const dataset::Problem& problem, const FirstStep& step,
                                      const std::vector<prompting::Exemplar>& exemplars,
                                      const prompting::PromptTemplate& tmpl) {
    if (step.unguidable || step.text.empty()) {
        throw RefusalError("problem " + problem.id + " has no usable first step");
    }
    if (!step.leak_checked) {
        throw RefusalError("first step for " + problem.id + " was never leak-checked");
    }
    if (step.leaked) {
        throw RefusalError("first step for " + problem.id + " leaks the gold answer");
    }
    std::string prefix = rstrip(step.text);
    if (annot::count_equations(prefix) != 1) {
        throw RefusalError("first step for " + problem.id + " must contain exactly one equation");
    }
    FirstStep recheck = step;
    if (check_leakage(recheck, problem.gold_answer)) {
        throw RefusalError("first step for " + problem.id + " leaks the gold answer");
    }
    return prompting::render_prompt(prompting::Strategy::GuidedCoT, tmpl, exemplars, problem.id,
                                    problem.question, prefix);
}

void save_first_steps(const std::vector<FirstStep>& steps, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write first-step store: " + path);
    for (const auto& s : steps) out << s.to_json().dump() << "\n";
}

std::vector<FirstStep> load_first_steps(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open first-step store: " + path);
    std::vector<FirstStep> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad JSON");
        }
        out.push_back(FirstStep::from_json(j));
    }
    return out;
}

}  // namespace firststep::guidance
