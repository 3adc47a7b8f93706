#pragma once

#include "firststep/numeric.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace firststep::dataset {

enum class Split { Train, Test, Dev };
enum class Format { Gsm8k, Svamp, Asdiv, Multiarith, Generic };

Split parse_split(std::string_view name);      // "train" | "test" | "dev"
Format parse_format(std::string_view name);    // "gsm8k" | "svamp" | "asdiv" | "multiarith" | "generic"
std::string to_string(Split s);
std::string to_string(Format f);

struct Problem {
    std::string id;
    std::string question;
    std::string gold_solution;  // empty for corpora without worked solutions
    Number gold_answer;
    int steps = 0;  // calculator annotations in gold_solution

    bool operator==(const Problem& o) const {
        return id == o.id && question == o.question && gold_solution == o.gold_solution &&
               gold_answer == o.gold_answer && steps == o.steps;
    }
};

struct ProblemSet {
    std::string name;
    Split split = Split::Test;
    std::vector<Problem> problems;

    const Problem* find(const std::string& id) const;
};

// Reads one corpus file into the unified schema. `name` defaults to the file
// stem. Errors carry the line (or array index) and field of the bad record.
// Format notes:
//   gsm8k      JSONL {question, answer}; answer is a worked solution whose
//              final line is "#### <number>"; step counts come from its
//              annotations and must be >= 1.
//   svamp      JSON array of {Body, Question, Answer}; question = Body + " " +
//              Question; no solution text.
//   asdiv / multiarith  JSONL {question, answer} with numeric answer.
//   generic    JSONL {id, question, answer, solution?}; answer numeric or string.
ProblemSet load_problem_set(const std::string& path, Format format, std::string name = "",
                            Split split = Split::Test);

// Writes generic-format JSONL; load_problem_set(path, Generic) round-trips it.
void save_problem_set(const ProblemSet& set, const std::string& path);

// Number after the final "####" marker, else the first number in the field.
// Strips currency symbols, separators, trailing punctuation. Throws
// ExtractionError when nothing parses.
Number parse_gold_answer(std::string_view answer_field);

// Length of annot::parse_annotations(gold_solution); 0 for empty text.
int count_steps(std::string_view gold_solution);

}  // namespace firststep::dataset
