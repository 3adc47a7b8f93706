#pragma once

#include "firststep/numeric.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace firststep::annot {

// One calculator annotation `<<expr=value>>` found in reasoning text.
// Reconstruction invariant: text.substr(begin, end-begin) ==
// "<<" + expr + "=" + claimed_text + ">>".
struct Annotation {
    std::size_t begin = 0;  // offset of "<<"
    std::size_t end = 0;    // one past ">>"
    std::string expr;       // raw expression text
    std::string claimed_text;
    Number claimed;   // value as written
    Number computed;  // value from evaluating expr
};

struct ParseWarning {
    std::size_t position = 0;
    std::string message;
};

// Total: malformed candidates (unbalanced delimiters, missing '=', unparseable
// expression or value, division by zero) are skipped and reported as warnings.
std::vector<Annotation> parse_annotations(std::string_view text,
                                          std::vector<ParseWarning>* warnings = nullptr);

// Exact evaluation of the arithmetic sub-language: + - * / (also the unicode
// x and division signs), parentheses, decimal literals with optional '$',
// thousands separators and unit words ("5hours/day" reads as 5), postfix '%'
// as /100. Throws EvalError.
Number eval_expr(std::string_view expr);

struct ChainReport {
    std::vector<Annotation> annotations;
    bool consistent = true;
    std::optional<std::size_t> first_inconsistency;
};

// Checks every annotation's written value against its evaluated expression
// within tolerance 1e-6 (gold chains occasionally round division results).
ChainReport verify_chain(std::string_view text);

struct Truncation {
    std::string prefix;
    std::string rest;
    bool no_equation = false;  // prefix empty, rest == input
};

// Cuts the text at the end of the sentence containing the first equation:
// the first `<<..=..>>` annotation, or, when the text has none, the first
// bare `=` with a parseable arithmetic side. prefix + rest == input, always.
Truncation truncate_at_first_equation(std::string_view text);

// A bare (un-annotated) equation inside one sentence, e.g. the teacher's
// "Total hours for first month=5hours/day*30days".
struct BareEquation {
    std::size_t sentence_begin = 0;
    std::size_t sentence_end = 0;  // one past the boundary character
    std::size_t eq_pos = 0;
    std::optional<Number> lhs_value;
    std::optional<Number> rhs_value;
};

std::optional<BareEquation> find_bare_equation(std::string_view text);

// Number of equations under the one-equation gate: per sentence, annotations
// count individually; a sentence without annotations contributes one when it
// holds a bare equation. Prose that restates an annotation ("1 + 1 = <<1+1=2>>2")
// is not double-counted.
int count_equations(std::string_view text);

// Sentence boundary = '.', '?', '!' or newline, where '.' between two digits
// is a decimal point, not a boundary. Exposed for the truncation tests.
bool is_sentence_boundary(std::string_view text, std::size_t pos);

}  // namespace firststep::annot
