#pragma once

#include "firststep/numeric.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace firststep::extraction {

enum class AnswerSource { FinalAnswerMarker, AnswerIsPhrase, LastNumber, None };

std::string to_string(AnswerSource s);

struct ExtractedAnswer {
    std::optional<Number> value;
    AnswerSource source = AnswerSource::None;
    std::string raw_span;  // the number token as written
};

struct NumberToken {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the token (includes a consumed '%')
    Number value;
};

// Every number literal in the text, in order. Handles '$' prefixes, thousands
// separators, decimals, a trailing '%' (consumed; the value stays bare, so
// "25%" yields 25), and a '-' sign when it clearly starts a number.
std::vector<NumberToken> scan_numbers(std::string_view text);

// Precedence: number after the last "Final Answer:" marker (case-insensitive,
// flexible spacing), else after the last "the answer is", else the last number
// token, else none.
ExtractedAnswer extract_answer(std::string_view text);

// First number inside an arbitrarily decorated token ("$34,800." -> 34800).
// Throws ExtractionError when no digit is present.
Number normalize_number(std::string_view token);

// |a - b| <= 1e-4 * max(1, |a|, |b|), computed exactly. Symmetric by
// construction; reflexive; not transitive (tolerance relation).
bool answers_equal(const Number& a, const Number& b);

}  // namespace firststep::extraction
