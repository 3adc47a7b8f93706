#include "firststep/extraction.hpp"

#include "firststep/errors.hpp"

#include <algorithm>
#include <string>

namespace firststep::extraction {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool word_at(std::string_view t, std::size_t pos, std::string_view word) {
    if (pos + word.size() > t.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (lower(t[pos + i]) != word[i]) return false;
    }
    return true;
}

bool word_boundary_before(std::string_view t, std::size_t pos) {
    return pos == 0 || !is_alpha(t[pos - 1]);
}

// Matches "final<ws*>answer<ws*>:" case-insensitively starting at pos;
// returns the offset just past the colon.
std::optional<std::size_t> match_final_answer(std::string_view t, std::size_t pos) {
    if (!word_boundary_before(t, pos) || !word_at(t, pos, "final")) return std::nullopt;
    std::size_t i = pos + 5;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (!word_at(t, i, "answer")) return std::nullopt;
    i += 6;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (i >= t.size() || t[i] != ':') return std::nullopt;
    return i + 1;
}

// Matches "the answer is" as whole words, case-insensitively.
std::optional<std::size_t> match_answer_is(std::string_view t, std::size_t pos) {
    if (!word_boundary_before(t, pos) || !word_at(t, pos, "the")) return std::nullopt;
    std::size_t i = pos + 3;
    if (i >= t.size() || !is_ws(t[i])) return std::nullopt;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (!word_at(t, i, "answer")) return std::nullopt;
    i += 6;
    if (i >= t.size() || !is_ws(t[i])) return std::nullopt;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (!word_at(t, i, "is")) return std::nullopt;
    i += 2;
    if (i < t.size() && is_alpha(t[i])) return std::nullopt;
    return i;
}

template <typename Matcher>
std::vector<std::size_t> marker_ends(std::string_view t, Matcher match) {
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (auto e = match(t, i)) ends.push_back(*e);
    }
    return ends;
}

}  // namespace

std::string to_string(AnswerSource s) {
    switch (s) {
        case AnswerSource::FinalAnswerMarker: return "final_answer_marker";
        case AnswerSource::AnswerIsPhrase: return "answer_is_phrase";
        case AnswerSource::LastNumber: return "last_number";
        case AnswerSource::None: return "none";
    }
    return "none";
}

std::vector<NumberToken> scan_numbers(std::string_view s) {
    std::vector<NumberToken> out;
    const std::size_t n = s.size();
    std::size_t i = 0;
    auto sign_ok_before = [&](std::size_t pos) {
        if (pos == 0) return true;
        char p = s[pos - 1];
        return is_ws(p) || p == '(' || p == '=' || p == ':' || p == ',' || p == '$';
    };
    while (i < n) {
        char c = s[i];
        bool starts_number = false;
        if (is_digit(c)) {
            starts_number = true;
        } else if (c == '.' && i + 1 < n && is_digit(s[i + 1])) {
            starts_number = !(i > 0 && is_digit(s[i - 1]));
        } else if (c == '-' && sign_ok_before(i) && i + 1 < n &&
                   (is_digit(s[i + 1]) ||
                    (s[i + 1] == '.' && i + 2 < n && is_digit(s[i + 2])))) {
            starts_number = true;
        }
        if (!starts_number) {
            ++i;
            continue;
        }
        NumberToken tok;
        tok.begin = i;
        std::string lit;
        if (s[i] == '-') {
            lit += '-';
            ++i;
        }
        std::string digits;
        while (i < n) {
            if (is_digit(s[i])) {
                digits += s[i++];
            } else if (s[i] == ',' && !digits.empty() && i + 1 < n && is_digit(s[i + 1])) {
                ++i;  // thousands separator
            } else {
                break;
            }
        }
        lit += digits.empty() ? "0" : digits;
        if (i < n && s[i] == '.' && i + 1 < n && is_digit(s[i + 1])) {
            lit += s[i++];
            while (i < n && is_digit(s[i])) lit += s[i++];
        }
        if (i < n && s[i] == '%') ++i;  // percent kept as the bare number
        tok.end = i;
        auto v = Number::parse_decimal(lit);
        if (v) {
            tok.value = *v;
            out.push_back(std::move(tok));
        }
    }
    return out;
}

ExtractedAnswer extract_answer(std::string_view text) {
    auto toks = scan_numbers(text);
    auto first_tok_at_or_after = [&](std::size_t pos) -> const NumberToken* {
        for (const auto& t : toks) {
            if (t.begin >= pos) return &t;
        }
        return nullptr;
    };
    auto make = [&](const NumberToken& t, AnswerSource src) {
        ExtractedAnswer a;
        a.value = t.value;
        a.source = src;
        a.raw_span = std::string(text.substr(t.begin, t.end - t.begin));
        return a;
    };
    auto fa = marker_ends(text, match_final_answer);
    for (auto it = fa.rbegin(); it != fa.rend(); ++it) {
        if (const auto* t = first_tok_at_or_after(*it)) {
            return make(*t, AnswerSource::FinalAnswerMarker);
        }
    }
    auto ai = marker_ends(text, match_answer_is);
    for (auto it = ai.rbegin(); it != ai.rend(); ++it) {
        if (const auto* t = first_tok_at_or_after(*it)) {
            return make(*t, AnswerSource::AnswerIsPhrase);
        }
    }
    if (!toks.empty()) return make(toks.back(), AnswerSource::LastNumber);
    return ExtractedAnswer{};
}

Number normalize_number(std::string_view token) {
    auto toks = scan_numbers(token);
    if (toks.empty()) {
        throw ExtractionError("no number in \"" + std::string(token) + "\"");
    }
    return toks.front().value;
}

bool answers_equal(const Number& a, const Number& b) {
    Number scale = Number(1);
    if (a.abs() > scale) scale = a.abs();
    if (b.abs() > scale) scale = b.abs();
    return (a - b).abs() <= scale / Number(10000);
}

}  // namespace firststep::extraction
