#include "firststep/annot.hpp"

#include "firststep/errors.hpp"

#include <cctype>
#include <cstddef>
#include <string>
#include <vector>

namespace firststep::annot {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

enum class TokKind { Num, Plus, Minus, Mul, Div, LParen, RParen, Percent };

struct Tok {
    TokKind kind;
    Number value;  // Num only
};

// Tokenizer for the arithmetic sub-language. Words are unit annotations and
// produce no token ("5hours/day" is just 5); a '/' directly followed by a
// letter continues a unit phrase, a '/' before anything else divides. A lone
// "x" between values multiplies.
std::vector<Tok> lex(std::string_view s) {
    std::vector<Tok> toks;
    std::size_t i = 0;
    const std::size_t n = s.size();
    auto prev_is_value = [&] {
        if (toks.empty()) return false;
        TokKind k = toks.back().kind;
        return k == TokKind::Num || k == TokKind::RParen || k == TokKind::Percent;
    };
    while (i < n) {
        char c = s[i];
        if (is_space(c) || c == '$') {
            ++i;
            continue;
        }
        // unicode times / divide / minus signs
        if (c == '\xC3' && i + 1 < n && s[i + 1] == '\x97') {
            toks.push_back({TokKind::Mul, {}});
            i += 2;
            continue;
        }
        if (c == '\xC3' && i + 1 < n && s[i + 1] == '\xB7') {
            toks.push_back({TokKind::Div, {}});
            i += 2;
            continue;
        }
        if (c == '\xE2' && i + 2 < n && s[i + 1] == '\x88' && s[i + 2] == '\x92') {
            toks.push_back({TokKind::Minus, {}});
            i += 3;
            continue;
        }
        if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(s[i + 1]))) {
            std::string lit = is_digit(c) ? "" : "0";
            while (i < n) {
                if (is_digit(s[i])) {
                    lit += s[i++];
                } else if (s[i] == ',' && !lit.empty() && is_digit(lit.back()) && i + 1 < n &&
                           is_digit(s[i + 1])) {
                    ++i;  // thousands separator
                } else {
                    break;
                }
            }
            if (i < n && s[i] == '.' && i + 1 < n && is_digit(s[i + 1])) {
                lit += s[i++];
                while (i < n && is_digit(s[i])) lit += s[i++];
            }
            auto v = Number::parse_decimal(lit);
            if (!v) throw EvalError("bad numeric literal '" + lit + "'");
            toks.push_back({TokKind::Num, *v});
            continue;
        }
        if (is_alpha(c)) {
            std::size_t j = i;
            while (j < n && is_alpha(s[j])) ++j;
            std::string_view word = s.substr(i, j - i);
            if ((word == "x" || word == "X") && prev_is_value()) {
                std::size_t k = j;
                while (k < n && is_space(s[k])) ++k;
                if (k < n && (is_digit(s[k]) || s[k] == '(' || s[k] == '.' || s[k] == '$')) {
                    toks.push_back({TokKind::Mul, {}});
                    i = j;
                    continue;
                }
            }
            i = j;
            // unit phrase: "grams/wash", "hours/day"
            while (i < n && s[i] == '/' && i + 1 < n && is_alpha(s[i + 1])) {
                ++i;
                while (i < n && is_alpha(s[i])) ++i;
            }
            continue;
        }
        switch (c) {
            case '+': toks.push_back({TokKind::Plus, {}}); break;
            case '-': toks.push_back({TokKind::Minus, {}}); break;
            case '*': toks.push_back({TokKind::Mul, {}}); break;
            case '/': toks.push_back({TokKind::Div, {}}); break;
            case '(': toks.push_back({TokKind::LParen, {}}); break;
            case ')': toks.push_back({TokKind::RParen, {}}); break;
            case '%': toks.push_back({TokKind::Percent, {}}); break;
            default:
                throw EvalError(std::string("unexpected character '") + c + "' in expression");
        }
        ++i;
    }
    return toks;
}

class Parser {
public:
    explicit Parser(std::vector<Tok> toks) : toks_(std::move(toks)) {}

    Number run() {
        if (toks_.empty()) throw EvalError("empty expression");
        Number v = expr();
        if (pos_ != toks_.size()) throw EvalError("trailing content in expression");
        return v;
    }

private:
    bool at(TokKind k) const { return pos_ < toks_.size() && toks_[pos_].kind == k; }
    bool eat(TokKind k) {
        if (!at(k)) return false;
        ++pos_;
        return true;
    }

    Number expr() {
        Number v = term();
        for (;;) {
            if (eat(TokKind::Plus)) {
                v = v + term();
            } else if (eat(TokKind::Minus)) {
                v = v - term();
            } else {
                return v;
            }
        }
    }

    Number term() {
        Number v = factor();
        for (;;) {
            if (eat(TokKind::Mul)) {
                v = v * factor();
            } else if (eat(TokKind::Div)) {
                Number d = factor();
                if (d.is_zero()) throw EvalError("division by zero");
                v = v / d;
            } else {
                return v;
            }
        }
    }

    Number factor() {
        bool neg = false;
        for (;;) {
            if (eat(TokKind::Minus)) {
                neg = !neg;
            } else if (eat(TokKind::Plus)) {
                // no-op sign
            } else {
                break;
            }
        }
        Number v = primary();
        while (eat(TokKind::Percent)) v = v / Number(100);
        return neg ? -v : v;
    }

    Number primary() {
        if (at(TokKind::Num)) return toks_[pos_++].value;
        if (eat(TokKind::LParen)) {
            Number v = expr();
            if (!eat(TokKind::RParen)) throw EvalError("missing ')'");
            return v;
        }
        throw EvalError("expected a number");
    }

    std::vector<Tok> toks_;
    std::size_t pos_ = 0;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

struct Sentence {
    std::size_t begin;
    std::size_t end;  // one past the boundary char, or text end
};

std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_sentence_boundary(text, i)) {
            out.push_back({start, i + 1});
            start = i + 1;
        }
    }
    if (start < text.size()) out.push_back({start, text.size()});
    return out;
}

bool inside_any(std::size_t pos, const std::vector<Annotation>& anns) {
    for (const auto& a : anns) {
        if (pos >= a.begin && pos < a.end) return true;
    }
    return false;
}

std::optional<Number> try_eval(std::string_view s) {
    std::string_view t = trim(s);
    if (t.empty()) return std::nullopt;
    try {
        return eval_expr(t);
    } catch (const EvalError&) {
        return std::nullopt;
    }
}

// First qualifying bare equation inside one sentence: leftmost '=' outside
// any annotation with at least one arithmetically parseable side.
std::optional<BareEquation> scan_sentence(std::string_view text, const Sentence& sent,
                                          const std::vector<Annotation>& anns) {
    std::size_t content_end = sent.end;
    if (content_end > sent.begin && is_sentence_boundary(text, content_end - 1)) --content_end;
    for (std::size_t q = sent.begin; q < content_end; ++q) {
        if (text[q] != '=' || inside_any(q, anns)) continue;
        auto lhs = try_eval(text.substr(sent.begin, q - sent.begin));
        auto rhs = try_eval(text.substr(q + 1, content_end - q - 1));
        if (lhs || rhs) return BareEquation{sent.begin, sent.end, q, lhs, rhs};
    }
    return std::nullopt;
}

}  // namespace

Number eval_expr(std::string_view expr) { return Parser(lex(expr)).run(); }

std::vector<Annotation> parse_annotations(std::string_view text,
                                          std::vector<ParseWarning>* warnings) {
    auto warn = [&](std::size_t pos, std::string msg) {
        if (warnings) warnings->push_back({pos, std::move(msg)});
    };
    std::vector<Annotation> out;
    std::size_t pos = 0;
    for (;;) {
        std::size_t open = text.find("<<", pos);
        if (open == std::string_view::npos) break;
        std::size_t close = text.find(">>", open + 2);
        std::size_t next_open = text.find("<<", open + 2);
        if (close == std::string_view::npos ||
            (next_open != std::string_view::npos && next_open < close)) {
            warn(open, "unterminated annotation");
            pos = (next_open != std::string_view::npos) ? next_open : text.size();
            continue;
        }
        std::string_view inner = text.substr(open + 2, close - open - 2);
        std::size_t eq = inner.find('=');
        if (eq == std::string_view::npos) {
            warn(open, "annotation without '='");
            pos = close + 2;
            continue;
        }
        Annotation a;
        a.begin = open;
        a.end = close + 2;
        a.expr = std::string(inner.substr(0, eq));
        a.claimed_text = std::string(inner.substr(eq + 1));
        try {
            a.computed = eval_expr(a.expr);
        } catch (const EvalError& e) {
            warn(open, "bad expression '" + a.expr + "': " + e.what());
            pos = close + 2;
            continue;
        }
        try {
            a.claimed = eval_expr(a.claimed_text);
        } catch (const EvalError& e) {
            warn(open, "bad value '" + a.claimed_text + "': " + e.what());
            pos = close + 2;
            continue;
        }
        out.push_back(std::move(a));
        pos = close + 2;
    }
    return out;
}

ChainReport verify_chain(std::string_view text) {
    ChainReport r;
    r.annotations = parse_annotations(text);
    const Number tol = Number(1) / Number(1000000);
    for (std::size_t i = 0; i < r.annotations.size(); ++i) {
        const auto& a = r.annotations[i];
        if ((a.claimed - a.computed).abs() > tol) {
            r.consistent = false;
            r.first_inconsistency = i;
            break;
        }
    }
    return r;
}

bool is_sentence_boundary(std::string_view text, std::size_t pos) {
    char c = text[pos];
    if (c == '\n' || c == '?' || c == '!') return true;
    if (c != '.') return false;
    // a '.' directly followed by a digit is a decimal point
    return !(pos + 1 < text.size() && is_digit(text[pos + 1]));
}

std::optional<BareEquation> find_bare_equation(std::string_view text) {
    auto anns = parse_annotations(text);
    for (const auto& sent : split_sentences(text)) {
        if (auto found = scan_sentence(text, sent, anns)) return found;
    }
    return std::nullopt;
}

Truncation truncate_at_first_equation(std::string_view text) {
    auto anns = parse_annotations(text);
    std::size_t cut_end;  // one past the last prefix byte
    if (!anns.empty()) {
        cut_end = text.size();
        for (std::size_t i = anns[0].end; i < text.size(); ++i) {
            if (is_sentence_boundary(text, i)) {
                cut_end = i + 1;
                break;
            }
        }
    } else {
        auto bare = find_bare_equation(text);
        if (!bare) return Truncation{"", std::string(text), true};
        cut_end = bare->sentence_end;
    }
    return Truncation{std::string(text.substr(0, cut_end)), std::string(text.substr(cut_end)),
                      false};
}

int count_equations(std::string_view text) {
    auto anns = parse_annotations(text);
    int count = 0;
    for (const auto& sent : split_sentences(text)) {
        int k = 0;
        for (const auto& a : anns) {
            if (a.begin >= sent.begin && a.begin < sent.end) ++k;
        }
        if (k > 0) {
            count += k;
        } else if (scan_sentence(text, sent, anns)) {
            ++count;
        }
    }
    return count;
}

}  // namespace firststep::annot
