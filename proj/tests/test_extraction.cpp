#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "firststep/errors.hpp"
#include "firststep/extraction.hpp"

#include <string>

using namespace firststep;
using namespace firststep::extraction;

TEST_CASE("number scanning walks every literal in order") {
    auto toks = scan_numbers("He buys 3 boxes of 12 pencils and finds 4 more.");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].value == Number(3));
    CHECK(toks[1].value == Number(12));
    CHECK(toks[2].value == Number(4));
}

TEST_CASE("number scanning handles decoration") {
    auto dollars = scan_numbers("the total is $34,800.");
    REQUIRE(dollars.size() == 1);
    CHECK(dollars[0].value == Number(34800));

    auto pct = scan_numbers("a 25% raise");
    REQUIRE(pct.size() == 1);
    CHECK(pct[0].value == Number(25));  // bare value; '%' is consumed

    auto dec = scan_numbers("about 3.5 hours and .5 more");
    REQUIRE(dec.size() == 2);
    CHECK(dec[0].value == Number(7) / Number(2));
    CHECK(dec[1].value == Number(1) / Number(2));

    auto neg = scan_numbers("dropped to -4 degrees, range 5-3");
    REQUIRE(neg.size() == 3);
    CHECK(neg[0].value == Number(-4));
    CHECK(neg[1].value == Number(5));
    CHECK(neg[2].value == Number(3));  // 5-3 is a range, not minus three
}

TEST_CASE("number scanning does not invent numbers") {
    CHECK(scan_numbers("no numerals here").empty());
    CHECK(scan_numbers("").empty());
    auto v = scan_numbers("version v1.2.3 ships");
    REQUIRE(v.size() == 2);  // 1.2 then 3; dotted triples are not one number
}

TEST_CASE("answer extraction prefers the final-answer marker") {
    auto a = extract_answer("So 5 + 3 = 8. Final answer: 8");
    CHECK(a.source == AnswerSource::FinalAnswerMarker);
    CHECK(a.value.value() == Number(8));

    auto b = extract_answer("Final Answer: 12 ... later noise 99");
    CHECK(b.source == AnswerSource::FinalAnswerMarker);
    CHECK(b.value.value() == Number(12));

    // flexible spacing and case
    auto c = extract_answer("final  answer : 7");
    CHECK(c.source == AnswerSource::FinalAnswerMarker);
    CHECK(c.value.value() == Number(7));
}

TEST_CASE("answer extraction falls back to the-answer-is, then last number") {
    auto a = extract_answer("Working it out, the answer is 42.");
    CHECK(a.source == AnswerSource::AnswerIsPhrase);
    CHECK(a.value.value() == Number(42));

    auto b = extract_answer("We compute 6 * 7 = 42 and stop");
    CHECK(b.source == AnswerSource::LastNumber);
    CHECK(b.value.value() == Number(42));

    auto c = extract_answer("nothing numeric at all");
    CHECK(c.source == AnswerSource::None);
    CHECK_FALSE(c.value.has_value());
}

TEST_CASE("the latest marker wins when several appear") {
    auto a = extract_answer("Final answer: 3. Wait. Final answer: 9");
    CHECK(a.value.value() == Number(9));
}

TEST_CASE("marker without a following number falls back gracefully") {
    auto a = extract_answer("We saw 17 earlier, so the answer is what it is");
    CHECK(a.value.value() == Number(17));
    CHECK(a.source == AnswerSource::LastNumber);
}

TEST_CASE("normalize_number strips decoration") {
    CHECK(normalize_number("$34,800.") == Number(34800));
    CHECK(normalize_number("42") == Number(42));
    CHECK(normalize_number(" 17.5 ") == Number::parse_decimal("17.5").value());
    CHECK_THROWS_AS(normalize_number("none"), ExtractionError);
    CHECK_THROWS_AS(normalize_number(""), ExtractionError);
}

TEST_CASE("answer comparison uses a relative tolerance around 1e-4") {
    CHECK(answers_equal(Number(100), Number(100)));
    // |a-b| = 0.01, max(1,|a|,|b|) = 100.01, ratio ~1e-4 -> inside
    CHECK(answers_equal(Number::parse_decimal("100.01").value(), Number(100)));
    CHECK_FALSE(answers_equal(Number::parse_decimal("100.02").value(), Number(100)));
    // small numbers compare against the 1 floor
    CHECK(answers_equal(Number::parse_decimal("0.00005").value(), Number(0)));
    CHECK_FALSE(answers_equal(Number::parse_decimal("0.001").value(), Number(0)));
    // symmetry
    CHECK(answers_equal(Number(100), Number::parse_decimal("100.01").value()));
    // sign matters
    CHECK_FALSE(answers_equal(Number(5), Number(-5)));
}

TEST_CASE("source labels are stable strings") {
    CHECK(to_string(AnswerSource::FinalAnswerMarker) == "final_answer_marker");
    CHECK(to_string(AnswerSource::AnswerIsPhrase) == "answer_is_phrase");
    CHECK(to_string(AnswerSource::LastNumber) == "last_number");
    CHECK(to_string(AnswerSource::None) == "none");
}
