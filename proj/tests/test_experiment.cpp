#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "firststep/errors.hpp"
#include "firststep/experiment.hpp"

#include <atomic>
#include <stdexcept>
#include <string>
#include <vector>

using namespace firststep;
using namespace firststep::experiment;

namespace {

std::string fixture(const std::string& rel) {
    return std::string(FIRSTSTEP_SOURCE_DIR) + "/data/fixtures/" + rel;
}

dataset::ProblemSet fixture_corpus() {
    return dataset::load_problem_set(fixture("corpus.jsonl"), dataset::Format::Gsm8k);
}

backend::ScriptedBackend fixture_backend() {
    return backend::ScriptedBackend(backend::ScriptedModel::load(fixture("model_basic.json")));
}

dataset::Problem make_problem(const std::string& id, long long gold, int steps) {
    dataset::Problem p;
    p.id = id;
    p.question = "Question for " + id + "?";
    p.gold_answer = Number(gold);
    p.steps = steps;
    return p;
}

backend::ScriptedEntry entry(double p, const std::string& chain, const std::string& distractor) {
    backend::ScriptedEntry e;
    e.p_correct = p;
    e.correct_chain = chain;
    e.distractors = {distractor};
    return e;
}

EvalReport report_with(const std::vector<std::pair<std::string, bool>>& outcomes,
                       const std::string& strategy) {
    EvalReport r;
    r.strategy = strategy;
    for (const auto& [id, correct] : outcomes) {
        PerProblem pp;
        pp.correct = correct;
        r.per_problem[id] = pp;
    }
    return r;
}

}  // namespace

TEST_CASE("completions are scored on the reassembled text, prefix included") {
    auto pp = score_completion("So 2 + 2 = 4. Final Answer: 4", "", Number(4));
    CHECK(pp.correct);
    CHECK(pp.source == "final_answer_marker");
    REQUIRE(pp.answer.has_value());
    CHECK(*pp.answer == Number(4));

    // the injected prefix participates in extraction
    auto with_prefix = score_completion("No further numbers here.", "We need 21 things.",
                                        Number(21));
    CHECK(with_prefix.correct);
    CHECK(with_prefix.source == "last_number");

    auto wrong = score_completion("Final Answer: 9", "", Number(5));
    CHECK_FALSE(wrong.correct);

    auto nothing = score_completion("no digits anywhere", "", Number(5));
    CHECK_FALSE(nothing.correct);
    CHECK_FALSE(nothing.answer.has_value());
    CHECK(nothing.source == "none");
}

TEST_CASE("a greedy pass over the fixture corpus lands exactly where it was scripted") {
    auto ds = fixture_corpus();
    auto be = fixture_backend();
    RunOptions opt;
    opt.parallelism = 3;

    GreedyOutput out = run_greedy_eval(be, ds, opt);
    const EvalReport& r = out.report;
    CHECK(r.total == 10);
    CHECK(r.correct_count == 7);
    CHECK(r.accuracy == doctest::Approx(0.7));
    CHECK(r.strategy == "cot");
    CHECK(r.backend_id == "scripted");
    CHECK(r.model == "fixture-model");
    CHECK(r.dataset_name == "corpus");
    CHECK(r.guided_count == 0);
    CHECK(r.fallback_count == 0);
    CHECK(r.errored_ids.empty());
    CHECK(be.calls() == 10);

    // scripted misses: 0003, 0005, 0008
    CHECK_FALSE(r.per_problem.at("gsm8k-0003").correct);
    CHECK_FALSE(r.per_problem.at("gsm8k-0005").correct);
    CHECK_FALSE(r.per_problem.at("gsm8k-0008").correct);
    CHECK(r.per_problem.at("gsm8k-0001").correct);

    // step buckets: 2 -> {0001,0003,0007,0010}, 3 -> {0006,0008,0009},
    // 4 -> {0002,0004}, 5 -> {0005}
    REQUIRE(r.by_steps.size() == 4);
    CHECK(r.by_steps.at(2).total == 4);
    CHECK(r.by_steps.at(2).correct == 3);
    CHECK(r.by_steps.at(3).total == 3);
    CHECK(r.by_steps.at(3).correct == 2);
    CHECK(r.by_steps.at(4).total == 2);
    CHECK(r.by_steps.at(4).correct == 2);
    CHECK(r.by_steps.at(5).total == 1);
    CHECK(r.by_steps.at(5).correct == 0);

    REQUIRE(out.records.size() == 10);
    for (const auto& line : out.records) {
        CHECK(line.error.empty());
        CHECK(line.prefix.empty());
        CHECK(line.record.has_value());
    }
}

TEST_CASE("backend failures are scored incorrect and listed, not fatal") {
    backend::ScriptedModel m;
    m.name = "partial";
    m.entries["a"] = entry(1.0, "Sum 1 + 1 = 2. Final answer: 2", "Nope 3. Final answer: 3");
    m.entries["b"] = entry(1.0, "Sum 2 + 2 = 4. Final answer: 4", "Nope 3. Final answer: 3");
    backend::ScriptedBackend be(m);

    dataset::ProblemSet ds;
    ds.name = "tiny";
    ds.problems = {make_problem("a", 2, 2), make_problem("b", 9, 3), make_problem("c", 1, 2)};

    RunOptions opt;
    GreedyOutput out = run_greedy_eval(be, ds, opt);
    const EvalReport& r = out.report;
    CHECK(r.total == 3);
    CHECK(r.correct_count == 1);  // a right, b wrong answer, c errored
    REQUIRE(r.errored_ids.size() == 1);
    CHECK(r.errored_ids[0] == "c");
    CHECK_FALSE(r.per_problem.at("c").error.empty());
    CHECK_FALSE(r.per_problem.at("c").correct);
    CHECK_FALSE(out.records[2].record.has_value());
    CHECK_FALSE(out.records[2].error.empty());

    RunOptions bad;
    bad.params.n = 2;
    CHECK_THROWS_AS(run_greedy_eval(be, ds, bad), ConfigError);
    dataset::ProblemSet empty;
    CHECK_THROWS_AS(run_greedy_eval(be, empty, opt), ConfigError);
}

TEST_CASE("guided runs inject where they can and fall back where they must") {
    auto ds = fixture_corpus();
    auto be = fixture_backend();

    RunOptions opt;
    opt.strategy = prompting::Strategy::GuidedCoT;
    auto add_step = [&](const std::string& id, const std::string& text) {
        guidance::FirstStep s;
        s.problem_id = id;
        s.teacher_model = "fixture-model";
        s.text = text;
        s.leak_checked = true;
        s.leaked = false;
        opt.first_steps[id] = s;
    };
    add_step("gsm8k-0003", "Gene has 12 + 4 = 16 marbles.");
    add_step("gsm8k-0005", "The diner washes 40 + 25 = 65 cups.");
    add_step("gsm8k-0008", "The car travels 55 * 4 = 220 miles.");
    // a leaked step must be refused and the problem scored as plain cot
    guidance::FirstStep leaky;
    leaky.problem_id = "gsm8k-0001";
    leaky.teacher_model = "fixture-model";
    leaky.text = "Thomas trains 150 + 60 = 210 hours.";
    leaky.leak_checked = true;
    leaky.leaked = true;
    opt.first_steps["gsm8k-0001"] = leaky;

    GreedyOutput out = run_greedy_eval(be, ds, opt);
    const EvalReport& r = out.report;
    CHECK(r.strategy == "guided");
    CHECK(r.guided_count == 3);
    CHECK(r.fallback_count == 7);
    CHECK(r.correct_count == 10);  // guidance flips the three scripted misses
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.per_problem.at("gsm8k-0003").guided);
    CHECK(r.per_problem.at("gsm8k-0003").correct);
    CHECK_FALSE(r.per_problem.at("gsm8k-0001").guided);
    CHECK(r.per_problem.at("gsm8k-0001").correct);

    for (const auto& line : out.records) {
        if (line.problem_id == "gsm8k-0005") {
            CHECK(line.prefix == "The diner washes 40 + 25 = 65 cups.");
        }
        if (line.problem_id == "gsm8k-0001") {
            CHECK(line.prefix.empty());
        }
    }
}

TEST_CASE("sampling draws the largest count once and reads every n off that prefix") {
    backend::ScriptedModel m;
    m.name = "sampler";
    m.seed = 11;
    m.entries["always"] = entry(1.0, "Sum 1 + 1 = 2. Final answer: 2",
                                "Off 5 + 0 = 5. Final answer: 5");
    m.entries["never"] = entry(0.0, "Sum 2 + 2 = 4. Final answer: 4",
                               "Off 3 + 4 = 7. Final answer: 7");
    m.entries["coin"] = entry(0.5, "Yes 1 + 0 = 1. Final answer: 1",
                              "No 0 + 0 = 0. Final answer: 0");
    backend::ScriptedBackend be(m);

    dataset::ProblemSet ds;
    ds.name = "sampling";
    ds.problems = {make_problem("always", 2, 2), make_problem("never", 4, 2),
                   make_problem("coin", 1, 2), make_problem("missing", 1, 2)};

    RunOptions opt;
    opt.params.temperature = 0.7;
    std::vector<int> counts{1, 2, 4, 8};
    SamplingOutput out = run_sampling_eval(be, ds, counts, opt);
    const SamplingCurve& c = out.curve;

    CHECK(be.calls() == 24);  // 3 reachable problems x max n, drawn exactly once
    CHECK(c.temperature == doctest::Approx(0.7));
    CHECK(c.sample_counts == counts);
    REQUIRE(c.errored_ids.size() == 1);
    CHECK(c.errored_ids[0] == "missing");

    const auto& always = c.per_problem_correct.at("always");
    REQUIRE(always.size() == 8);
    for (bool b : always) CHECK(b);
    for (bool b : c.per_problem_correct.at("never")) CHECK_FALSE(b);
    for (bool b : c.per_problem_correct.at("missing")) CHECK_FALSE(b);

    double prev = 0.0;
    for (int n : counts) {
        double acc = c.existence_accuracy.at(n);
        CHECK(acc >= prev);  // nested prefixes force a monotone curve
        CHECK(acc >= 0.25);  // "always" is always in
        CHECK(acc <= 0.5);   // "never" and "missing" never are
        prev = acc;
    }
    CHECK(c.majority_accuracy.at(8) >= 0.25);
    CHECK(c.majority_accuracy.at(8) <= 0.5);

    // 8 lines per reachable problem, one error line for the missing one
    CHECK(out.records.size() == 25);

    CHECK_THROWS_AS(run_sampling_eval(be, ds, {}, opt), ConfigError);
    CHECK_THROWS_AS(run_sampling_eval(be, ds, {0}, opt), ConfigError);
}

TEST_CASE("existence accuracy asks whether any of the first n samples hit") {
    std::vector<std::vector<bool>> m{{true, false}, {false, false}};
    CHECK(existence_accuracy(m, 1) == doctest::Approx(0.5));
    CHECK(existence_accuracy(m, 2) == doctest::Approx(0.5));

    std::vector<std::vector<bool>> late{{false, true}, {false, false}};
    CHECK(existence_accuracy(late, 1) == doctest::Approx(0.0));
    CHECK(existence_accuracy(late, 2) == doctest::Approx(0.5));

    CHECK_THROWS_AS(existence_accuracy({}, 1), EvalError);
    CHECK_THROWS_AS(existence_accuracy(m, 0), EvalError);
    CHECK_THROWS_AS(existence_accuracy(m, 3), EvalError);  // more than was drawn
}

TEST_CASE("majority vote clusters tolerant-equal answers and keeps early ties") {
    CHECK(majority_vote({Number(4), Number(5), Number(4)}) == Number(4));
    // tie between 5 and 4: the cluster seen first wins
    CHECK(majority_vote({Number(5), Number(4), Number(4), Number(5)}) == Number(5));
    // near-equal values count into one cluster
    auto rep = majority_vote({*Number::parse_decimal("100"), *Number::parse_decimal("100.005"),
                              Number(3)});
    CHECK(rep == *Number::parse_decimal("100"));
    CHECK_THROWS_AS(majority_vote({}), EvalError);
}

TEST_CASE("step stratification clamps the bucket range and skips unknown depths") {
    dataset::ProblemSet ds;
    ds.name = "steps";
    ds.problems = {make_problem("one", 1, 1), make_problem("two", 1, 2),
                   make_problem("nine", 1, 9), make_problem("blank", 1, 0)};
    EvalReport r = report_with({{"one", true}, {"two", false}, {"nine", true}, {"blank", true}},
                               "cot");

    auto buckets = stratify_by_steps(r, ds);
    REQUIRE(buckets.size() == 2);
    CHECK(buckets.at(2).total == 2);  // steps 1 clamps up into the 2 bucket
    CHECK(buckets.at(2).correct == 1);
    CHECK(buckets.at(8).total == 1);  // steps 9 clamps down
    CHECK(buckets.at(8).correct == 1);
    CHECK(buckets.at(8).accuracy == doctest::Approx(1.0));
    // "blank" has no solution depth and joins no bucket
    long long counted = 0;
    for (const auto& [b, stat] : buckets) counted += stat.total;
    CHECK(counted == 3);

    dataset::ProblemSet no_steps;
    no_steps.name = "flat";
    no_steps.problems = {make_problem("x", 1, 0)};
    EvalReport rx = report_with({{"x", true}}, "cot");
    CHECK_THROWS_AS(stratify_by_steps(rx, no_steps), ConfigError);

    EvalReport stray = report_with({{"ghost", true}}, "cot");
    CHECK_THROWS_AS(stratify_by_steps(stray, ds), EvalError);
}

TEST_CASE("overlap regions partition the problems across three strategies") {
    EvalReport a = report_with({{"p1", true}, {"p2", true}, {"p3", false}, {"p4", false}}, "cot");
    EvalReport b = report_with({{"p1", false}, {"p2", true}, {"p3", false}, {"p4", false}},
                               "subques");
    EvalReport c = report_with({{"p1", false}, {"p2", true}, {"p3", true}, {"p4", false}},
                               "questcot");

    VennCounts v = overlap_sets(a, b, c);
    CHECK(v.names[0] == "cot");
    CHECK(v.regions[0] == 1);  // p4: none
    CHECK(v.regions[1] == 1);  // p1: a only
    CHECK(v.regions[4] == 1);  // p3: c only
    CHECK(v.regions[7] == 1);  // p2: all three
    CHECK(v.regions[2] + v.regions[3] + v.regions[5] + v.regions[6] == 0);
    CHECK(v.total() == 4);
    CHECK(v.correct_of(0) == 2);
    CHECK(v.correct_of(1) == 1);
    CHECK(v.correct_of(2) == 2);

    auto j = v.to_json();
    CHECK(j["regions"]["abc"] == 1);
    CHECK(j["totals"]["problems"] == 4);

    EvalReport misaligned = report_with({{"p1", true}}, "cot");
    CHECK_THROWS_AS(overlap_sets(a, b, misaligned), EvalError);
}

TEST_CASE("the parallel driver touches every index once and rethrows failures") {
    constexpr std::size_t kCount = 200;
    std::vector<std::atomic<int>> touched(kCount);
    parallel_for(kCount, 4, [&](std::size_t i) { touched[i].fetch_add(1); });
    for (const auto& t : touched) CHECK(t.load() == 1);

    // sequential fallback path
    std::vector<std::atomic<int>> seq(5);
    parallel_for(5, 1, [&](std::size_t i) { seq[i].fetch_add(1); });
    for (const auto& t : seq) CHECK(t.load() == 1);

    parallel_for(0, 4, [](std::size_t) { throw std::runtime_error("never called"); });

    CHECK_THROWS_WITH_AS(
        parallel_for(50, 4,
                     [](std::size_t i) {
                         if (i == 13) throw std::runtime_error("boom at 13");
                     }),
        "boom at 13", std::runtime_error);
}

TEST_CASE("record lines round-trip with and without a generation") {
    RecordLine ok;
    ok.problem_id = "p1";
    ok.prefix = "First 1 + 1 = 2.";
    backend::GenerationRecord rec;
    rec.backend_id = "scripted";
    rec.model = "m";
    rec.prompt_hash = "h";
    rec.sample_index = 2;
    rec.text = "body";
    rec.created_at = "2026-01-01T00:00:00Z";
    ok.record = rec;

    RecordLine back = RecordLine::from_json(ok.to_json());
    CHECK(back.problem_id == "p1");
    CHECK(back.prefix == ok.prefix);
    CHECK(back.error.empty());
    REQUIRE(back.record.has_value());
    CHECK(back.record->text == "body");
    CHECK(back.record->sample_index == 2);

    RecordLine failed;
    failed.problem_id = "p2";
    failed.error = "backend down";
    RecordLine fb = RecordLine::from_json(failed.to_json());
    CHECK(fb.error == "backend down");
    CHECK_FALSE(fb.record.has_value());
}
