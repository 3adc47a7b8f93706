#pragma once

#include "firststep/backend.hpp"
#include "firststep/dataset.hpp"
#include "firststep/guidance.hpp"
#include "firststep/numeric.hpp"
#include "firststep/prompting.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace firststep::experiment {

// One line of records.jsonl: a generation (or a failure) tied to its problem.
struct RecordLine {
    std::string problem_id;
    std::string prefix;  // injected guidance, empty otherwise
    std::string error;   // backend failure text, empty otherwise
    std::optional<backend::GenerationRecord> record;

    nlohmann::ordered_json to_json() const;
    static RecordLine from_json(const nlohmann::json& j);
};

struct PerProblem {
    std::optional<Number> answer;
    std::string source;  // extraction source label
    bool correct = false;
    bool guided = false;  // guidance prefix actually injected
    std::string error;
};

struct BucketStat {
    long long correct = 0;
    long long total = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::string run_id;
    std::string strategy;
    std::string backend_id;
    std::string model;
    std::string dataset_name;
    std::string split;
    double accuracy = 0.0;
    long long correct_count = 0;
    long long total = 0;
    long long guided_count = 0;    // guided strategy: prefixes injected
    long long fallback_count = 0;  // guided strategy: scored as plain CoT
    long long completion_tokens = 0;  // summed where the backend reports them
    std::map<int, BucketStat> by_steps;
    std::vector<std::string> errored_ids;
    std::map<std::string, PerProblem> per_problem;
    nlohmann::ordered_json config;  // snapshot, set by the caller

    nlohmann::ordered_json to_json() const;
};

struct SamplingCurve {
    std::string run_id;
    std::string backend_id;
    std::string model;
    std::string dataset_name;
    std::string split;
    std::string strategy;
    double temperature = 0.7;
    std::vector<int> sample_counts;
    std::map<int, double> existence_accuracy;
    std::map<int, double> majority_accuracy;  // maj@n over the same prefixes
    std::map<std::string, std::vector<bool>> per_problem_correct;  // nested max-n draws
    std::vector<std::string> errored_ids;
    nlohmann::ordered_json config;

    nlohmann::ordered_json to_json() const;
};

// Region counts of three per-problem correctness sets. regions[mask] uses
// bit 0 for the first report, bit 1 for the second, bit 2 for the third;
// mask 0 counts problems no strategy solved.
struct VennCounts {
    std::array<std::string, 3> names;
    std::array<long long, 8> regions{};

    long long total() const;
    long long correct_of(int which) const;  // 0..2
    nlohmann::ordered_json to_json() const;
};

struct RunOptions {
    prompting::Strategy strategy = prompting::Strategy::CoT;
    prompting::PromptTemplate tmpl;
    std::vector<prompting::Exemplar> exemplars;
    backend::SamplingParams params;
    int parallelism = 4;
    // Guided runs: first steps keyed by problem id. Problems whose step is
    // missing, leaked, or unguidable fall back to plain CoT and are counted.
    std::map<std::string, guidance::FirstStep> first_steps;
};

struct GreedyOutput {
    EvalReport report;
    std::vector<RecordLine> records;
};

struct SamplingOutput {
    SamplingCurve curve;
    std::vector<RecordLine> records;
};

// One greedy completion per problem; answers checked against gold. Backend
// failures are recorded per problem, scored incorrect, and listed.
GreedyOutput run_greedy_eval(backend::Backend& be, const dataset::ProblemSet& ds,
                             const RunOptions& opt);

// Draws max(sample_counts) samples once per problem; every n is evaluated on
// the first n samples, so the curve is monotone by construction.
SamplingOutput run_sampling_eval(backend::Backend& be, const dataset::ProblemSet& ds,
                                 const std::vector<int>& sample_counts, const RunOptions& opt);

// Extraction and gold comparison over an optionally prefixed completion.
// Fills answer/source/correct; guided and error are the caller's business.
PerProblem score_completion(const std::string& completion, const std::string& prefix,
                            const Number& gold);

// Per-problem sampling outcomes in problem order; the shared input of the
// live runner and the records.jsonl rebuild.
struct SampleMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> errors;  // per problem, empty when fine
    std::vector<std::vector<bool>> correct;
    std::vector<std::vector<std::optional<Number>>> answers;
};

// Metric aggregation for a sampling run; identity fields are left blank.
SamplingCurve curve_from_matrix(const SampleMatrix& m, const dataset::ProblemSet& ds,
                                const std::vector<int>& sample_counts);

// Fraction of problems with a correct answer among their first n samples.
double existence_accuracy(const std::vector<std::vector<bool>>& per_problem_correct, int n);

// Most frequent value under answers_equal clustering; ties go to the value
// whose first occurrence is earliest.
Number majority_vote(const std::vector<Number>& answers);

// Buckets 2..8 with clamping; problems without step counts are excluded.
// Throws ConfigError when the dataset carries no step counts at all.
std::map<int, BucketStat> stratify_by_steps(const EvalReport& report,
                                            const dataset::ProblemSet& ds);

// Three reports over the identical id set -> 8 Venn region counts.
VennCounts overlap_sets(const EvalReport& a, const EvalReport& b, const EvalReport& c);

// Runs fn(0..count-1) across `parallelism` threads; rethrows the first error.
void parallel_for(std::size_t count, int parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace firststep::experiment
