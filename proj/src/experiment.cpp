#include "firststep/experiment.hpp"

#include "firststep/errors.hpp"
#include "firststep/extraction.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace firststep::experiment {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ordered_json RecordLine::to_json() const {
    ordered_json j;
    j["problem_id"] = problem_id;
    j["prefix"] = prefix;
    j["error"] = error;
    j["record"] = record ? record->to_json() : ordered_json(nullptr);
    return j;
}

RecordLine RecordLine::from_json(const json& j) {
    RecordLine line;
    line.problem_id = j.at("problem_id").get<std::string>();
    line.prefix = j.at("prefix").get<std::string>();
    line.error = j.at("error").get<std::string>();
    if (j.contains("record") && !j["record"].is_null()) {
        line.record = backend::GenerationRecord::from_json(j["record"]);
    }
    return line;
}

ordered_json EvalReport::to_json() const {
    ordered_json j;
    j["kind"] = "greedy";
    j["run_id"] = run_id;
    j["strategy"] = strategy;
    j["backend_id"] = backend_id;
    j["model"] = model;
    j["dataset"] = ordered_json{{"name", dataset_name}, {"split", split}};
    j["accuracy"] = accuracy;
    j["correct_count"] = correct_count;
    j["total"] = total;
    j["guided_count"] = guided_count;
    j["fallback_count"] = fallback_count;
    j["completion_tokens"] = completion_tokens;
    ordered_json steps = ordered_json::object();
    for (const auto& [bucket, stat] : by_steps) {
        steps[std::to_string(bucket)] = ordered_json{
            {"correct", stat.correct}, {"total", stat.total}, {"accuracy", stat.accuracy}};
    }
    j["by_steps"] = steps;
    j["errored_ids"] = errored_ids;
    ordered_json per = ordered_json::object();
    for (const auto& [id, pp] : per_problem) {
        ordered_json e;
        e["answer"] = pp.answer ? ordered_json(pp.answer->str()) : ordered_json(nullptr);
        e["source"] = pp.source;
        e["correct"] = pp.correct;
        e["guided"] = pp.guided;
        e["error"] = pp.error;
        per[id] = e;
    }
    j["per_problem"] = per;
    j["config"] = config.is_null() ? ordered_json::object() : config;
    return j;
}

ordered_json SamplingCurve::to_json() const {
    ordered_json j;
    j["kind"] = "sampling";
    j["run_id"] = run_id;
    j["strategy"] = strategy;
    j["backend_id"] = backend_id;
    j["model"] = model;
    j["dataset"] = ordered_json{{"name", dataset_name}, {"split", split}};
    j["temperature"] = temperature;
    j["sample_counts"] = sample_counts;
    ordered_json ex = ordered_json::object();
    for (const auto& [n, acc] : existence_accuracy) ex[std::to_string(n)] = acc;
    j["existence_accuracy"] = ex;
    ordered_json maj = ordered_json::object();
    for (const auto& [n, acc] : majority_accuracy) maj[std::to_string(n)] = acc;
    j["majority_accuracy"] = maj;
    j["errored_ids"] = errored_ids;
    ordered_json per = ordered_json::object();
    for (const auto& [id, mask] : per_problem_correct) {
        std::string bits;
        bits.reserve(mask.size());
        for (bool b : mask) bits += b ? '1' : '0';
        per[id] = bits;
    }
    j["per_problem_correct"] = per;
    j["config"] = config.is_null() ? ordered_json::object() : config;
    return j;
}

long long VennCounts::total() const {
    long long t = 0;
    for (long long r : regions) t += r;
    return t;
}

long long VennCounts::correct_of(int which) const {
    long long t = 0;
    for (int mask = 0; mask < 8; ++mask) {
        if (mask & (1 << which)) t += regions[mask];
    }
    return t;
}

ordered_json VennCounts::to_json() const {
    ordered_json j;
    j["strategies"] = std::vector<std::string>(names.begin(), names.end());
    ordered_json r;
    r["none"] = regions[0];
    r["a_only"] = regions[1];
    r["b_only"] = regions[2];
    r["ab"] = regions[3];
    r["c_only"] = regions[4];
    r["ac"] = regions[5];
    r["bc"] = regions[6];
    r["abc"] = regions[7];
    j["regions"] = r;
    j["totals"] = ordered_json{{"a", correct_of(0)},
                               {"b", correct_of(1)},
                               {"c", correct_of(2)},
                               {"problems", total()}};
    return j;
}

void parallel_for(std::size_t count, int parallelism,
                  const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    std::size_t nthreads = std::max(1, parallelism);
    nthreads = std::min(nthreads, count);
    if (nthreads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

struct BuiltPrompt {
    prompting::PromptSpec prompt;
    bool guided = false;
    std::string prefix;
};

BuiltPrompt build_prompt(const dataset::Problem& p, const RunOptions& opt) {
    if (opt.strategy == prompting::Strategy::GuidedCoT) {
        auto it = opt.first_steps.find(p.id);
        if (it != opt.first_steps.end()) {
            try {
                auto spec = guidance::inject_guidance(p, it->second, opt.exemplars, opt.tmpl);
                BuiltPrompt built{std::move(spec), true, ""};
                built.prefix = *built.prompt.guidance_prefix;
                return built;
            } catch (const RefusalError&) {
                // leaked or unguidable: score this problem as plain CoT
            }
        }
        return {prompting::render_prompt(prompting::Strategy::CoT, opt.tmpl, opt.exemplars,
                                         p.id, p.question),
                false, ""};
    }
    return {prompting::render_prompt(opt.strategy, opt.tmpl, opt.exemplars, p.id, p.question),
            false, ""};
}

}  // namespace

PerProblem score_completion(const std::string& completion, const std::string& prefix,
                            const Number& gold) {
    std::string full = prefix.empty() ? completion : prefix + " " + completion;
    auto extracted = extraction::extract_answer(full);
    PerProblem pp;
    pp.answer = extracted.value;
    pp.source = extraction::to_string(extracted.source);
    pp.correct = extracted.value && extraction::answers_equal(*extracted.value, gold);
    return pp;
}

GreedyOutput run_greedy_eval(backend::Backend& be, const dataset::ProblemSet& ds,
                             const RunOptions& opt) {
    if (opt.params.n != 1) throw ConfigError("greedy evaluation runs one sample per problem");
    if (ds.problems.empty()) throw ConfigError("dataset is empty");

    struct Slot {
        RecordLine line;
        PerProblem pp;
    };
    std::vector<Slot> slots(ds.problems.size());

    parallel_for(ds.problems.size(), opt.parallelism, [&](std::size_t i) {
        const dataset::Problem& p = ds.problems[i];
        Slot& slot = slots[i];
        slot.line.problem_id = p.id;
        BuiltPrompt built = build_prompt(p, opt);
        slot.line.prefix = built.prefix;
        try {
            backend::GenerationRecord rec = be.complete_one(built.prompt, opt.params, 0);
            slot.pp = score_completion(rec.text, built.prefix, p.gold_answer);
            slot.line.record = std::move(rec);
        } catch (const BackendError& e) {
            slot.line.error = e.what();
            slot.pp.error = e.what();
        } catch (const ProtocolError& e) {
            slot.line.error = e.what();
            slot.pp.error = e.what();
        }
        slot.pp.guided = built.guided;
    });

    GreedyOutput out;
    EvalReport& r = out.report;
    r.strategy = prompting::to_string(opt.strategy);
    r.backend_id = be.id();
    r.model = be.model();
    r.dataset_name = ds.name;
    r.split = dataset::to_string(ds.split);
    r.total = static_cast<long long>(ds.problems.size());
    for (auto& slot : slots) {
        if (slot.pp.correct) ++r.correct_count;
        if (slot.pp.guided) {
            ++r.guided_count;
        } else if (opt.strategy == prompting::Strategy::GuidedCoT) {
            ++r.fallback_count;
        }
        if (!slot.line.error.empty()) r.errored_ids.push_back(slot.line.problem_id);
        if (slot.line.record && slot.line.record->completion_tokens) {
            r.completion_tokens += *slot.line.record->completion_tokens;
        }
        r.per_problem[slot.line.problem_id] = std::move(slot.pp);
        out.records.push_back(std::move(slot.line));
    }
    r.accuracy = static_cast<double>(r.correct_count) / static_cast<double>(r.total);
    try {
        r.by_steps = stratify_by_steps(r, ds);
    } catch (const ConfigError&) {
        // corpus without worked solutions: no stratification
    }
    return out;
}

SamplingOutput run_sampling_eval(backend::Backend& be, const dataset::ProblemSet& ds,
                                 const std::vector<int>& sample_counts, const RunOptions& opt) {
    if (ds.problems.empty()) throw ConfigError("dataset is empty");
    if (sample_counts.empty()) throw ConfigError("sample_counts must be non-empty");
    for (int n : sample_counts) {
        if (n < 1) throw ConfigError("sample counts must be >= 1");
    }
    int max_n = *std::max_element(sample_counts.begin(), sample_counts.end());

    struct Slot {
        std::vector<RecordLine> lines;
        std::vector<bool> correct;
        std::vector<std::optional<Number>> answers;
        std::string error;
    };
    std::vector<Slot> slots(ds.problems.size());

    backend::SamplingParams params = opt.params;
    params.n = max_n;

    parallel_for(ds.problems.size(), opt.parallelism, [&](std::size_t i) {
        const dataset::Problem& p = ds.problems[i];
        Slot& slot = slots[i];
        slot.correct.assign(max_n, false);
        slot.answers.assign(max_n, std::nullopt);
        BuiltPrompt built = build_prompt(p, opt);
        try {
            auto recs = be.complete(built.prompt, params);
            for (int j = 0; j < max_n; ++j) {
                RecordLine line;
                line.problem_id = p.id;
                line.prefix = built.prefix;
                PerProblem pp = score_completion(recs[j].text, built.prefix, p.gold_answer);
                slot.correct[j] = pp.correct;
                slot.answers[j] = pp.answer;
                line.record = std::move(recs[j]);
                slot.lines.push_back(std::move(line));
            }
        } catch (const BackendError& e) {
            slot.error = e.what();
        } catch (const ProtocolError& e) {
            slot.error = e.what();
        }
        if (!slot.error.empty()) {
            RecordLine line;
            line.problem_id = p.id;
            line.prefix = built.prefix;
            line.error = slot.error;
            slot.lines.assign(1, std::move(line));
        }
    });

    SampleMatrix m;
    SamplingOutput out;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        auto& slot = slots[i];
        m.ids.push_back(ds.problems[i].id);
        m.errors.push_back(slot.error);
        m.correct.push_back(std::move(slot.correct));
        m.answers.push_back(std::move(slot.answers));
        for (auto& line : slot.lines) out.records.push_back(std::move(line));
    }
    out.curve = curve_from_matrix(m, ds, sample_counts);
    out.curve.backend_id = be.id();
    out.curve.model = be.model();
    out.curve.dataset_name = ds.name;
    out.curve.split = dataset::to_string(ds.split);
    out.curve.strategy = prompting::to_string(opt.strategy);
    out.curve.temperature = opt.params.temperature;
    return out;
}

SamplingCurve curve_from_matrix(const SampleMatrix& m, const dataset::ProblemSet& ds,
                                const std::vector<int>& sample_counts) {
    SamplingCurve curve;
    curve.sample_counts = sample_counts;
    std::vector<const dataset::Problem*> problems;
    problems.reserve(m.ids.size());
    for (std::size_t i = 0; i < m.ids.size(); ++i) {
        const dataset::Problem* p = ds.find(m.ids[i]);
        if (!p) throw EvalError("sample matrix references unknown problem '" + m.ids[i] + "'");
        problems.push_back(p);
        if (!m.errors[i].empty()) curve.errored_ids.push_back(m.ids[i]);
        curve.per_problem_correct[m.ids[i]] = m.correct[i];
    }
    for (int n : sample_counts) {
        curve.existence_accuracy[n] = existence_accuracy(m.correct, n);
        long long maj_hits = 0;
        for (std::size_t i = 0; i < m.ids.size(); ++i) {
            std::vector<Number> present;
            for (int j = 0; j < n; ++j) {
                if (m.answers[i][j]) present.push_back(*m.answers[i][j]);
            }
            if (present.empty()) continue;
            if (extraction::answers_equal(majority_vote(present), problems[i]->gold_answer)) {
                ++maj_hits;
            }
        }
        curve.majority_accuracy[n] =
            static_cast<double>(maj_hits) / static_cast<double>(m.ids.size());
    }
    return curve;
}

double existence_accuracy(const std::vector<std::vector<bool>>& per_problem_correct, int n) {
    if (per_problem_correct.empty()) throw EvalError("existence accuracy over zero problems");
    if (n < 1) throw EvalError("existence accuracy needs n >= 1");
    long long hits = 0;
    for (const auto& v : per_problem_correct) {
        if (static_cast<int>(v.size()) < n) {
            throw EvalError("a problem has fewer than n=" + std::to_string(n) + " samples");
        }
        for (int j = 0; j < n; ++j) {
            if (v[j]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(per_problem_correct.size());
}

Number majority_vote(const std::vector<Number>& answers) {
    if (answers.empty()) throw EvalError("majority vote over an empty answer list");
    struct Cluster {
        Number rep;  // first occurrence
        int count = 0;
    };
    std::vector<Cluster> clusters;
    for (const auto& a : answers) {
        bool placed = false;
        for (auto& c : clusters) {
            if (extraction::answers_equal(a, c.rep)) {
                ++c.count;
                placed = true;
                break;
            }
        }
        if (!placed) clusters.push_back({a, 1});
    }
    const Cluster* best = &clusters.front();
    for (const auto& c : clusters) {
        if (c.count > best->count) best = &c;  // ties keep the earlier cluster
    }
    return best->rep;
}

std::map<int, BucketStat> stratify_by_steps(const EvalReport& report,
                                            const dataset::ProblemSet& ds) {
    bool any_steps = false;
    for (const auto& p : ds.problems) {
        if (p.steps >= 1) {
            any_steps = true;
            break;
        }
    }
    if (!any_steps) {
        throw ConfigError("dataset '" + ds.name + "' has no step counts; stratification needs "
                          "worked solutions");
    }
    std::map<int, BucketStat> out;
    for (const auto& [id, pp] : report.per_problem) {
        const dataset::Problem* p = ds.find(id);
        if (!p) throw EvalError("report references unknown problem '" + id + "'");
        if (p->steps < 1) continue;
        int bucket = std::clamp(p->steps, 2, 8);
        BucketStat& stat = out[bucket];
        ++stat.total;
        if (pp.correct) ++stat.correct;
    }
    for (auto& [bucket, stat] : out) {
        stat.accuracy = static_cast<double>(stat.correct) / static_cast<double>(stat.total);
    }
    return out;
}

VennCounts overlap_sets(const EvalReport& a, const EvalReport& b, const EvalReport& c) {
    auto same_ids = [](const EvalReport& x, const EvalReport& y) {
        if (x.per_problem.size() != y.per_problem.size()) return false;
        auto ix = x.per_problem.begin();
        auto iy = y.per_problem.begin();
        for (; ix != x.per_problem.end(); ++ix, ++iy) {
            if (ix->first != iy->first) return false;
        }
        return true;
    };
    if (!same_ids(a, b) || !same_ids(a, c)) {
        throw EvalError("overlap analysis needs three reports over the same problem ids");
    }
    VennCounts v;
    v.names = {a.strategy, b.strategy, c.strategy};
    for (const auto& [id, pa] : a.per_problem) {
        int mask = 0;
        if (pa.correct) mask |= 1;
        if (b.per_problem.at(id).correct) mask |= 2;
        if (c.per_problem.at(id).correct) mask |= 4;
        ++v.regions[mask];
    }
    return v;
}

}  // namespace firststep::experiment
