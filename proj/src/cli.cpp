#include "firststep/cli.hpp"

#include "firststep/backend.hpp"
#include "firststep/dataset.hpp"
#include "firststep/errors.hpp"
#include "firststep/experiment.hpp"
#include "firststep/guidance.hpp"
#include "firststep/prompting.hpp"
#include "firststep/reporting.hpp"
#include "firststep/sha256.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace firststep::cli {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct Flags {
    std::string config_path;

    std::string dataset_path;
    std::string format = "gsm8k";
    std::string split = "test";
    std::string dataset_name;  // default: file stem

    std::string strategy = "cot";

    std::string backend = "scripted";
    std::string model;  // http backend model name
    std::string base_url = "http://localhost:8000";
    std::string api = "completions";
    std::string scripted_model;
    std::string cache_dir = "cache";
    bool no_cache = false;

    std::string exemplars_path;
    std::string exemplar_format = "store";
    int shots = 4;
    std::uint64_t seed = 0;
    bool seed_given = false;  // only then does it reach the scripted sampler

    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 512;
    int n = 1;
    std::string eot = prompting::kDefaultEot;

    std::string first_steps_path;
    std::string teacher_model;
    std::vector<int> sample_counts{1, 3, 5, 10, 15, 20, 25, 30, 35};

    std::string out_root = "runs";
    int parallelism = 4;
};

std::string fmtd(double v, const char* spec = "%.4f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string file_sha256(const std::string& path) {
    return sha256_hex(reporting::read_text_file(path));
}

// Keys a --config file may carry; each subcommand applies the ones it owns.
const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "dataset",       "format",     "split",          "name",        "strategy",
        "backend",       "model",      "base_url",       "api",         "scripted_model",
        "cache_dir",     "no_cache",   "exemplars",      "exemplar_format",
        "shots",         "seed",       "temperature",    "top_p",       "max_tokens",
        "n",             "eot",        "first_steps",    "teacher_model",
        "sample_counts", "out",        "parallelism",
    };
    return keys;
}

// Explicit flags win over config-file values, which win over defaults.
void apply_config_file(CLI::App* cmd, Flags& f) {
    if (f.config_path.empty()) return;
    json cfg = json::parse(reporting::read_text_file(f.config_path));
    if (!cfg.is_object()) {
        throw ConfigError(f.config_path + ": config file must hold a JSON object");
    }
    for (const auto& [key, value] : cfg.items()) {
        (void)value;
        if (!known_config_keys().count(key)) {
            throw ConfigError(f.config_path + ": unknown config key '" + key + "'");
        }
    }
    auto given = [&](const char* flag) {
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        return opt != nullptr && opt->count() > 0;
    };
    auto s = [&](const char* flag, const char* key, std::string& var) {
        if (cfg.contains(key) && !given(flag)) var = cfg.at(key).get<std::string>();
    };
    auto d = [&](const char* flag, const char* key, double& var) {
        if (cfg.contains(key) && !given(flag)) var = cfg.at(key).get<double>();
    };
    auto i = [&](const char* flag, const char* key, int& var) {
        if (cfg.contains(key) && !given(flag)) var = cfg.at(key).get<int>();
    };

    s("--dataset", "dataset", f.dataset_path);
    s("--format", "format", f.format);
    s("--split", "split", f.split);
    s("--name", "name", f.dataset_name);
    s("--strategy", "strategy", f.strategy);
    s("--backend", "backend", f.backend);
    s("--model", "model", f.model);
    s("--base-url", "base_url", f.base_url);
    s("--api", "api", f.api);
    s("--scripted-model", "scripted_model", f.scripted_model);
    s("--cache-dir", "cache_dir", f.cache_dir);
    s("--exemplars", "exemplars", f.exemplars_path);
    s("--exemplar-format", "exemplar_format", f.exemplar_format);
    s("--eot", "eot", f.eot);
    s("--first-steps", "first_steps", f.first_steps_path);
    s("--teacher-model", "teacher_model", f.teacher_model);
    s("--out", "out", f.out_root);
    i("--shots", "shots", f.shots);
    i("--max-tokens", "max_tokens", f.max_tokens);
    i("--n", "n", f.n);
    i("--parallelism", "parallelism", f.parallelism);
    d("--temperature", "temperature", f.temperature);
    d("--top-p", "top_p", f.top_p);
    if (cfg.contains("no_cache") && !given("--no-cache")) f.no_cache = cfg.at("no_cache").get<bool>();
    if (cfg.contains("seed") && !given("--seed")) {
        f.seed = cfg.at("seed").get<std::uint64_t>();
        f.seed_given = true;
    }
    if (cfg.contains("sample_counts") && !given("--samples")) {
        f.sample_counts = cfg.at("sample_counts").get<std::vector<int>>();
    }
}

dataset::ProblemSet load_ds(const Flags& f) {
    if (f.dataset_path.empty()) throw ConfigError("--dataset is required");
    return dataset::load_problem_set(f.dataset_path, dataset::parse_format(f.format),
                                     f.dataset_name, dataset::parse_split(f.split));
}

std::vector<prompting::Exemplar> load_exemplars(const Flags& f) {
    if (f.shots <= 0) return {};
    if (f.exemplars_path.empty()) {
        throw ConfigError("--exemplars is required when --shots > 0");
    }
    if (f.exemplar_format == "store") {
        return prompting::select_exemplars(prompting::load_exemplar_store(f.exemplars_path),
                                           f.shots, f.seed);
    }
    dataset::ProblemSet pool =
        dataset::load_problem_set(f.exemplars_path, dataset::parse_format(f.exemplar_format), "",
                                  dataset::Split::Train);
    return prompting::select_exemplars(pool, f.shots, f.seed);
}

struct BuiltBackend {
    std::shared_ptr<backend::Backend> engine;         // what the run uses
    backend::CachedBackend* cached = nullptr;         // non-null when caching
    ordered_json config;                              // identity block for the run config
};

BuiltBackend build_backend(const Flags& f, const std::string& model_override = "") {
    BuiltBackend b;
    std::shared_ptr<backend::Backend> inner;
    std::string model_name = model_override.empty() ? f.model : model_override;
    if (f.backend == "scripted") {
        if (f.scripted_model.empty()) {
            throw ConfigError("scripted backend requires --scripted-model <file>");
        }
        inner = std::make_shared<backend::ScriptedBackend>(
            backend::ScriptedModel::load(f.scripted_model));
        b.config = ordered_json{{"kind", "scripted"},
                                {"id", inner->id()},
                                {"model", inner->model()},
                                {"scripted_model", f.scripted_model},
                                {"sha256", file_sha256(f.scripted_model)}};
    } else if (f.backend == "http") {
        if (model_name.empty()) throw ConfigError("http backend requires --model");
        backend::HttpConfig hc;
        hc.base_url = f.base_url;
        hc.model = model_name;
        hc.api = f.api;
        inner = std::make_shared<backend::HttpBackend>(std::move(hc));
        b.config = ordered_json{{"kind", "http"},
                                {"id", inner->id()},
                                {"model", model_name},
                                {"base_url", f.base_url},
                                {"api", f.api}};
    } else {
        throw ConfigError("unknown backend '" + f.backend + "' (expected scripted or http)");
    }
    if (f.no_cache) {
        b.engine = inner;
    } else {
        auto cache = std::make_shared<backend::GenerationCache>(
            backend::cache_path_for(f.cache_dir, inner->id(), inner->model()));
        for (const auto& w : cache->warnings()) std::cerr << "warning: " << w << "\n";
        auto cached = std::make_shared<backend::CachedBackend>(inner, cache);
        b.cached = cached.get();
        b.engine = cached;
    }
    return b;
}

backend::SamplingParams params_from(const Flags& f) {
    backend::SamplingParams p;
    p.temperature = f.temperature;
    p.top_p = f.top_p;
    p.max_tokens = f.max_tokens;
    p.stop = {prompting::kStopSequence};
    if (!f.eot.empty() && f.eot != prompting::kStopSequence) p.stop.push_back(f.eot);
    if (f.backend == "scripted" && f.seed_given) p.seed = f.seed;
    return p;
}

ordered_json dataset_config(const Flags& f, const dataset::ProblemSet& ds) {
    return ordered_json{{"path", f.dataset_path},
                        {"format", dataset::to_string(dataset::parse_format(f.format))},
                        {"split", dataset::to_string(ds.split)},
                        {"name", ds.name},
                        {"sha256", file_sha256(f.dataset_path)}};
}

ordered_json exemplars_config(const Flags& f, const std::vector<prompting::Exemplar>& sel) {
    if (sel.empty()) return nullptr;
    ordered_json ids = ordered_json::array();
    for (const auto& e : sel) ids.push_back(e.id);
    return ordered_json{{"path", f.exemplars_path},
                        {"format", f.exemplar_format},
                        {"shots", f.shots},
                        {"seed", f.seed},
                        {"ids", ids}};
}

ordered_json cache_config(const Flags& f) {
    return ordered_json{{"enabled", !f.no_cache}, {"dir", f.cache_dir}};
}

dataset::ProblemSet dataset_from_config(const json& cfg) {
    const auto& d = cfg.at("dataset");
    std::string path = d.at("path").get<std::string>();
    if (d.contains("sha256") && d.at("sha256").get<std::string>() != file_sha256(path)) {
        throw ConfigError("dataset file " + path + " changed since the run (hash mismatch)");
    }
    return dataset::load_problem_set(path,
                                     dataset::parse_format(d.at("format").get<std::string>()),
                                     d.value("name", std::string()),
                                     dataset::parse_split(d.value("split", std::string("test"))));
}

reporting::RunPaths paths_in(const std::string& dir) {
    reporting::RunPaths p;
    p.dir = dir;
    p.config = dir + "/config.json";
    p.records = dir + "/records.jsonl";
    p.report_json = dir + "/report.json";
    p.report_md = dir + "/report.md";
    p.metrics_csv = dir + "/metrics.csv";
    p.curve_svg = dir + "/curve.svg";
    return p;
}

void print_backend_stats(const BuiltBackend& be) {
    std::cout << "  completions=" << be.engine->calls();
    if (be.cached) {
        std::cout << " cache_hits=" << be.cached->hits() << " cache_misses="
                  << be.cached->misses();
    }
    std::cout << "\n";
}

// Shared setup of run/sample: dataset, exemplars, backend, options, config.
struct PreparedRun {
    dataset::ProblemSet ds;
    BuiltBackend be;
    experiment::RunOptions opt;
    ordered_json cfg;
};

PreparedRun prepare_run(const Flags& f, const char* command) {
    PreparedRun pr;
    prompting::Strategy strategy = prompting::parse_strategy(f.strategy);
    pr.ds = load_ds(f);
    pr.opt.strategy = strategy;
    pr.opt.tmpl.eot = f.eot;
    pr.opt.exemplars = load_exemplars(f);
    pr.opt.params = params_from(f);
    pr.opt.parallelism = f.parallelism;
    pr.be = build_backend(f);

    ordered_json fs_cfg = nullptr;
    if (strategy == prompting::Strategy::GuidedCoT) {
        if (f.first_steps_path.empty()) {
            throw ConfigError(
                "--first-steps is required for the guided strategy (produce it with `guide`)");
        }
        for (auto& s : guidance::load_first_steps(f.first_steps_path)) {
            pr.opt.first_steps.emplace(s.problem_id, std::move(s));
        }
        fs_cfg = ordered_json{{"path", f.first_steps_path},
                              {"sha256", file_sha256(f.first_steps_path)}};
    } else if (!f.first_steps_path.empty()) {
        throw ConfigError("--first-steps only applies to --strategy guided");
    }

    pr.cfg["schema_version"] = 1;
    pr.cfg["command"] = command;
    pr.cfg["strategy"] = prompting::to_string(strategy);
    pr.cfg["dataset"] = dataset_config(f, pr.ds);
    pr.cfg["backend"] = pr.be.config;
    pr.cfg["params"] = pr.opt.params.to_json();
    pr.cfg["exemplars"] = exemplars_config(f, pr.opt.exemplars);
    pr.cfg["first_steps"] = fs_cfg;
    pr.cfg["cache"] = cache_config(f);
    pr.cfg["parallelism"] = f.parallelism;
    return pr;
}

int cmd_run(CLI::App* cmd, Flags& f) {
    apply_config_file(cmd, f);
    if (f.n != 1) {
        throw ConfigError(
            "run performs one greedy draw per problem; --n must be 1 (use `sample` for curves)");
    }
    PreparedRun pr = prepare_run(f, "run");
    std::string run_id = reporting::run_id_for(pr.cfg);

    experiment::GreedyOutput out = experiment::run_greedy_eval(*pr.be.engine, pr.ds, pr.opt);
    out.report.run_id = run_id;
    out.report.config = pr.cfg;

    reporting::RunPaths paths = reporting::run_paths(f.out_root, run_id);
    reporting::write_greedy_run(paths, pr.cfg, out.records, out.report);

    const experiment::EvalReport& r = out.report;
    std::cout << "run " << run_id << "\n"
              << "  strategy=" << r.strategy << " backend=" << r.backend_id
              << " model=" << r.model << " dataset=" << r.dataset_name << "[" << r.split << "]\n"
              << "  accuracy=" << fmtd(r.accuracy) << " correct=" << r.correct_count << "/"
              << r.total << " guided=" << r.guided_count << " fallback=" << r.fallback_count
              << " errors=" << r.errored_ids.size() << " completion_tokens="
              << r.completion_tokens << "\n";
    print_backend_stats(pr.be);
    std::cout << "  wrote " << paths.dir << "\n";
    return r.errored_ids.empty() ? 0 : 1;
}

int cmd_sample(CLI::App* cmd, Flags& f) {
    apply_config_file(cmd, f);
    std::vector<int> counts = f.sample_counts;
    if (counts.empty()) throw ConfigError("--samples needs at least one count");
    for (int n : counts) {
        if (n < 1) throw ConfigError("--samples counts must be >= 1");
    }
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());

    PreparedRun pr = prepare_run(f, "sample");
    pr.cfg["sample_counts"] = counts;
    std::string run_id = reporting::run_id_for(pr.cfg);

    experiment::SamplingOutput out =
        experiment::run_sampling_eval(*pr.be.engine, pr.ds, counts, pr.opt);
    out.curve.run_id = run_id;
    out.curve.config = pr.cfg;

    reporting::RunPaths paths = reporting::run_paths(f.out_root, run_id);
    reporting::write_sampling_run(paths, pr.cfg, out.records, out.curve);

    const experiment::SamplingCurve& c = out.curve;
    std::cout << "sample " << run_id << "\n"
              << "  strategy=" << c.strategy << " backend=" << c.backend_id
              << " model=" << c.model << " dataset=" << c.dataset_name << "[" << c.split
              << "] T=" << fmtd(c.temperature, "%.2f") << "\n";
    for (int n : counts) {
        std::cout << "  n=" << n << " existence=" << fmtd(c.existence_accuracy.at(n));
        if (c.majority_accuracy.count(n)) {
            std::cout << " majority=" << fmtd(c.majority_accuracy.at(n));
        }
        std::cout << "\n";
    }
    std::cout << "  errors=" << c.errored_ids.size() << "\n";
    print_backend_stats(pr.be);
    std::cout << "  wrote " << paths.dir << "\n";
    return c.errored_ids.empty() ? 0 : 1;
}

int cmd_guide(CLI::App* cmd, Flags& f) {
    apply_config_file(cmd, f);
    dataset::ProblemSet ds = load_ds(f);
    BuiltBackend be = build_backend(f, f.teacher_model);
    guidance::TeacherOptions topts;
    topts.max_tokens = f.max_tokens;

    ordered_json cfg;
    cfg["schema_version"] = 1;
    cfg["command"] = "guide";
    cfg["dataset"] = dataset_config(f, ds);
    cfg["backend"] = be.config;
    cfg["teacher"] = ordered_json{{"model", be.engine->model()},
                                  {"max_regen_attempts", topts.max_regen_attempts},
                                  {"regen_temperature", topts.regen_temperature},
                                  {"max_tokens", topts.max_tokens}};
    cfg["cache"] = cache_config(f);

    std::string run_id = reporting::run_id_for(cfg);
    reporting::RunPaths paths = reporting::run_paths(f.out_root, run_id);
    reporting::write_text_file(paths.config, cfg.dump(2) + "\n");

    std::vector<guidance::FirstStep> steps;
    guidance::LeakReport report =
        guidance::audit_dev_set(*be.engine, ds, topts, paths.dir + "/leak_report.json", &steps);
    guidance::save_first_steps(steps, paths.dir + "/first_steps.jsonl");

    std::cout << "guide " << run_id << "\n"
              << "  teacher=" << be.engine->model() << " dataset=" << ds.name << "["
              << dataset::to_string(ds.split) << "]\n"
              << "  clean=" << report.clean_count << " leaked=" << report.leaked_count
              << " failed=" << report.failed_ids.size() << " total=" << report.total << "\n";
    print_backend_stats(be);
    std::cout << "  wrote " << paths.dir << "/first_steps.jsonl\n"
              << "  wrote " << paths.dir << "/leak_report.json\n";
    return report.failed_ids.empty() ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_file) {
    std::vector<experiment::EvalReport> reports;
    reports.reserve(dirs.size());
    for (const std::string& dir : dirs) {
        ordered_json cfg = ordered_json::parse(reporting::read_text_file(dir + "/config.json"));
        if (cfg.contains("sample_counts") && !cfg["sample_counts"].is_null()) {
            throw ConfigError(dir + " holds a sampling run; compare needs greedy runs");
        }
        dataset::ProblemSet ds = dataset_from_config(cfg);
        std::vector<experiment::RecordLine> records =
            reporting::read_records(dir + "/records.jsonl");
        reports.push_back(reporting::rebuild_greedy_report(cfg, records, ds));
    }
    experiment::VennCounts venn = experiment::overlap_sets(reports[0], reports[1], reports[2]);
    ordered_json j = venn.to_json();
    ordered_json runs = ordered_json::array();
    for (const auto& r : reports) runs.push_back(r.run_id);
    j["runs"] = runs;
    std::string text = j.dump(2) + "\n";
    if (out_file.empty()) {
        std::cout << text;
    } else {
        reporting::write_text_file(out_file, text);
        std::cout << "wrote " << out_file << "\n";
    }
    return 0;
}

int cmd_report(const std::string& dir) {
    ordered_json cfg = ordered_json::parse(reporting::read_text_file(dir + "/config.json"));
    if (cfg.value("command", std::string()) == "guide") {
        throw ConfigError(dir + " holds a guide run; there is no report to rebuild");
    }
    std::vector<experiment::RecordLine> records = reporting::read_records(dir + "/records.jsonl");
    dataset::ProblemSet ds = dataset_from_config(cfg);
    reporting::RunPaths p = paths_in(dir);

    bool sampling = cfg.contains("sample_counts") && !cfg["sample_counts"].is_null();
    std::string run_id;
    if (sampling) {
        experiment::SamplingCurve curve = reporting::rebuild_sampling_curve(cfg, records, ds);
        run_id = curve.run_id;
        reporting::write_text_file(p.report_json, curve.to_json().dump(2) + "\n");
        reporting::write_text_file(p.report_md, reporting::render_markdown(curve));
        reporting::write_text_file(p.metrics_csv, reporting::render_csv(curve));
        reporting::write_text_file(p.curve_svg, reporting::render_svg(curve));
        std::cout << "report " << run_id
                  << ": rebuilt report.json report.md metrics.csv curve.svg in " << dir << "\n";
    } else {
        experiment::EvalReport rep = reporting::rebuild_greedy_report(cfg, records, ds);
        run_id = rep.run_id;
        reporting::write_text_file(p.report_json, rep.to_json().dump(2) + "\n");
        reporting::write_text_file(p.report_md, reporting::render_markdown(rep));
        reporting::write_text_file(p.metrics_csv, reporting::render_csv(rep));
        std::cout << "report " << run_id << ": rebuilt report.json report.md metrics.csv in "
                  << dir << "\n";
    }
    return 0;
}

void add_dataset_opts(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON file of option defaults; flags override it");
    cmd->add_option("--dataset", f.dataset_path, "corpus file to evaluate");
    cmd->add_option("--format", f.format, "gsm8k|svamp|asdiv|multiarith|generic")
        ->capture_default_str();
    cmd->add_option("--split", f.split, "train|test|dev label for reports")->capture_default_str();
    cmd->add_option("--name", f.dataset_name, "dataset label (default: file stem)");
}

void add_backend_opts(CLI::App* cmd, Flags& f) {
    cmd->add_option("--backend", f.backend, "scripted|http")->capture_default_str();
    cmd->add_option("--model", f.model, "model name (http backend)");
    cmd->add_option("--base-url", f.base_url, "endpoint root, e.g. http://localhost:8000/v1")
        ->capture_default_str();
    cmd->add_option("--api", f.api, "completions|chat")->capture_default_str();
    cmd->add_option("--scripted-model", f.scripted_model, "scripted model JSON file");
    cmd->add_option("--cache-dir", f.cache_dir, "generation cache root")->capture_default_str();
    cmd->add_flag("--no-cache", f.no_cache, "bypass the generation cache");
    cmd->add_option("--max-tokens", f.max_tokens, "completion token budget")
        ->capture_default_str();
    cmd->add_option("--out", f.out_root, "directory that collects run directories")
        ->capture_default_str();
}

void add_prompt_opts(CLI::App* cmd, Flags& f) {
    cmd->add_option("--strategy", f.strategy, "cot|questcot|subques|guided")
        ->capture_default_str();
    cmd->add_option("--shots", f.shots, "exemplars per prompt (0 = zero-shot)")
        ->capture_default_str();
    cmd->add_option("--exemplars", f.exemplars_path, "exemplar pool file");
    cmd->add_option("--exemplar-format", f.exemplar_format,
                    "store (JSONL exemplar store) or a dataset format")
        ->capture_default_str();
    cmd->add_option("--first-steps", f.first_steps_path,
                    "first-step store from `guide` (guided strategy)");
    cmd->add_option("--eot", f.eot, "end-of-turn token appended to exemplar responses")
        ->capture_default_str();
    cmd->add_option("--top-p", f.top_p, "nucleus sampling mass")->capture_default_str();
    cmd->add_option("--parallelism", f.parallelism, "worker threads")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

void add_seed_opt(CLI::App* cmd, Flags& f) {
    CLI::Option* opt = cmd->add_option("--seed", f.seed,
                                       "exemplar selection seed; also overrides the scripted "
                                       "model's sampling seed");
    opt->capture_default_str();
    cmd->callback([&f, opt]() { f.seed_given = f.seed_given || opt->count() > 0; });
}

}  // namespace

int run_main(int argc, char** argv) {
    CLI::App app{"first-step-advantage evaluation harness for math word problems"};
    app.require_subcommand(1);
    int rc = 0;

    auto rf = std::make_shared<Flags>();
    CLI::App* run = app.add_subcommand("run", "one greedy completion per problem, scored");
    add_dataset_opts(run, *rf);
    add_backend_opts(run, *rf);
    add_prompt_opts(run, *rf);
    add_seed_opt(run, *rf);
    run->add_option("--temperature", rf->temperature, "sampling temperature")
        ->capture_default_str();
    run->add_option("--n", rf->n, "draws per problem (must stay 1 here)")->capture_default_str();
    run->final_callback([&rc, rf, run]() { rc = cmd_run(run, *rf); });

    auto sf = std::make_shared<Flags>();
    sf->temperature = 0.7;
    CLI::App* sample = app.add_subcommand(
        "sample", "multi-draw run: existence and majority accuracy per sample budget");
    add_dataset_opts(sample, *sf);
    add_backend_opts(sample, *sf);
    add_prompt_opts(sample, *sf);
    add_seed_opt(sample, *sf);
    sample->add_option("--temperature", sf->temperature, "sampling temperature")
        ->capture_default_str();
    sample->add_option("--samples", sf->sample_counts,
                       "sample budgets to score (default 1,3,5,10,15,20,25,30,35)")
        ->delimiter(',');
    sample->final_callback([&rc, sf, sample]() { rc = cmd_sample(sample, *sf); });

    auto gf = std::make_shared<Flags>();
    CLI::App* guide = app.add_subcommand(
        "guide", "teacher-generated first steps for a dev set, leak-audited");
    add_dataset_opts(guide, *gf);
    add_backend_opts(guide, *gf);
    guide->add_option("--teacher-model", gf->teacher_model,
                      "teacher model name (defaults to --model)");
    guide->final_callback([&rc, gf, guide]() { rc = cmd_guide(guide, *gf); });

    auto cmp_dirs = std::make_shared<std::vector<std::string>>();
    auto cmp_out = std::make_shared<std::string>();
    CLI::App* compare = app.add_subcommand(
        "compare", "overlap of solved sets across three greedy run directories");
    compare->add_option("dirs", *cmp_dirs, "three run directories")->expected(3);
    compare->add_option("--out", *cmp_out, "write the overlap JSON here instead of stdout");
    compare->final_callback([&rc, cmp_dirs, cmp_out]() { rc = cmd_compare(*cmp_dirs, *cmp_out); });

    auto rep_dir = std::make_shared<std::string>();
    CLI::App* report = app.add_subcommand(
        "report", "rebuild report.json/report.md/metrics.csv from a run's records");
    report->add_option("dir", *rep_dir, "run directory")->required();
    report->final_callback([&rc, rep_dir]() { rc = cmd_report(*rep_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}

}  // namespace firststep::cli
