#include "firststep/reporting.hpp"

#include "firststep/errors.hpp"
#include "firststep/sha256.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace firststep::reporting {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(double v, const char* spec = "%.4f") {
    char buf[40];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

RunPaths run_paths(const std::string& out_root, const std::string& run_id) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(out_root) / run_id;
    RunPaths p;
    p.dir = dir.string();
    p.config = (dir / "config.json").string();
    p.records = (dir / "records.jsonl").string();
    p.report_json = (dir / "report.json").string();
    p.report_md = (dir / "report.md").string();
    p.metrics_csv = (dir / "metrics.csv").string();
    p.curve_svg = (dir / "curve.svg").string();
    return p;
}

std::string run_id_for(const ordered_json& config) {
    return sha256_hex(config.dump()).substr(0, 12);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
}

void write_records(const std::string& path, const std::vector<experiment::RecordLine>& records) {
    std::ostringstream os;
    for (const auto& line : records) os << line.to_json().dump() << "\n";
    write_text_file(path, os.str());
}

std::vector<experiment::RecordLine> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open records file: " + path);
    std::vector<experiment::RecordLine> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad JSON");
        }
        try {
            out.push_back(experiment::RecordLine::from_json(j));
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

namespace {

// Backend identity as the runner recorded it; falls back to the config when
// every single call failed.
void backend_identity(const ordered_json& config,
                      const std::vector<experiment::RecordLine>& records, std::string* backend_id,
                      std::string* model) {
    for (const auto& line : records) {
        if (line.record) {
            *backend_id = line.record->backend_id;
            *model = line.record->model;
            return;
        }
    }
    if (config.contains("backend")) {
        *backend_id = config["backend"].value("id", config["backend"].value("kind", ""));
        *model = config["backend"].value("model", "");
    }
}

}  // namespace

experiment::EvalReport rebuild_greedy_report(const ordered_json& config,
                                             const std::vector<experiment::RecordLine>& records,
                                             const dataset::ProblemSet& ds) {
    experiment::EvalReport r;
    r.config = config;
    r.run_id = run_id_for(config);
    r.strategy = config.at("strategy").get<std::string>();
    r.dataset_name = ds.name;
    r.split = dataset::to_string(ds.split);
    backend_identity(config, records, &r.backend_id, &r.model);
    bool guided_strategy = r.strategy == "guided";

    for (const auto& line : records) {
        const dataset::Problem* p = ds.find(line.problem_id);
        if (!p) throw EvalError("records reference unknown problem '" + line.problem_id + "'");
        experiment::PerProblem pp;
        if (!line.error.empty()) {
            pp.error = line.error;
            r.errored_ids.push_back(line.problem_id);
        } else if (line.record) {
            pp = experiment::score_completion(line.record->text, line.prefix, p->gold_answer);
            if (line.record->completion_tokens) {
                r.completion_tokens += *line.record->completion_tokens;
            }
        }
        pp.guided = !line.prefix.empty();
        if (pp.correct) ++r.correct_count;
        if (pp.guided) {
            ++r.guided_count;
        } else if (guided_strategy) {
            ++r.fallback_count;
        }
        ++r.total;
        r.per_problem[line.problem_id] = std::move(pp);
    }
    if (r.total == 0) throw EvalError("no records to rebuild a report from");
    r.accuracy = static_cast<double>(r.correct_count) / static_cast<double>(r.total);
    try {
        r.by_steps = experiment::stratify_by_steps(r, ds);
    } catch (const ConfigError&) {
    }
    return r;
}

experiment::SamplingCurve rebuild_sampling_curve(
    const ordered_json& config, const std::vector<experiment::RecordLine>& records,
    const dataset::ProblemSet& ds) {
    std::vector<int> sample_counts = config.at("sample_counts").get<std::vector<int>>();
    if (sample_counts.empty()) throw EvalError("config lists no sample counts");
    int max_n = *std::max_element(sample_counts.begin(), sample_counts.end());

    experiment::SampleMatrix m;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::optional<backend::GenerationRecord>>> recs;
    std::vector<std::string> prefixes;
    for (const auto& line : records) {
        auto it = index.find(line.problem_id);
        std::size_t i;
        if (it == index.end()) {
            i = m.ids.size();
            index[line.problem_id] = i;
            m.ids.push_back(line.problem_id);
            m.errors.emplace_back();
            recs.emplace_back(max_n);
            prefixes.emplace_back(line.prefix);
        } else {
            i = it->second;
        }
        if (!line.error.empty()) {
            m.errors[i] = line.error;
        } else if (line.record) {
            int si = line.record->sample_index;
            if (si < 0 || si >= max_n) {
                throw EvalError("record for '" + line.problem_id + "' has sample index " +
                                std::to_string(si) + " outside 0.." + std::to_string(max_n - 1));
            }
            recs[i][si] = *line.record;
        }
    }
    m.correct.resize(m.ids.size());
    m.answers.resize(m.ids.size());
    for (std::size_t i = 0; i < m.ids.size(); ++i) {
        const dataset::Problem* p = ds.find(m.ids[i]);
        if (!p) throw EvalError("records reference unknown problem '" + m.ids[i] + "'");
        m.correct[i].assign(max_n, false);
        m.answers[i].assign(max_n, std::nullopt);
        if (!m.errors[i].empty()) continue;
        for (int j = 0; j < max_n; ++j) {
            if (!recs[i][j]) continue;
            auto pp = experiment::score_completion(recs[i][j]->text, prefixes[i], p->gold_answer);
            m.correct[i][j] = pp.correct;
            m.answers[i][j] = pp.answer;
        }
    }

    experiment::SamplingCurve curve = experiment::curve_from_matrix(m, ds, sample_counts);
    curve.config = config;
    curve.run_id = run_id_for(config);
    curve.strategy = config.at("strategy").get<std::string>();
    curve.dataset_name = ds.name;
    curve.split = dataset::to_string(ds.split);
    curve.temperature = config.at("params").at("temperature").get<double>();
    backend_identity(config, records, &curve.backend_id, &curve.model);
    return curve;
}

std::string render_markdown(const experiment::EvalReport& r) {
    std::ostringstream os;
    os << "# Greedy evaluation\n\n";
    os << "- run id: `" << r.run_id << "`\n";
    os << "- strategy: " << r.strategy << "\n";
    os << "- model: " << r.model << " (backend " << r.backend_id << ")\n";
    os << "- dataset: " << r.dataset_name << " [" << r.split << "], " << r.total
       << " problems\n";
    os << "- accuracy: " << fmt(r.accuracy) << " (" << r.correct_count << "/" << r.total
       << ")\n";
    if (r.strategy == "guided") {
        os << "- guided prefixes injected: " << r.guided_count
           << " (fallback to plain CoT: " << r.fallback_count << ")\n";
    }
    os << "- completion tokens: " << r.completion_tokens << "\n";
    os << "- backend errors: " << r.errored_ids.size() << "\n";
    if (!r.by_steps.empty()) {
        os << "\n## Accuracy by step count\n\n";
        os << "| steps | correct | total | accuracy |\n";
        os << "|------:|--------:|------:|---------:|\n";
        for (const auto& [bucket, stat] : r.by_steps) {
            os << "| " << bucket << " | " << stat.correct << " | " << stat.total << " | "
               << fmt(stat.accuracy) << " |\n";
        }
    }
    if (!r.errored_ids.empty()) {
        os << "\n## Problems with backend errors\n\n";
        for (const auto& id : r.errored_ids) os << "- " << id << "\n";
    }
    return os.str();
}

std::string render_markdown(const experiment::SamplingCurve& c) {
    std::ostringstream os;
    os << "# Sampling evaluation\n\n";
    os << "- run id: `" << c.run_id << "`\n";
    os << "- strategy: " << c.strategy << "\n";
    os << "- model: " << c.model << " (backend " << c.backend_id << ")\n";
    os << "- dataset: " << c.dataset_name << " [" << c.split << "], "
       << c.per_problem_correct.size() << " problems\n";
    os << "- temperature: " << fmt(c.temperature, "%.2f") << "\n";
    os << "- backend errors: " << c.errored_ids.size() << "\n";
    os << "\n## Existence accuracy\n\n";
    os << "| n | any-correct | majority-correct |\n";
    os << "|--:|------------:|-----------------:|\n";
    for (int n : c.sample_counts) {
        os << "| " << n << " | " << fmt(c.existence_accuracy.at(n)) << " | "
           << fmt(c.majority_accuracy.at(n)) << " |\n";
    }
    return os.str();
}

std::string render_csv(const experiment::EvalReport& r) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "accuracy," << fmt(r.accuracy, "%.6f") << "\n";
    os << "correct," << r.correct_count << "\n";
    os << "total," << r.total << "\n";
    os << "guided," << r.guided_count << "\n";
    os << "fallback," << r.fallback_count << "\n";
    os << "errors," << r.errored_ids.size() << "\n";
    os << "completion_tokens," << r.completion_tokens << "\n";
    for (const auto& [bucket, stat] : r.by_steps) {
        os << "steps_" << bucket << "_accuracy," << fmt(stat.accuracy, "%.6f") << "\n";
    }
    return os.str();
}

std::string render_csv(const experiment::SamplingCurve& c) {
    std::ostringstream os;
    os << "n,existence_accuracy,majority_accuracy\n";
    for (int n : c.sample_counts) {
        os << n << "," << fmt(c.existence_accuracy.at(n), "%.6f") << ","
           << fmt(c.majority_accuracy.at(n), "%.6f") << "\n";
    }
    return os.str();
}

std::string render_svg(const experiment::SamplingCurve& c) {
    const double left = 64, right = 612, top = 40, bottom = 372;
    int min_n = c.sample_counts.front();
    int max_n = c.sample_counts.front();
    for (int n : c.sample_counts) {
        min_n = std::min(min_n, n);
        max_n = std::max(max_n, n);
    }
    auto x_of = [&](int n) {
        if (max_n == min_n) return (left + right) / 2;
        return left + (right - left) * (static_cast<double>(n - min_n) /
                                        static_cast<double>(max_n - min_n));
    };
    auto y_of = [&](double a) { return bottom - (bottom - top) * a; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
          "viewBox=\"0 0 640 420\">\n";
    os << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    os << "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"14\">"
       << c.model << " on " << c.dataset_name << " (T=" << fmt(c.temperature, "%.2f")
       << ")</text>\n";
    for (int i = 0; i <= 4; ++i) {
        double a = 0.25 * i;
        double y = y_of(a);
        os << "<line x1=\"" << fmt(left, "%.1f") << "\" y1=\"" << fmt(y, "%.1f") << "\" x2=\""
           << fmt(right, "%.1f") << "\" y2=\"" << fmt(y, "%.1f")
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << fmt(left - 8, "%.1f") << "\" y=\"" << fmt(y + 4, "%.1f")
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << fmt(a, "%.2f") << "</text>\n";
    }
    for (int n : c.sample_counts) {
        double x = x_of(n);
        os << "<line x1=\"" << fmt(x, "%.1f") << "\" y1=\"" << fmt(bottom, "%.1f")
           << "\" x2=\"" << fmt(x, "%.1f") << "\" y2=\"" << fmt(bottom + 5, "%.1f")
           << "\" stroke=\"#333333\"/>\n";
        os << "<text x=\"" << fmt(x, "%.1f") << "\" y=\"" << fmt(bottom + 18, "%.1f")
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << n
           << "</text>\n";
    }
    os << "<line x1=\"" << fmt(left, "%.1f") << "\" y1=\"" << fmt(top, "%.1f") << "\" x2=\""
       << fmt(left, "%.1f") << "\" y2=\"" << fmt(bottom, "%.1f") << "\" stroke=\"#333333\"/>\n";
    os << "<line x1=\"" << fmt(left, "%.1f") << "\" y1=\"" << fmt(bottom, "%.1f") << "\" x2=\""
       << fmt(right, "%.1f") << "\" y2=\"" << fmt(bottom, "%.1f") << "\" stroke=\"#333333\"/>\n";
    os << "<text x=\"338\" y=\"408\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"12\">samples n</text>\n";

    auto polyline = [&](const std::map<int, double>& series, const char* color,
                        const char* dash) {
        std::ostringstream pts;
        for (int n : c.sample_counts) {
            pts << fmt(x_of(n), "%.1f") << "," << fmt(y_of(series.at(n)), "%.1f") << " ";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
        if (dash[0]) os << " stroke-dasharray=\"" << dash << "\"";
        os << " points=\"" << pts.str() << "\"/>\n";
        for (int n : c.sample_counts) {
            os << "<circle cx=\"" << fmt(x_of(n), "%.1f") << "\" cy=\""
               << fmt(y_of(series.at(n)), "%.1f") << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
    };
    polyline(c.existence_accuracy, "#1f77b4", "");
    polyline(c.majority_accuracy, "#ff7f0e", "5,4");

    os << "<line x1=\"440\" y1=\"52\" x2=\"470\" y2=\"52\" stroke=\"#1f77b4\" "
          "stroke-width=\"2\"/>\n";
    os << "<text x=\"476\" y=\"56\" font-family=\"sans-serif\" font-size=\"11\">any correct "
          "(existence)</text>\n";
    os << "<line x1=\"440\" y1=\"70\" x2=\"470\" y2=\"70\" stroke=\"#ff7f0e\" "
          "stroke-width=\"2\" stroke-dasharray=\"5,4\"/>\n";
    os << "<text x=\"476\" y=\"74\" font-family=\"sans-serif\" font-size=\"11\">majority "
          "vote</text>\n";
    os << "</svg>\n";
    return os.str();
}

void write_greedy_run(const RunPaths& paths, const ordered_json& config,
                      const std::vector<experiment::RecordLine>& records,
                      const experiment::EvalReport& report) {
    std::filesystem::create_directories(paths.dir);
    write_text_file(paths.config, config.dump(2) + "\n");
    write_records(paths.records, records);
    write_text_file(paths.report_json, report.to_json().dump(2) + "\n");
    write_text_file(paths.report_md, render_markdown(report));
    write_text_file(paths.metrics_csv, render_csv(report));
}

void write_sampling_run(const RunPaths& paths, const ordered_json& config,
                        const std::vector<experiment::RecordLine>& records,
                        const experiment::SamplingCurve& curve) {
    std::filesystem::create_directories(paths.dir);
    write_text_file(paths.config, config.dump(2) + "\n");
    write_records(paths.records, records);
    write_text_file(paths.report_json, curve.to_json().dump(2) + "\n");
    write_text_file(paths.report_md, render_markdown(curve));
    write_text_file(paths.metrics_csv, render_csv(curve));
    write_text_file(paths.curve_svg, render_svg(curve));
}

}  // namespace firststep::reporting
