#pragma once

#include "firststep/dataset.hpp"
#include "firststep/experiment.hpp"

#include <string>
#include <vector>

namespace firststep::reporting {

struct RunPaths {
    std::string dir;
    std::string config;        // config.json
    std::string records;       // records.jsonl
    std::string report_json;   // report.json
    std::string report_md;     // report.md
    std::string metrics_csv;   // metrics.csv
    std::string curve_svg;     // curve.svg (sampling runs only)
};

RunPaths run_paths(const std::string& out_root, const std::string& run_id);

// Run identity is the hash of the full config; equal configs share a run dir.
std::string run_id_for(const nlohmann::ordered_json& config);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

void write_records(const std::string& path, const std::vector<experiment::RecordLine>& records);
std::vector<experiment::RecordLine> read_records(const std::string& path);

// Recompute a report from persisted records through the same scoring pipeline
// the runner used; output is byte-identical to the original report.json.
experiment::EvalReport rebuild_greedy_report(const nlohmann::ordered_json& config,
                                             const std::vector<experiment::RecordLine>& records,
                                             const dataset::ProblemSet& ds);
experiment::SamplingCurve rebuild_sampling_curve(
    const nlohmann::ordered_json& config, const std::vector<experiment::RecordLine>& records,
    const dataset::ProblemSet& ds);

std::string render_markdown(const experiment::EvalReport& report);
std::string render_markdown(const experiment::SamplingCurve& curve);
std::string render_csv(const experiment::EvalReport& report);
std::string render_csv(const experiment::SamplingCurve& curve);
std::string render_svg(const experiment::SamplingCurve& curve);

// Persist a full run directory (config + records + report + renderings).
void write_greedy_run(const RunPaths& paths, const nlohmann::ordered_json& config,
                      const std::vector<experiment::RecordLine>& records,
                      const experiment::EvalReport& report);
void write_sampling_run(const RunPaths& paths, const nlohmann::ordered_json& config,
                        const std::vector<experiment::RecordLine>& records,
                        const experiment::SamplingCurve& curve);

}  // namespace firststep::reporting
