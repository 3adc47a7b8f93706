#pragma once

#include "firststep/prompting.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace firststep::backend {

struct SamplingParams {
    double temperature = 0.0;
    double top_p = 1.0;
    int n = 1;
    int max_tokens = 512;
    std::vector<std::string> stop{prompting::kStopSequence};
    std::optional<std::uint64_t> seed;  // scripted backend only

    bool greedy() const { return temperature == 0.0 && n == 1; }

    // Stable cross-platform serialization of the identity-relevant fields.
    // n is excluded: sample k of a 5-sample request and sample k of a
    // 10-sample request are the same draw, which lets cached runs grow.
    std::string canonical() const;

    nlohmann::ordered_json to_json() const;
    static SamplingParams from_json(const nlohmann::json& j);
};

struct GenerationRecord {
    std::string backend_id;
    std::string model;
    std::string prompt_hash;
    SamplingParams params;
    int sample_index = 0;
    std::string text;
    std::string created_at;  // ISO 8601 UTC
    std::optional<long long> completion_tokens;

    nlohmann::ordered_json to_json() const;
    static GenerationRecord from_json(const nlohmann::json& j);
};

std::string cache_key(const std::string& backend_id, const std::string& model,
                      const std::string& prompt_hash, const SamplingParams& params,
                      int sample_index);

// Truncates text at the earliest occurrence of any stop sequence.
std::string apply_stop(std::string text, const std::vector<std::string>& stop);

std::string now_iso8601();

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::string model() const = 0;
    // One completion; sample_index distinguishes draws of the same prompt.
    virtual GenerationRecord complete_one(const prompting::PromptSpec& prompt,
                                          const SamplingParams& params, int sample_index) = 0;
    // Completions actually performed (cache hits excluded upstream).
    virtual long long calls() const = 0;

    // n records with sample_index 0..n-1.
    std::vector<GenerationRecord> complete(const prompting::PromptSpec& prompt,
                                           const SamplingParams& params);
};

// --- scripted backend ------------------------------------------------------

struct ScriptedEntry {
    double p_correct = 0.0;
    std::optional<double> p_correct_given_guided;  // defaults to p_correct
    std::string correct_chain;
    std::vector<std::string> distractors;
    std::optional<std::string> first_step;  // defaults to the chain's own first step
};

// Deterministic stand-in for a model: per-problem correctness probabilities
// plus canned chains, driven entirely by (seed, problem id, sample index).
struct ScriptedModel {
    std::string name = "scripted-model";
    std::uint64_t seed = 0;
    std::map<std::string, ScriptedEntry> entries;

    static ScriptedModel load(const std::string& path);
    void save(const std::string& path) const;
};

class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(ScriptedModel model) : model_(std::move(model)) {}

    std::string id() const override { return "scripted"; }
    std::string model() const override { return model_.name; }
    GenerationRecord complete_one(const prompting::PromptSpec& prompt,
                                  const SamplingParams& params, int sample_index) override;
    long long calls() const override { return calls_.load(); }

    // The first step a guided prompt is expected to carry for this problem.
    std::string first_step_for(const std::string& problem_id) const;

private:
    ScriptedModel model_;
    std::atomic<long long> calls_{0};
};

// --- HTTP backend -----------------------------------------------------------

struct HttpResponse {
    bool transport_ok = false;
    int status = 0;
    std::string body;
    std::string error;  // transport-level failure description
};

using Header = std::pair<std::string, std::string>;
// (path, request body, headers) -> response; injectable for tests.
using Transport =
    std::function<HttpResponse(const std::string&, const std::string&, const std::vector<Header>&)>;

struct HttpConfig {
    std::string base_url;  // e.g. http://localhost:8000 or https://host/v1
    std::string model;
    std::string api = "completions";  // "completions" | "chat"
    std::string api_key_env = "FIRSTSTEP_API_KEY";
    int max_attempts = 5;
    double backoff_base_s = 1.0;
    double backoff_cap_s = 30.0;
    std::function<void(double)> sleeper;  // overridable in tests
    Transport transport;                  // default: real HTTP POST
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpConfig cfg);

    std::string id() const override { return id_; }
    std::string model() const override { return cfg_.model; }
    GenerationRecord complete_one(const prompting::PromptSpec& prompt,
                                  const SamplingParams& params, int sample_index) override;
    long long calls() const override { return calls_.load(); }

private:
    HttpConfig cfg_;
    std::string id_;
    std::string path_;  // request path appended to the endpoint root
    std::atomic<long long> calls_{0};
};

// --- cache ------------------------------------------------------------------

// Append-only JSONL journal with an in-memory index. A line that fails to
// parse marks crash damage: the file is truncated there with a warning.
// A parseable record whose stored key disagrees with its recomputed key is
// real corruption and raises IntegrityError.
class GenerationCache {
public:
    explicit GenerationCache(std::string path);

    std::optional<GenerationRecord> get(const std::string& key) const;
    // At-most-once: returns false (and writes nothing) when the key exists.
    bool insert_if_absent(const std::string& key, const GenerationRecord& rec);
    std::size_t size() const;
    const std::vector<std::string>& warnings() const { return warnings_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, GenerationRecord> index_;
    std::vector<std::string> warnings_;
};

// cache/<backend_id>/<model>.jsonl under root, path-hostile chars sanitized.
std::string cache_path_for(const std::string& root, const std::string& backend_id,
                           const std::string& model);

class CachedBackend : public Backend {
public:
    CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<GenerationCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

    std::string id() const override { return inner_->id(); }
    std::string model() const override { return inner_->model(); }
    GenerationRecord complete_one(const prompting::PromptSpec& prompt,
                                  const SamplingParams& params, int sample_index) override;
    long long calls() const override { return inner_->calls(); }
    long long hits() const { return hits_.load(); }
    long long misses() const { return misses_.load(); }

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<GenerationCache> cache_;
    std::atomic<long long> hits_{0};
    std::atomic<long long> misses_{0};
};

}  // namespace firststep::backend
