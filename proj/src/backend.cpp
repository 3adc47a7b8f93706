#include "firststep/backend.hpp"

#include "firststep/annot.hpp"
#include "firststep/errors.hpp"
#include "firststep/sha256.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <thread>

namespace firststep::backend {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t hex_prefix_u64(const std::string& hex, std::size_t offset) {
    return std::stoull(hex.substr(offset, 16), nullptr, 16);
}

std::string sanitize_component(std::string_view s) {
    std::string out;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '-';
        out += ok ? c : '_';
    }
    return out.empty() ? std::string("_") : out;
}

std::string rstrip(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' ||
                          s.back() == '\r')) {
        s.pop_back();
    }
    return s;
}

}  // namespace

std::string SamplingParams::canonical() const {
    std::string out = "t=" + fmt_double(temperature) + ";p=" + fmt_double(top_p) +
                      ";max=" + std::to_string(max_tokens) + ";stop=";
    for (std::size_t i = 0; i < stop.size(); ++i) {
        if (i) out += '\x1e';
        out += stop[i];
    }
    out += ";seed=";
    out += seed ? std::to_string(*seed) : "-";
    return out;
}

ordered_json SamplingParams::to_json() const {
    ordered_json j;
    j["temperature"] = temperature;
    j["top_p"] = top_p;
    j["n"] = n;
    j["max_tokens"] = max_tokens;
    j["stop"] = stop;
    if (seed) {
        j["seed"] = *seed;
    } else {
        j["seed"] = nullptr;
    }
    return j;
}

SamplingParams SamplingParams::from_json(const json& j) {
    SamplingParams p;
    p.temperature = j.at("temperature").get<double>();
    p.top_p = j.at("top_p").get<double>();
    p.n = j.at("n").get<int>();
    p.max_tokens = j.at("max_tokens").get<int>();
    p.stop = j.at("stop").get<std::vector<std::string>>();
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
    return p;
}

ordered_json GenerationRecord::to_json() const {
    ordered_json j;
    j["backend_id"] = backend_id;
    j["model"] = model;
    j["prompt_hash"] = prompt_hash;
    j["params"] = params.to_json();
    j["sample_index"] = sample_index;
    j["text"] = text;
    j["created_at"] = created_at;
    if (completion_tokens) j["completion_tokens"] = *completion_tokens;
    return j;
}

GenerationRecord GenerationRecord::from_json(const json& j) {
    GenerationRecord r;
    r.backend_id = j.at("backend_id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.params = SamplingParams::from_json(j.at("params"));
    r.sample_index = j.at("sample_index").get<int>();
    r.text = j.at("text").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    if (j.contains("completion_tokens") && !j["completion_tokens"].is_null()) {
        r.completion_tokens = j["completion_tokens"].get<long long>();
    }
    return r;
}

std::string cache_key(const std::string& backend_id, const std::string& model,
                      const std::string& prompt_hash, const SamplingParams& params,
                      int sample_index) {
    Sha256 h;
    h.update(backend_id);
    h.update("\x1f");
    h.update(model);
    h.update("\x1f");
    h.update(prompt_hash);
    h.update("\x1f");
    h.update(params.canonical());
    h.update("\x1f");
    h.update(std::to_string(sample_index));
    return h.hex_digest();
}

std::string apply_stop(std::string text, const std::vector<std::string>& stop) {
    std::size_t cut = std::string::npos;
    for (const auto& s : stop) {
        if (s.empty()) continue;
        std::size_t pos = text.find(s);
        if (pos != std::string::npos && pos < cut) cut = pos;
    }
    if (cut != std::string::npos) text.erase(cut);
    return text;
}

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<GenerationRecord> Backend::complete(const prompting::PromptSpec& prompt,
                                                const SamplingParams& params) {
    if (params.n < 1) throw ConfigError("sampling n must be >= 1");
    std::vector<GenerationRecord> out;
    out.reserve(params.n);
    for (int i = 0; i < params.n; ++i) out.push_back(complete_one(prompt, params, i));
    return out;
}

// --- scripted backend ------------------------------------------------------

ScriptedModel ScriptedModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted model: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ParseError(path + ": not a JSON object");
    }
    ScriptedModel m;
    if (j.contains("name")) m.name = j["name"].get<std::string>();
    if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
    if (!j.contains("problems") || !j["problems"].is_object()) {
        throw ParseError(path + ": missing 'problems' object");
    }
    for (const auto& [id, e] : j["problems"].items()) {
        ScriptedEntry entry;
        entry.p_correct = e.at("p_correct").get<double>();
        if (e.contains("p_correct_given_guided") && !e["p_correct_given_guided"].is_null()) {
            entry.p_correct_given_guided = e["p_correct_given_guided"].get<double>();
        }
        if (e.contains("correct_chain")) entry.correct_chain = e["correct_chain"].get<std::string>();
        if (e.contains("distractors")) {
            entry.distractors = e["distractors"].get<std::vector<std::string>>();
        }
        if (e.contains("first_step") && !e["first_step"].is_null()) {
            entry.first_step = e["first_step"].get<std::string>();
        }
        auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!in_unit(entry.p_correct) ||
            (entry.p_correct_given_guided && !in_unit(*entry.p_correct_given_guided))) {
            throw ConfigError(path + ": probabilities for '" + id + "' must lie in [0,1]");
        }
        m.entries[id] = std::move(entry);
    }
    if (m.entries.empty()) throw ParseError(path + ": no problems");
    return m;
}

void ScriptedModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write scripted model: " + path);
    ordered_json j;
    j["name"] = name;
    j["seed"] = seed;
    ordered_json problems = ordered_json::object();
    for (const auto& [id, e] : entries) {
        ordered_json je;
        je["p_correct"] = e.p_correct;
        if (e.p_correct_given_guided) je["p_correct_given_guided"] = *e.p_correct_given_guided;
        je["correct_chain"] = e.correct_chain;
        je["distractors"] = e.distractors;
        if (e.first_step) je["first_step"] = *e.first_step;
        problems[id] = je;
    }
    j["problems"] = problems;
    out << j.dump(2) << "\n";
}

std::string ScriptedBackend::first_step_for(const std::string& problem_id) const {
    auto it = model_.entries.find(problem_id);
    if (it == model_.entries.end()) return "";
    if (it->second.first_step) return rstrip(*it->second.first_step);
    auto cut = annot::truncate_at_first_equation(it->second.correct_chain);
    return cut.no_equation ? "" : rstrip(cut.prefix);
}

GenerationRecord ScriptedBackend::complete_one(const prompting::PromptSpec& prompt,
                                               const SamplingParams& params, int sample_index) {
    auto it = model_.entries.find(prompt.target_id);
    if (it == model_.entries.end()) {
        throw BackendError("scripted model has no entry for problem '" + prompt.target_id + "'");
    }
    const ScriptedEntry& entry = it->second;
    calls_.fetch_add(1);

    std::uint64_t effective_seed = params.seed ? *params.seed : model_.seed;
    Sha256 h;
    h.update(std::to_string(effective_seed));
    h.update("\x1f");
    h.update(prompt.target_id);
    h.update("\x1f");
    h.update(std::to_string(sample_index));
    std::string hex = h.hex_digest();
    double u = static_cast<double>(hex_prefix_u64(hex, 0)) /
               static_cast<double>(18446744073709551615ULL);

    std::string fs = first_step_for(prompt.target_id);
    bool guided = !fs.empty() && prompt.rendered.find(fs) != std::string::npos;
    double p = entry.p_correct;
    if (guided && entry.p_correct_given_guided) p = *entry.p_correct_given_guided;

    std::string text;
    if (u < p) {
        text = entry.correct_chain;
        // A guided prompt already carries the first step; emit the remainder
        // so prefix + " " + completion reassembles the full chain.
        if (guided && text.rfind(fs, 0) == 0) {
            text = text.substr(fs.size());
            if (!text.empty() && text.front() == ' ') text.erase(0, 1);
        }
    } else if (!entry.distractors.empty()) {
        std::size_t di = static_cast<std::size_t>(hex_prefix_u64(hex, 16) %
                                                  entry.distractors.size());
        text = entry.distractors[di];
    } else {
        text = "I cannot solve this one.";
    }

    GenerationRecord rec;
    rec.backend_id = id();
    rec.model = model();
    rec.prompt_hash = prompt.prompt_hash;
    rec.params = params;
    rec.sample_index = sample_index;
    rec.text = apply_stop(std::move(text), params.stop);
    rec.created_at = now_iso8601();
    return rec;
}

// --- HTTP backend -----------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string host_root;    // scheme://authority
    std::string path_prefix;  // possibly empty, no trailing slash
};

ParsedUrl parse_base_url(std::string url) {
    while (!url.empty() && url.back() == '/') url.pop_back();
    std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("base URL must start with http:// — got '" + url + "'");
    }
    std::size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.api != "completions" && cfg_.api != "chat") {
        throw ConfigError("http api must be 'completions' or 'chat'");
    }
    if (cfg_.model.empty()) throw ConfigError("http backend requires a model name");
    ParsedUrl url = parse_base_url(cfg_.base_url);
    std::string prefix = url.path_prefix.empty() ? "/v1" : url.path_prefix;
    path_ = prefix + (cfg_.api == "chat" ? "/chat/completions" : "/completions");

    std::size_t scheme = cfg_.base_url.find("://");
    id_ = "http_" + sanitize_component(cfg_.base_url.substr(scheme + 3));

    if (!cfg_.sleeper) {
        cfg_.sleeper = [](double seconds) {
            std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        };
    }
    if (!cfg_.transport) {
        if (cfg_.base_url.rfind("https://", 0) == 0) {
            throw ConfigError("this build speaks plain http only; use an http:// endpoint");
        }
        std::string host_root = url.host_root;
        cfg_.transport = [host_root](const std::string& path, const std::string& body,
                                     const std::vector<Header>& headers) {
            httplib::Client cli(host_root);
            cli.set_connection_timeout(10, 0);
            cli.set_read_timeout(120, 0);
            httplib::Headers h(headers.begin(), headers.end());
            auto res = cli.Post(path, h, body, "application/json");
            HttpResponse out;
            if (!res) {
                out.error = httplib::to_string(res.error());
                return out;
            }
            out.transport_ok = true;
            out.status = res->status;
            out.body = res->body;
            return out;
        };
    }
}

GenerationRecord HttpBackend::complete_one(const prompting::PromptSpec& prompt,
                                           const SamplingParams& params, int sample_index) {
    ordered_json body;
    body["model"] = cfg_.model;
    if (cfg_.api == "chat") {
        body["messages"] =
            ordered_json::array({ordered_json{{"role", "user"}, {"content", prompt.rendered}}});
    } else {
        body["prompt"] = prompt.rendered;
    }
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    body["n"] = 1;
    if (!params.stop.empty()) body["stop"] = params.stop;
    std::string payload = body.dump();

    std::vector<Header> headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
        headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }

    std::string last_failure;
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
        if (attempt > 0) {
            double delay = cfg_.backoff_base_s * std::pow(2.0, attempt - 1);
            cfg_.sleeper(std::min(delay, cfg_.backoff_cap_s));
        }
        HttpResponse resp = cfg_.transport(path_, payload, headers);
        if (!resp.transport_ok) {
            last_failure = "transport: " + resp.error;
            continue;
        }
        if (resp.status == 429 || resp.status >= 500) {
            last_failure = "HTTP " + std::to_string(resp.status);
            continue;
        }
        if (resp.status != 200) {
            throw BackendError("HTTP " + std::to_string(resp.status) + " for prompt " +
                               prompt.prompt_hash + ": " + resp.body.substr(0, 200));
        }
        calls_.fetch_add(1);
        json j = json::parse(resp.body, nullptr, false);
        if (j.is_discarded()) {
            throw ProtocolError("endpoint returned non-JSON body for prompt " +
                                prompt.prompt_hash);
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
            throw ProtocolError("endpoint response has no choices: " + resp.body.substr(0, 200));
        }
        const json& c0 = j["choices"][0];
        std::string text;
        if (cfg_.api == "chat") {
            if (!c0.contains("message") || !c0["message"].contains("content") ||
                !c0["message"]["content"].is_string()) {
                throw ProtocolError("chat response lacks message.content for prompt " +
                                    prompt.prompt_hash);
            }
            text = c0["message"]["content"].get<std::string>();
        } else {
            if (!c0.contains("text") || !c0["text"].is_string()) {
                throw ProtocolError("completion response lacks choices[0].text for prompt " +
                                    prompt.prompt_hash);
            }
            text = c0["text"].get<std::string>();
        }
        GenerationRecord rec;
        rec.backend_id = id();
        rec.model = model();
        rec.prompt_hash = prompt.prompt_hash;
        rec.params = params;
        rec.sample_index = sample_index;
        rec.text = apply_stop(std::move(text), params.stop);
        rec.created_at = now_iso8601();
        if (j.contains("usage") && j["usage"].contains("completion_tokens") &&
            j["usage"]["completion_tokens"].is_number()) {
            rec.completion_tokens = j["usage"]["completion_tokens"].get<long long>();
        }
        return rec;
    }
    throw BackendError("request failed after " + std::to_string(cfg_.max_attempts) +
                       " attempts (" + last_failure + ") for prompt " + prompt.prompt_hash);
}

// --- cache ------------------------------------------------------------------

GenerationCache::GenerationCache(std::string path) : path_(std::move(path)) {
    namespace fs = std::filesystem;
    fs::path p(path_);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    std::size_t offset = 0;
    bool needs_newline_repair = false;
    while (offset < content.size()) {
        std::size_t eol = content.find('\n', offset);
        std::string_view line;
        bool complete_line = eol != std::string::npos;
        line = complete_line ? std::string_view(content).substr(offset, eol - offset)
                             : std::string_view(content).substr(offset);
        bool ok = false;
        if (!line.empty()) {
            json j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.contains("key") && j.contains("record")) {
                try {
                    GenerationRecord rec = GenerationRecord::from_json(j["record"]);
                    std::string stored = j["key"].get<std::string>();
                    std::string expected = cache_key(rec.backend_id, rec.model, rec.prompt_hash,
                                                     rec.params, rec.sample_index);
                    if (stored != expected) {
                        throw IntegrityError("cache record key mismatch for key " + stored +
                                             " in " + path_);
                    }
                    index_[stored] = std::move(rec);
                    ok = true;
                } catch (const json::exception&) {
                    ok = false;
                }
            }
        }
        if (!ok) {
            warnings_.push_back(path_ + ": dropping damaged journal tail at byte " +
                                std::to_string(offset));
            std::error_code ec;
            fs::resize_file(path_, offset, ec);
            return;
        }
        if (!complete_line) {
            needs_newline_repair = true;
            break;
        }
        offset = eol + 1;
    }
    if (needs_newline_repair) {
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        out << "\n";
    }
}

std::optional<GenerationRecord> GenerationCache::get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool GenerationCache::insert_if_absent(const std::string& key, const GenerationRecord& rec) {
    std::lock_guard<std::mutex> lock(mu_);
    if (index_.count(key)) return false;
    ordered_json line;
    line["key"] = key;
    line["record"] = rec.to_json();
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw ConfigError("cannot append to cache file: " + path_);
    out << line.dump() << "\n";
    out.flush();
    index_[key] = rec;
    return true;
}

std::size_t GenerationCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return index_.size();
}

std::string cache_path_for(const std::string& root, const std::string& backend_id,
                           const std::string& model) {
    namespace fs = std::filesystem;
    fs::path p = fs::path(root) / sanitize_component(backend_id) /
                 (sanitize_component(model) + ".jsonl");
    return p.string();
}

GenerationRecord CachedBackend::complete_one(const prompting::PromptSpec& prompt,
                                             const SamplingParams& params, int sample_index) {
    std::string key = cache_key(inner_->id(), inner_->model(), prompt.prompt_hash, params,
                                sample_index);
    if (auto hit = cache_->get(key)) {
        hits_.fetch_add(1);
        return *hit;
    }
    GenerationRecord rec = inner_->complete_one(prompt, params, sample_index);
    misses_.fetch_add(1);
    cache_->insert_if_absent(key, rec);
    return rec;
}

}  // namespace firststep::backend
