#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "firststep/backend.hpp"
#include "firststep/errors.hpp"
#include "firststep/prompting.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace firststep;
using namespace firststep::backend;

namespace {

prompting::PromptSpec prompt_for(const std::string& id, const std::string& question) {
    return prompting::render_prompt(prompting::Strategy::CoT, prompting::PromptTemplate{}, {},
                                    id, question);
}

ScriptedModel tiny_model() {
    ScriptedModel m;
    m.name = "tiny";
    m.seed = 7;
    ScriptedEntry sure;
    sure.p_correct = 1.0;
    sure.correct_chain = "First 1 + 1 = 2 things. Then 2 * 3 = 6 total. Final answer: 6";
    sure.distractors = {"It must be 1 + 3 = 4. Final answer: 4"};
    m.entries["sure"] = sure;

    ScriptedEntry never;
    never.p_correct = 0.0;
    never.correct_chain = "Count 2 + 2 = 4 legs. Final answer: 4";
    never.distractors = {"Probably 5. Final answer: 5", "Maybe 9. Final answer: 9"};
    m.entries["never"] = never;

    ScriptedEntry guided;
    guided.p_correct = 0.0;
    guided.p_correct_given_guided = 1.0;
    guided.correct_chain = "Start with 4 + 4 = 8 wheels. So 8 * 2 = 16. Final answer: 16";
    guided.distractors = {"Roughly 3. Final answer: 3"};
    guided.first_step = "Start with 4 + 4 = 8 wheels.";
    m.entries["guided"] = guided;
    return m;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

GenerationRecord record_for(const std::string& prompt_hash, int sample_index,
                            const std::string& text) {
    GenerationRecord rec;
    rec.backend_id = "scripted";
    rec.model = "tiny";
    rec.prompt_hash = prompt_hash;
    rec.sample_index = sample_index;
    rec.text = text;
    rec.created_at = "2026-01-01T00:00:00Z";
    return rec;
}

}  // namespace

TEST_CASE("sampling parameter identity excludes the draw count") {
    SamplingParams a;
    a.n = 5;
    SamplingParams b;
    b.n = 10;
    CHECK(a.canonical() == b.canonical());
    CHECK(cache_key("be", "m", "hash", a, 3) == cache_key("be", "m", "hash", b, 3));

    SamplingParams c = a;
    c.temperature = 0.7;
    CHECK(a.canonical() != c.canonical());
    SamplingParams d = a;
    d.seed = 1;
    CHECK(a.canonical() != d.canonical());
    CHECK(cache_key("be", "m", "hash", a, 3) != cache_key("be", "m", "hash", a, 4));
    CHECK(cache_key("be", "m", "hash", a, 3) != cache_key("be", "m2", "hash", a, 3));
}

TEST_CASE("sampling parameters round-trip through json") {
    SamplingParams p;
    p.temperature = 0.7;
    p.top_p = 0.95;
    p.n = 4;
    p.max_tokens = 128;
    p.stop = {"### Input:", "<eot_id>"};
    p.seed = 99;
    SamplingParams q = SamplingParams::from_json(p.to_json());
    CHECK(q.canonical() == p.canonical());
    CHECK(q.n == 4);

    p.seed.reset();
    CHECK(SamplingParams::from_json(p.to_json()).canonical() == p.canonical());
}

TEST_CASE("stop sequences cut at the earliest hit") {
    CHECK(apply_stop("hello ### Input: more", {"### Input:"}) == "hello ");
    CHECK(apply_stop("a <eot_id> b ### Input: c", {"### Input:", "<eot_id>"}) == "a ");
    CHECK(apply_stop("untouched", {"### Input:"}) == "untouched");
    CHECK(apply_stop("text", {}) == "text");
}

TEST_CASE("scripted draws are deterministic and move with the sample index") {
    ScriptedBackend be(tiny_model());
    ScriptedBackend be2(tiny_model());
    auto p = prompt_for("sure", "Q?");
    SamplingParams params;

    auto r1 = be.complete_one(p, params, 0);
    auto r2 = be2.complete_one(p, params, 0);
    CHECK(r1.text == r2.text);  // cross-instance determinism

    // p=1 and p=0 are insensitive to the draw
    CHECK(r1.text == "First 1 + 1 = 2 things. Then 2 * 3 = 6 total. Final answer: 6");
    auto never = be.complete_one(prompt_for("never", "Q?"), params, 0);
    CHECK(never.text.find("Final answer: 6") == std::string::npos);

    // distractor choice is a function of the digest, stable per index
    auto nv0 = be.complete_one(prompt_for("never", "Q?"), params, 0);
    auto nv0b = be2.complete_one(prompt_for("never", "Q?"), params, 0);
    CHECK(nv0.text == nv0b.text);

    CHECK(be.calls() == 3);
}

TEST_CASE("an explicit parameter seed overrides the model seed") {
    ScriptedModel m = tiny_model();
    // make an entry that actually varies with the draw
    m.entries["coin"] = ScriptedEntry{0.5, std::nullopt,
                                      "Heads 1 + 0 = 1. Final answer: 1",
                                      {"Tails 0 + 0 = 0. Final answer: 0"},
                                      std::nullopt};
    ScriptedBackend be(m);
    auto p = prompt_for("coin", "Q?");
    SamplingParams with_seed;
    with_seed.seed = 1234;
    SamplingParams model_seed;

    bool any_flip = false;
    for (int i = 0; i < 32 && !any_flip; ++i) {
        any_flip = be.complete_one(p, with_seed, i).text !=
                   be.complete_one(p, model_seed, i).text;
    }
    CHECK(any_flip);
}

TEST_CASE("guided prompts unlock the conditional probability") {
    ScriptedBackend be(tiny_model());
    SamplingParams params;
    auto plain = be.complete_one(prompt_for("guided", "Q?"), params, 0);
    CHECK(plain.text == "Roughly 3. Final answer: 3");

    auto spec = prompting::render_prompt(prompting::Strategy::GuidedCoT,
                                         prompting::PromptTemplate{}, {}, "guided", "Q?",
                                         std::string("Start with 4 + 4 = 8 wheels."));
    auto guided = be.complete_one(spec, params, 0);
    // the chain starts with the injected step, so only the remainder comes back
    CHECK(guided.text == "So 8 * 2 = 16. Final answer: 16");
}

TEST_CASE("scripted backend reports unknown problems as backend errors") {
    ScriptedBackend be(tiny_model());
    SamplingParams params;
    CHECK_THROWS_AS(be.complete_one(prompt_for("missing", "Q?"), params, 0), BackendError);
    CHECK(be.first_step_for("sure") == "First 1 + 1 = 2 things.");
    CHECK(be.first_step_for("guided") == "Start with 4 + 4 = 8 wheels.");
    CHECK(be.first_step_for("missing").empty());
}

TEST_CASE("scripted models round-trip through disk and validate probabilities") {
    auto path = temp_path("fs_model_rt.json");
    tiny_model().save(path);
    ScriptedModel back = ScriptedModel::load(path);
    CHECK(back.name == "tiny");
    CHECK(back.seed == 7);
    CHECK(back.entries.size() == 3);
    CHECK(back.entries.at("guided").p_correct_given_guided.value() == 1.0);
    CHECK(back.entries.at("guided").first_step.value() == "Start with 4 + 4 = 8 wheels.");
    std::filesystem::remove(path);

    auto bad = temp_path("fs_model_bad.json");
    {
        std::ofstream out(bad);
        out << R"({"name":"x","problems":{"a":{"p_correct":1.5,"correct_chain":"c"}}})";
    }
    CHECK_THROWS_AS(ScriptedModel::load(bad), ConfigError);
    std::filesystem::remove(bad);

    auto empty = temp_path("fs_model_empty.json");
    {
        std::ofstream out(empty);
        out << R"({"name":"x","problems":{}})";
    }
    CHECK_THROWS_AS(ScriptedModel::load(empty), ParseError);
    std::filesystem::remove(empty);
}

TEST_CASE("http backend retries transient failures with exponential backoff") {
    std::vector<double> sleeps;
    int hits = 0;
    HttpConfig cfg;
    cfg.base_url = "http://example.test";
    cfg.model = "m";
    cfg.sleeper = [&](double s) { sleeps.push_back(s); };
    cfg.transport = [&](const std::string&, const std::string&, const std::vector<Header>&) {
        ++hits;
        HttpResponse r;
        if (hits <= 2) {
            r.transport_ok = true;
            r.status = hits == 1 ? 429 : 503;
            return r;
        }
        r.transport_ok = true;
        r.status = 200;
        r.body = R"({"choices":[{"text":"the answer is 4"}],"usage":{"completion_tokens":7}})";
        return r;
    };
    HttpBackend be(cfg);
    auto rec = be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0);
    CHECK(rec.text == "the answer is 4");
    CHECK(rec.completion_tokens.value() == 7);
    CHECK(hits == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] == 1.0);
    CHECK(sleeps[1] == 2.0);
    CHECK(be.calls() == 1);
}

TEST_CASE("http backend gives up after the attempt budget and caps the backoff") {
    std::vector<double> sleeps;
    HttpConfig cfg;
    cfg.base_url = "http://example.test";
    cfg.model = "m";
    cfg.max_attempts = 7;
    cfg.backoff_base_s = 8.0;
    cfg.sleeper = [&](double s) { sleeps.push_back(s); };
    cfg.transport = [&](const std::string&, const std::string&, const std::vector<Header>&) {
        HttpResponse r;
        r.error = "connection refused";
        return r;  // transport failure every time
    };
    HttpBackend be(cfg);
    CHECK_THROWS_AS(be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0), BackendError);
    REQUIRE(sleeps.size() == 6);
    CHECK(sleeps == std::vector<double>{8.0, 16.0, 30.0, 30.0, 30.0, 30.0});
}

TEST_CASE("http client errors other than 429 fail immediately") {
    int hits = 0;
    HttpConfig cfg;
    cfg.base_url = "http://example.test";
    cfg.model = "m";
    cfg.sleeper = [](double) {};
    cfg.transport = [&](const std::string&, const std::string&, const std::vector<Header>&) {
        ++hits;
        HttpResponse r;
        r.transport_ok = true;
        r.status = 404;
        r.body = "no such route";
        return r;
    };
    HttpBackend be(cfg);
    CHECK_THROWS_AS(be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0), BackendError);
    CHECK(hits == 1);
}

TEST_CASE("malformed 200 responses are protocol errors, not retried") {
    HttpConfig cfg;
    cfg.base_url = "http://example.test";
    cfg.model = "m";
    cfg.sleeper = [](double) {};
    int variant = 0;
    cfg.transport = [&](const std::string&, const std::string&, const std::vector<Header>&) {
        HttpResponse r;
        r.transport_ok = true;
        r.status = 200;
        r.body = variant == 0 ? "not json at all" : R"({"choices":[]})";
        return r;
    };
    HttpBackend be(cfg);
    CHECK_THROWS_AS(be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0), ProtocolError);
    variant = 1;
    CHECK_THROWS_AS(be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0), ProtocolError);
}

TEST_CASE("request shape follows the selected api flavor") {
    std::string seen_path;
    std::string seen_body;
    std::vector<Header> seen_headers;
    HttpConfig cfg;
    cfg.base_url = "http://example.test/custom";
    cfg.model = "llama";
    cfg.api = "chat";
    cfg.sleeper = [](double) {};
    cfg.transport = [&](const std::string& path, const std::string& body,
                        const std::vector<Header>& headers) {
        seen_path = path;
        seen_body = body;
        seen_headers = headers;
        HttpResponse r;
        r.transport_ok = true;
        r.status = 200;
        r.body = R"({"choices":[{"message":{"role":"assistant","content":"ok 5"}}]})";
        return r;
    };
    setenv("FIRSTSTEP_API_KEY", "sekrit", 1);
    HttpBackend be(cfg);
    auto rec = be.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0);
    unsetenv("FIRSTSTEP_API_KEY");

    CHECK(rec.text == "ok 5");
    CHECK(seen_path == "/custom/chat/completions");
    auto body = nlohmann::json::parse(seen_body);
    CHECK(body["model"] == "llama");
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["n"] == 1);
    bool has_auth = false;
    for (const auto& [k, v] : seen_headers) {
        has_auth = has_auth || (k == "Authorization" && v == "Bearer sekrit");
    }
    CHECK(has_auth);

    // completions flavor defaults the path prefix to /v1
    HttpConfig cfg2 = cfg;
    cfg2.base_url = "http://example.test";
    cfg2.api = "completions";
    cfg2.transport = [&](const std::string& path, const std::string& body,
                         const std::vector<Header>&) {
        seen_path = path;
        seen_body = body;
        HttpResponse r;
        r.transport_ok = true;
        r.status = 200;
        r.body = R"({"choices":[{"text":"t 1"}]})";
        return r;
    };
    HttpBackend be2(cfg2);
    be2.complete_one(prompt_for("p", "Q?"), SamplingParams{}, 0);
    CHECK(seen_path == "/v1/completions");
    CHECK(nlohmann::json::parse(seen_body).contains("prompt"));
}

TEST_CASE("https endpoints are rejected in this plain-http build") {
    HttpConfig cfg;
    cfg.base_url = "https://api.example.test";
    cfg.model = "m";
    CHECK_THROWS_AS(HttpBackend{cfg}, ConfigError);

    HttpConfig noscheme;
    noscheme.base_url = "example.test";
    noscheme.model = "m";
    CHECK_THROWS_AS(HttpBackend{noscheme}, ConfigError);
}

TEST_CASE("generation cache persists records across instances") {
    auto path = temp_path("fs_cache_persist/sub/cache.jsonl");
    std::filesystem::remove_all(temp_path("fs_cache_persist"));

    auto rec = record_for("hash1", 0, "some text");
    std::string key = cache_key(rec.backend_id, rec.model, rec.prompt_hash, rec.params, 0);
    {
        GenerationCache cache(path);
        CHECK(cache.size() == 0);
        CHECK(cache.insert_if_absent(key, rec));
        CHECK_FALSE(cache.insert_if_absent(key, rec));  // at-most-once
        CHECK(cache.size() == 1);
    }
    {
        GenerationCache cache(path);
        CHECK(cache.size() == 1);
        auto hit = cache.get(key);
        REQUIRE(hit.has_value());
        CHECK(hit->text == "some text");
        CHECK(hit->created_at == "2026-01-01T00:00:00Z");
        CHECK_FALSE(cache.get("absent").has_value());
        CHECK(cache.warnings().empty());
    }
    std::filesystem::remove_all(temp_path("fs_cache_persist"));
}

TEST_CASE("a torn journal tail is dropped with a warning") {
    auto path = temp_path("fs_cache_torn.jsonl");
    std::filesystem::remove(path);
    auto rec = record_for("hash1", 0, "text");
    std::string key = cache_key(rec.backend_id, rec.model, rec.prompt_hash, rec.params, 0);
    {
        GenerationCache cache(path);
        cache.insert_if_absent(key, rec);
    }
    auto full_size = std::filesystem::file_size(path);
    {
        std::ofstream out(path, std::ios::app | std::ios::binary);
        out << "{\"key\":\"zz\",\"record\":{\"trunc";  // crash mid-write
    }
    {
        GenerationCache cache(path);
        CHECK(cache.size() == 1);
        REQUIRE(cache.warnings().size() == 1);
        CHECK(cache.warnings()[0].find("damaged journal tail") != std::string::npos);
        CHECK(cache.get(key).has_value());
    }
    CHECK(std::filesystem::file_size(path) == full_size);  // tail excised
    {
        GenerationCache cache(path);  // and the repaired file is clean
        CHECK(cache.warnings().empty());
    }
    std::filesystem::remove(path);
}

TEST_CASE("a record filed under the wrong key is an integrity error") {
    auto path = temp_path("fs_cache_mismatch.jsonl");
    std::filesystem::remove(path);
    auto rec = record_for("hash1", 0, "text");
    {
        GenerationCache cache(path);
        cache.insert_if_absent(cache_key(rec.backend_id, rec.model, rec.prompt_hash, rec.params, 0),
                               rec);
    }
    // swap the stored key for a well-formed but wrong one
    auto text = [&] {
        std::ifstream in(path);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }();
    auto pos = text.find("\"key\":\"");
    REQUIRE(pos != std::string::npos);
    for (int i = 0; i < 8; ++i) text[pos + 7 + i] = 'f';
    {
        std::ofstream out(path, std::ios::trunc | std::ios::binary);
        out << text;
    }
    CHECK_THROWS_AS(GenerationCache{path}, IntegrityError);
    std::filesystem::remove(path);
}

TEST_CASE("a missing trailing newline is repaired in place") {
    auto path = temp_path("fs_cache_nonl.jsonl");
    std::filesystem::remove(path);
    auto rec = record_for("hash1", 0, "text");
    std::string key = cache_key(rec.backend_id, rec.model, rec.prompt_hash, rec.params, 0);
    {
        GenerationCache cache(path);
        cache.insert_if_absent(key, rec);
    }
    {
        // chop the final newline
        auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size - 1);
    }
    {
        GenerationCache cache(path);
        CHECK(cache.size() == 1);
    }
    std::string text;
    {
        std::ifstream in(path, std::ios::binary);
        text.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    CHECK(!text.empty());
    CHECK(text.back() == '\n');
    std::filesystem::remove(path);
}

TEST_CASE("cached backends serve repeats without touching the engine") {
    auto path = temp_path("fs_cache_wrap.jsonl");
    std::filesystem::remove(path);
    auto inner = std::make_shared<ScriptedBackend>(tiny_model());
    auto cache = std::make_shared<GenerationCache>(path);
    CachedBackend be(inner, cache);

    auto p = prompt_for("sure", "Q?");
    SamplingParams params;
    auto first = be.complete_one(p, params, 0);
    auto second = be.complete_one(p, params, 0);
    CHECK(first.text == second.text);
    CHECK(first.created_at == second.created_at);  // replayed, not regenerated
    CHECK(be.hits() == 1);
    CHECK(be.misses() == 1);
    CHECK(be.calls() == 1);
    CHECK(inner->calls() == 1);

    // a different sample index is a different key
    be.complete_one(p, params, 1);
    CHECK(be.misses() == 2);
    std::filesystem::remove(path);
}

TEST_CASE("cache paths bury model names safely under the backend id") {
    auto p = cache_path_for("cache", "http_localhost:8000", "meta/llama-3");
    CHECK(p == "cache/http_localhost_8000/meta_llama-3.jsonl");
}

TEST_CASE("timestamps are ISO 8601 UTC") {
    auto ts = now_iso8601();
    REQUIRE(ts.size() == 20);
    CHECK(ts[4] == '-');
    CHECK(ts[10] == 'T');
    CHECK(ts[19] == 'Z');
}

TEST_CASE("generation records round-trip through json") {
    auto rec = record_for("hash9", 3, "body text");
    rec.completion_tokens = 42;
    auto back = GenerationRecord::from_json(rec.to_json());
    CHECK(back.backend_id == rec.backend_id);
    CHECK(back.model == rec.model);
    CHECK(back.prompt_hash == rec.prompt_hash);
    CHECK(back.sample_index == 3);
    CHECK(back.text == rec.text);
    CHECK(back.created_at == rec.created_at);
    CHECK(back.completion_tokens.value() == 42);

    rec.completion_tokens.reset();
    CHECK_FALSE(GenerationRecord::from_json(rec.to_json()).completion_tokens.has_value());
}
