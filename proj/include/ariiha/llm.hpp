#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ariiha/corpus.hpp"
#include "ariiha/target.hpp"

namespace ariiha {

// Prompt layout: system text, one block per demonstration, then the query
// block, concatenated verbatim. Templates own their separators.
struct PromptTemplate {
    std::string system_text;
    std::string demo_block;   // placeholders {text} {label}
    std::string query_block;  // placeholder {text}
    std::string hate_surface = "hate";
    std::string not_hate_surface = "not hate";

    static PromptTemplate defaults();
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate parse(std::string_view content, std::string_view origin);

    const std::string& label_surface(Label label) const {
        return label == Label::Hate ? hate_surface : not_hate_surface;
    }
    // DataError on missing placeholders or a non-bijective label lexicon;
    // called by load/parse so rendering never fails.
    void validate(std::string_view origin) const;
};

std::string render_prompt(const PromptTemplate& tmpl, const std::vector<Demonstration>& demos,
                          std::string_view query_text);

struct ClassificationOutcome {
    Label label = Label::NotHate;
    std::string rationale;  // raw reply minus the final label declaration
    std::string raw_reply;

    bool operator==(const ClassificationOutcome&) const = default;
};

struct BackendRequest {
    std::string prompt;
    std::string query_text;  // lets the mock match triggers against the query block
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const BackendRequest& request) = 0;
    virtual std::string identity() const = 0;
    virtual bool deterministic() const { return false; }
};

// One rule per line of a JSONL file. A rule fires when its trigger occurs in
// the query text and, if set, its context occurs anywhere in the prompt (demo
// blocks included). Label rules reply "rationale\n<label surface>"; target
// rules reply the target group verbatim. The file must end with a default
// rule (empty trigger).
struct MockRule {
    std::string trigger;
    std::optional<Label> label;
    std::string rationale;
    std::optional<std::string> quote;    // substituted for {quote} as a quoted span
    std::optional<std::string> context;
    std::optional<std::string> target;
};

class MockBackend final : public Backend {
public:
    explicit MockBackend(std::vector<MockRule> rules, std::string hate_surface = "hate",
                         std::string not_hate_surface = "not hate");
    static std::vector<MockRule> load_rules(const std::filesystem::path& path);

    std::string complete(const BackendRequest& request) override;
    std::string identity() const override { return identity_; }
    bool deterministic() const override { return true; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<MockRule> rules_;
    std::string hate_surface_;
    std::string not_hate_surface_;
    std::string identity_;
    std::atomic<std::size_t> calls_{0};
};

struct HttpBackendConfig {
    std::string endpoint;  // e.g. http://localhost:8000/v1
    std::string model;
    double temperature = 0.0;  // fixed; any other value is rejected
    int max_tokens = 512;
    int retries = 3;
    double timeout_sec = 60.0;
    std::string api_key;  // optional bearer token
    std::uint64_t jitter_seed = 0;
    std::chrono::milliseconds backoff_base{250};
};

// Serialized chat-completions request body (pretty-printed, sorted keys).
std::string chat_request_body(const HttpBackendConfig& config, std::string_view prompt);

// OpenAI-compatible chat-completions client with exponential backoff.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;
    std::string complete(const BackendRequest& request) override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Label extraction: scan the final non-empty line for a lexicon surface
// (case-insensitive, "hate" inside "not hate" does not count); if that line is
// ambiguous or empty of labels, fall back to the whole reply, last match wins.
// BackendError (carrying the reply) when no label can be found.
ClassificationOutcome parse_outcome(const PromptTemplate& tmpl, std::string raw_reply);

ClassificationOutcome classify(Backend& backend, const PromptTemplate& tmpl,
                               const BackendRequest& request);

struct RunLogEntry {
    std::string id;
    std::string strategy;
    std::string prompt_hash;
    std::string raw_reply;
    std::optional<Label> label;
    std::string error;
    long latency_ms = 0;
};

// complete + parse + an audit entry appended to `log` (also on failure).
ClassificationOutcome classify_logged(Backend& backend, const PromptTemplate& tmpl,
                                      const BackendRequest& request, std::string_view id,
                                      std::string_view strategy, std::vector<RunLogEntry>& log);

std::string run_log_line(const RunLogEntry& entry);
void write_run_log(const std::filesystem::path& path, const std::vector<RunLogEntry>& entries);

}  // namespace ariiha
