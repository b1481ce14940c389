#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ariiha/bm25.hpp"
#include "ariiha/corpus.hpp"

namespace ariiha {

class Backend;  // llm.hpp
struct RunLogEntry;

class StopwordList {
public:
    static const StopwordList& english();
    static StopwordList from_file(const std::filesystem::path& path);
    bool contains(std::string_view word) const;

    std::set<std::string> words;
};

struct NormalizedTarget {
    std::string canonical;                 // lowercase, collapsed whitespace
    std::set<std::string> content_tokens;  // canonical tokens minus stopwords

    bool operator==(const NormalizedTarget&) const = default;
};

// DataError if nothing remains after normalization.
NormalizedTarget normalize_target(std::string_view raw,
                                  const StopwordList& stopwords = StopwordList::english());

enum class TargetMatch { Exact, Similar, None };

// Exact: equal canonicals. Similar: content tokens overlap, or one canonical
// is a substring of the other. Symmetric.
TargetMatch target_similarity(const NormalizedTarget& a, const NormalizedTarget& b);

// Injectable matching strategy; target_similarity is the default.
using TargetMatcher = std::function<TargetMatch(const NormalizedTarget&, const NormalizedTarget&)>;

enum class Priority : int { P1 = 1, P2 = 2, P3 = 3 };

struct Demonstration {
    const Example* example = nullptr;
    double bm25_score = 0.0;
    Priority priority = Priority::P3;
};

// Resolved target per example id (annotated or predicted).
using TargetMap = std::unordered_map<std::string, NormalizedTarget>;

// Three-level selection: all exact target matches first, then similar-target
// matches, then the remaining pool by BM25 rank. Within each band demos are
// ordered score-descending, ties by ascending id. The query's own id is never
// returned. DataError if a pool example has no resolved target.
std::vector<Demonstration> target_prioritized_retrieve(
    const ExamplePool& pool, const Bm25Index& index, const TargetMap& targets,
    const Example& query, const NormalizedTarget& query_target, std::size_t k,
    const TargetMatcher& matcher = target_similarity);

struct TargetPromptTemplate {
    std::string system_text;
    std::string demo_block;   // placeholders {text} {target}
    std::string query_block;  // placeholder {text}

    static TargetPromptTemplate defaults();
    static TargetPromptTemplate load(const std::filesystem::path& path);
    static TargetPromptTemplate parse(std::string_view content, std::string_view origin);
};

struct TargetPredictorOptions {
    std::size_t shots = 8;
    TargetPromptTemplate prompt = TargetPromptTemplate::defaults();
    StopwordList stopwords = StopwordList::english();
};

// Reads a prediction cache regardless of which backend produced it (the
// caller chose the file); last entry per id wins.
std::map<std::string, std::string> read_target_cache(const std::filesystem::path& path);

// Predicts missing target groups with few-shot prompting over the annotated
// part of the pool. Results are cached by example id; the cache round-trips
// through a JSONL sidecar so reruns are reproducible without backend calls.
class TargetPredictor {
public:
    TargetPredictor(Backend& backend, const ExamplePool& pool, const Bm25Index& index,
                    TargetPredictorOptions options = {});

    // Annotated target if present, otherwise cached or freshly predicted.
    NormalizedTarget resolve(const Example& example, std::vector<RunLogEntry>* log = nullptr);

    // Resolves every example, honoring the parallelism bound for backend calls.
    void resolve_all(const std::vector<Example>& examples, std::size_t parallelism,
                     std::vector<RunLogEntry>* log = nullptr);

    // Resolved target map for a whole pool (annotated + predictions).
    TargetMap resolve_pool(std::size_t parallelism, std::vector<RunLogEntry>* log = nullptr);

    void load_cache(const std::filesystem::path& path);
    void save_cache(const std::filesystem::path& path) const;

    std::size_t backend_calls() const { return backend_calls_.load(); }

private:
    struct CacheEntry {
        std::string target;  // canonical form
        std::string prompt_hash;
    };

    NormalizedTarget predict(const Example& example, std::vector<RunLogEntry>* log);
    std::string build_prompt(const Example& example) const;

    Backend* backend_;
    const ExamplePool* pool_;
    const Bm25Index* index_;
    TargetPredictorOptions options_;
    std::map<std::string, CacheEntry> cache_;  // keyed by example id
    mutable std::mutex cache_mutex_;           // predict() may run concurrently
    std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace ariiha
