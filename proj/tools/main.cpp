#include <atomic>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ariiha/adaptive.hpp"
#include "ariiha/bm25.hpp"
#include "ariiha/corpus.hpp"
#include "ariiha/errors.hpp"
#include "ariiha/eval.hpp"
#include "ariiha/llm.hpp"
#include "ariiha/manifest.hpp"
#include "ariiha/target.hpp"
#include "ariiha/util.hpp"

namespace {

using namespace ariiha;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

std::string flag_str(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

struct CorpusFlags {
    std::string format = "auto";
    std::string null_token;

    void add(CLI::App* cmd) {
        cmd->add_option("--in-format", format, "Input format: tsv, csv, jsonl (default: by extension)");
        cmd->add_option("--null-token", null_token,
                        "Target cells equal to this sentinel count as missing");
    }

    LoadOptions options() const {
        LoadOptions opts;
        if (!null_token.empty()) opts.null_token = null_token;
        return opts;
    }

    ExamplePool load(const std::filesystem::path& path, Split split) const {
        FileFormat fmt = format == "auto" ? format_from_path(path)
                                          : parse_format(format).value_or(FileFormat::Tsv);
        if (format != "auto" && !parse_format(format))
            throw DataError("unknown format '" + format + "'");
        return load_examples(path, fmt, split, options());
    }

    void snapshot(std::map<std::string, std::string>& flags) const {
        flags["in_format"] = format;
        flags["null_token"] = null_token;
    }
};

struct Bm25Flags {
    double k1 = 1.2;
    double b = 0.75;

    void add(CLI::App* cmd) {
        cmd->add_option("--k1", k1, "BM25 k1 (term-frequency saturation)")->capture_default_str();
        cmd->add_option("--b", b, "BM25 b (length normalization)")->capture_default_str();
    }

    Bm25Params params() const { return {k1, b}; }

    void snapshot(std::map<std::string, std::string>& flags) const {
        flags["k1"] = flag_str(k1);
        flags["b"] = flag_str(b);
    }
};

struct BackendFlags {
    std::string kind = "mock";
    std::string mock_rules;
    std::string endpoint;
    std::string model;
    int max_tokens = 512;
    int retries = 3;
    double timeout_sec = 60.0;

    void add(CLI::App* cmd) {
        cmd->add_option("--backend", kind, "Backend kind: mock or http")->capture_default_str();
        cmd->add_option("--mock-rules", mock_rules, "Rule file for the mock backend (JSONL)");
        cmd->add_option("--endpoint", endpoint, "Chat-completions base URL (http backend)");
        cmd->add_option("--model", model, "Model name sent to the endpoint");
        cmd->add_option("--max-tokens", max_tokens, "Completion token limit")->capture_default_str();
        cmd->add_option("--retries", retries, "Retry count for failed requests")->capture_default_str();
        cmd->add_option("--timeout", timeout_sec, "Per-request timeout in seconds")->capture_default_str();
    }

    std::unique_ptr<Backend> make(const PromptTemplate& tmpl, std::uint64_t seed) const {
        if (kind == "mock") {
            if (mock_rules.empty()) throw DataError("--backend mock requires --mock-rules");
            return std::make_unique<MockBackend>(MockBackend::load_rules(mock_rules),
                                                 tmpl.hate_surface, tmpl.not_hate_surface);
        }
        if (kind == "http") {
            if (endpoint.empty() || model.empty())
                throw DataError("--backend http requires --endpoint and --model");
            HttpBackendConfig config;
            config.endpoint = endpoint;
            config.model = model;
            config.max_tokens = max_tokens;
            config.retries = retries;
            config.timeout_sec = timeout_sec;
            config.jitter_seed = seed;
            if (const char* key = std::getenv("ARIIHA_API_KEY")) config.api_key = key;
            return std::make_unique<HttpBackend>(std::move(config));
        }
        throw DataError("unknown backend '" + kind + "' (use mock or http)");
    }

    void snapshot(std::map<std::string, std::string>& flags) const {
        flags["backend"] = kind;
        flags["mock_rules"] = mock_rules;
        flags["endpoint"] = endpoint;
        flags["model"] = model;
        flags["max_tokens"] = std::to_string(max_tokens);
        flags["retries"] = std::to_string(retries);
        flags["timeout"] = flag_str(timeout_sec);
    }
};

PromptTemplate load_template(const std::string& path) {
    return path.empty() ? PromptTemplate::defaults() : PromptTemplate::load(path);
}

std::unordered_map<std::string, Label> gold_map(const ExamplePool& split) {
    std::unordered_map<std::string, Label> golds;
    for (const auto& ex : split.examples()) golds.emplace(ex.id, ex.label);
    return golds;
}

TargetMap resolve_pool_targets(const ExamplePool& pool,
                               const std::map<std::string, std::string>& cache,
                               const StopwordList& stopwords) {
    TargetMap targets;
    std::vector<std::string> missing;
    for (const auto& ex : pool.examples()) {
        if (ex.target) {
            targets.emplace(ex.id, normalize_target(*ex.target, stopwords));
        } else if (auto it = cache.find(ex.id); it != cache.end()) {
            targets.emplace(ex.id, normalize_target(it->second, stopwords));
        } else {
            missing.push_back(ex.id);
        }
    }
    if (!missing.empty()) {
        std::string ids;
        for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 8); ++i)
            ids += (i ? ", " : "") + missing[i];
        if (missing.size() > 8) ids += ", ...";
        throw DataError("unresolved pool targets for " + std::to_string(missing.size()) +
                        " examples (" + ids + "); run predict-targets first");
    }
    return targets;
}

NormalizedTarget resolve_query_target(const Example& query,
                                      const std::map<std::string, std::string>& cache,
                                      const StopwordList& stopwords) {
    if (query.target) return normalize_target(*query.target, stopwords);
    auto it = cache.find(query.id);
    if (it == cache.end())
        throw DataError("no predicted target for query '" + query.id +
                        "'; run predict-targets over this split first");
    return normalize_target(it->second, stopwords);
}

// ---------------------------------------------------------------------------
// Split classification driver
// ---------------------------------------------------------------------------

struct SplitRunResult {
    std::vector<AdaptiveDecision> decisions;  // successes, input order
    std::vector<RunLogEntry> run_log;
    std::vector<std::pair<std::string, std::string>> failures;  // id -> error
};

struct SplitJob {
    std::string strategy = "ariiha";
    std::size_t k = 8;
    AdaptiveConfig config;
    bool compute_both = true;
    std::uint64_t seed = 0;
    std::size_t parallel = 1;
};

SplitRunResult run_split(const PipelineContext& ctx, const std::vector<Example>& queries,
                         const std::unordered_map<std::string, NormalizedTarget>& query_targets,
                         const SplitJob& job) {
    // Random demo choices are drawn sequentially up front so that --parallel
    // never changes what gets sampled.
    std::vector<std::vector<std::size_t>> random_picks;
    if (job.strategy == "random") {
        std::mt19937_64 rng(job.seed);
        for (const auto& q : queries) {
            std::vector<std::size_t> eligible;
            const auto& examples = ctx.pool->examples();
            for (std::size_t i = 0; i < examples.size(); ++i) {
                if (examples[i].id != q.id) eligible.push_back(i);
            }
            auto picks = sample_without_replacement(rng, eligible.size(), job.k);
            std::vector<std::size_t> pool_indices;
            for (auto p : picks) pool_indices.push_back(eligible[p]);
            random_picks.push_back(std::move(pool_indices));
        }
    }

    auto process = [&](std::size_t i, std::vector<RunLogEntry>& entries) -> AdaptiveDecision {
        const Example& query = queries[i];
        if (job.strategy == "ariiha") {
            return ariiha_classify(ctx, query, query_targets.at(query.id), job.config, job.k,
                                   job.compute_both, &entries);
        }
        AdaptiveDecision decision;
        decision.query_id = query.id;
        decision.strategy = job.strategy;
        std::vector<Demonstration> demos;
        if (job.strategy == "reticl") {
            demos = plain_retrieve(ctx, query, job.k);
        } else if (job.strategy == "target") {
            demos = target_prioritized_retrieve(*ctx.pool, *ctx.index, *ctx.targets, query,
                                                query_targets.at(query.id), job.k, ctx.matcher);
            order_demos_for_prompt(demos, ctx.demo_order);
        } else if (job.strategy == "random") {
            auto scores = ctx.index->score_all(tokenize(query.text));
            for (std::size_t pool_index : random_picks[i]) {
                const Example* ex = &ctx.pool->examples()[pool_index];
                demos.push_back({ex, scores[pool_index], Priority::P3});
            }
        } else if (job.strategy != "zero") {
            throw DataError("unknown strategy '" + job.strategy + "'");
        }
        decision.tp_demos = demo_records(demos);
        BackendRequest request{render_prompt(*ctx.prompt, demos, query.text), query.text};
        decision.tp_outcome = classify_logged(*ctx.backend, *ctx.prompt, request, query.id,
                                              job.strategy, entries);
        decision.final_outcome = decision.tp_outcome;
        return decision;
    };

    struct Slot {
        std::optional<AdaptiveDecision> decision;
        std::vector<RunLogEntry> entries;
        std::string backend_error;
        std::exception_ptr fatal;
    };
    std::vector<Slot> slots(queries.size());
    auto run_one = [&](std::size_t i) {
        try {
            slots[i].decision = process(i, slots[i].entries);
        } catch (const BackendError& e) {
            slots[i].backend_error = e.what();
        } catch (...) {
            slots[i].fatal = std::current_exception();
        }
    };

    if (job.parallel <= 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= queries.size()) return;
                run_one(i);
            }
        };
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < std::min(job.parallel, queries.size()); ++t)
            threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    SplitRunResult result;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        for (auto& e : slots[i].entries) result.run_log.push_back(std::move(e));
        if (slots[i].fatal) std::rethrow_exception(slots[i].fatal);
        if (!slots[i].backend_error.empty())
            result.failures.emplace_back(queries[i].id, slots[i].backend_error);
        else
            result.decisions.push_back(std::move(*slots[i].decision));
    }
    return result;
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<AdaptiveDecision>& decisions) {
    std::ostringstream out;
    for (const auto& d : decisions) {
        json obj;
        obj["id"] = d.query_id;
        obj["label"] = label_name(d.final_outcome.label);
        out << obj.dump() << '\n';
    }
    write_text_file(path, out.str());
}

int finish_with_failures(const SplitRunResult& result) {
    if (result.failures.empty()) return 0;
    std::cerr << result.failures.size() << " backend failure(s):\n";
    for (const auto& [id, error] : result.failures)
        std::cerr << "  " << id << ": " << error << '\n';
    return kExitBackend;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct IndexCmd {
    std::string pool_path;
    std::string out_dir;
    CorpusFlags corpus;
    Bm25Flags bm25;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("index", "Build and serialize a BM25 index over a pool");
        cmd->add_option("--pool", pool_path, "Labeled pool file")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        corpus.add(cmd);
        bm25.add(cmd);
        cmd->callback([this] { run(); });
    }

    void run() const {
        auto pool = corpus.load(pool_path, Split::Pool);
        auto index = Bm25Index::build(pool, bm25.params());
        std::filesystem::create_directories(out_dir);
        index.save(std::filesystem::path(out_dir) / "index.json");
        auto report = validate_pool(pool);
        std::cout << "indexed " << index.doc_count() << " docs, avg length "
                  << index.avg_doc_length() << "\n"
                  << "pool: " << report.summary() << "\n";
        RunManifest manifest;
        manifest.command = "index";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.flags["pool"] = pool_path;
        manifest.flags["out"] = out_dir;
        corpus.snapshot(manifest.flags);
        bm25.snapshot(manifest.flags);
        manifest.add_input(pool_path);
        manifest.outputs = {"index.json"};
        manifest.write(out_dir);
    }
};

struct PredictTargetsCmd {
    std::string pool_path;
    std::vector<std::string> query_paths;
    std::string cache_path;
    std::string out_dir;
    std::string target_template_path;
    std::size_t shots = 8;
    std::size_t parallel = 1;
    std::uint64_t seed = 0;
    CorpusFlags corpus;
    Bm25Flags bm25;
    BackendFlags backend;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "predict-targets", "Fill missing target groups for the pool and query splits");
        cmd->add_option("--pool", pool_path, "Labeled pool file")->required();
        cmd->add_option("--queries", query_paths, "Query split file(s) to cover");
        cmd->add_option("--cache", cache_path, "Target cache JSONL to fill")->required();
        cmd->add_option("--out", out_dir, "Directory for manifest and run log");
        cmd->add_option("--shots", shots, "Demonstrations per prediction prompt")
            ->capture_default_str();
        cmd->add_option("--target-template", target_template_path,
                        "Sectioned template for target prompts");
        cmd->add_option("--parallel", parallel, "Concurrent backend calls")->capture_default_str();
        cmd->add_option("--seed", seed, "Seed for retry jitter")->capture_default_str();
        corpus.add(cmd);
        bm25.add(cmd);
        backend.add(cmd);
        cmd->callback([this] { run(); });
    }

    void run() const {
        auto pool = corpus.load(pool_path, Split::Pool);
        auto index = Bm25Index::build(pool, bm25.params());
        auto prompt = PromptTemplate::defaults();
        auto be = backend.make(prompt, seed);
        TargetPredictorOptions options;
        options.shots = shots;
        if (!target_template_path.empty())
            options.prompt = TargetPromptTemplate::load(target_template_path);
        TargetPredictor predictor(*be, pool, index, options);
        predictor.load_cache(cache_path);
        std::filesystem::path dir = out_dir.empty()
                                        ? std::filesystem::path(cache_path).parent_path()
                                        : std::filesystem::path(out_dir);
        if (dir.empty()) dir = ".";
        std::filesystem::create_directories(dir);
        std::vector<RunLogEntry> log;
        try {
            predictor.resolve_all(pool.examples(), parallel, &log);
            for (const auto& path : query_paths) {
                auto split = corpus.load(path, Split::Dev);
                predictor.resolve_all(split.examples(), parallel, &log);
            }
        } catch (...) {
            // Keep completed predictions and the audit trail inspectable.
            predictor.save_cache(cache_path);
            write_run_log(dir / "run_log_targets.jsonl", log);
            throw;
        }
        predictor.save_cache(cache_path);
        write_run_log(dir / "run_log_targets.jsonl", log);
        std::cout << "target cache written to " << cache_path << " ("
                  << predictor.backend_calls() << " backend calls)\n";
        RunManifest manifest;
        manifest.command = "predict-targets";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.backend_identity = be->identity();
        manifest.flags["pool"] = pool_path;
        std::string joined;
        for (const auto& q : query_paths) joined += (joined.empty() ? "" : ",") + q;
        manifest.flags["queries"] = joined;
        manifest.flags["cache"] = cache_path;
        manifest.flags["shots"] = std::to_string(shots);
        manifest.flags["target_template"] = target_template_path;
        manifest.flags["parallel"] = std::to_string(parallel);
        manifest.flags["seed"] = std::to_string(seed);
        corpus.snapshot(manifest.flags);
        bm25.snapshot(manifest.flags);
        backend.snapshot(manifest.flags);
        manifest.add_input(pool_path);
        for (const auto& q : query_paths) manifest.add_input(q);
        manifest.outputs = {"run_log_targets.jsonl"};
        manifest.write(dir);
    }
};

struct ClassifyFlags {
    std::string strategy = "ariiha";
    std::size_t k = 8;
    double tau = 0.0;
    std::string condition_mode = "both";
    int min_failing = 1;
    int shortcut_max_words = 3;
    bool shortcut_require_source = false;
    bool compute_both = true;
    std::string demo_order = "priority";
    std::uint64_t seed = 0;
    std::size_t parallel = 1;
    std::string template_path;
    std::string target_cache_path;

    void add(CLI::App* cmd) {
        cmd->add_option("--strategy", strategy, "reticl, target, ariiha, random, zero")
            ->capture_default_str();
        cmd->add_option("--k", k, "Demonstrations per prompt")->capture_default_str();
        cmd->add_option("--tau", tau, "Similarity threshold for the adaptive policy")
            ->capture_default_str();
        cmd->add_option("--condition-mode", condition_mode,
                        "both, similarity_only, shortcut_only, none")
            ->capture_default_str();
        cmd->add_option("--min-failing", min_failing,
                        "Failing target-matched demos needed to trigger the similarity condition")
            ->capture_default_str();
        cmd->add_option("--shortcut-max-words", shortcut_max_words,
                        "Longest quoted phrase that still counts as a shortcut")
            ->capture_default_str();
        cmd->add_flag("--shortcut-require-source", shortcut_require_source,
                      "Quoted phrases must occur in the input text");
        cmd->add_flag("--compute-both,!--no-compute-both", compute_both,
                      "Also classify with plain retrieval demos (enables sweep and upper bound)");
        cmd->add_option("--demo-order", demo_order, "priority or score")->capture_default_str();
        cmd->add_option("--seed", seed, "Seed for random sampling and retry jitter")
            ->capture_default_str();
        cmd->add_option("--parallel", parallel, "Concurrent backend calls")->capture_default_str();
        cmd->add_option("--template", template_path, "Sectioned prompt template file");
        cmd->add_option("--target-cache", target_cache_path, "Cache from predict-targets");
    }

    AdaptiveConfig config() const {
        AdaptiveConfig cfg;
        cfg.tau = tau;
        cfg.min_failing = min_failing;
        cfg.shortcut_max_words = shortcut_max_words;
        cfg.shortcut_require_source = shortcut_require_source;
        auto mode = parse_condition_mode(condition_mode);
        if (!mode) throw DataError("unknown condition mode '" + condition_mode + "'");
        cfg.condition_mode = *mode;
        if (min_failing < 1) throw DataError("--min-failing must be >= 1");
        if (k < 1) throw DataError("--k must be >= 1");
        if (shortcut_max_words < 1) throw DataError("--shortcut-max-words must be >= 1");
        return cfg;
    }

    DemoOrder order() const {
        if (demo_order == "priority") return DemoOrder::PriorityThenScore;
        if (demo_order == "score") return DemoOrder::ScoreOnly;
        throw DataError("unknown demo order '" + demo_order + "'");
    }

    void snapshot(std::map<std::string, std::string>& flags) const {
        flags["strategy"] = strategy;
        flags["k"] = std::to_string(k);
        flags["tau"] = flag_str(tau);
        flags["condition_mode"] = condition_mode;
        flags["min_failing"] = std::to_string(min_failing);
        flags["shortcut_max_words"] = std::to_string(shortcut_max_words);
        flags["shortcut_require_source"] = shortcut_require_source ? "true" : "false";
        flags["compute_both"] = compute_both ? "true" : "false";
        flags["demo_order"] = demo_order;
        flags["seed"] = std::to_string(seed);
        flags["parallel"] = std::to_string(parallel);
        flags["template"] = template_path;
        flags["target_cache"] = target_cache_path;
    }
};

struct PreparedPipeline {
    ExamplePool pool;
    Bm25Index index;
    PromptTemplate prompt;
    std::unique_ptr<Backend> backend;
    TargetMap pool_targets;
    std::unordered_map<std::string, NormalizedTarget> query_targets;
    PipelineContext ctx;
};

// Wires corpus, index, backend and targets for one classification run.
std::unique_ptr<PreparedPipeline> prepare_pipeline(const CorpusFlags& corpus,
                                                   const Bm25Flags& bm25,
                                                   const BackendFlags& backend,
                                                   const ClassifyFlags& classify,
                                                   const std::string& pool_path,
                                                   const std::vector<Example>& queries) {
    auto prepared = std::make_unique<PreparedPipeline>();
    prepared->pool = corpus.load(pool_path, Split::Pool);
    prepared->index = Bm25Index::build(prepared->pool, bm25.params());
    prepared->prompt = load_template(classify.template_path);
    prepared->backend = backend.make(prepared->prompt, classify.seed);

    bool needs_targets = classify.strategy == "target" || classify.strategy == "ariiha";
    if (needs_targets) {
        std::map<std::string, std::string> cache;
        if (!classify.target_cache_path.empty())
            cache = read_target_cache(classify.target_cache_path);
        prepared->pool_targets =
            resolve_pool_targets(prepared->pool, cache, StopwordList::english());
        for (const auto& q : queries)
            prepared->query_targets.emplace(
                q.id, resolve_query_target(q, cache, StopwordList::english()));
    }
    prepared->ctx.pool = &prepared->pool;
    prepared->ctx.index = &prepared->index;
    prepared->ctx.targets = &prepared->pool_targets;
    prepared->ctx.backend = prepared->backend.get();
    prepared->ctx.prompt = &prepared->prompt;
    prepared->ctx.demo_order = classify.order();
    return prepared;
}

struct ClassifyCmd {
    std::string pool_path;
    std::string test_path;
    std::string out_dir;
    CorpusFlags corpus;
    Bm25Flags bm25;
    BackendFlags backend;
    ClassifyFlags classify;
    int exit_code = 0;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("classify", "Classify a split with a demonstration strategy");
        cmd->add_option("--pool", pool_path, "Labeled pool file")->required();
        cmd->add_option("--test", test_path, "Split to classify")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        corpus.add(cmd);
        bm25.add(cmd);
        backend.add(cmd);
        classify.add(cmd);
        cmd->callback([this] { exit_code = run(); });
    }

    int run() const {
        auto split = corpus.load(test_path, Split::Test);
        auto pipeline = prepare_pipeline(corpus, bm25, backend, classify, pool_path,
                                         split.examples());
        SplitJob job;
        job.strategy = classify.strategy;
        job.k = classify.k;
        job.config = classify.config();
        job.compute_both = classify.compute_both;
        job.seed = classify.seed;
        job.parallel = classify.parallel;
        auto result = run_split(pipeline->ctx, split.examples(), pipeline->query_targets, job);

        std::filesystem::create_directories(out_dir);
        std::filesystem::path dir(out_dir);
        write_decision_log(dir / "decisions.jsonl", result.decisions);
        write_predictions(dir / "predictions.jsonl", result.decisions);
        write_run_log(dir / "run_log.jsonl", result.run_log);
        std::cout << "classified " << result.decisions.size() << "/" << split.size()
                  << " items with strategy " << classify.strategy << "\n";

        RunManifest manifest;
        manifest.command = "classify";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.backend_identity = pipeline->backend->identity();
        manifest.flags["pool"] = pool_path;
        manifest.flags["test"] = test_path;
        manifest.flags["out"] = out_dir;
        corpus.snapshot(manifest.flags);
        bm25.snapshot(manifest.flags);
        backend.snapshot(manifest.flags);
        classify.snapshot(manifest.flags);
        manifest.add_input(pool_path);
        manifest.add_input(test_path);
        if (!classify.template_path.empty()) manifest.add_input(classify.template_path);
        if (!backend.mock_rules.empty()) manifest.add_input(backend.mock_rules);
        manifest.outputs = {"decisions.jsonl", "predictions.jsonl", "run_log.jsonl"};
        manifest.write(dir);
        return finish_with_failures(result);
    }
};

struct SweepCmd {
    std::string pool_path;
    std::string dev_path;
    std::string out_dir;
    double tau_min = 0.0;
    double tau_max = 150.0;
    double tau_step = 1.0;
    CorpusFlags corpus;
    Bm25Flags bm25;
    BackendFlags backend;
    ClassifyFlags classify;
    int exit_code = 0;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("sweep", "Grid-search the similarity threshold on a dev split");
        cmd->add_option("--pool", pool_path, "Labeled pool file")->required();
        cmd->add_option("--dev", dev_path, "Dev split with gold labels")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--min", tau_min, "Smallest threshold")->capture_default_str();
        cmd->add_option("--max", tau_max, "Largest threshold")->capture_default_str();
        cmd->add_option("--step", tau_step, "Grid step")->capture_default_str();
        corpus.add(cmd);
        bm25.add(cmd);
        backend.add(cmd);
        classify.add(cmd);
        cmd->callback([this] { exit_code = run(); });
    }

    int run() {
        classify.strategy = "ariiha";
        classify.compute_both = true;  // replay needs both outcomes per item
        auto dev = corpus.load(dev_path, Split::Dev);
        auto pipeline =
            prepare_pipeline(corpus, bm25, backend, classify, pool_path, dev.examples());
        SplitJob job;
        job.strategy = "ariiha";
        job.k = classify.k;
        job.config = classify.config();
        job.compute_both = true;
        job.seed = classify.seed;
        job.parallel = classify.parallel;
        auto result = run_split(pipeline->ctx, dev.examples(), pipeline->query_targets, job);
        if (!result.failures.empty()) {
            std::filesystem::create_directories(out_dir);
            write_run_log(std::filesystem::path(out_dir) / "run_log_dev.jsonl", result.run_log);
            return finish_with_failures(result);
        }
        auto sweep = optimize_threshold(result.decisions, gold_map(dev), job.config, tau_min,
                                        tau_max, tau_step);
        std::filesystem::create_directories(out_dir);
        std::filesystem::path dir(out_dir);
        write_decision_log(dir / "decisions_dev.jsonl", result.decisions);
        write_run_log(dir / "run_log_dev.jsonl", result.run_log);
        write_sweep_csv(dir / "sweep.csv", sweep);
        json summary;
        summary["tau_star"] = sweep.tau_star;
        double best = 0.0;
        for (const auto& p : sweep.curve)
            if (p.tau == sweep.tau_star) best = p.macro_f1;
        summary["macro_f1"] = best;
        summary["points"] = sweep.curve.size();
        write_text_file(dir / "sweep_result.json", summary.dump(2) + "\n");
        std::cout << "tau_star=" << sweep.tau_star << " macro_f1=" << render_pct(best) << " ("
                  << sweep.curve.size() << " grid points)\n";

        RunManifest manifest;
        manifest.command = "sweep";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.backend_identity = pipeline->backend->identity();
        manifest.flags["pool"] = pool_path;
        manifest.flags["dev"] = dev_path;
        manifest.flags["out"] = out_dir;
        manifest.flags["min"] = flag_str(tau_min);
        manifest.flags["max"] = flag_str(tau_max);
        manifest.flags["step"] = flag_str(tau_step);
        corpus.snapshot(manifest.flags);
        bm25.snapshot(manifest.flags);
        backend.snapshot(manifest.flags);
        classify.snapshot(manifest.flags);
        manifest.add_input(pool_path);
        manifest.add_input(dev_path);
        manifest.outputs = {"decisions_dev.jsonl", "run_log_dev.jsonl", "sweep.csv",
                            "sweep_result.json"};
        manifest.write(dir);
        return 0;
    }
};

struct EvalCmd {
    std::string log_path;
    std::string gold_path;
    std::string out_dir;
    std::string name;
    std::vector<std::string> modes = {"final", "tp_only", "reticl_only", "upper_bound"};
    std::vector<std::string> formats = {"csv", "json", "md"};
    std::string condition_mode = "both";
    double tau = 0.0;
    std::size_t k = 0;
    CorpusFlags corpus;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("eval", "Score a decision log against gold labels");
        cmd->add_option("--log", log_path, "Decision log JSONL")->required();
        cmd->add_option("--gold", gold_path, "Split file carrying gold labels")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--modes", modes, "final, tp_only, reticl_only, upper_bound")
            ->delimiter(',');
        cmd->add_option("--format", formats, "csv, json, md")->delimiter(',');
        cmd->add_option("--name", name, "Row label prefix (default: strategy from the log)");
        cmd->add_option("--condition-mode", condition_mode, "Recorded for the report rows")
            ->capture_default_str();
        cmd->add_option("--tau", tau, "Recorded for the report rows")->capture_default_str();
        cmd->add_option("--k", k, "Shots; 0 infers from the log")->capture_default_str();
        corpus.add(cmd);
        cmd->callback([this] { run(); });
    }

    void run() const {
        auto decisions = read_decision_log(log_path);
        if (decisions.empty()) throw DataError("decision log is empty: " + log_path);
        auto golds = gold_map(corpus.load(gold_path, Split::Test));
        std::size_t shots = k;
        if (shots == 0) {
            for (const auto& d : decisions)
                shots = std::max({shots, d.tp_demos.size(), d.reticl_demos.size()});
        }
        std::string base = name.empty() ? decisions.front().strategy : name;
        std::vector<ReportRow> rows;
        for (const auto& mode_name : modes) {
            auto mode = parse_eval_mode(mode_name);
            if (!mode) throw DataError("unknown eval mode '" + mode_name + "'");
            ReportRow row;
            row.name = base + " " + std::string(eval_mode_name(*mode)) + " (" +
                       std::to_string(shots) + "-shot)";
            row.mode = eval_mode_name(*mode);
            row.k = shots;
            row.condition_mode = condition_mode;
            row.tau = tau;
            row.report = evaluate_run(decisions, golds, *mode);
            rows.push_back(std::move(row));
        }
        std::filesystem::create_directories(out_dir);
        emit_reports(rows, out_dir, formats);
        for (const auto& row : rows)
            std::cout << row.name << ": macro_f1=" << render_pct(row.report.macro_f1)
                      << " balanced_acc=" << render_pct(row.report.balanced_acc)
                      << " over_sensitivity=" << render_pct(row.report.over_sensitivity) << "\n";

        RunManifest manifest;
        manifest.command = "eval";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.flags["log"] = log_path;
        manifest.flags["gold"] = gold_path;
        manifest.flags["out"] = out_dir;
        std::string joined_modes, joined_formats;
        for (const auto& m : modes) joined_modes += (joined_modes.empty() ? "" : ",") + m;
        for (const auto& f : formats) joined_formats += (joined_formats.empty() ? "" : ",") + f;
        manifest.flags["modes"] = joined_modes;
        manifest.flags["format"] = joined_formats;
        manifest.flags["name"] = base;
        manifest.flags["condition_mode"] = condition_mode;
        manifest.flags["tau"] = flag_str(tau);
        manifest.flags["k"] = std::to_string(shots);
        corpus.snapshot(manifest.flags);
        manifest.add_input(log_path);
        manifest.add_input(gold_path);
        for (const auto& f : formats) manifest.outputs.push_back("reports." + (f == "markdown" ? "md" : f));
        manifest.write(out_dir);
    }
};

// ---------------------------------------------------------------------------
// reproduce: the staged pipeline driven by one config file
// ---------------------------------------------------------------------------

struct ReproduceCmd {
    std::string config_path;
    std::string out_dir;
    int exit_code = 0;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "reproduce", "Run predict-targets, sweep, classify and eval from one config file");
        cmd->add_option("--config", config_path, "Pipeline config JSON")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->callback([this] { exit_code = run(); });
    }

    int run() const {
        auto config_dir = std::filesystem::absolute(config_path).parent_path();
        json cfg = json::parse(read_text_file(config_path));
        auto rel = [&](const std::string& p) {
            std::filesystem::path path(p);
            return path.is_absolute() ? path : config_dir / path;
        };

        CorpusFlags corpus;
        corpus.format = cfg.value("format", "auto");
        if (cfg.contains("null_token") && cfg["null_token"].is_string())
            corpus.null_token = cfg["null_token"].get<std::string>();
        Bm25Flags bm25;
        bm25.k1 = cfg.value("k1", 1.2);
        bm25.b = cfg.value("b", 0.75);

        auto pool_path = rel(cfg.at("pool").get<std::string>());
        auto dev_path = rel(cfg.at("dev").get<std::string>());
        auto test_path = rel(cfg.at("test").get<std::string>());
        auto pool = corpus.load(pool_path, Split::Pool);
        auto dev = corpus.load(dev_path, Split::Dev);
        auto test = corpus.load(test_path, Split::Test);
        auto index = Bm25Index::build(pool, bm25.params());

        PromptTemplate prompt = cfg.contains("template") && cfg["template"].is_string()
                                    ? PromptTemplate::load(rel(cfg["template"].get<std::string>()))
                                    : PromptTemplate::defaults();

        const json& backend_cfg = cfg.at("backend");
        std::string kind = backend_cfg.value("kind", "mock");
        std::uint64_t seed = cfg.value("seed", 0);
        std::unique_ptr<Backend> classify_backend;
        std::unique_ptr<Backend> target_backend;
        if (kind == "mock") {
            auto classify_rules =
                MockBackend::load_rules(rel(backend_cfg.at("classify_rules").get<std::string>()));
            auto target_rules =
                MockBackend::load_rules(rel(backend_cfg.at("target_rules").get<std::string>()));
            classify_backend = std::make_unique<MockBackend>(
                std::move(classify_rules), prompt.hate_surface, prompt.not_hate_surface);
            target_backend = std::make_unique<MockBackend>(
                std::move(target_rules), prompt.hate_surface, prompt.not_hate_surface);
        } else if (kind == "http") {
            auto make_http = [&] {
                HttpBackendConfig hc;
                hc.endpoint = backend_cfg.at("endpoint").get<std::string>();
                hc.model = backend_cfg.at("model").get<std::string>();
                hc.max_tokens = backend_cfg.value("max_tokens", 512);
                hc.retries = backend_cfg.value("retries", 3);
                hc.timeout_sec = backend_cfg.value("timeout_sec", 60.0);
                hc.jitter_seed = seed;
                if (const char* key = std::getenv("ARIIHA_API_KEY")) hc.api_key = key;
                return std::make_unique<HttpBackend>(std::move(hc));
            };
            classify_backend = make_http();
            target_backend = make_http();
        } else {
            throw DataError("unknown backend kind '" + kind + "'");
        }

        std::size_t parallel = cfg.value("parallel", 1);
        std::filesystem::create_directories(out_dir);
        std::filesystem::path dir(out_dir);

        // Stage 1: targets.
        TargetPredictorOptions predictor_options;
        predictor_options.shots = cfg.value("shots", 8);
        if (cfg.contains("target_template") && cfg["target_template"].is_string())
            predictor_options.prompt =
                TargetPromptTemplate::load(rel(cfg["target_template"].get<std::string>()));
        TargetPredictor predictor(*target_backend, pool, index, predictor_options);
        std::vector<RunLogEntry> target_log;
        predictor.resolve_all(pool.examples(), parallel, &target_log);
        predictor.resolve_all(dev.examples(), parallel, &target_log);
        predictor.resolve_all(test.examples(), parallel, &target_log);
        predictor.save_cache(dir / "targets.jsonl");
        write_run_log(dir / "run_log_targets.jsonl", target_log);

        TargetMap pool_targets;
        std::unordered_map<std::string, NormalizedTarget> query_targets;
        for (const auto& ex : pool.examples()) pool_targets.emplace(ex.id, predictor.resolve(ex));
        for (const auto& ex : dev.examples()) query_targets.emplace(ex.id, predictor.resolve(ex));
        for (const auto& ex : test.examples()) query_targets.emplace(ex.id, predictor.resolve(ex));

        PipelineContext ctx;
        ctx.pool = &pool;
        ctx.index = &index;
        ctx.targets = &pool_targets;
        ctx.backend = classify_backend.get();
        ctx.prompt = &prompt;
        ctx.demo_order = cfg.value("demo_order", "priority") == "score"
                             ? DemoOrder::ScoreOnly
                             : DemoOrder::PriorityThenScore;

        SplitJob job;
        job.strategy = "ariiha";
        job.k = cfg.value("k", 8);
        job.config.min_failing = cfg.value("min_failing", 1);
        job.config.shortcut_max_words = cfg.value("shortcut_max_words", 3);
        job.config.shortcut_require_source = cfg.value("shortcut_require_source", false);
        auto mode = parse_condition_mode(cfg.value("condition_mode", "both"));
        if (!mode) throw DataError("unknown condition mode in config");
        job.config.condition_mode = *mode;
        job.compute_both = true;
        job.seed = seed;
        job.parallel = parallel;

        // Stage 2: dev run + threshold sweep.
        job.config.tau = 0.0;
        auto dev_result = run_split(ctx, dev.examples(), query_targets, job);
        write_decision_log(dir / "decisions_dev.jsonl", dev_result.decisions);
        write_run_log(dir / "run_log_dev.jsonl", dev_result.run_log);
        if (!dev_result.failures.empty()) return finish_with_failures(dev_result);
        double tau_min = 0.0, tau_max = 150.0, tau_step = 1.0;
        if (cfg.contains("sweep")) {
            tau_min = cfg["sweep"].value("min", 0.0);
            tau_max = cfg["sweep"].value("max", 150.0);
            tau_step = cfg["sweep"].value("step", 1.0);
        }
        auto sweep = optimize_threshold(dev_result.decisions, gold_map(dev), job.config, tau_min,
                                        tau_max, tau_step);
        write_sweep_csv(dir / "sweep.csv", sweep);
        double best = 0.0;
        for (const auto& p : sweep.curve)
            if (p.tau == sweep.tau_star) best = p.macro_f1;
        json sweep_summary;
        sweep_summary["tau_star"] = sweep.tau_star;
        sweep_summary["macro_f1"] = best;
        sweep_summary["points"] = sweep.curve.size();
        write_text_file(dir / "sweep_result.json", sweep_summary.dump(2) + "\n");
        std::cout << "tau_star=" << sweep.tau_star << " (dev macro_f1=" << render_pct(best)
                  << ")\n";

        // Stage 3: test run at the tuned threshold.
        job.config.tau = sweep.tau_star;
        auto test_result = run_split(ctx, test.examples(), query_targets, job);
        write_decision_log(dir / "decisions_test.jsonl", test_result.decisions);
        write_predictions(dir / "predictions.jsonl", test_result.decisions);
        write_run_log(dir / "run_log_test.jsonl", test_result.run_log);
        if (!test_result.failures.empty()) return finish_with_failures(test_result);

        // Stage 4: reports.
        auto golds = gold_map(test);
        std::vector<ReportRow> rows;
        for (EvalMode eval_mode : {EvalMode::Final, EvalMode::TpOnly, EvalMode::ReticlOnly,
                                   EvalMode::UpperBound}) {
            ReportRow row;
            row.name = std::string("ariiha ") + std::string(eval_mode_name(eval_mode)) + " (" +
                       std::to_string(job.k) + "-shot)";
            row.mode = eval_mode_name(eval_mode);
            row.k = job.k;
            row.condition_mode = condition_mode_name(job.config.condition_mode);
            row.tau = sweep.tau_star;
            row.report = evaluate_run(test_result.decisions, golds, eval_mode);
            rows.push_back(std::move(row));
        }
        std::vector<std::string> formats = {"csv", "json", "md"};
        if (cfg.contains("formats")) formats = cfg["formats"].get<std::vector<std::string>>();
        emit_reports(rows, dir, formats);
        for (const auto& row : rows)
            std::cout << row.name << ": macro_f1=" << render_pct(row.report.macro_f1) << "\n";

        RunManifest manifest;
        manifest.command = "reproduce";
        manifest.timestamp_utc = iso8601_utc_now();
        manifest.backend_identity = classify_backend->identity();
        manifest.flags["config"] = config_path;
        manifest.flags["out"] = out_dir;
        manifest.flags["config_json"] = cfg.dump();
        manifest.add_input(config_path);
        manifest.add_input(pool_path);
        manifest.add_input(dev_path);
        manifest.add_input(test_path);
        manifest.outputs = {"targets.jsonl",       "run_log_targets.jsonl",
                            "decisions_dev.jsonl", "run_log_dev.jsonl",
                            "sweep.csv",           "sweep_result.json",
                            "decisions_test.jsonl", "predictions.jsonl",
                            "run_log_test.jsonl",  "reports.csv",
                            "reports.json",        "reports.md"};
        manifest.write(dir);
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive retrieval-based in-context learning for implicit hate speech detection"};
    app.require_subcommand(1);

    IndexCmd index_cmd;
    PredictTargetsCmd predict_cmd;
    ClassifyCmd classify_cmd;
    SweepCmd sweep_cmd;
    EvalCmd eval_cmd;
    ReproduceCmd reproduce_cmd;
    index_cmd.add(app);
    predict_cmd.add(app);
    classify_cmd.add(app);
    sweep_cmd.add(app);
    eval_cmd.add(app);
    reproduce_cmd.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return classify_cmd.exit_code ? classify_cmd.exit_code
           : sweep_cmd.exit_code  ? sweep_cmd.exit_code
                                  : reproduce_cmd.exit_code;
}
