#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ariiha/bm25.hpp"
#include "ariiha/corpus.hpp"
#include "ariiha/llm.hpp"
#include "ariiha/target.hpp"

namespace ariiha {

// Ablation switches: Both is the full policy; SimilarityOnly drops the
// shortcut check; ShortcutOnly drops the similarity check; None never
// replaces (pure target-prioritized retrieval).
enum class ConditionMode { Both, SimilarityOnly, ShortcutOnly, None };
std::optional<ConditionMode> parse_condition_mode(std::string_view name);
std::string_view condition_mode_name(ConditionMode mode);

struct AdaptiveConfig {
    double tau = 0.0;          // similarity threshold; a demo fails when score <= tau
    int min_failing = 1;       // failing P1/P2 demos needed to trigger the similarity condition
    int shortcut_max_words = 3;
    ConditionMode condition_mode = ConditionMode::Both;
    bool shortcut_require_source = false;  // quoted spans must occur in the input text
};

// True iff the rationale contains at least one double-quoted span (ASCII or
// typographic quotes) and every span has between 1 and max_words words. A
// trailing unmatched quote is ignored. When `source_text` is given, every
// span must additionally occur in it (case-insensitive).
bool detect_shortcut(std::string_view rationale, int max_words = 3,
                     std::optional<std::string_view> source_text = std::nullopt);

// Counts target-matched demos (P1/P2) whose BM25 score is at or below tau;
// true iff at least min_failing fail. Lists without P1/P2 demos never trigger.
bool similarity_condition(const std::vector<Demonstration>& tp_demos, double tau,
                          int min_failing);

bool replacement_rule(ConditionMode mode, bool condition_similarity, bool condition_shortcut);

struct DemonstrationRecord {
    std::string id;
    double score = 0.0;
    int priority = 3;

    bool operator==(const DemonstrationRecord&) const = default;
};

struct AdaptiveDecision {
    std::string query_id;
    std::string strategy = "ariiha";
    std::vector<DemonstrationRecord> tp_demos;
    std::vector<DemonstrationRecord> reticl_demos;
    ClassificationOutcome tp_outcome;
    std::optional<ClassificationOutcome> reticl_outcome;
    bool condition_similarity = false;
    bool condition_shortcut = false;
    bool replaced = false;
    bool replacement_failed = false;  // conditions held but the second call failed
    ClassificationOutcome final_outcome;
};

enum class DemoOrder { PriorityThenScore, ScoreOnly };

struct PipelineContext {
    const ExamplePool* pool = nullptr;
    const Bm25Index* index = nullptr;
    const TargetMap* targets = nullptr;  // resolved pool targets
    Backend* backend = nullptr;
    const PromptTemplate* prompt = nullptr;
    TargetMatcher matcher = target_similarity;
    DemoOrder demo_order = DemoOrder::PriorityThenScore;
    // Plain-retrieval slot; the BM25 index serves top-k when left null.
    const Retriever* retriever = nullptr;
};

// The context's plain-retrieval demonstrations for one query.
std::vector<Demonstration> plain_retrieve(const PipelineContext& ctx, const Example& query,
                                          std::size_t k);

// Full adaptive step for one query: retrieve both demonstration sets,
// classify with the target-prioritized set, evaluate both conditions, and
// re-classify with the plain retrieval set when the active conditions hold.
// With compute_both the second classification runs even when not replacing,
// which sweep replay and upper-bound evaluation require. A failed second call
// falls back to the target-prioritized outcome and marks replacement_failed.
AdaptiveDecision ariiha_classify(const PipelineContext& ctx, const Example& query,
                                 const NormalizedTarget& query_target,
                                 const AdaptiveConfig& config, std::size_t k, bool compute_both,
                                 std::vector<RunLogEntry>* log = nullptr);

std::vector<DemonstrationRecord> demo_records(const std::vector<Demonstration>& demos);
void order_demos_for_prompt(std::vector<Demonstration>& demos, DemoOrder order);

struct SweepPoint {
    double tau = 0.0;
    double macro_f1 = 0.0;  // percent
};

struct SweepResult {
    double tau_star = 0.0;
    std::vector<SweepPoint> curve;
};

// Replays recorded decisions through the replacement rule for each tau in the
// grid and maximizes dev Macro-F1; ties break toward the smallest tau. Every
// decision must carry a recorded plain-retrieval outcome. No backend calls.
SweepResult optimize_threshold(const std::vector<AdaptiveDecision>& dev_decisions,
                               const std::unordered_map<std::string, Label>& golds,
                               const AdaptiveConfig& config, double tau_min = 0.0,
                               double tau_max = 150.0, double tau_step = 1.0);

// Per item: the gold label if either strategy got it right, else the (wrong)
// target-prioritized label. golds aligned with decisions.
std::vector<Label> upper_bound_labels(const std::vector<AdaptiveDecision>& decisions,
                                      const std::vector<Label>& golds);

std::string decision_to_json_line(const AdaptiveDecision& decision);
AdaptiveDecision decision_from_json_line(std::string_view line);
void write_decision_log(const std::filesystem::path& path,
                        const std::vector<AdaptiveDecision>& decisions);
std::vector<AdaptiveDecision> read_decision_log(const std::filesystem::path& path);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);

}  // namespace ariiha
