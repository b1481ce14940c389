#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ariiha/adaptive.hpp"
#include "ariiha/corpus.hpp"

namespace ariiha {

struct ConfusionMatrix {
    std::uint64_t tp = 0;  // Hate predicted Hate
    std::uint64_t fp = 0;  // NotHate predicted Hate
    std::uint64_t fn = 0;  // Hate predicted NotHate
    std::uint64_t tn = 0;  // NotHate predicted NotHate
    std::uint64_t total() const { return tp + fp + fn + tn; }
};

ConfusionMatrix confusion(const std::vector<Label>& preds, const std::vector<Label>& golds);

// All scores are percentages. Degenerate 0/0 ratios are defined as 0 so empty
// classes never crash a run.
struct MetricsReport {
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    double balanced_acc = 0.0;
    double prec1 = 0.0;  // precision of the hate class
    double rec1 = 0.0;
    double prec0 = 0.0;
    double rec0 = 0.0;
    double over_sensitivity = 0.0;  // rec1 - prec1, may be negative
    double accuracy = 0.0;          // auxiliary raw accuracy
    std::uint64_t support_hate = 0;
    std::uint64_t support_not = 0;
};

MetricsReport metrics(const ConfusionMatrix& cm);

// Identity helpers operating directly on percent scores.
double balanced_accuracy_from(double rec1_pct, double rec0_pct);
double over_sensitivity_from(double rec1_pct, double prec1_pct);

enum class EvalMode { Final, TpOnly, ReticlOnly, UpperBound };
std::optional<EvalMode> parse_eval_mode(std::string_view name);
std::string_view eval_mode_name(EvalMode mode);

// Scores one decision log against gold labels. The golds map must cover the
// split exactly: unknown or missing ids are an error listing the ids.
// ReticlOnly and UpperBound require recorded plain-retrieval outcomes.
MetricsReport evaluate_run(const std::vector<AdaptiveDecision>& decisions,
                           const std::unordered_map<std::string, Label>& golds, EvalMode mode);

struct ReportRow {
    std::string name;  // e.g. "ariiha (8-shot)"
    std::string mode;
    std::size_t k = 0;
    std::string condition_mode;
    double tau = 0.0;
    MetricsReport report;
};

// Two-decimal half-up rendering used by the CSV and Markdown emitters.
std::string render_pct(double value);

std::string reports_to_csv(const std::vector<ReportRow>& rows);
std::string reports_to_json(const std::vector<ReportRow>& rows);
std::string reports_to_markdown(const std::vector<ReportRow>& rows);
void emit_reports(const std::vector<ReportRow>& rows, const std::filesystem::path& directory,
                  const std::vector<std::string>& formats);  // csv, json, md

}  // namespace ariiha
