#include "ariiha/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/eval.hpp"
#include "ariiha/utf8.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

using nlohmann::json;

std::size_t count_words(std::string_view span) {
    std::size_t words = 0;
    std::size_t pos = 0;
    bool in_word = false;
    while (pos < span.size()) {
        auto d = utf8::decode(span, pos);
        if (utf8::is_space(d.cp)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
        pos += d.len;
    }
    return words;
}

std::vector<std::string_view> quoted_spans(std::string_view text) {
    std::vector<std::string_view> spans;
    std::size_t pos = 0;
    std::optional<char32_t> open_kind;  // '"' or U+201C
    std::size_t span_start = 0;
    while (pos < text.size()) {
        auto d = utf8::decode(text, pos);
        if (!open_kind) {
            if (d.cp == U'"' || d.cp == 0x201C) {
                open_kind = d.cp;
                span_start = pos + d.len;
            }
        } else {
            bool closes = (*open_kind == U'"' && d.cp == U'"') ||
                          (*open_kind == 0x201C && d.cp == 0x201D);
            if (closes) {
                spans.push_back(text.substr(span_start, pos - span_start));
                open_kind.reset();
            }
        }
        pos += d.len;
    }
    // An unmatched trailing quote never yields a span.
    return spans;
}

ClassificationOutcome outcome_from_json(const json& obj) {
    ClassificationOutcome outcome;
    auto label = parse_label(obj.at("label").get<std::string>());
    if (!label) throw DataError("unknown label in decision log");
    outcome.label = *label;
    outcome.rationale = obj.value("rationale", "");
    outcome.raw_reply = obj.value("raw_reply", "");
    return outcome;
}

json outcome_to_json(const ClassificationOutcome& outcome) {
    json obj;
    obj["label"] = label_name(outcome.label);
    obj["rationale"] = outcome.rationale;
    obj["raw_reply"] = outcome.raw_reply;
    return obj;
}

}  // namespace

std::vector<DemonstrationRecord> demo_records(const std::vector<Demonstration>& demos) {
    std::vector<DemonstrationRecord> records;
    records.reserve(demos.size());
    for (const auto& d : demos)
        records.push_back({d.example->id, d.bm25_score, static_cast<int>(d.priority)});
    return records;
}

std::optional<ConditionMode> parse_condition_mode(std::string_view name) {
    auto n = to_lower_ascii(trim_view(name));
    if (n == "both") return ConditionMode::Both;
    if (n == "similarity_only") return ConditionMode::SimilarityOnly;
    if (n == "shortcut_only") return ConditionMode::ShortcutOnly;
    if (n == "none") return ConditionMode::None;
    return std::nullopt;
}

std::string_view condition_mode_name(ConditionMode mode) {
    switch (mode) {
        case ConditionMode::Both: return "both";
        case ConditionMode::SimilarityOnly: return "similarity_only";
        case ConditionMode::ShortcutOnly: return "shortcut_only";
        case ConditionMode::None: return "none";
    }
    return "both";
}

bool detect_shortcut(std::string_view rationale, int max_words,
                     std::optional<std::string_view> source_text) {
    auto spans = quoted_spans(rationale);
    if (spans.empty()) return false;
    for (const auto& span : spans) {
        std::size_t words = count_words(span);
        if (words < 1 || words > static_cast<std::size_t>(max_words)) return false;
        if (source_text && !contains_ci(*source_text, span)) return false;
    }
    return true;
}

bool similarity_condition(const std::vector<Demonstration>& tp_demos, double tau,
                          int min_failing) {
    int failing = 0;
    for (const auto& demo : tp_demos) {
        if (demo.priority == Priority::P3) continue;
        if (demo.bm25_score <= tau) ++failing;
    }
    return failing >= min_failing;
}

bool replacement_rule(ConditionMode mode, bool condition_similarity, bool condition_shortcut) {
    switch (mode) {
        case ConditionMode::Both: return condition_similarity && condition_shortcut;
        case ConditionMode::SimilarityOnly: return condition_similarity;
        case ConditionMode::ShortcutOnly: return condition_shortcut;
        case ConditionMode::None: return false;
    }
    return false;
}

void order_demos_for_prompt(std::vector<Demonstration>& demos, DemoOrder order) {
    if (order == DemoOrder::ScoreOnly) {
        std::sort(demos.begin(), demos.end(), [](const Demonstration& a, const Demonstration& b) {
            if (a.bm25_score != b.bm25_score) return a.bm25_score > b.bm25_score;
            return a.example->id < b.example->id;
        });
    }
    // PriorityThenScore is the retrieval order already.
}

namespace {

int similarity_failures(const std::vector<DemonstrationRecord>& demos, double tau) {
    int failing = 0;
    for (const auto& d : demos) {
        if (d.priority == 3) continue;
        if (d.score <= tau) ++failing;
    }
    return failing;
}

}  // namespace

std::vector<Demonstration> plain_retrieve(const PipelineContext& ctx, const Example& query,
                                          std::size_t k) {
    auto hits = ctx.retriever ? ctx.retriever->retrieve(query.text, k, {query.id})
                              : ctx.index->top_k(query.text, k, {query.id});
    std::vector<Demonstration> demos;
    demos.reserve(hits.size());
    for (const auto& scored : hits) {
        const Example* example = ctx.pool->find(scored.id);
        if (!example) throw DataError("retriever returned unknown id '" + scored.id + "'");
        demos.push_back({example, scored.score, Priority::P3});
    }
    return demos;
}

AdaptiveDecision ariiha_classify(const PipelineContext& ctx, const Example& query,
                                 const NormalizedTarget& query_target,
                                 const AdaptiveConfig& config, std::size_t k, bool compute_both,
                                 std::vector<RunLogEntry>* log) {
    std::vector<RunLogEntry> local_log;
    std::vector<RunLogEntry>& entries = log ? *log : local_log;

    auto tp_demos = target_prioritized_retrieve(*ctx.pool, *ctx.index, *ctx.targets, query,
                                                query_target, k, ctx.matcher);
    order_demos_for_prompt(tp_demos, ctx.demo_order);
    auto reticl_demos = plain_retrieve(ctx, query, k);

    AdaptiveDecision decision;
    decision.query_id = query.id;
    decision.tp_demos = demo_records(tp_demos);
    decision.reticl_demos = demo_records(reticl_demos);

    BackendRequest tp_request{render_prompt(*ctx.prompt, tp_demos, query.text), query.text};
    try {
        decision.tp_outcome =
            classify_logged(*ctx.backend, *ctx.prompt, tp_request, query.id, "tp", entries);
    } catch (const std::exception& e) {
        throw BackendError("query '" + query.id + "': " + e.what());
    }

    decision.condition_similarity =
        similarity_condition(tp_demos, config.tau, config.min_failing);
    decision.condition_shortcut = detect_shortcut(
        decision.tp_outcome.rationale, config.shortcut_max_words,
        config.shortcut_require_source ? std::optional<std::string_view>(query.text)
                                       : std::nullopt);
    decision.replaced = replacement_rule(config.condition_mode, decision.condition_similarity,
                                         decision.condition_shortcut);

    if (decision.replaced || compute_both) {
        BackendRequest reticl_request{render_prompt(*ctx.prompt, reticl_demos, query.text),
                                      query.text};
        try {
            decision.reticl_outcome = classify_logged(*ctx.backend, *ctx.prompt, reticl_request,
                                                      query.id, "reticl", entries);
        } catch (const std::exception&) {
            // Keep the run alive: fall back to the target-prioritized outcome.
            decision.replacement_failed = decision.replaced;
            decision.reticl_outcome.reset();
        }
    }
    decision.final_outcome = (decision.replaced && decision.reticl_outcome)
                                 ? *decision.reticl_outcome
                                 : decision.tp_outcome;
    return decision;
}

SweepResult optimize_threshold(const std::vector<AdaptiveDecision>& dev_decisions,
                               const std::unordered_map<std::string, Label>& golds,
                               const AdaptiveConfig& config, double tau_min, double tau_max,
                               double tau_step) {
    if (dev_decisions.empty()) throw DataError("cannot sweep over an empty dev set");
    if (tau_step <= 0.0) throw DataError("sweep step must be > 0");
    std::vector<std::string> missing;
    for (const auto& d : dev_decisions) {
        if (!d.reticl_outcome) missing.push_back(d.query_id);
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError("sweep needs recorded plain-retrieval outcomes; missing for: " + ids);
    }
    std::vector<Label> gold_labels;
    gold_labels.reserve(dev_decisions.size());
    for (const auto& d : dev_decisions) {
        auto it = golds.find(d.query_id);
        if (it == golds.end()) throw DataError("no gold label for '" + d.query_id + "'");
        gold_labels.push_back(it->second);
    }

    SweepResult result;
    double best = -1.0;
    std::vector<Label> preds(dev_decisions.size());
    for (std::size_t step = 0;; ++step) {
        double tau = tau_min + static_cast<double>(step) * tau_step;
        if (tau > tau_max + 1e-9) break;
        for (std::size_t i = 0; i < dev_decisions.size(); ++i) {
            const auto& d = dev_decisions[i];
            bool c1 = similarity_failures(d.tp_demos, tau) >= config.min_failing;
            bool rep = replacement_rule(config.condition_mode, c1, d.condition_shortcut);
            preds[i] = rep ? d.reticl_outcome->label : d.tp_outcome.label;
        }
        double macro = metrics(confusion(preds, gold_labels)).macro_f1;
        result.curve.push_back({tau, macro});
        if (macro > best) {
            best = macro;
            result.tau_star = tau;
        }
    }
    return result;
}

std::vector<Label> upper_bound_labels(const std::vector<AdaptiveDecision>& decisions,
                                      const std::vector<Label>& golds) {
    if (decisions.size() != golds.size())
        throw DataError("decision/gold length mismatch in upper bound");
    std::vector<std::string> missing;
    for (const auto& d : decisions) {
        if (!d.reticl_outcome) missing.push_back(d.query_id);
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError("upper bound needs both outcomes; missing plain-retrieval outcome for: " +
                        ids);
    }
    std::vector<Label> labels;
    labels.reserve(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const auto& d = decisions[i];
        bool tp_right = d.tp_outcome.label == golds[i];
        bool re_right = d.reticl_outcome->label == golds[i];
        labels.push_back(tp_right || re_right ? golds[i] : d.tp_outcome.label);
    }
    return labels;
}

std::string decision_to_json_line(const AdaptiveDecision& decision) {
    json obj;
    obj["id"] = decision.query_id;
    obj["strategy"] = decision.strategy;
    auto demos_json = [](const std::vector<DemonstrationRecord>& records) {
        json arr = json::array();
        for (const auto& r : records)
            arr.push_back({{"id", r.id}, {"score", r.score}, {"priority", r.priority}});
        return arr;
    };
    obj["tp_demos"] = demos_json(decision.tp_demos);
    obj["reticl_demos"] = demos_json(decision.reticl_demos);
    obj["tp_outcome"] = outcome_to_json(decision.tp_outcome);
    obj["reticl_outcome"] =
        decision.reticl_outcome ? outcome_to_json(*decision.reticl_outcome) : json(nullptr);
    obj["condition_similarity"] = decision.condition_similarity;
    obj["condition_shortcut"] = decision.condition_shortcut;
    obj["replaced"] = decision.replaced;
    obj["replacement_failed"] = decision.replacement_failed;
    obj["final_outcome"] = outcome_to_json(decision.final_outcome);
    return obj.dump();
}

AdaptiveDecision decision_from_json_line(std::string_view line) {
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataError("malformed decision log line");
    AdaptiveDecision decision;
    decision.query_id = obj.at("id").get<std::string>();
    decision.strategy = obj.value("strategy", "ariiha");
    auto demos_from = [](const json& arr) {
        std::vector<DemonstrationRecord> records;
        for (const auto& entry : arr)
            records.push_back({entry.at("id").get<std::string>(),
                               entry.at("score").get<double>(),
                               entry.at("priority").get<int>()});
        return records;
    };
    decision.tp_demos = demos_from(obj.value("tp_demos", json::array()));
    decision.reticl_demos = demos_from(obj.value("reticl_demos", json::array()));
    decision.tp_outcome = outcome_from_json(obj.at("tp_outcome"));
    if (obj.contains("reticl_outcome") && !obj["reticl_outcome"].is_null())
        decision.reticl_outcome = outcome_from_json(obj["reticl_outcome"]);
    decision.condition_similarity = obj.value("condition_similarity", false);
    decision.condition_shortcut = obj.value("condition_shortcut", false);
    decision.replaced = obj.value("replaced", false);
    decision.replacement_failed = obj.value("replacement_failed", false);
    decision.final_outcome = outcome_from_json(obj.at("final_outcome"));
    return decision;
}

void write_decision_log(const std::filesystem::path& path,
                        const std::vector<AdaptiveDecision>& decisions) {
    std::ostringstream out;
    for (const auto& d : decisions) out << decision_to_json_line(d) << '\n';
    write_text_file(path, out.str());
}

std::vector<AdaptiveDecision> read_decision_log(const std::filesystem::path& path) {
    std::vector<AdaptiveDecision> decisions;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_text_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            decisions.push_back(decision_from_json_line(line));
        } catch (const std::exception& e) {
            throw DataError("decision log " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
    }
    return decisions;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
    std::ostringstream out;
    out << "tau,macro_f1\n";
    for (const auto& point : result.curve) {
        char tau_buf[32];
        if (point.tau == std::floor(point.tau) && std::abs(point.tau) < 1e9)
            std::snprintf(tau_buf, sizeof(tau_buf), "%.0f", point.tau);
        else
            std::snprintf(tau_buf, sizeof(tau_buf), "%g", point.tau);
        char f1_buf[32];
        std::snprintf(f1_buf, sizeof(f1_buf), "%.6f", point.macro_f1);
        out << tau_buf << ',' << f1_buf << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace ariiha
