#include "ariiha/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

double safe_div(double num, double den) {
    return den == 0.0 ? 0.0 : num / den;
}

double f1(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

}  // namespace

ConfusionMatrix confusion(const std::vector<Label>& preds, const std::vector<Label>& golds) {
    if (preds.size() != golds.size())
        throw DataError("prediction/gold length mismatch: " + std::to_string(preds.size()) +
                        " vs " + std::to_string(golds.size()));
    if (preds.empty()) throw DataError("cannot score an empty prediction list");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        bool pred_hate = preds[i] == Label::Hate;
        bool gold_hate = golds[i] == Label::Hate;
        if (pred_hate && gold_hate) ++cm.tp;
        else if (pred_hate && !gold_hate) ++cm.fp;
        else if (!pred_hate && gold_hate) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
    double fn = static_cast<double>(cm.fn), tn = static_cast<double>(cm.tn);
    double prec1 = safe_div(tp, tp + fp);
    double rec1 = safe_div(tp, tp + fn);
    double prec0 = safe_div(tn, tn + fn);
    double rec0 = safe_div(tn, tn + fp);
    double f1_hate = f1(prec1, rec1);
    double f1_not = f1(prec0, rec0);
    MetricsReport report;
    report.support_hate = cm.tp + cm.fn;
    report.support_not = cm.tn + cm.fp;
    double support_total = static_cast<double>(report.support_hate + report.support_not);
    report.prec1 = prec1 * 100.0;
    report.rec1 = rec1 * 100.0;
    report.prec0 = prec0 * 100.0;
    report.rec0 = rec0 * 100.0;
    report.macro_f1 = (f1_hate + f1_not) / 2.0 * 100.0;
    report.weighted_f1 = safe_div(f1_hate * static_cast<double>(report.support_hate) +
                                      f1_not * static_cast<double>(report.support_not),
                                  support_total) *
                         100.0;
    report.balanced_acc = (report.rec1 + report.rec0) / 2.0;
    report.over_sensitivity = report.rec1 - report.prec1;
    report.accuracy = safe_div(tp + tn, support_total) * 100.0;
    return report;
}

double balanced_accuracy_from(double rec1_pct, double rec0_pct) {
    return (rec1_pct + rec0_pct) / 2.0;
}

double over_sensitivity_from(double rec1_pct, double prec1_pct) {
    return rec1_pct - prec1_pct;
}

std::optional<EvalMode> parse_eval_mode(std::string_view name) {
    auto n = to_lower_ascii(trim_view(name));
    if (n == "final") return EvalMode::Final;
    if (n == "tp_only") return EvalMode::TpOnly;
    if (n == "reticl_only") return EvalMode::ReticlOnly;
    if (n == "upper_bound") return EvalMode::UpperBound;
    return std::nullopt;
}

std::string_view eval_mode_name(EvalMode mode) {
    switch (mode) {
        case EvalMode::Final: return "final";
        case EvalMode::TpOnly: return "tp_only";
        case EvalMode::ReticlOnly: return "reticl_only";
        case EvalMode::UpperBound: return "upper_bound";
    }
    return "final";
}

MetricsReport evaluate_run(const std::vector<AdaptiveDecision>& decisions,
                           const std::unordered_map<std::string, Label>& golds, EvalMode mode) {
    std::vector<std::string> missing_gold;
    std::unordered_map<std::string, bool> seen;
    for (const auto& d : decisions) {
        if (!golds.count(d.query_id)) missing_gold.push_back(d.query_id);
        seen[d.query_id] = true;
    }
    if (!missing_gold.empty()) {
        std::string ids;
        for (const auto& id : missing_gold) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError("no gold label for logged ids: " + ids);
    }
    std::vector<std::string> missing_log;
    for (const auto& [id, _] : golds) {
        if (!seen.count(id)) missing_log.push_back(id);
    }
    if (!missing_log.empty()) {
        std::sort(missing_log.begin(), missing_log.end());
        std::string ids;
        for (const auto& id : missing_log) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError("decision log is missing ids: " + ids);
    }

    std::vector<Label> gold_labels;
    gold_labels.reserve(decisions.size());
    for (const auto& d : decisions) gold_labels.push_back(golds.at(d.query_id));

    std::vector<Label> preds;
    preds.reserve(decisions.size());
    switch (mode) {
        case EvalMode::Final:
            for (const auto& d : decisions) preds.push_back(d.final_outcome.label);
            break;
        case EvalMode::TpOnly:
            for (const auto& d : decisions) preds.push_back(d.tp_outcome.label);
            break;
        case EvalMode::ReticlOnly: {
            std::vector<std::string> missing;
            for (const auto& d : decisions) {
                if (!d.reticl_outcome) missing.push_back(d.query_id);
            }
            if (!missing.empty()) {
                std::string ids;
                for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
                throw DataError("no recorded plain-retrieval outcome for: " + ids);
            }
            for (const auto& d : decisions) preds.push_back(d.reticl_outcome->label);
            break;
        }
        case EvalMode::UpperBound:
            preds = upper_bound_labels(decisions, gold_labels);
            break;
    }
    return metrics(confusion(preds, gold_labels));
}

std::string render_pct(double value) {
    long long scaled = std::llround(value * 100.0);
    bool negative = scaled < 0;
    if (negative) scaled = -scaled;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", negative ? "-" : "", scaled / 100,
                  scaled % 100);
    return buf;
}

namespace {

constexpr const char* kMetricColumns[] = {"macro_f1",  "weighted_f1", "balanced_acc",
                                          "prec1",     "rec1",        "prec0",
                                          "rec0",      "over_sensitivity"};

std::vector<double> metric_values(const MetricsReport& r) {
    return {r.macro_f1, r.weighted_f1, r.balanced_acc, r.prec1,
            r.rec1,     r.prec0,       r.rec0,         r.over_sensitivity};
}

}  // namespace

std::string reports_to_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "name,mode,k,condition_mode,tau";
    for (const char* col : kMetricColumns) out << ',' << col;
    out << ",accuracy,support_hate,support_not\n";
    for (const auto& row : rows) {
        out << row.name << ',' << row.mode << ',' << row.k << ',' << row.condition_mode << ','
            << row.tau;
        for (double v : metric_values(row.report)) out << ',' << render_pct(v);
        out << ',' << render_pct(row.report.accuracy) << ',' << row.report.support_hate << ','
            << row.report.support_not << '\n';
    }
    return out.str();
}

std::string reports_to_json(const std::vector<ReportRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json obj;
        obj["name"] = row.name;
        obj["mode"] = row.mode;
        obj["k"] = row.k;
        obj["condition_mode"] = row.condition_mode;
        obj["tau"] = row.tau;
        nlohmann::json m;
        m["macro_f1"] = row.report.macro_f1;
        m["weighted_f1"] = row.report.weighted_f1;
        m["balanced_acc"] = row.report.balanced_acc;
        m["prec1"] = row.report.prec1;
        m["rec1"] = row.report.rec1;
        m["prec0"] = row.report.prec0;
        m["rec0"] = row.report.rec0;
        m["over_sensitivity"] = row.report.over_sensitivity;
        m["accuracy"] = row.report.accuracy;
        m["support_hate"] = row.report.support_hate;
        m["support_not"] = row.report.support_not;
        obj["metrics"] = std::move(m);
        arr.push_back(std::move(obj));
    }
    return arr.dump(2) + "\n";
}

std::string reports_to_markdown(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "| Demonstration | Macro-F1 | Weighted-F1 | Balanced-Acc | Prec@1 | Rec@1 | Prec@0 "
           "| Rec@0 | Over-Sensitivity |\n";
    out << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : rows) {
        out << "| " << row.name;
        for (double v : metric_values(row.report)) out << " | " << render_pct(v);
        out << " |\n";
    }
    return out.str();
}

void emit_reports(const std::vector<ReportRow>& rows, const std::filesystem::path& directory,
                  const std::vector<std::string>& formats) {
    for (const auto& format : formats) {
        auto f = to_lower_ascii(trim_view(format));
        if (f == "csv") write_text_file(directory / "reports.csv", reports_to_csv(rows));
        else if (f == "json") write_text_file(directory / "reports.json", reports_to_json(rows));
        else if (f == "md" || f == "markdown")
            write_text_file(directory / "reports.md", reports_to_markdown(rows));
        else throw DataError("unknown report format '" + format + "' (use csv, json, md)");
    }
}

}  // namespace ariiha
