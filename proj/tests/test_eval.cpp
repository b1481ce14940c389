#include <doctest.h>

#include <cmath>
#include <random>

#include "ariiha/adaptive.hpp"
#include "ariiha/errors.hpp"
#include "ariiha/eval.hpp"
#include "ariiha/util.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

#include <json.hpp>

using namespace ariiha;
namespace at = ariiha::testing;
using ariiha::testing::TempDir;

namespace {

AdaptiveDecision mini_decision(std::string id, Label tp, std::optional<Label> reticl,
                               bool replaced) {
    AdaptiveDecision d;
    d.query_id = std::move(id);
    d.tp_outcome.label = tp;
    if (reticl) {
        ClassificationOutcome r;
        r.label = *reticl;
        d.reticl_outcome = r;
    }
    d.replaced = replaced;
    d.final_outcome = (replaced && d.reticl_outcome) ? *d.reticl_outcome : d.tp_outcome;
    return d;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("confusion counts the four cells with hate positive") {
    std::vector<Label> golds = {Label::Hate, Label::Hate, Label::Hate, Label::Hate,
                                Label::NotHate, Label::NotHate, Label::NotHate, Label::NotHate};
    std::vector<Label> preds = {Label::Hate, Label::Hate, Label::Hate, Label::NotHate,
                                Label::Hate, Label::Hate, Label::NotHate, Label::NotHate};
    auto cm = confusion(preds, golds);
    CHECK(cm.tp == 3);
    CHECK(cm.fn == 1);
    CHECK(cm.fp == 2);
    CHECK(cm.tn == 2);
    CHECK(cm.total() == 8);
}

TEST_CASE("perfect and inverted predictions hit the degenerate corners") {
    std::vector<Label> all_hate(5, Label::Hate);
    auto perfect = confusion(all_hate, all_hate);
    CHECK(perfect.tp == 5);
    CHECK(perfect.fp + perfect.fn + perfect.tn == 0);

    std::vector<Label> all_not(5, Label::NotHate);
    auto miss = confusion(all_not, all_hate);
    CHECK(miss.fn == 5);
    CHECK(miss.tp + miss.fp + miss.tn == 0);

    CHECK_THROWS_AS(confusion({}, {}), DataError);
    std::vector<Label> shorter(3, Label::Hate);
    CHECK_THROWS_AS(confusion(all_hate, shorter), DataError);
}

TEST_CASE("hand-computed metrics for tp=3 fp=2 fn=1 tn=4") {
    auto report = metrics({3, 2, 1, 4});
    CHECK(report.prec1 == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(report.rec1 == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(report.prec0 == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(report.rec0 == doctest::Approx(100.0 * 4 / 6).epsilon(1e-12));
    CHECK(render_pct(report.rec0) == "66.67");
    CHECK(render_pct(report.balanced_acc) == "70.83");
    CHECK(report.over_sensitivity == doctest::Approx(15.0).epsilon(1e-9));
    CHECK(render_pct(report.macro_f1) == "69.70");
    CHECK(render_pct(report.weighted_f1) == "70.30");
    CHECK(report.support_hate == 4);
    CHECK(report.support_not == 6);
}

TEST_CASE("published-row identities: over-sensitivity and balanced accuracy") {
    // Random (0-shot): prec1 58.44, rec1 76.04, rec0 66.05.
    CHECK(render_pct(over_sensitivity_from(76.04, 58.44)) == "17.60");
    CHECK(std::abs(balanced_accuracy_from(76.04, 66.05) - 71.04) <= 0.015);
    // Adaptive (8-shot): prec1 68.31, rec1 77.69, rec0 77.40.
    CHECK(render_pct(over_sensitivity_from(77.69, 68.31)) == "9.38");
    CHECK(std::abs(balanced_accuracy_from(77.69, 77.40) - 77.54) <= 0.015);
}

TEST_CASE("identities hold to 1e-9 and metrics match the naive oracle on random inputs") {
    std::mt19937_64 rng(43);
    for (int round = 0; round < 1000; ++round) {
        ConfusionMatrix cm{bounded_rand(rng, 50), bounded_rand(rng, 50),
                           bounded_rand(rng, 50), bounded_rand(rng, 50)};
        if (cm.total() == 0) continue;
        auto report = metrics(cm);
        CHECK(std::abs(report.balanced_acc - (report.rec1 + report.rec0) / 2.0) < 1e-9);
        CHECK(std::abs(report.over_sensitivity - (report.rec1 - report.prec1)) < 1e-9);

        std::vector<Label> preds, golds;
        auto push = [&](std::uint64_t n, Label p, Label g) {
            for (std::uint64_t i = 0; i < n; ++i) {
                preds.push_back(p);
                golds.push_back(g);
            }
        };
        push(cm.tp, Label::Hate, Label::Hate);
        push(cm.fp, Label::Hate, Label::NotHate);
        push(cm.fn, Label::NotHate, Label::Hate);
        push(cm.tn, Label::NotHate, Label::NotHate);
        auto oracle = at::oracle_metrics(preds, golds);
        CHECK(report.macro_f1 == doctest::Approx(oracle.macro_f1).epsilon(1e-12));
        CHECK(report.weighted_f1 == doctest::Approx(oracle.weighted_f1).epsilon(1e-12));
        CHECK(report.balanced_acc == doctest::Approx(oracle.balanced_acc).epsilon(1e-12));
        CHECK(report.prec1 == doctest::Approx(oracle.prec1).epsilon(1e-12));
        CHECK(report.rec1 == doctest::Approx(oracle.rec1).epsilon(1e-12));
        CHECK(report.prec0 == doctest::Approx(oracle.prec0).epsilon(1e-12));
        CHECK(report.rec0 == doctest::Approx(oracle.rec0).epsilon(1e-12));
    }
}

TEST_CASE("degenerate single-class inputs score zero instead of crashing") {
    auto report = metrics({0, 0, 5, 0});  // everything predicted not-hate, all gold hate
    CHECK(report.prec1 == 0.0);
    CHECK(report.rec1 == 0.0);
    CHECK(report.macro_f1 == 0.0);
    CHECK(report.accuracy == 0.0);
}

TEST_CASE("evaluate_run selects labels per mode and checks coverage") {
    std::vector<AdaptiveDecision> log = {
        mini_decision("a", Label::Hate, Label::NotHate, false),
        mini_decision("b", Label::NotHate, Label::Hate, true),
        mini_decision("c", Label::Hate, Label::Hate, false),
    };
    std::unordered_map<std::string, Label> golds = {
        {"a", Label::Hate}, {"b", Label::Hate}, {"c", Label::NotHate}};

    auto final_report = evaluate_run(log, golds, EvalMode::Final);
    auto tp_report = evaluate_run(log, golds, EvalMode::TpOnly);
    auto re_report = evaluate_run(log, golds, EvalMode::ReticlOnly);
    auto ub_report = evaluate_run(log, golds, EvalMode::UpperBound);
    // final: a=H(tp), b=H(replaced), c=H -> tp=2, fp=1.
    CHECK(final_report.rec1 == doctest::Approx(100.0));
    CHECK(tp_report.rec1 == doctest::Approx(50.0));
    CHECK(ub_report.macro_f1 >= final_report.macro_f1 - 1e-9);
    CHECK(ub_report.macro_f1 >= tp_report.macro_f1 - 1e-9);
    CHECK(ub_report.macro_f1 >= re_report.macro_f1 - 1e-9);

    SUBCASE("missing gold for a logged id") {
        golds.erase("b");
        CHECK_THROWS_WITH_AS(evaluate_run(log, golds, EvalMode::Final),
                             doctest::Contains("no gold label for logged ids: b"), DataError);
    }
    SUBCASE("log missing a gold id") {
        golds.emplace("zz", Label::Hate);
        CHECK_THROWS_WITH_AS(evaluate_run(log, golds, EvalMode::Final),
                             doctest::Contains("missing ids: zz"), DataError);
    }
    SUBCASE("upper bound requires both outcomes") {
        log.push_back(mini_decision("d", Label::Hate, std::nullopt, false));
        golds.emplace("d", Label::Hate);
        CHECK_THROWS_WITH_AS(evaluate_run(log, golds, EvalMode::UpperBound),
                             doctest::Contains("d"), DataError);
    }
}

TEST_CASE("final equals tp_only when nothing was replaced") {
    std::vector<AdaptiveDecision> log = {
        mini_decision("a", Label::Hate, Label::NotHate, false),
        mini_decision("b", Label::NotHate, Label::Hate, false),
    };
    std::unordered_map<std::string, Label> golds = {{"a", Label::Hate}, {"b", Label::Hate}};
    auto final_report = evaluate_run(log, golds, EvalMode::Final);
    auto tp_report = evaluate_run(log, golds, EvalMode::TpOnly);
    CHECK(final_report.macro_f1 == tp_report.macro_f1);
    CHECK(final_report.rec1 == tp_report.rec1);
}

TEST_CASE("two-decimal rendering is half-up in both directions") {
    CHECK(render_pct(69.69696969) == "69.70");
    CHECK(render_pct(0.0) == "0.00");
    CHECK(render_pct(100.0) == "100.00");
    CHECK(render_pct(0.125) == "0.13");    // exact .5 rounds away from zero
    CHECK(render_pct(-0.125) == "-0.13");
    CHECK(render_pct(9.999) == "10.00");
}

TEST_CASE("csv, json and markdown emitters agree with the report") {
    TempDir dir;
    ReportRow row;
    row.name = "adaptive (8-shot)";
    row.mode = "final";
    row.k = 8;
    row.condition_mode = "both";
    row.tau = 10.0;
    row.report = metrics({3, 2, 1, 4});
    std::vector<ReportRow> rows = {row};
    emit_reports(rows, dir.path(), {"csv", "json", "md"});

    auto csv = read_text_file(dir / "reports.csv");
    CHECK(csv.find("name,mode,k,condition_mode,tau,macro_f1,weighted_f1,balanced_acc,prec1,"
                   "rec1,prec0,rec0,over_sensitivity") == 0);
    CHECK(csv.find("adaptive (8-shot),final,8,both,10,69.70,70.30,70.83,60.00,75.00,80.00,66.67,"
                   "15.00") != std::string::npos);

    auto md = read_text_file(dir / "reports.md");
    CHECK(md.find("| Demonstration | Macro-F1 | Weighted-F1 | Balanced-Acc | Prec@1 | Rec@1 | "
                  "Prec@0 | Rec@0 | Over-Sensitivity |") == 0);
    CHECK(md.find("| adaptive (8-shot) | 69.70 | 70.30 | 70.83 | 60.00 | 75.00 | 80.00 | 66.67 "
                  "| 15.00 |") != std::string::npos);

    auto parsed = nlohmann::json::parse(read_text_file(dir / "reports.json"));
    REQUIRE(parsed.is_array());
    double json_macro = parsed[0]["metrics"]["macro_f1"];
    double json_over = parsed[0]["metrics"]["over_sensitivity"];
    std::uint64_t json_support = parsed[0]["metrics"]["support_hate"];
    CHECK(json_macro == row.report.macro_f1);
    CHECK(json_over == row.report.over_sensitivity);
    CHECK(json_support == 4);

    CHECK_THROWS_AS(emit_reports(rows, dir.path(), {"yaml"}), DataError);
}

}  // TEST_SUITE
