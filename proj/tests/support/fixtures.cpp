#include "support/fixtures.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ariiha/util.hpp"

namespace ariiha::testing {

namespace {

using nlohmann::json;

double idf(std::size_t n_docs, int df) {
    double n = static_cast<double>(n_docs);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double tf_component(int tf, double k1) {
    return static_cast<double>(tf) * (k1 + 1.0) / (static_cast<double>(tf) + k1);
}

struct ComboPart {
    int df;
    int tf;
};

// Multiset of (df, tf) parts whose b=0 score lands strictly inside
// (bucket-1, bucket]; maximizes distance to both edges.
std::vector<ComboPart> find_combo(std::size_t n_docs, double k1, int bucket) {
    double lo = bucket - 1.0, hi = static_cast<double>(bucket);
    std::vector<ComboPart> parts;
    for (int df = 1; df <= 6; ++df)
        for (int tf = 1; tf <= 2; ++tf) parts.push_back({df, tf});
    std::vector<ComboPart> best;
    double best_margin = -1.0;
    std::vector<int> stack;
    auto value = [&](const std::vector<int>& picks) {
        double total = 0.0;
        for (int p : picks) total += idf(n_docs, parts[p].df) * tf_component(parts[p].tf, k1);
        return total;
    };
    // Depth-first over non-decreasing index multisets of size <= 4.
    std::function<void(std::size_t)> search = [&](std::size_t from) {
        double v = value(stack);
        if (!stack.empty() && v > lo && v <= hi) {
            double margin = std::min(v - lo, hi - v);
            if (margin > best_margin) {
                best_margin = margin;
                best.clear();
                for (int p : stack) best.push_back(parts[p]);
            }
        }
        if (stack.size() == 4 || v > hi) return;
        for (std::size_t p = from; p < parts.size(); ++p) {
            stack.push_back(static_cast<int>(p));
            search(p);
            stack.pop_back();
        }
    };
    search(0);
    if (best.empty())
        throw std::runtime_error("no score combination found for bucket " +
                                 std::to_string(bucket));
    return best;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

json rule_json(const MockRule& rule) {
    json obj;
    obj["trigger"] = rule.trigger;
    if (rule.label) obj["label"] = label_name(*rule.label);
    if (!rule.rationale.empty()) obj["rationale"] = rule.rationale;
    if (rule.quote) obj["quote"] = *rule.quote;
    if (rule.context) obj["context"] = *rule.context;
    if (rule.target) obj["target"] = *rule.target;
    return obj;
}

void write_rules(const std::filesystem::path& path, const std::vector<MockRule>& rules) {
    std::ostringstream out;
    for (const auto& r : rules) out << rule_json(r).dump() << '\n';
    write_text_file(path, out.str());
}

constexpr std::size_t kFillerDocs = 5;
constexpr std::size_t kNullDocs = 2;
constexpr std::size_t kDocsPerItem = 5;  // one exact-target doc + four plain docs

}  // namespace

ExamplePool MockPipelineFixture::dev_pool() const {
    ExamplePool p;
    for (const auto& ex : dev) p.add(ex);
    return p;
}

ExamplePool MockPipelineFixture::test_pool() const {
    ExamplePool p;
    for (const auto& ex : test) p.add(ex);
    return p;
}

MockPipelineFixture make_mock_pipeline_fixture() {
    MockPipelineFixture fx;
    const Label H = Label::Hate, N = Label::NotHate;

    fx.dev_specs = {
        {"d01", H, N, H, true, 10},  // corrected by replacement at tau >= 10
        {"d02", H, N, H, true, 10},
        {"d03", N, H, N, true, 10},
        {"d04", N, H, N, true, 10},
        {"d05", H, H, N, true, 11},  // broken by replacement at tau >= 11
        {"d06", N, N, H, true, 12},
        {"d07", H, H, N, true, 13},
        {"d08", H, H, H, false, 10},  // no shortcut: never replaced
        {"d09", H, H, H, false, 10},
        {"d10", H, H, H, false, 10},
        {"d11", N, N, N, false, 10},
        {"d12", N, N, N, false, 10},
        {"d13", H, N, N, true, 10},  // both strategies wrong
        {"d14", N, H, H, true, 10},
        {"d15", H, H, N, false, 10},  // divergent but no shortcut: only the
        {"d16", N, N, H, false, 10},  // shortcut gate keeps these correct
    };
    fx.test_specs = {
        {"t01", H, N, H, true, 10},
        {"t02", N, H, N, true, 10},
        {"t03", H, H, H, false, 10},
        {"t04", H, H, H, false, 10},
        {"t05", N, N, N, false, 10},
        {"t06", H, N, N, true, 10},  // both strategies wrong
    };

    std::vector<const ItemSpec*> all_items;
    for (const auto& s : fx.dev_specs) all_items.push_back(&s);
    for (const auto& s : fx.test_specs) all_items.push_back(&s);

    const std::size_t n_docs = all_items.size() * kDocsPerItem + kFillerDocs + kNullDocs;
    const double k1 = fx.params.k1;

    // filler index -> pad terms accumulated across items
    std::vector<std::vector<std::string>> filler_terms(kFillerDocs);

    struct DocPlan {
        Example example;
    };
    std::vector<Example> pool_docs;

    for (const ItemSpec* item : all_items) {
        const std::string& tag = item->tag;
        bool is_dev = tag[0] == 'd';
        std::string group = (is_dev ? "devgrp" : "tstgrp") + tag.substr(1);

        auto combo = find_combo(n_docs, k1, item->flip_bucket);
        std::vector<std::string> query_tokens = {"mk" + tag};
        std::vector<std::string> exact_doc_tokens;
        for (std::size_t c = 0; c < combo.size(); ++c) {
            std::string term = "s" + tag + "c" + std::to_string(c);
            query_tokens.push_back(term);
            for (int rep = 0; rep < combo[c].tf; ++rep) exact_doc_tokens.push_back(term);
            for (int pad = 0; pad < combo[c].df - 1; ++pad)
                filler_terms[pad].push_back(term);
        }

        Example exact_doc;
        exact_doc.id = "p" + tag;
        exact_doc.text = join(exact_doc_tokens);
        exact_doc.label = item->gold;
        exact_doc.target = group;
        pool_docs.push_back(exact_doc);

        // Four plain docs with strictly decreasing scores, all above the
        // engineered exact-match score. The fourth carries the context marker
        // that only plain retrieval surfaces.
        const std::size_t shares[] = {8, 7, 6, 5};
        for (std::size_t m = 0; m < 4; ++m) {
            std::vector<std::string> doc_tokens;
            for (std::size_t j = 0; j < shares[m]; ++j) {
                std::string term = "w" + tag + "b" + std::to_string(m + 1) + "x" +
                                   std::to_string(j);
                query_tokens.push_back(term);
                doc_tokens.push_back(term);
            }
            if (m == 3) doc_tokens.push_back("ctx" + tag);
            Example plain_doc;
            plain_doc.id = "q" + tag + std::to_string(m + 1);
            plain_doc.text = join(doc_tokens);
            plain_doc.label = (m % 2 == 0) ? N : H;
            plain_doc.target = "zgroup" + tag + std::to_string(m + 1);
            pool_docs.push_back(plain_doc);
        }

        Example query;
        query.id = tag;
        query.text = join(query_tokens);
        query.label = item->gold;
        query.split = is_dev ? Split::Dev : Split::Test;
        (is_dev ? fx.dev : fx.test).push_back(query);

        // Classification rules: the context rule (first) keys on the marker
        // that only the fourth plain doc carries, so it fires only for the
        // plain-retrieval prompt.
        if (item->reticl_label != item->tp_label) {
            MockRule context_rule;
            context_rule.trigger = "mk" + tag;
            context_rule.context = "ctx" + tag;
            context_rule.label = item->reticl_label;
            context_rule.rationale =
                "Weighing the retrieved examples as a whole, the text matches their pattern.";
            fx.classify_rules.push_back(context_rule);
        }
        MockRule base_rule;
        base_rule.trigger = "mk" + tag;
        base_rule.label = item->tp_label;
        if (item->shortcut) {
            base_rule.rationale = "The phrase {quote} is decisive here.";
            base_rule.quote = "loaded phrase";
        } else {
            base_rule.rationale =
                "The text reads as an ordinary report; the examples show no coded meaning.";
        }
        fx.classify_rules.push_back(base_rule);

        MockRule plain_rule = base_rule;
        plain_rule.quote.reset();
        plain_rule.rationale = "The examples and the text point the same way without any single cue.";
        fx.classify_rules_plain.push_back(plain_rule);

        MockRule target_rule;
        target_rule.trigger = "mk" + tag;
        target_rule.target = group;
        fx.target_rules.push_back(target_rule);
    }

    for (std::size_t f = 0; f < kFillerDocs; ++f) {
        Example filler;
        filler.id = "zfill" + std::to_string(f + 1);
        filler.text = filler_terms[f].empty() ? "padterm" + std::to_string(f + 1)
                                              : join(filler_terms[f]);
        filler.label = N;
        filler.target = "quietbird" + std::string(1, static_cast<char>('a' + f));
        pool_docs.push_back(filler);
    }
    for (std::size_t u = 0; u < kNullDocs; ++u) {
        Example null_doc;
        null_doc.id = "znull" + std::to_string(u + 1);
        null_doc.text = "mknull" + std::to_string(u + 1) + " idle chatter";
        null_doc.label = N;
        pool_docs.push_back(null_doc);

        MockRule null_rule;
        null_rule.trigger = "mknull" + std::to_string(u + 1);
        null_rule.target = "bluewhale" + std::to_string(u + 1);
        fx.target_rules.push_back(null_rule);
    }

    if (pool_docs.size() != n_docs)
        throw std::runtime_error("fixture doc count drifted from plan");
    for (auto& doc : pool_docs) fx.pool.add(std::move(doc));

    MockRule default_classify;
    default_classify.label = N;
    default_classify.rationale = "No rule matched this input.";
    fx.classify_rules.push_back(default_classify);
    fx.classify_rules_plain.push_back(default_classify);
    MockRule default_target;
    default_target.target = "people";
    fx.target_rules.push_back(default_target);

    return fx;
}

void MockPipelineFixture::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_examples(pool, dir / "pool.tsv", FileFormat::Tsv);
    save_examples(dev_pool(), dir / "dev.tsv", FileFormat::Tsv);
    save_examples(test_pool(), dir / "test.tsv", FileFormat::Tsv);
    write_rules(dir / "rules_classify.jsonl", classify_rules);
    write_rules(dir / "rules_classify_plain.jsonl", classify_rules_plain);
    write_rules(dir / "rules_target.jsonl", target_rules);
    auto config = [&](const std::string& rules_file) {
        json cfg;
        cfg["pool"] = "pool.tsv";
        cfg["dev"] = "dev.tsv";
        cfg["test"] = "test.tsv";
        cfg["format"] = "tsv";
        cfg["k1"] = params.k1;
        cfg["b"] = params.b;
        cfg["k"] = k;
        cfg["shots"] = 8;
        cfg["condition_mode"] = "both";
        cfg["min_failing"] = 1;
        cfg["shortcut_max_words"] = 3;
        cfg["sweep"] = {{"min", 0}, {"max", 150}, {"step", 1}};
        cfg["backend"] = {{"kind", "mock"},
                          {"classify_rules", rules_file},
                          {"target_rules", "rules_target.jsonl"}};
        cfg["seed"] = 7;
        cfg["parallel"] = 1;
        return cfg;
    };
    write_text_file(dir / "config.json", config("rules_classify.jsonl").dump(2) + "\n");
    write_text_file(dir / "config_plain.json",
                    config("rules_classify_plain.jsonl").dump(2) + "\n");
}

WalkthroughFixture make_walkthrough_fixture() {
    WalkthroughFixture fx;
    auto add = [&](std::string id, std::string text, Label label, std::string target) {
        Example ex;
        ex.id = std::move(id);
        ex.text = std::move(text);
        ex.label = label;
        ex.target = std::move(target);
        fx.pool.add(ex);
        fx.pool_targets.emplace(fx.pool.examples().back().id,
                                normalize_target(*fx.pool.examples().back().target));
    };
    const Label H = Label::Hate, N = Label::NotHate;
    add("x1", "jews control the white media narrative", H, "white Jews");
    add("x2", "the jews have a proud history", N, "jews");
    add("x3", "some say jews in europe feel unsafe", H, "Jews");
    add("b1", "white supremacy is a crime against humanity", N, "supremacists");
    add("b2", "we stand with those who resist racism daily", N, "activists");
    add("b3", "people stand with neighbors and resist racism online", H, "workers");
    add("b4", "students stand with workers and resist racism everywhere", N, "students");
    add("b5", "weather update for the weekend", N, "city residents");

    fx.query.id = "q1";
    fx.query.text = "white Jews stand with #taketheknee to resist white supremacy racism";
    fx.query.label = N;
    fx.query.split = Split::Test;

    MockRule context_rule;
    context_rule.trigger = "#taketheknee";
    context_rule.context = "crime against humanity";
    context_rule.label = N;
    context_rule.rationale =
        "The strongest examples condemn racist movements, so the text reads as criticism of "
        "hate rather than an attack.";
    MockRule shortcut_rule;
    shortcut_rule.trigger = "#taketheknee";
    shortcut_rule.label = H;
    shortcut_rule.rationale = "The phrase {quote} appears, which signals hate.";
    shortcut_rule.quote = "white supremacy";
    MockRule default_rule;
    default_rule.label = N;
    default_rule.rationale = "Nothing in the text stands out.";

    fx.classify_rules = {context_rule, shortcut_rule, default_rule};
    fx.classify_rules_agreeing = {shortcut_rule, default_rule};

    MockRule target_rule;
    target_rule.trigger = "#taketheknee";
    target_rule.target = "white Jews";
    MockRule default_target;
    default_target.target = "people";
    fx.target_rules = {target_rule, default_target};
    return fx;
}

}  // namespace ariiha::testing
