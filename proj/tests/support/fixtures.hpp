#pragma once

// A fully synthetic pool/dev/test corpus with mock rules engineered so that
// the dev-set threshold sweep has its unique optimum at tau = 10. Built with
// b = 0 and single-occurrence terms, every target-matched demo's BM25 score is
// an exact sum of IDF values, so each dev item trips the similarity condition
// at a chosen integer threshold.

#include <filesystem>
#include <string>
#include <vector>

#include "ariiha/adaptive.hpp"
#include "ariiha/corpus.hpp"
#include "ariiha/llm.hpp"

namespace ariiha::testing {

struct ItemSpec {
    std::string tag;        // query id
    Label gold;
    Label tp_label;         // label under target-prioritized demos
    Label reticl_label;     // label under plain-retrieval demos
    bool shortcut;          // tp rationale carries a 1-3 word quoted phrase
    int flip_bucket;        // smallest integer tau that trips the similarity condition
};

struct MockPipelineFixture {
    ExamplePool pool;
    std::vector<Example> dev;
    std::vector<Example> test;
    std::vector<ItemSpec> dev_specs;
    std::vector<ItemSpec> test_specs;
    std::vector<MockRule> classify_rules;
    std::vector<MockRule> classify_rules_plain;  // no quoted spans anywhere
    std::vector<MockRule> target_rules;
    Bm25Params params{1.2, 0.0};
    std::size_t k = 4;

    ExamplePool dev_pool() const;
    ExamplePool test_pool() const;

    // Writes pool/dev/test TSVs, the three rule files, and reproduce configs
    // (config.json and config_plain.json) into the directory.
    void write(const std::filesystem::path& dir) const;
};

MockPipelineFixture make_mock_pipeline_fixture();

// Pool built around the running "white Jews" example: one exact-target match,
// two similar-target matches, and plain-retrieval docs including the
// counter-speech demo that flips the mock's decision.
struct WalkthroughFixture {
    ExamplePool pool;
    Example query;
    TargetMap pool_targets;
    std::vector<MockRule> classify_rules;
    std::vector<MockRule> classify_rules_agreeing;  // no context rule: strategies agree
    std::vector<MockRule> target_rules;
    Bm25Params params{1.2, 0.75};
};

WalkthroughFixture make_walkthrough_fixture();

}  // namespace ariiha::testing
