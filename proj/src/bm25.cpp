#include "ariiha/bm25.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

constexpr const char* kIndexFormat = "ariiha.bm25";
constexpr int kIndexVersion = 1;

// Distinct terms in first-appearance order; keeps per-document summation
// order identical between score() and score_all().
std::vector<std::string_view> distinct_terms(const TokenSeq& query) {
    std::vector<std::string_view> terms;
    std::unordered_set<std::string_view> seen;
    for (const auto& t : query) {
        if (seen.insert(t).second) terms.push_back(t);
    }
    return terms;
}

}  // namespace

Bm25Index Bm25Index::build(const ExamplePool& pool, Bm25Params params) {
    if (params.k1 <= 0.0) throw DataError("k1 must be > 0");
    if (params.b < 0.0 || params.b > 1.0) throw DataError("b must be in [0,1]");
    Bm25Index index;
    index.params_ = params;
    std::size_t total_length = 0;
    for (const auto& ex : pool.examples()) {
        auto doc_index = static_cast<std::uint32_t>(index.doc_ids_.size());
        auto tokens = tokenize(ex.text);
        std::unordered_map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        // Deterministic posting order: sort this document's terms.
        std::vector<const std::string*> terms;
        terms.reserve(tf.size());
        for (const auto& [term, _] : tf) terms.push_back(&term);
        std::sort(terms.begin(), terms.end(),
                  [](const std::string* a, const std::string* b) { return *a < *b; });
        for (const std::string* term : terms)
            index.postings_[*term].emplace_back(doc_index, tf[*term]);
        index.id_to_index_.emplace(ex.id, doc_index);
        index.doc_ids_.push_back(ex.id);
        index.doc_lengths_.push_back(tokens.size());
        total_length += tokens.size();
    }
    index.avg_doc_length_ =
        index.doc_ids_.empty() ? 0.0
                               : static_cast<double>(total_length) /
                                     static_cast<double>(index.doc_ids_.size());
    return index;
}

bool Bm25Index::contains(std::string_view doc_id) const {
    return id_to_index_.count(std::string(doc_id)) > 0;
}

std::size_t Bm25Index::doc_length(std::string_view doc_id) const {
    auto it = id_to_index_.find(std::string(doc_id));
    if (it == id_to_index_.end()) throw DataError("unknown doc id '" + std::string(doc_id) + "'");
    return doc_lengths_[it->second];
}

std::size_t Bm25Index::term_df(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(std::size_t df) const {
    double n = static_cast<double>(doc_ids_.size());
    double d = static_cast<double>(df);
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double Bm25Index::term_doc_score(double idf_value, std::uint32_t tf, std::size_t doc_len) const {
    double f = static_cast<double>(tf);
    double norm = 1.0 - params_.b + params_.b * static_cast<double>(doc_len) / avg_doc_length_;
    return idf_value * (f * (params_.k1 + 1.0)) / (f + params_.k1 * norm);
}

double Bm25Index::score(const TokenSeq& query, std::string_view doc_id) const {
    auto it = id_to_index_.find(std::string(doc_id));
    if (it == id_to_index_.end()) throw DataError("unknown doc id '" + std::string(doc_id) + "'");
    std::uint32_t doc_index = static_cast<std::uint32_t>(it->second);
    double total = 0.0;
    for (std::string_view term : distinct_terms(query)) {
        auto post_it = postings_.find(std::string(term));
        if (post_it == postings_.end()) continue;
        const auto& postings = post_it->second;
        auto hit = std::lower_bound(postings.begin(), postings.end(), doc_index,
                                    [](const auto& p, std::uint32_t d) { return p.first < d; });
        if (hit == postings.end() || hit->first != doc_index) continue;
        total += term_doc_score(idf(postings.size()), hit->second, doc_lengths_[doc_index]);
    }
    return total;
}

std::vector<double> Bm25Index::score_all(const TokenSeq& query) const {
    std::vector<double> scores(doc_ids_.size(), 0.0);
    for (std::string_view term : distinct_terms(query)) {
        auto post_it = postings_.find(std::string(term));
        if (post_it == postings_.end()) continue;
        double idf_value = idf(post_it->second.size());
        for (const auto& [doc_index, tf] : post_it->second)
            scores[doc_index] += term_doc_score(idf_value, tf, doc_lengths_[doc_index]);
    }
    return scores;
}

std::vector<ScoredDoc> Bm25Index::top_k(std::string_view query_text, std::size_t k,
                                        const std::unordered_set<std::string>& exclude) const {
    if (k == 0) return {};
    auto scores = score_all(tokenize(query_text));
    std::vector<std::size_t> candidates;
    candidates.reserve(doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        if (!exclude.count(doc_ids_[i])) candidates.push_back(i);
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return doc_ids_[a] < doc_ids_[b];
    });
    if (candidates.size() > k) candidates.resize(k);
    std::vector<ScoredDoc> result;
    result.reserve(candidates.size());
    for (std::size_t i : candidates) result.push_back({doc_ids_[i], scores[i]});
    return result;
}

void Bm25Index::save(const std::filesystem::path& path) const {
    nlohmann::json doc;
    doc["format"] = kIndexFormat;
    doc["version"] = kIndexVersion;
    doc["k1"] = params_.k1;
    doc["b"] = params_.b;
    doc["doc_ids"] = doc_ids_;
    doc["doc_lengths"] = doc_lengths_;
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, list] : postings_) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [doc_index, tf] : list) entries.push_back({doc_index, tf});
        postings[term] = std::move(entries);
    }
    doc["postings"] = std::move(postings);
    write_text_file(path, doc.dump(2) + "\n");
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw DataError("not a valid index file: " + path.string());
    if (doc.value("format", "") != kIndexFormat)
        throw DataError("unrecognized index format in " + path.string());
    if (doc.value("version", 0) != kIndexVersion)
        throw DataError("unsupported index version " + std::to_string(doc.value("version", 0)) +
                        " in " + path.string());
    Bm25Index index;
    index.params_.k1 = doc.at("k1").get<double>();
    index.params_.b = doc.at("b").get<double>();
    index.doc_ids_ = doc.at("doc_ids").get<std::vector<std::string>>();
    index.doc_lengths_ = doc.at("doc_lengths").get<std::vector<std::size_t>>();
    if (index.doc_ids_.size() != index.doc_lengths_.size())
        throw DataError("corrupt index file: " + path.string());
    std::size_t total_length = 0;
    for (std::size_t i = 0; i < index.doc_ids_.size(); ++i) {
        index.id_to_index_.emplace(index.doc_ids_[i], i);
        total_length += index.doc_lengths_[i];
    }
    index.avg_doc_length_ = index.doc_ids_.empty()
                                ? 0.0
                                : static_cast<double>(total_length) /
                                      static_cast<double>(index.doc_ids_.size());
    for (const auto& [term, entries] : doc.at("postings").items()) {
        auto& list = index.postings_[term];
        for (const auto& entry : entries)
            list.emplace_back(entry.at(0).get<std::uint32_t>(), entry.at(1).get<std::uint32_t>());
    }
    return index;
}

}  // namespace ariiha
