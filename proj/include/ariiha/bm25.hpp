#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ariiha/corpus.hpp"
#include "ariiha/tokenize.hpp"

namespace ariiha {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct ScoredDoc {
    std::string id;
    double score = 0.0;
};

// Okapi BM25 with the nonnegative IDF ln((N - df + 0.5)/(df + 0.5) + 1).
// Immutable after build; safe for concurrent queries.
class Bm25Index {
public:
    static Bm25Index build(const ExamplePool& pool, Bm25Params params = {});

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const Bm25Params& params() const { return params_; }
    bool contains(std::string_view doc_id) const;
    std::size_t doc_length(std::string_view doc_id) const;
    std::size_t term_df(std::string_view term) const;

    // Exact BM25 sum over the query's distinct terms. DataError on unknown id.
    double score(const TokenSeq& query, std::string_view doc_id) const;

    // Score of every document, indexed by build order. Summation order per
    // document matches score(), so the two routes agree bit for bit.
    std::vector<double> score_all(const TokenSeq& query) const;

    // The k best-scoring documents not in `exclude`, score descending, ties by
    // ascending id. Zero-score documents are eligible and rank last.
    std::vector<ScoredDoc> top_k(std::string_view query_text, std::size_t k,
                                 const std::unordered_set<std::string>& exclude = {}) const;

    const std::vector<std::string>& doc_ids() const { return doc_ids_; }

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

private:
    double idf(std::size_t df) const;
    double term_doc_score(double idf_value, std::uint32_t tf, std::size_t doc_len) const;

    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::size_t> doc_lengths_;
    std::unordered_map<std::string, std::size_t> id_to_index_;
    // term -> (doc index ascending, term frequency)
    std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>>
        postings_;
    double avg_doc_length_ = 0.0;
};

// Slot for alternative demonstration retrievers (e.g. a dense model); the
// artifact ships the BM25 implementation only.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<ScoredDoc> retrieve(std::string_view query_text, std::size_t k,
                                            const std::unordered_set<std::string>& exclude)
        const = 0;
};

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(const Bm25Index& index) : index_(&index) {}
    std::vector<ScoredDoc> retrieve(std::string_view query_text, std::size_t k,
                                    const std::unordered_set<std::string>& exclude)
        const override {
        return index_->top_k(query_text, k, exclude);
    }

private:
    const Bm25Index* index_;
};

}  // namespace ariiha
