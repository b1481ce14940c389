#include "ariiha/target.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/llm.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

constexpr const char* kDefaultStopwords[] = {
    "a",    "an",   "and",  "any",  "are", "as",   "at",   "be",   "been", "but",
    "by",   "for",  "from", "had",  "has", "have", "he",   "her",  "his",  "i",
    "in",   "into", "is",   "it",   "its", "my",   "of",   "on",   "or",   "our",
    "she",  "so",   "some", "such", "that", "the",  "their", "them", "these", "they",
    "this", "those", "to",  "was",  "we",  "were", "who",  "will", "with", "you",
};

bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

const StopwordList& StopwordList::english() {
    static const StopwordList list = [] {
        StopwordList l;
        for (const char* w : kDefaultStopwords) l.words.insert(w);
        return l;
    }();
    return list;
}

StopwordList StopwordList::from_file(const std::filesystem::path& path) {
    StopwordList list;
    for (const auto& line : split_lines(read_text_file(path))) {
        auto word = to_lower_ascii(trim_view(line));
        if (!word.empty() && word[0] != '#') list.words.insert(word);
    }
    return list;
}

bool StopwordList::contains(std::string_view word) const {
    return words.count(std::string(word)) > 0;
}

NormalizedTarget normalize_target(std::string_view raw, const StopwordList& stopwords) {
    std::string lowered = to_lower_ascii(trim_view(raw));
    // Collapse internal whitespace runs into single spaces.
    std::string collapsed;
    bool in_space = false;
    for (char c : lowered) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !collapsed.empty()) collapsed += ' ';
        in_space = false;
        collapsed += c;
    }
    std::size_t begin = 0, end = collapsed.size();
    while (begin < end && is_ascii_punct(collapsed[begin])) ++begin;
    while (end > begin && is_ascii_punct(collapsed[end - 1])) --end;
    NormalizedTarget target;
    target.canonical = trim(collapsed.substr(begin, end - begin));
    if (target.canonical.empty())
        throw DataError("target '" + std::string(raw) + "' is empty after normalization");
    std::istringstream words(target.canonical);
    std::string word;
    while (words >> word) {
        if (!stopwords.contains(word)) target.content_tokens.insert(word);
    }
    return target;
}

TargetMatch target_similarity(const NormalizedTarget& a, const NormalizedTarget& b) {
    if (a.canonical == b.canonical) return TargetMatch::Exact;
    for (const auto& token : a.content_tokens) {
        if (b.content_tokens.count(token)) return TargetMatch::Similar;
    }
    if (a.canonical.find(b.canonical) != std::string::npos ||
        b.canonical.find(a.canonical) != std::string::npos)
        return TargetMatch::Similar;
    return TargetMatch::None;
}

std::vector<Demonstration> target_prioritized_retrieve(
    const ExamplePool& pool, const Bm25Index& index, const TargetMap& targets,
    const Example& query, const NormalizedTarget& query_target, std::size_t k,
    const TargetMatcher& matcher) {
    if (k == 0) return {};
    auto scores = index.score_all(tokenize(query.text));
    struct Candidate {
        std::size_t pool_index;
        double score;
        Priority priority;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(pool.size());
    const auto& examples = pool.examples();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& ex = examples[i];
        if (ex.id == query.id) continue;
        auto target_it = targets.find(ex.id);
        if (target_it == targets.end())
            throw DataError("no resolved target for pool example '" + ex.id + "'");
        TargetMatch match = matcher(target_it->second, query_target);
        Priority priority = match == TargetMatch::Exact     ? Priority::P1
                            : match == TargetMatch::Similar ? Priority::P2
                                                            : Priority::P3;
        candidates.push_back({i, scores[i], priority});
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.priority != b.priority) return static_cast<int>(a.priority) < static_cast<int>(b.priority);
        if (a.score != b.score) return a.score > b.score;
        return examples[a.pool_index].id < examples[b.pool_index].id;
    });
    if (candidates.size() > k) candidates.resize(k);
    std::vector<Demonstration> demos;
    demos.reserve(candidates.size());
    for (const auto& c : candidates)
        demos.push_back({&examples[c.pool_index], c.score, c.priority});
    return demos;
}

TargetPromptTemplate TargetPromptTemplate::defaults() {
    TargetPromptTemplate tmpl;
    tmpl.system_text =
        "Identify the demographic group targeted by the input text. "
        "Use the labeled examples as guidance. "
        "Reply with only the group name on the last line.\n\n";
    tmpl.demo_block = "Text: {text}\nTarget group: {target}\n\n";
    tmpl.query_block = "Text: {text}\nTarget group:\n";
    return tmpl;
}

namespace {

// Shared sectioned plain-text parser; sections are introduced by marker lines
// and keep their content bytes verbatim (including the newline before the
// next marker).
std::map<std::string, std::string> parse_sections(std::string_view content,
                                                  std::string_view origin) {
    std::map<std::string, std::string> sections;
    std::string current;
    std::string body;
    std::size_t pos = 0;
    auto flush = [&] {
        if (!current.empty()) sections[current] = body;
        body.clear();
    };
    while (pos <= content.size()) {
        auto nl = content.find('\n', pos);
        std::string_view line = nl == std::string_view::npos ? content.substr(pos)
                                                             : content.substr(pos, nl - pos);
        std::string_view stripped = line;
        if (!stripped.empty() && stripped.back() == '\r') stripped.remove_suffix(1);
        if (stripped.size() >= 2 && stripped.front() == '[' && stripped.back() == ']') {
            flush();
            current = trim(stripped.substr(1, stripped.size() - 2));
            if (current.empty()) throw DataError("empty section name in " + std::string(origin));
        } else if (!current.empty()) {
            body.append(line);
            if (nl != std::string_view::npos) body += '\n';
        } else if (!trim(line).empty()) {
            throw DataError("content before first [section] marker in " + std::string(origin));
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    flush();
    return sections;
}

}  // namespace

TargetPromptTemplate TargetPromptTemplate::parse(std::string_view content,
                                                 std::string_view origin) {
    auto sections = parse_sections(content, origin);
    TargetPromptTemplate tmpl;
    tmpl.system_text = sections.count("system") ? sections["system"] : "";
    if (!sections.count("demo") || !sections.count("query"))
        throw DataError("target template needs [demo] and [query] sections: " +
                        std::string(origin));
    tmpl.demo_block = sections["demo"];
    tmpl.query_block = sections["query"];
    if (tmpl.demo_block.find("{text}") == std::string::npos ||
        tmpl.demo_block.find("{target}") == std::string::npos)
        throw DataError("target template [demo] must contain {text} and {target}: " +
                        std::string(origin));
    if (tmpl.query_block.find("{text}") == std::string::npos)
        throw DataError("target template [query] must contain {text}: " + std::string(origin));
    return tmpl;
}

TargetPromptTemplate TargetPromptTemplate::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

std::map<std::string, std::string> read_target_cache(const std::filesystem::path& path) {
    std::map<std::string, std::string> cache;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_text_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.contains("id") || !obj.contains("target"))
            throw DataError("malformed target cache at line " + std::to_string(line_no) + " (" +
                            path.string() + ")");
        cache[obj["id"].get<std::string>()] = obj["target"].get<std::string>();
    }
    return cache;
}

TargetPredictor::TargetPredictor(Backend& backend, const ExamplePool& pool,
                                 const Bm25Index& index, TargetPredictorOptions options)
    : backend_(&backend), pool_(&pool), index_(&index), options_(std::move(options)) {}

std::string TargetPredictor::build_prompt(const Example& example) const {
    auto scores = index_->score_all(tokenize(example.text));
    struct Candidate {
        std::size_t pool_index;
        double score;
    };
    std::vector<Candidate> annotated;
    const auto& examples = pool_->examples();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!examples[i].target || examples[i].id == example.id) continue;
        annotated.push_back({i, scores[i]});
    }
    if (annotated.size() < options_.shots)
        throw DataError("insufficient annotated examples for target prediction: need " +
                        std::to_string(options_.shots) + ", have " +
                        std::to_string(annotated.size()));
    std::sort(annotated.begin(), annotated.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return examples[a.pool_index].id < examples[b.pool_index].id;
    });
    annotated.resize(options_.shots);
    std::string prompt = options_.prompt.system_text;
    for (const auto& c : annotated) {
        const Example& demo = examples[c.pool_index];
        auto block = replace_all(options_.prompt.demo_block, "{text}", demo.text);
        prompt += replace_all(block, "{target}", *demo.target);
    }
    prompt += replace_all(options_.prompt.query_block, "{text}", example.text);
    return prompt;
}

NormalizedTarget TargetPredictor::predict(const Example& example, std::vector<RunLogEntry>* log) {
    BackendRequest request{build_prompt(example), example.text};
    RunLogEntry entry;
    entry.id = example.id;
    entry.strategy = "target_predict";
    entry.prompt_hash = fnv1a64_hex(request.prompt);
    std::string reply;
    try {
        auto start = std::chrono::steady_clock::now();
        reply = backend_->complete(request);
        if (!backend_->deterministic())
            entry.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
        ++backend_calls_;
    } catch (const std::exception& e) {
        entry.error = e.what();
        if (log) log->push_back(std::move(entry));
        throw BackendError("target prediction failed for '" + example.id + "': " + e.what());
    }
    entry.raw_reply = reply;
    if (trim(reply).empty()) {
        entry.error = "empty reply";
        if (log) log->push_back(std::move(entry));
        throw BackendError("empty backend reply while predicting target of '" + example.id + "'");
    }
    auto lines = split_lines(reply);
    std::string last_line;
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (!trim(*it).empty()) {
            last_line = *it;
            break;
        }
    }
    if (log) log->push_back(std::move(entry));
    try {
        auto normalized = normalize_target(last_line, options_.stopwords);
        std::lock_guard<std::mutex> lock(cache_mutex_);
        cache_[example.id] = {normalized.canonical, fnv1a64_hex(request.prompt)};
        return normalized;
    } catch (const DataError&) {
        throw BackendError("unusable target reply for '" + example.id + "': '" + last_line + "'");
    }
}

NormalizedTarget TargetPredictor::resolve(const Example& example, std::vector<RunLogEntry>* log) {
    if (example.target) return normalize_target(*example.target, options_.stopwords);
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find(example.id);
        if (it != cache_.end()) return normalize_target(it->second.target, options_.stopwords);
    }
    return predict(example, log);
}

void TargetPredictor::resolve_all(const std::vector<Example>& examples, std::size_t parallelism,
                                  std::vector<RunLogEntry>* log) {
    std::vector<const Example*> pending;
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        for (const auto& ex : examples) {
            if (!ex.target && !cache_.count(ex.id)) pending.push_back(&ex);
        }
    }
    if (pending.empty()) return;
    if (parallelism <= 1) {
        for (const Example* ex : pending) resolve(*ex, log);
        return;
    }
    struct Slot {
        std::optional<NormalizedTarget> result;
        std::vector<RunLogEntry> entries;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(pending.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            try {
                slots[i].result = predict(*pending[i], &slots[i].entries);
            } catch (...) {
                slots[i].error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(parallelism, pending.size()); ++t)
        threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    // Log in input order so outputs stay deterministic; predict() already
    // cached each success.
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (log)
            for (auto& e : slots[i].entries) log->push_back(std::move(e));
        if (slots[i].error) std::rethrow_exception(slots[i].error);
    }
}

TargetMap TargetPredictor::resolve_pool(std::size_t parallelism, std::vector<RunLogEntry>* log) {
    resolve_all(pool_->examples(), parallelism, log);
    TargetMap map;
    for (const auto& ex : pool_->examples()) map.emplace(ex.id, resolve(ex, log));
    return map;
}

void TargetPredictor::load_cache(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    std::size_t line_no = 0;
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (const auto& line : split_lines(read_text_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.contains("id") || !obj.contains("target"))
            throw DataError("malformed target cache at line " + std::to_string(line_no) + " (" +
                            path.string() + ")");
        if (obj.value("backend", backend_->identity()) != backend_->identity()) continue;
        cache_[obj["id"].get<std::string>()] = {obj["target"].get<std::string>(),
                                                obj.value("prompt_hash", "")};
    }
}

void TargetPredictor::save_cache(const std::filesystem::path& path) const {
    std::ostringstream out;
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (const auto& [id, entry] : cache_) {
        nlohmann::json obj;
        obj["id"] = id;
        obj["target"] = entry.target;
        obj["backend"] = backend_->identity();
        obj["prompt_hash"] = entry.prompt_hash;
        out << obj.dump() << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace ariiha
