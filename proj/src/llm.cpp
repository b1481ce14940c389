#include "ariiha/llm.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

using nlohmann::json;

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

struct Occurrence {
    std::size_t begin;
    std::size_t end;
    Label label;
};

// All case-insensitive surface hits, minus those shadowed by a longer hit of
// the other label covering them ("hate" inside "not hate").
std::vector<Occurrence> label_occurrences(const PromptTemplate& tmpl, std::string_view text) {
    std::string lowered = to_lower_ascii(text);
    std::vector<Occurrence> hits;
    auto scan = [&](const std::string& surface, Label label) {
        std::string needle = to_lower_ascii(surface);
        if (needle.empty()) return;
        std::size_t pos = 0;
        while ((pos = lowered.find(needle, pos)) != std::string::npos) {
            hits.push_back({pos, pos + needle.size(), label});
            ++pos;
        }
    };
    scan(tmpl.hate_surface, Label::Hate);
    scan(tmpl.not_hate_surface, Label::NotHate);
    std::vector<Occurrence> kept;
    for (const auto& h : hits) {
        bool shadowed = std::any_of(hits.begin(), hits.end(), [&](const Occurrence& other) {
            return other.label != h.label && other.begin <= h.begin && h.end <= other.end &&
                   (other.end - other.begin) > (h.end - h.begin);
        });
        if (!shadowed) kept.push_back(h);
    }
    std::sort(kept.begin(), kept.end(), [](const Occurrence& a, const Occurrence& b) {
        if (a.end != b.end) return a.end < b.end;
        return (a.end - a.begin) < (b.end - b.begin);
    });
    return kept;
}

}  // namespace

PromptTemplate PromptTemplate::defaults() {
    PromptTemplate tmpl;
    tmpl.system_text =
        "You are a careful content moderator deciding whether a text is implicit "
        "hate speech. Use the labeled examples as guidance. Explain your reasoning "
        "briefly, then answer with exactly 'hate' or 'not hate' on the last line.\n\n";
    tmpl.demo_block = "Text: {text}\nAnswer: {label}\n\n";
    tmpl.query_block =
        "Text: {text}\nExplain your reasoning, then answer 'hate' or 'not hate' on "
        "the last line.\n";
    return tmpl;
}

void PromptTemplate::validate(std::string_view origin) const {
    auto require = [&](const std::string& block, std::string_view section,
                       std::string_view placeholder) {
        if (block.find(placeholder) == std::string::npos)
            throw DataError("template [" + std::string(section) + "] must contain " +
                            std::string(placeholder) + ": " + std::string(origin));
    };
    require(demo_block, "demo", "{text}");
    require(demo_block, "demo", "{label}");
    require(query_block, "query", "{text}");
    if (trim(hate_surface).empty() || trim(not_hate_surface).empty())
        throw DataError("label surfaces must be non-empty: " + std::string(origin));
    if (to_lower_ascii(hate_surface) == to_lower_ascii(not_hate_surface))
        throw DataError("label surfaces must be distinct: " + std::string(origin));
}

PromptTemplate PromptTemplate::parse(std::string_view content, std::string_view origin) {
    auto sections = parse_sections(content, origin);
    PromptTemplate tmpl;
    tmpl.system_text = sections.count("system") ? sections["system"] : "";
    if (!sections.count("demo") || !sections.count("query"))
        throw DataError("template needs [demo] and [query] sections: " + std::string(origin));
    tmpl.demo_block = sections["demo"];
    tmpl.query_block = sections["query"];
    if (sections.count("labels")) {
        for (const auto& line : split_lines(sections["labels"])) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (key == "hate") tmpl.hate_surface = value;
            else if (key == "not_hate") tmpl.not_hate_surface = value;
            else if (!key.empty())
                throw DataError("unknown label key '" + key + "' in " + std::string(origin));
        }
    }
    tmpl.validate(origin);
    return tmpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

std::string render_prompt(const PromptTemplate& tmpl, const std::vector<Demonstration>& demos,
                          std::string_view query_text) {
    std::string prompt = tmpl.system_text;
    for (const auto& demo : demos) {
        auto block = replace_all(tmpl.demo_block, "{text}", demo.example->text);
        prompt += replace_all(block, "{label}", tmpl.label_surface(demo.example->label));
    }
    prompt += replace_all(tmpl.query_block, "{text}", std::string(query_text));
    return prompt;
}

MockBackend::MockBackend(std::vector<MockRule> rules, std::string hate_surface,
                         std::string not_hate_surface)
    : rules_(std::move(rules)),
      hate_surface_(std::move(hate_surface)),
      not_hate_surface_(std::move(not_hate_surface)) {
    if (rules_.empty()) throw DataError("mock backend needs at least a default rule");
    if (!rules_.back().trigger.empty())
        throw DataError("mock rules must end with a default rule (empty trigger)");
    std::string digest;
    for (const auto& r : rules_) {
        digest += r.trigger;
        digest += '\x1f';
        digest += r.label ? label_name(*r.label) : "";
        digest += '\x1f';
        digest += r.rationale;
        digest += '\x1f';
        digest += r.quote.value_or("");
        digest += '\x1f';
        digest += r.context.value_or("");
        digest += '\x1f';
        digest += r.target.value_or("");
        digest += '\x1e';
        if (!r.label && !r.target)
            throw DataError("mock rule with trigger '" + r.trigger +
                            "' needs a label or a target");
    }
    identity_ = "mock:" + fnv1a64_hex(digest);
}

std::vector<MockRule> MockBackend::load_rules(const std::filesystem::path& path) {
    std::vector<MockRule> rules;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_text_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object())
            throw DataError("malformed mock rule at line " + std::to_string(line_no) + " (" +
                            path.string() + ")");
        MockRule rule;
        rule.trigger = obj.value("trigger", "");
        if (obj.contains("label")) {
            auto label = parse_label(obj["label"].get<std::string>());
            if (!label)
                throw DataError("unknown label in mock rule at line " + std::to_string(line_no));
            rule.label = label;
        }
        rule.rationale = obj.value("rationale", "");
        if (obj.contains("quote")) rule.quote = obj["quote"].get<std::string>();
        if (obj.contains("context")) rule.context = obj["context"].get<std::string>();
        if (obj.contains("target")) rule.target = obj["target"].get<std::string>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::string MockBackend::complete(const BackendRequest& request) {
    calls_.fetch_add(1);
    for (const auto& rule : rules_) {
        if (!rule.trigger.empty() && request.query_text.find(rule.trigger) == std::string::npos)
            continue;
        if (rule.context && request.prompt.find(*rule.context) == std::string::npos) continue;
        if (rule.target) return *rule.target;
        std::string rationale = rule.rationale;
        if (rule.quote) {
            std::string quoted = "\"" + *rule.quote + "\"";
            if (rationale.find("{quote}") != std::string::npos)
                rationale = replace_all(rationale, "{quote}", quoted);
            else
                rationale += " " + quoted;
        }
        std::string surface = *rule.label == Label::Hate ? hate_surface_ : not_hate_surface_;
        if (rationale.empty()) return surface;
        return rationale + "\n" + surface;
    }
    throw BackendError("mock backend has no default rule");
}

ClassificationOutcome parse_outcome(const PromptTemplate& tmpl, std::string raw_reply) {
    auto lines = split_lines(raw_reply);
    std::size_t last = lines.size();
    while (last > 0 && trim(lines[last - 1]).empty()) --last;
    if (last == 0)
        throw BackendError("unparseable reply (empty): '" + raw_reply + "'");
    const std::string& final_line = lines[last - 1];

    auto final_hits = label_occurrences(tmpl, final_line);
    bool has_hate = std::any_of(final_hits.begin(), final_hits.end(),
                                [](const Occurrence& o) { return o.label == Label::Hate; });
    bool has_not = std::any_of(final_hits.begin(), final_hits.end(),
                               [](const Occurrence& o) { return o.label == Label::NotHate; });
    ClassificationOutcome outcome;
    outcome.raw_reply = raw_reply;
    if (has_hate != has_not) {
        outcome.label = has_hate ? Label::Hate : Label::NotHate;
        std::string rationale;
        for (std::size_t i = 0; i + 1 < last; ++i) {
            if (i) rationale += '\n';
            rationale += lines[i];
        }
        outcome.rationale = rationale;
        return outcome;
    }
    // Ambiguous or empty final line: whole-reply fallback, last match wins.
    auto hits = label_occurrences(tmpl, raw_reply);
    if (hits.empty())
        throw BackendError("unparseable reply (no label found): '" + raw_reply + "'");
    outcome.label = hits.back().label;
    outcome.rationale = raw_reply;
    return outcome;
}

ClassificationOutcome classify(Backend& backend, const PromptTemplate& tmpl,
                               const BackendRequest& request) {
    return parse_outcome(tmpl, backend.complete(request));
}

ClassificationOutcome classify_logged(Backend& backend, const PromptTemplate& tmpl,
                                      const BackendRequest& request, std::string_view id,
                                      std::string_view strategy, std::vector<RunLogEntry>& log) {
    RunLogEntry entry;
    entry.id = std::string(id);
    entry.strategy = std::string(strategy);
    entry.prompt_hash = fnv1a64_hex(request.prompt);
    std::string reply;
    try {
        auto start = std::chrono::steady_clock::now();
        reply = backend.complete(request);
        if (!backend.deterministic())
            entry.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
    } catch (const std::exception& e) {
        entry.error = e.what();
        log.push_back(std::move(entry));
        throw;
    }
    entry.raw_reply = reply;
    try {
        auto outcome = parse_outcome(tmpl, std::move(reply));
        entry.label = outcome.label;
        log.push_back(std::move(entry));
        return outcome;
    } catch (const std::exception& e) {
        entry.error = e.what();
        log.push_back(std::move(entry));
        throw;
    }
}

std::string run_log_line(const RunLogEntry& entry) {
    json obj;
    obj["id"] = entry.id;
    obj["strategy"] = entry.strategy;
    obj["prompt_hash"] = entry.prompt_hash;
    obj["raw_reply"] = entry.raw_reply;
    if (entry.label) obj["label"] = label_name(*entry.label);
    else obj["label"] = nullptr;
    if (!entry.error.empty()) obj["error"] = entry.error;
    obj["latency_ms"] = entry.latency_ms;
    return obj.dump();
}

void write_run_log(const std::filesystem::path& path, const std::vector<RunLogEntry>& entries) {
    std::ostringstream out;
    for (const auto& entry : entries) out << run_log_line(entry) << '\n';
    write_text_file(path, out.str());
}

}  // namespace ariiha
