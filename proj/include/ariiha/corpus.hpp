#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ariiha {

// Binary label; Hate is the positive class throughout the metric suite.
enum class Label { Hate, NotHate };

// Accepts "hate"/"1" and "not_hate"/"not hate"/"0", case-insensitively.
std::optional<Label> parse_label(std::string_view token);
std::string_view label_name(Label label);  // canonical token: "hate" / "not_hate"

enum class Split { Pool, Dev, Test };

struct Example {
    std::string id;
    std::string text;
    Label label = Label::NotHate;
    std::optional<std::string> target;  // absent encodes a missing annotation
    Split split = Split::Pool;

    bool operator==(const Example&) const = default;
};

// Ordered, id-addressable collection. Iteration order equals file order.
class ExamplePool {
public:
    void add(Example example);  // DataError on duplicate id
    const std::vector<Example>& examples() const { return examples_; }
    const Example* find(std::string_view id) const;
    std::size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }

private:
    std::vector<Example> examples_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

enum class FileFormat { Tsv, Csv, Jsonl };
FileFormat format_from_path(const std::filesystem::path& path);  // by extension
std::optional<FileFormat> parse_format(std::string_view name);

struct LoadOptions {
    // Cells equal to this sentinel (after trimming) are treated as missing
    // targets, in addition to empty cells.
    std::optional<std::string> null_token;
};

ExamplePool load_examples(const std::filesystem::path& path, FileFormat format, Split split,
                          const LoadOptions& options = {});
void save_examples(const ExamplePool& pool, const std::filesystem::path& path,
                   FileFormat format);

struct ValidationReport {
    std::size_t hate_count = 0;
    std::size_t not_hate_count = 0;
    std::size_t null_targets = 0;
    // Groups of ids sharing an identical text, in first-occurrence order.
    std::vector<std::vector<std::string>> duplicate_text_ids;

    std::string summary() const;
};

ValidationReport validate_pool(const ExamplePool& pool);

}  // namespace ariiha
