#include "ariiha/corpus.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

using nlohmann::json;

constexpr const char* kColumns[] = {"id", "text", "label", "target"};

std::string line_err(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
    return msg + " at line " + std::to_string(line) + " (" + path.string() + ")";
}

struct RawRow {
    std::vector<std::string> cells;
    std::size_t line = 0;  // 1-based line where the row starts
};

// Plain TSV: no quoting, one record per line.
std::vector<RawRow> parse_tsv(std::string_view content) {
    std::vector<RawRow> rows;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(content)) {
        ++line_no;
        if (line.empty()) continue;
        RawRow row;
        row.line = line_no;
        std::size_t pos = 0;
        while (true) {
            auto tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                row.cells.push_back(line.substr(pos));
                break;
            }
            row.cells.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// RFC 4180-style CSV; quoted fields may contain commas, quotes and newlines.
std::vector<RawRow> parse_csv(std::string_view content, const std::filesystem::path& path) {
    std::vector<RawRow> rows;
    std::size_t line_no = 1;
    std::size_t i = 0;
    while (i < content.size()) {
        RawRow row;
        row.line = line_no;
        std::string cell;
        bool in_quotes = false;
        bool row_done = false;
        bool saw_any = false;
        while (i < content.size() && !row_done) {
            char c = content[i];
            if (in_quotes) {
                if (c == '"') {
                    if (i + 1 < content.size() && content[i + 1] == '"') {
                        cell += '"';
                        i += 2;
                    } else {
                        in_quotes = false;
                        ++i;
                    }
                } else {
                    if (c == '\n') ++line_no;
                    cell += c;
                    ++i;
                }
            } else {
                switch (c) {
                    case '"':
                        if (!cell.empty())
                            throw DataError(line_err(path, row.line, "stray quote inside unquoted cell"));
                        in_quotes = true;
                        saw_any = true;
                        ++i;
                        break;
                    case ',':
                        row.cells.push_back(std::move(cell));
                        cell.clear();
                        saw_any = true;
                        ++i;
                        break;
                    case '\r':
                        ++i;
                        break;
                    case '\n':
                        ++line_no;
                        ++i;
                        row_done = true;
                        break;
                    default:
                        cell += c;
                        saw_any = true;
                        ++i;
                        break;
                }
            }
        }
        if (in_quotes) throw DataError(line_err(path, row.line, "unterminated quoted cell"));
        if (saw_any || !row.cells.empty()) {
            row.cells.push_back(std::move(cell));
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::array<std::size_t, 4> map_header(const std::vector<std::string>& cells,
                                      const std::filesystem::path& path) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t c = 0; c < 4; ++c) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const std::string& h) {
            return to_lower_ascii(trim(h)) == kColumns[c];
        });
        if (it == cells.end())
            throw DataError("missing column '" + std::string(kColumns[c]) + "' in header (" +
                            path.string() + ")");
        idx[c] = static_cast<std::size_t>(it - cells.begin());
    }
    return idx;
}

std::optional<std::string> parse_target_cell(std::string cell, const LoadOptions& options) {
    auto trimmed = trim(cell);
    if (trimmed.empty()) return std::nullopt;
    if (options.null_token && trimmed == *options.null_token) return std::nullopt;
    return cell;
}

ExamplePool rows_to_pool(const std::vector<RawRow>& rows, Split split, const LoadOptions& options,
                         const std::filesystem::path& path) {
    ExamplePool pool;
    if (rows.empty()) return pool;
    auto idx = map_header(rows.front().cells, path);
    std::size_t width = rows.front().cells.size();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const RawRow& row = rows[r];
        if (row.cells.size() != width)
            throw DataError(line_err(path, row.line,
                                     "malformed row: expected " + std::to_string(width) +
                                         " columns, got " + std::to_string(row.cells.size())));
        Example ex;
        ex.split = split;
        ex.id = trim(row.cells[idx[0]]);
        ex.text = row.cells[idx[1]];
        auto label_token = trim(row.cells[idx[2]]);
        auto label = parse_label(label_token);
        if (!label)
            throw DataError("unknown label '" + label_token + "' at line " +
                            std::to_string(row.line) + " (" + path.string() + ")");
        ex.label = *label;
        ex.target = parse_target_cell(row.cells[idx[3]], options);
        if (ex.id.empty()) throw DataError(line_err(path, row.line, "empty id"));
        if (trim(ex.text).empty()) throw DataError(line_err(path, row.line, "empty text"));
        if (pool.find(ex.id))
            throw DataError("duplicate id '" + ex.id + "' at line " + std::to_string(row.line) +
                            " (" + path.string() + ")");
        pool.add(std::move(ex));
    }
    return pool;
}

ExamplePool load_jsonl(const std::filesystem::path& path, Split split,
                       const LoadOptions& options) {
    ExamplePool pool;
    auto lines = split_lines(read_text_file(path));
    std::size_t line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object())
            throw DataError(line_err(path, line_no, "malformed JSON object"));
        Example ex;
        ex.split = split;
        if (!obj.contains("id") || !obj.contains("text") || !obj.contains("label"))
            throw DataError(line_err(path, line_no, "missing key (need id, text, label)"));
        ex.id = trim(obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump());
        ex.text = obj["text"].get<std::string>();
        std::string label_token = obj["label"].is_string() ? obj["label"].get<std::string>()
                                                           : obj["label"].dump();
        auto label = parse_label(trim(label_token));
        if (!label)
            throw DataError("unknown label '" + trim(label_token) + "' at line " +
                            std::to_string(line_no) + " (" + path.string() + ")");
        ex.label = *label;
        if (obj.contains("target") && obj["target"].is_string())
            ex.target = parse_target_cell(obj["target"].get<std::string>(), options);
        if (ex.id.empty()) throw DataError(line_err(path, line_no, "empty id"));
        if (trim(ex.text).empty()) throw DataError(line_err(path, line_no, "empty text"));
        if (pool.find(ex.id))
            throw DataError("duplicate id '" + ex.id + "' at line " + std::to_string(line_no) +
                            " (" + path.string() + ")");
        pool.add(std::move(ex));
    }
    return pool;
}

std::string csv_quote(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::optional<Label> parse_label(std::string_view token) {
    auto t = to_lower_ascii(trim_view(token));
    if (t == "hate" || t == "1") return Label::Hate;
    if (t == "not_hate" || t == "not hate" || t == "0") return Label::NotHate;
    return std::nullopt;
}

std::string_view label_name(Label label) {
    return label == Label::Hate ? "hate" : "not_hate";
}

void ExamplePool::add(Example example) {
    auto [it, inserted] = by_id_.emplace(example.id, examples_.size());
    if (!inserted) throw DataError("duplicate id '" + example.id + "'");
    examples_.push_back(std::move(example));
}

const Example* ExamplePool::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &examples_[it->second];
}

FileFormat format_from_path(const std::filesystem::path& path) {
    auto ext = to_lower_ascii(path.extension().string());
    if (ext == ".csv") return FileFormat::Csv;
    if (ext == ".jsonl" || ext == ".json") return FileFormat::Jsonl;
    return FileFormat::Tsv;
}

std::optional<FileFormat> parse_format(std::string_view name) {
    auto n = to_lower_ascii(trim_view(name));
    if (n == "tsv") return FileFormat::Tsv;
    if (n == "csv") return FileFormat::Csv;
    if (n == "jsonl") return FileFormat::Jsonl;
    return std::nullopt;
}

ExamplePool load_examples(const std::filesystem::path& path, FileFormat format, Split split,
                          const LoadOptions& options) {
    switch (format) {
        case FileFormat::Tsv:
            return rows_to_pool(parse_tsv(read_text_file(path)), split, options, path);
        case FileFormat::Csv:
            return rows_to_pool(parse_csv(read_text_file(path), path), split, options, path);
        case FileFormat::Jsonl:
            return load_jsonl(path, split, options);
    }
    throw DataError("unsupported format");
}

void save_examples(const ExamplePool& pool, const std::filesystem::path& path,
                   FileFormat format) {
    std::ostringstream out;
    switch (format) {
        case FileFormat::Tsv: {
            out << "id\ttext\tlabel\ttarget\n";
            for (const auto& ex : pool.examples()) {
                for (const std::string* field : {&ex.id, &ex.text}) {
                    if (field->find_first_of("\t\r\n") != std::string::npos)
                        throw DataError("field of '" + ex.id +
                                        "' contains a tab or newline; use jsonl or csv");
                }
                if (ex.target && ex.target->find_first_of("\t\r\n") != std::string::npos)
                    throw DataError("target of '" + ex.id +
                                    "' contains a tab or newline; use jsonl or csv");
                out << ex.id << '\t' << ex.text << '\t' << label_name(ex.label) << '\t'
                    << (ex.target ? *ex.target : "") << '\n';
            }
            break;
        }
        case FileFormat::Csv: {
            out << "id,text,label,target\n";
            for (const auto& ex : pool.examples()) {
                out << csv_quote(ex.id) << ',' << csv_quote(ex.text) << ','
                    << label_name(ex.label) << ','
                    << (ex.target ? csv_quote(*ex.target) : "") << '\n';
            }
            break;
        }
        case FileFormat::Jsonl: {
            for (const auto& ex : pool.examples()) {
                nlohmann::json obj;
                obj["id"] = ex.id;
                obj["text"] = ex.text;
                obj["label"] = label_name(ex.label);
                if (ex.target) obj["target"] = *ex.target;
                out << obj.dump() << '\n';
            }
            break;
        }
    }
    write_text_file(path, out.str());
}

ValidationReport validate_pool(const ExamplePool& pool) {
    ValidationReport report;
    std::map<std::string, std::vector<std::string>> by_text;
    std::vector<const std::string*> text_order;
    for (const auto& ex : pool.examples()) {
        if (ex.label == Label::Hate) ++report.hate_count;
        else ++report.not_hate_count;
        if (!ex.target) ++report.null_targets;
        auto [it, inserted] = by_text.try_emplace(ex.text);
        if (inserted) text_order.push_back(&it->first);
        it->second.push_back(ex.id);
    }
    for (const std::string* text : text_order) {
        auto& ids = by_text[*text];
        if (ids.size() > 1) report.duplicate_text_ids.push_back(ids);
    }
    return report;
}

std::string ValidationReport::summary() const {
    std::ostringstream out;
    out << "hate=" << hate_count << " not_hate=" << not_hate_count
        << " null_targets=" << null_targets;
    if (!duplicate_text_ids.empty()) {
        out << " duplicate_texts=" << duplicate_text_ids.size() << " [";
        for (std::size_t g = 0; g < duplicate_text_ids.size(); ++g) {
            if (g) out << "; ";
            for (std::size_t i = 0; i < duplicate_text_ids[g].size(); ++i) {
                if (i) out << ',';
                out << duplicate_text_ids[g][i];
            }
        }
        out << ']';
    }
    return out.str();
}

}  // namespace ariiha
