#ifndef COTKIT_CHARTQA_HPP
#define COTKIT_CHARTQA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

// ---------------------------------------------------------------------------
// Numeric rendering shared by the QA generator and the scorer.

namespace detail {

inline std::string render_cents(long long cents, bool trim) {
    const bool negative = cents < 0;
    unsigned long long mag = negative ? 0ULL - static_cast<unsigned long long>(cents)
                                      : static_cast<unsigned long long>(cents);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%llu.%02llu", negative ? "-" : "", mag / 100, mag % 100);
    std::string s = buf;
    if (trim) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

inline long long round_cents(double x) {
    return std::llround(x * 100.0); // llround: halves away from zero
}

} // namespace detail

/// Integers print without a decimal point; anything else is rounded to two
/// decimals (half away from zero) with trailing zeros trimmed.
inline std::string format_number(double x) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "cannot render non-finite value");
    if (x == std::floor(x) && std::abs(x) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(x));
        return buf;
    }
    return detail::render_cents(detail::round_cents(x), true);
}

/// Ratios always carry exactly two decimals.
inline std::string format_ratio(double x) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "cannot render non-finite ratio");
    return detail::render_cents(detail::round_cents(x), false);
}

// ---------------------------------------------------------------------------
// CSV tables

/// RFC 4180 rows: quoted fields may contain commas, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        if (row_has_content || row.size() > 1) rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_has_content = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_row();
        } else {
            field += c;
            if (!is_ascii_space(static_cast<unsigned char>(c))) row_has_content = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::MalformedTable, "unterminated quoted field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_ascii_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && is_ascii_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline bool is_missing_marker(std::string_view cell) {
    static const std::set<std::string, std::less<>> markers = {"", "-", "--", "na", "n/a", "nan", "null", "none"};
    std::string lower(cell);
    for (auto& c : lower) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return markers.count(lower) > 0;
}

/// Parses a table cell, tolerating surrounding space, a leading '$', a
/// trailing '%' and thousands separators. Returns nullopt for anything else.
inline std::optional<double> parse_cell_number(std::string_view raw) {
    std::string_view s = trim(raw);
    if (s.empty()) return std::nullopt;
    std::string cleaned;
    cleaned.reserve(s.size());
    std::size_t i = 0;
    if (s[0] == '-' || s[0] == '+') {
        if (s[0] == '-') cleaned += '-';
        ++i;
    }
    if (i < s.size() && s[i] == '$') ++i;
    std::string_view body = s.substr(i);
    if (!body.empty() && body.back() == '%') body.remove_suffix(1);
    body = trim(body);
    for (char c : body) {
        if (c != ',') cleaned += c;
    }
    if (cleaned.empty() || cleaned == "-") return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cleaned.data(), cleaned.data() + cleaned.size(), value);
    if (ec != std::errc() || ptr != cleaned.data() + cleaned.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

struct ValueColumn {
    std::string name;
    std::vector<std::optional<double>> values;

    std::size_t finite_count() const {
        return static_cast<std::size_t>(std::count_if(values.begin(), values.end(),
                                                      [](const auto& v) { return v.has_value(); }));
    }
};

struct ChartTable {
    std::string source_path;
    std::string category_name;
    std::vector<std::string> categories;
    std::vector<ValueColumn> value_columns;
    std::size_t row_count = 0;
};

/// First column holds category labels. A later column counts as numeric
/// when at least half of its non-blank cells parse; its unparseable cells
/// become missing. Rows with every value missing are dropped.
inline ChartTable parse_chart_csv(std::string_view text, std::string source_path = {}) {
    const auto rows = parse_csv_rows(text);
    const std::string where = source_path.empty() ? std::string("table") : source_path;
    if (rows.empty()) throw Error(ErrorCode::MalformedTable, where + ": empty document");
    const auto& header = rows.front();
    if (header.size() < 2) throw Error(ErrorCode::MalformedTable, where + ": need a category and a value column");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() > header.size()) {
            throw Error(ErrorCode::MalformedTable,
                        where + ": row " + std::to_string(r) + " has more cells than the header");
        }
    }
    auto cell = [&](std::size_t r, std::size_t c) -> std::string_view {
        return c < rows[r].size() ? std::string_view(rows[r][c]) : std::string_view();
    };

    std::vector<std::size_t> numeric_cols;
    for (std::size_t c = 1; c < header.size(); ++c) {
        std::size_t non_blank = 0, parsed = 0;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (is_missing_marker(trim(cell(r, c)))) continue;
            ++non_blank;
            if (parse_cell_number(cell(r, c))) ++parsed;
        }
        if (parsed > 0 && 2 * parsed >= non_blank) numeric_cols.push_back(c);
    }
    if (numeric_cols.empty()) throw Error(ErrorCode::MalformedTable, where + ": no numeric column");

    ChartTable t;
    t.source_path = std::move(source_path);
    t.category_name = std::string(trim(header[0]));
    for (std::size_t c : numeric_cols) t.value_columns.push_back({std::string(trim(header[c])), {}});
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::vector<std::optional<double>> vals;
        bool any = false;
        for (std::size_t c : numeric_cols) {
            vals.push_back(parse_cell_number(cell(r, c)));
            any = any || vals.back().has_value();
        }
        if (!any) continue;
        t.categories.emplace_back(trim(cell(r, 0)));
        for (std::size_t k = 0; k < vals.size(); ++k) t.value_columns[k].values.push_back(vals[k]);
    }
    t.row_count = t.categories.size();
    std::erase_if(t.value_columns, [](const ValueColumn& col) { return col.finite_count() == 0; });
    if (t.row_count < 2) throw Error(ErrorCode::MalformedTable, where + ": fewer than 2 usable rows");
    const bool usable = std::any_of(t.value_columns.begin(), t.value_columns.end(),
                                    [](const ValueColumn& col) { return col.finite_count() >= 2; });
    if (!usable) throw Error(ErrorCode::MalformedTable, where + ": no column with 2 finite values");
    return t;
}

// ---------------------------------------------------------------------------
// QA synthesis

enum class TemplateId { argmax_label, argmin_label, max_value, min_value, ratio };

inline constexpr TemplateId kAllTemplates[] = {TemplateId::argmax_label, TemplateId::argmin_label,
                                               TemplateId::max_value, TemplateId::min_value, TemplateId::ratio};

inline std::string_view to_string(TemplateId t) {
    switch (t) {
    case TemplateId::argmax_label: return "argmax_label";
    case TemplateId::argmin_label: return "argmin_label";
    case TemplateId::max_value: return "max_value";
    case TemplateId::min_value: return "min_value";
    case TemplateId::ratio: return "ratio";
    }
    return "";
}

inline TemplateId parse_template_id(std::string_view s) {
    for (auto t : kAllTemplates) {
        if (to_string(t) == s) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown template '" + std::string(s) + "'");
}

struct QaProvenance {
    std::string table_path;
    std::string column;
    std::vector<std::size_t> rows; // row indices into the parsed table

    friend bool operator==(const QaProvenance&, const QaProvenance&) = default;
};

struct SynthesizedQA {
    TemplateId template_id = TemplateId::argmax_label;
    std::string question;
    std::string answer;
    QaProvenance provenance;

    friend bool operator==(const SynthesizedQA&, const SynthesizedQA&) = default;
};

namespace detail {

// First occurrence wins on ties.
template <typename Better>
std::optional<std::size_t> extremum_row(const ValueColumn& col, Better better) {
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < col.values.size(); ++r) {
        if (!col.values[r]) continue;
        if (!best || better(*col.values[r], *col.values[*best])) best = r;
    }
    return best;
}

inline std::uint64_t column_seed(std::uint64_t seed, const ChartTable& t, const ValueColumn& col) {
    std::string key = t.source_path;
    key += '\0';
    key += col.name;
    return seed ^ fnv1a64(key);
}

} // namespace detail

/// Builds one QA pair per (template, value column with >= 2 finite values).
/// Ratio rows are drawn from a generator seeded by (rng_seed, table path,
/// column), so results do not depend on processing order.
inline std::vector<SynthesizedQA> synthesize_qa(const ChartTable& table, const std::vector<TemplateId>& templates,
                                                std::uint64_t rng_seed) {
    if (templates.empty()) throw Error(ErrorCode::InvalidArgument, "no templates requested");
    std::vector<TemplateId> order(templates);
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    std::vector<SynthesizedQA> out;
    for (TemplateId tid : order) {
        const std::size_t before = out.size();
        for (const auto& col : table.value_columns) {
            if (col.finite_count() < 2) continue;
            SynthesizedQA qa;
            qa.template_id = tid;
            qa.provenance = {table.source_path, col.name, {}};
            switch (tid) {
            case TemplateId::argmax_label:
            case TemplateId::max_value: {
                const auto r = *detail::extremum_row(col, [](double a, double b) { return a > b; });
                qa.provenance.rows = {r};
                if (tid == TemplateId::argmax_label) {
                    qa.question = "In which " + table.category_name + " was " + col.name + " highest?";
                    qa.answer = table.categories[r];
                } else {
                    qa.question = "What was the highest " + col.name + "?";
                    qa.answer = format_number(*col.values[r]);
                }
                break;
            }
            case TemplateId::argmin_label:
            case TemplateId::min_value: {
                const auto r = *detail::extremum_row(col, [](double a, double b) { return a < b; });
                qa.provenance.rows = {r};
                if (tid == TemplateId::argmin_label) {
                    qa.question = "In which " + table.category_name + " was " + col.name + " lowest?";
                    qa.answer = table.categories[r];
                } else {
                    qa.question = "What was the lowest " + col.name + "?";
                    qa.answer = format_number(*col.values[r]);
                }
                break;
            }
            case TemplateId::ratio: {
                std::vector<std::pair<std::size_t, std::size_t>> pairs;
                for (std::size_t i = 0; i < col.values.size(); ++i) {
                    if (!col.values[i]) continue;
                    for (std::size_t j = 0; j < col.values.size(); ++j) {
                        if (i != j && col.values[j] && *col.values[j] != 0.0) pairs.emplace_back(i, j);
                    }
                }
                if (pairs.empty()) continue;
                std::mt19937_64 rng(detail::column_seed(rng_seed, table, col));
                const auto [i, j] = pairs[rng() % pairs.size()];
                qa.provenance.rows = {i, j};
                qa.question = "What is the ratio of " + col.name + " in " + table.categories[i] + " to " +
                              col.name + " in " + table.categories[j] + "?";
                qa.answer = format_ratio(*col.values[i] / *col.values[j]);
                break;
            }
            }
            out.push_back(std::move(qa));
        }
        if (out.size() == before) {
            throw Error(ErrorCode::NoUsableTemplate, std::string(to_string(tid)) + " cannot apply to " +
                                                         (table.source_path.empty() ? "table" : table.source_path));
        }
    }
    return out;
}

inline Json to_json(const SynthesizedQA& qa) {
    Json j = Json::object();
    j["template_id"] = to_string(qa.template_id);
    j["question"] = qa.question;
    j["answer"] = qa.answer;
    j["provenance"] = {{"table", qa.provenance.table_path},
                       {"column", qa.provenance.column},
                       {"rows", qa.provenance.rows}};
    return j;
}

// ---------------------------------------------------------------------------
// Corpus-level synthesis

struct SkippedTable {
    std::string path;
    std::string reason;
};

struct ChartCorpus {
    std::vector<UnifiedSample> samples;
    std::vector<SynthesizedQA> qas; // aligned with samples
    std::size_t tables_used = 0;
    std::vector<SkippedTable> skipped;
};

/// "train/tables/41.csv" -> "train/png/41.png"
inline std::string chart_image_for(const fs::path& rel_csv) {
    fs::path img = rel_csv;
    img.replace_extension(".png");
    if (img.has_parent_path() && img.parent_path().filename() == "tables") {
        img = img.parent_path().parent_path() / "png" / img.filename();
    }
    return img.generic_string();
}

/// Parses and synthesizes every *.csv under `dir` (recursively). Files are
/// processed on up to `workers` threads; output order is sorted path, then
/// template id, then column.
inline ChartCorpus synthesize_corpus(const fs::path& dir, const std::vector<TemplateId>& templates,
                                     std::uint64_t seed, Split split, unsigned workers = 1) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "table directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return fs::relative(a, dir).generic_string() < fs::relative(b, dir).generic_string();
    });

    struct PerFile {
        std::vector<SynthesizedQA> qas;
        std::string error;
    };
    std::vector<PerFile> results(files.size());
    auto work = [&](std::size_t k) {
        const std::string rel = fs::relative(files[k], dir).generic_string();
        try {
            auto table = parse_chart_csv(read_file(files[k]), rel);
            results[k].qas = synthesize_qa(table, templates, seed);
        } catch (const Error& e) {
            results[k].error = e.what();
        }
    };
    parallel_for(files.size(), workers, work);

    ChartCorpus out;
    for (std::size_t k = 0; k < files.size(); ++k) {
        const fs::path rel = fs::relative(files[k], dir);
        if (!results[k].error.empty()) {
            out.skipped.push_back({rel.generic_string(), results[k].error});
            continue;
        }
        ++out.tables_used;
        std::size_t col_idx = 0;
        std::string last_template;
        for (auto& qa : results[k].qas) {
            const std::string tname(to_string(qa.template_id));
            col_idx = (tname == last_template) ? col_idx + 1 : 0;
            last_template = tname;
            UnifiedSample s;
            s.sample_id = rel.generic_string() + ":" + tname + ":" + std::to_string(col_idx);
            s.dataset = Dataset::chartqa;
            s.split = split;
            s.question = qa.question;
            s.answer = qa.answer;
            s.image_ref = chart_image_for(rel);
            out.samples.push_back(std::move(s));
            out.qas.push_back(std::move(qa));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Native ChartQA annotations

struct MissingImage {
    std::size_t index = 0;
    std::string image;
};

struct ChartNativeLoad {
    std::vector<UnifiedSample> samples;
    std::vector<MissingImage> missing_images;
};

inline constexpr std::string_view kNotAvailable = "N/A";

/// Accepts entries keyed either {image_id, question, answer} or the
/// released {imgname, query, label}. Entries whose image file is absent
/// from `image_dir` are skipped and reported.
inline ChartNativeLoad load_chartqa_native(const Json& annotations, const fs::path& image_dir, Split split) {
    if (!annotations.is_array()) throw Error(ErrorCode::Parse, "ChartQA annotations must be a JSON array");
    auto pick = [](const Json& j, const char* a, const char* b, const std::string& where) {
        if (j.contains(a)) return detail::text_field(j, a, where);
        return detail::text_field(j, b, where);
    };
    ChartNativeLoad out;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const Json& e = annotations[i];
        const std::string where = "annotations[" + std::to_string(i) + "]";
        if (!e.is_object()) throw Error(ErrorCode::MalformedRecord, where + ": expected an object");
        const std::string image = pick(e, "image_id", "imgname", where);
        const std::string question = pick(e, "question", "query", where);
        const std::string answer = pick(e, "answer", "label", where);
        if (image.empty() || question.empty()) {
            throw Error(ErrorCode::MalformedRecord, where + ": needs image, question and answer");
        }
        if (!fs::is_regular_file(image_dir / image)) {
            out.missing_images.push_back({i, image});
            continue;
        }
        UnifiedSample s;
        s.sample_id = fs::path(image).stem().string() + "_" + std::to_string(i);
        s.dataset = Dataset::chartqa;
        s.split = split;
        s.question = question;
        s.answer = answer;
        s.image_ref = image;
        s.lecture = std::string(kNotAvailable);
        s.solution = std::string(kNotAvailable);
        s.rationales = {std::string(kNotAvailable)};
        out.samples.push_back(std::move(s));
    }
    return out;
}

} // namespace cotkit

#endif
