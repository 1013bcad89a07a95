#ifndef COTKIT_AOKVQA_HPP
#define COTKIT_AOKVQA_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

inline constexpr std::size_t kVisionFeatureDim = 1024;

struct RecordOrigin {
    std::string file;
    std::size_t row = 0;

    std::string ref() const { return file + "#" + std::to_string(row); }
};

struct AokvqaRecord {
    std::string question_id;
    std::string image_id;
    std::string question;
    std::vector<std::string> choices;
    long long correct_choice_idx = 0;
    std::vector<std::string> rationales;
    std::string image_bytes; // opaque, never decoded here
    RecordOrigin origin;
};

struct VisionFeature {
    std::string sample_id;
    std::vector<double> vector;
};

/// question_id -> caption
using CaptionMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Conversion

inline UnifiedSample convert_aokvqa_record(const AokvqaRecord& r, Split split) {
    if (r.choices.size() < 2) {
        throw Error(ErrorCode::EmptyChoices, "question " + r.question_id + " has " +
                                                 std::to_string(r.choices.size()) + " choices, need at least 2");
    }
    if (r.correct_choice_idx < 0 || static_cast<std::size_t>(r.correct_choice_idx) >= r.choices.size()) {
        throw Error(ErrorCode::ChoiceIndexOutOfRange,
                    "question " + r.question_id + ": correct_choice_idx " +
                        std::to_string(r.correct_choice_idx) + " with " + std::to_string(r.choices.size()) +
                        " choices");
    }
    UnifiedSample s;
    s.sample_id = r.question_id;
    s.dataset = Dataset::aokvqa;
    s.split = split;
    s.question = r.question;
    s.choices = r.choices;
    s.answer = r.choices[static_cast<std::size_t>(r.correct_choice_idx)];
    s.rationales = r.rationales;
    s.image_ref = r.origin.ref();
    return s;
}

struct RejectedRecord {
    std::string question_id;
    RecordOrigin origin;
    ErrorCode code = ErrorCode::MalformedRecord;
    std::string message;
};

struct AokvqaConversion {
    std::vector<UnifiedSample> samples;
    std::vector<RejectedRecord> rejected;
};

/// |samples| + |rejected| == |records|, always.
inline AokvqaConversion convert_aokvqa(const std::vector<AokvqaRecord>& records, Split split) {
    AokvqaConversion out;
    out.samples.reserve(records.size());
    for (const auto& r : records) {
        try {
            out.samples.push_back(convert_aokvqa_record(r, split));
        } catch (const Error& e) {
            out.rejected.push_back({r.question_id, r.origin, e.code(), e.what()});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Columnar record adapter. The parquet shards are exported one row per line
// as JSON (train-*.jsonl, validation-*.jsonl, test-*.jsonl); this is the only
// code that knows about the shard naming and row layout.

inline std::string shard_prefix(Split split) {
    switch (split) {
    case Split::train: return "train-";
    case Split::val: return "validation-";
    case Split::test: return "test-";
    }
    return "";
}

inline std::vector<fs::path> find_record_shards(const fs::path& dir, Split split) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorCode::Io, "record directory not found: " + dir.string());
    }
    const std::string prefix = shard_prefix(split);
    std::vector<fs::path> shards;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ".jsonl") {
            shards.push_back(entry.path());
        }
    }
    std::sort(shards.begin(), shards.end());
    return shards;
}

inline AokvqaRecord record_from_json(const Json& j, RecordOrigin origin) {
    const std::string where = origin.ref();
    if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, where + ": expected an object");
    AokvqaRecord r;
    r.origin = std::move(origin);
    r.question_id = detail::text_field(j, "question_id", where);
    r.image_id = detail::text_field(j, "image_id", where);
    r.question = detail::text_field(j, "question", where);
    r.choices = detail::text_list_field(j, "choices", where);
    r.rationales = detail::text_list_field(j, "rationales", where);
    if (r.question_id.empty()) throw Error(ErrorCode::MalformedRecord, where + ": missing question_id");
    auto idx = j.find("correct_choice_idx");
    if (idx == j.end() || !idx->is_number_integer()) {
        throw Error(ErrorCode::MalformedRecord, where + ": correct_choice_idx must be an integer");
    }
    r.correct_choice_idx = idx->get<long long>();
    if (auto img = j.find("image"); img != j.end() && img->is_object() && img->contains("bytes") &&
                                    (*img)["bytes"].is_string()) {
        r.image_bytes = (*img)["bytes"].get<std::string>();
    } else if (auto raw = j.find("image_bytes"); raw != j.end() && raw->is_string()) {
        r.image_bytes = raw->get<std::string>();
    }
    return r;
}

inline std::vector<AokvqaRecord> read_aokvqa_shard(const fs::path& shard) {
    std::vector<AokvqaRecord> out;
    const std::string name = shard.filename().string();
    std::size_t row = 0;
    for_each_jsonl(read_file(shard), shard.string(), [&](std::size_t, const Json& j) {
        out.push_back(record_from_json(j, {name, row++}));
    });
    return out;
}

inline std::vector<AokvqaRecord> read_aokvqa_records(const fs::path& dir, Split split) {
    std::vector<AokvqaRecord> out;
    for (const auto& shard : find_record_shards(dir, split)) {
        auto part = read_aokvqa_shard(shard);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sidecars

struct CaptionLoad {
    CaptionMap captions;
    std::vector<std::string> blank_ids; // dropped: caption empty after strip
};

/// Accepts either {"qid": "caption", ...} or [{"question_id":..,"caption":..}, ...].
inline CaptionLoad captions_from_json(const Json& doc) {
    CaptionLoad out;
    auto add = [&](const std::string& id, const std::string& caption) {
        const bool blank = std::all_of(caption.begin(), caption.end(),
                                       [](char c) { return is_ascii_space(static_cast<unsigned char>(c)); });
        if (blank) {
            out.blank_ids.push_back(id);
        } else {
            out.captions.emplace(id, caption);
        }
    };
    if (doc.is_object()) {
        for (const auto& [id, v] : doc.items()) {
            if (!v.is_string()) throw Error(ErrorCode::MalformedRecord, "caption for " + id + " is not a string");
            add(id, v.get<std::string>());
        }
    } else if (doc.is_array()) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const std::string where = "captions[" + std::to_string(i) + "]";
            add(detail::text_field(doc[i], "question_id", where), detail::text_field(doc[i], "caption", where));
        }
    } else {
        throw Error(ErrorCode::Parse, "caption map must be a JSON object or array");
    }
    return out;
}

struct FeatureReject {
    std::size_t index = 0;
    std::string sample_id;
    std::string reason;
};

namespace detail {

// SAX handler for [{"sample_id": "...", "vector": [..]}, ...]; holds at most
// one feature in memory at a time.
class FeatureSax : public nlohmann::json_sax<nlohmann::json> {
public:
    FeatureSax(std::size_t dim, const std::function<void(VisionFeature&&)>& sink,
               std::vector<FeatureReject>& rejects)
        : dim_(dim), sink_(sink), rejects_(rejects) {}

    bool null() override { return scalar(); }
    bool boolean(bool) override { return scalar(); }
    bool number_integer(number_integer_t v) override { return number(static_cast<double>(v)); }
    bool number_unsigned(number_unsigned_t v) override { return number(static_cast<double>(v)); }
    bool number_float(number_float_t v, const string_t&) override { return number(v); }
    bool string(string_t& v) override {
        if (depth_ == 2 && key_ == "sample_id") current_.sample_id = v;
        else if (depth_ == 3 && key_ == "vector") vector_ok_ = false;
        return scalar();
    }
    bool binary(binary_t&) override { return scalar(); }

    bool start_object(std::size_t) override {
        ++depth_;
        if (depth_ == 1) return fail("top level must be an array");
        if (depth_ == 2) {
            current_ = {};
            vector_ok_ = true;
            saw_vector_ = false;
        } else if (depth_ == 3 && key_ == "vector") {
            vector_ok_ = false;
        }
        return true;
    }
    bool end_object() override {
        if (depth_ == 2) emit();
        --depth_;
        return true;
    }
    bool start_array(std::size_t) override {
        ++depth_;
        if (depth_ == 3 && key_ == "vector") saw_vector_ = true;
        else if (depth_ == 4 && key_ == "vector") vector_ok_ = false;
        return true;
    }
    bool end_array() override {
        --depth_;
        return true;
    }
    bool key(string_t& k) override {
        if (depth_ == 2) key_ = k;
        return true;
    }
    bool parse_error(std::size_t pos, const std::string&, const nlohmann::detail::exception& e) override {
        error_ = "at byte " + std::to_string(pos) + ": " + e.what();
        return false;
    }

    const std::string& error() const { return error_; }

private:
    bool scalar() { return depth_ >= 1 || fail("top level must be an array"); }
    bool number(double v) {
        if (depth_ == 3 && key_ == "vector") current_.vector.push_back(v);
        return scalar();
    }
    bool fail(const std::string& why) {
        error_ = why;
        return false;
    }
    void emit() {
        std::string reason;
        if (current_.sample_id.empty()) reason = "missing sample_id";
        else if (!saw_vector_ || !vector_ok_) reason = "vector must be a flat array of numbers";
        else if (current_.vector.size() != dim_)
            reason = "dimension " + std::to_string(current_.vector.size()) + " != " + std::to_string(dim_);
        else if (!std::all_of(current_.vector.begin(), current_.vector.end(),
                              [](double x) { return std::isfinite(x); }))
            reason = "non-finite entry";
        if (reason.empty()) {
            sink_(std::move(current_));
        } else {
            rejects_.push_back({index_, current_.sample_id, reason});
        }
        ++index_;
        current_ = {};
    }

    std::size_t dim_;
    const std::function<void(VisionFeature&&)>& sink_;
    std::vector<FeatureReject>& rejects_;
    std::size_t depth_ = 0;
    std::size_t index_ = 0;
    std::string key_;
    VisionFeature current_;
    bool vector_ok_ = true;
    bool saw_vector_ = false;
    std::string error_;
};

} // namespace detail

/// Streams a feature sidecar, calling `sink` for each valid entry. Entries
/// with the wrong dimension or non-finite values are returned as rejects;
/// a syntactically broken document throws Parse.
inline std::vector<FeatureReject> stream_features(std::istream& in, const std::function<void(VisionFeature&&)>& sink,
                                                  std::size_t dim = kVisionFeatureDim, const std::string& origin = "features") {
    std::vector<FeatureReject> rejects;
    detail::FeatureSax handler(dim, sink, rejects);
    const bool ok = nlohmann::json::sax_parse(in, &handler);
    if (!ok) throw Error(ErrorCode::Parse, origin + ": " + handler.error());
    return rejects;
}

struct FeatureLoad {
    std::vector<VisionFeature> features;
    std::vector<FeatureReject> rejected;
};

inline FeatureLoad read_features(const fs::path& path, std::size_t dim = kVisionFeatureDim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    FeatureLoad out;
    out.rejected = stream_features(
        in, [&](VisionFeature&& f) { out.features.push_back(std::move(f)); }, dim, path.string());
    return out;
}

struct SidecarStatus {
    std::string sample_id;
    bool has_caption = false;
    bool has_feature = false;

    std::string label() const {
        if (has_caption && has_feature) return "matched";
        if (!has_caption && !has_feature) return "caption-missing,feature-missing";
        return has_caption ? "feature-missing" : "caption-missing";
    }
};

struct DuplicateSidecarKey {
    std::string kind; // "feature"
    std::string key;
    std::size_t kept_index = 0;
    std::size_t dropped_index = 0;
};

struct SidecarReport {
    std::vector<SidecarStatus> entries; // one per input sample, same order
    std::vector<DuplicateSidecarKey> duplicates;
    std::vector<std::string> unused_captions;
    std::vector<std::string> unused_features;

    std::size_t matched() const {
        return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                      [](const auto& e) { return e.has_caption && e.has_feature; }));
    }
    std::size_t caption_missing() const {
        return static_cast<std::size_t>(
            std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.has_caption; }));
    }
    std::size_t feature_missing() const {
        return static_cast<std::size_t>(
            std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.has_feature; }));
    }
};

struct AttachResult {
    std::vector<UnifiedSample> samples;
    SidecarReport report;
    std::map<std::string, std::size_t> feature_index; // sample_id -> index into the features input
};

/// Joins captions and features onto samples by id. No sample is dropped;
/// duplicate feature ids keep the first occurrence.
inline AttachResult attach_sidecars(std::vector<UnifiedSample> samples, const CaptionMap& captions,
                                    const std::vector<VisionFeature>& features) {
    AttachResult out;
    for (std::size_t i = 0; i < features.size(); ++i) {
        auto [it, inserted] = out.feature_index.emplace(features[i].sample_id, i);
        if (!inserted) out.report.duplicates.push_back({"feature", features[i].sample_id, it->second, i});
    }
    std::set<std::string> used;
    for (auto& s : samples) {
        SidecarStatus st{s.sample_id};
        if (auto c = captions.find(s.sample_id); c != captions.end()) {
            s.caption = c->second;
            st.has_caption = true;
        }
        st.has_feature = out.feature_index.count(s.sample_id) > 0;
        used.insert(s.sample_id);
        out.report.entries.push_back(std::move(st));
    }
    for (const auto& [id, _] : captions) {
        if (!used.count(id)) out.report.unused_captions.push_back(id);
    }
    for (auto it = out.feature_index.begin(); it != out.feature_index.end();) {
        if (!used.count(it->first)) {
            out.report.unused_features.push_back(it->first);
            it = out.feature_index.erase(it);
        } else {
            ++it;
        }
    }
    out.samples = std::move(samples);
    return out;
}

} // namespace cotkit

#endif
