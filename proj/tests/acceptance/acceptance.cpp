// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero iff any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <cotkit/cotkit.hpp>

#include "../golden_metrics.hpp"

namespace fs = std::filesystem;
using namespace cotkit;

namespace {

const std::string kFixtures = COTKIT_FIXTURES;
const std::string kCli = COTKIT_CLI;

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::pass;
    std::string detail;
};

struct Check {
    int id;
    std::string name;
    double time_limit_s; // 0 = none
    std::function<Outcome()> body;
};

Outcome fail(std::string why) { return {Verdict::fail, std::move(why)}; }

// ---------------------------------------------------------------------------

std::string frequency_oracle(const std::vector<std::string>& answers) {
    std::map<std::string, int> freq;
    for (const auto& a : answers) freq[normalize(a).text] += 1;
    int top = 0;
    for (const auto& [_, n] : freq) top = std::max(top, n);
    std::vector<std::string> leaders;
    for (const auto& [text, n] : freq)
        if (n == top) leaders.push_back(text);
    return *std::min_element(leaders.begin(), leaders.end());
}

Outcome majority_vote_oracle() {
    std::mt19937_64 rng(20240601);
    const std::string letters = "abcdef";
    std::size_t agree = 0;
    const std::size_t n = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t alphabet = 1 + rng() % 6;
        std::vector<std::string> answers(1 + rng() % 10);
        for (auto& a : answers) {
            a = std::string(1, letters[rng() % alphabet]);
            if (rng() % 3 == 0) a[0] = static_cast<char>(a[0] - 'a' + 'A');
            if (rng() % 4 == 0) a += ".";
        }
        agree += majority_vote(answers).canonical == frequency_oracle(answers);
    }
    if (agree != n) return fail(std::to_string(agree) + "/" + std::to_string(n) + " agree");
    return {Verdict::pass, "1000/1000 agree"};
}

Outcome metric_golden_table() {
    const auto cases = golden::table();
    std::size_t ok = 0;
    std::string first_bad;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const double got = golden::evaluate(cases[i]);
        const bool pass = golden::tolerance(cases[i]) == 0.0 ? got == cases[i].expected
                                                             : std::abs(got - cases[i].expected) <= golden::tolerance(cases[i]);
        if (pass) ++ok;
        else if (first_bad.empty()) first_bad = "case " + std::to_string(i) + " got " + std::to_string(got);
    }
    const bool anchors = std::abs(token_f1("red apple", "apple") - 2.0 / 3.0) <= 1e-12 &&
                         consensus_from_matches(2) == 0.6 && numeric_accuracy(3.01, 3.0, NumericMode::absolute, 0.02) == 1;
    if (cases.size() != 30 || ok != cases.size() || !anchors) {
        return fail(std::to_string(ok) + "/" + std::to_string(cases.size()) + " " + first_bad);
    }
    return {Verdict::pass, "30/30 cases"};
}

Outcome lr_schedule() {
    const std::int64_t total = 5000;
    const train::ScheduleConfig cfg{5e-5, total, train::warmup_steps(total)};
    const auto w = cfg.warmup_steps;
    std::vector<std::string> bad;
    if (train::lr_at(0, cfg) != 0.0) bad.push_back("lr(0)");
    if (train::lr_at(w, cfg) != cfg.lr_max) bad.push_back("lr(W)");
    if (!(train::lr_at(total, cfg) <= 1e-12 * cfg.lr_max)) bad.push_back("lr(T)");
    // right limit at W from the decay branch
    const double right = cfg.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * 1e-12));
    if (std::abs(right - train::lr_at(w, cfg)) > 1e-12) bad.push_back("continuity");
    double prev = train::lr_at(w, cfg);
    for (int k = 1; k <= 1000; ++k) {
        const auto t = w + (total - w) * k / 1000;
        const double v = train::lr_at(t, cfg);
        if (v > prev) {
            bad.push_back("monotone at " + std::to_string(t));
            break;
        }
        prev = v;
    }
    if (train::warmup_steps(5000) != 500) bad.push_back("warmup(5000)");
    if (train::warmup_steps(200) != 100) bad.push_back("warmup(200)");
    if (!bad.empty()) {
        std::string s;
        for (const auto& b : bad) s += b + " ";
        return fail(s);
    }
    return {Verdict::pass, "W=500, 1000 decay samples monotone"};
}

Outcome effective_batch_check() {
    if (train::effective_batch(1, 2, 4) != 8) return fail("(1,2,4) != 8");
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        const auto a = 1 + static_cast<std::int64_t>(rng() % 64), b = 1 + static_cast<std::int64_t>(rng() % 16),
                   c = 1 + static_cast<std::int64_t>(rng() % 32);
        if (train::effective_batch(a, b, c) != a * b * c) return fail("triple " + std::to_string(i));
    }
    return {Verdict::pass, "51 triples"};
}

Outcome gated_fusion_gradcheck() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto inst = fusion::random_instance(1000 + seed);
        worst = std::max(worst, fusion::check_gated_fusion(inst.h_text, inst.h_img, inst.params, inst.upstream, 1e-4)
                                    .max_rel_error);
    }
    if (!(worst < 1e-5)) return fail("max relative error " + std::to_string(worst));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    fusion::FusionParams<double> zero;
    zero.gate_weights = fusion::Matrix<double>::Zero(6, 6);
    fusion::Matrix<double> t(3, 6), img(3, 6);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = u(rng), img.data()[k] = u(rng);
    const auto out = fusion::gated_fuse_forward(t, img, zero).output;
    for (Eigen::Index k = 0; k < t.size(); ++k) {
        if (out.data()[k] != 0.5 * img.data()[k] + t.data()[k]) return fail("W_g = 0 case not exact");
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max rel error %.2e over 100 instances", worst);
    return {Verdict::pass, buf};
}

Outcome concat_shape_law() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index d_text = 1 + static_cast<Eigen::Index>(rng() % 8), d_img = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Eigen::Index T = 1 + static_cast<Eigen::Index>(rng() % 16), V = static_cast<Eigen::Index>(rng() % 17);
        const auto params = fusion::FusionParams<double>::seeded(d_text, d_img, rng());
        fusion::Matrix<double> text(T, d_text), vision(V, d_img);
        for (Eigen::Index k = 0; k < text.size(); ++k) text.data()[k] = u(rng);
        for (Eigen::Index k = 0; k < vision.size(); ++k) vision.data()[k] = u(rng);
        std::vector<int> mask(static_cast<std::size_t>(T));
        for (auto& m : mask) m = static_cast<int>(rng() % 2);
        const auto r = fusion::project_and_concat(text, vision, mask, params);
        if (r.sequence.rows() != T + V || r.mask.size() != static_cast<std::size_t>(T + V)) return fail("row count");
        if (!std::equal(mask.begin(), mask.end(), r.mask.begin())) return fail("text mask altered");
        if (!std::all_of(r.mask.begin() + T, r.mask.end(), [](int m) { return m == 1; })) return fail("vision mask");
        if (std::memcmp(r.sequence.data(), text.data(), sizeof(double) * static_cast<std::size_t>(text.size())) != 0) {
            return fail("text span not bitwise preserved");
        }
    }
    return {Verdict::pass, "200 randomized shapes"};
}

Outcome checkpoint_policy() {
    train::CheckpointManager m({500, 3, train::MetricDirection::maximize});
    const std::array<double, 20> metrics = {0.10, 0.35, 0.20, 0.50, 0.45, 0.30, 0.55, 0.50, 0.15, 0.60,
                                            0.25, 0.50, 0.40, 0.05, 0.58, 0.33, 0.50, 0.10, 0.20, 0.59};
    std::vector<train::CheckpointAction> log;
    std::vector<std::pair<double, std::int64_t>> saved;
    for (std::size_t k = 0; k < metrics.size(); ++k) {
        const std::int64_t step = 250 * static_cast<std::int64_t>(k + 1);
        for (auto& a : m.step(step, metrics[k])) log.push_back(a);
        if (step % 500 == 0) saved.emplace_back(metrics[k], step);
    }
    std::sort(saved.begin(), saved.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    std::vector<std::int64_t> expected, got;
    for (std::size_t i = 0; i < 3; ++i) expected.push_back(saved[i].second);
    for (const auto& c : m.retained()) got.push_back(c.step);
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    if (got != expected) return fail("retained set differs from best-by-metric");
    auto replayed = train::CheckpointManager::replay(train::parse_action_log(train::serialize_action_log(log)));
    std::vector<std::int64_t> replay_steps;
    for (const auto& c : replayed) replay_steps.push_back(c.step);
    std::sort(replay_steps.begin(), replay_steps.end());
    if (replay_steps != got) return fail("replay mismatch");
    std::string s = "retained";
    for (auto st : got) s += " " + std::to_string(st);
    return {Verdict::pass, s};
}

Outcome chartqa_synthesis() {
    const std::vector<TemplateId> all(std::begin(kAllTemplates), std::end(kAllTemplates));
    const auto a = synthesize_corpus(kFixtures + "/chartqa/tables", all, 42, Split::train, 1);
    const auto b = synthesize_corpus(kFixtures + "/chartqa/tables", all, 42, Split::train, 2);
    if (serialize_samples(a.samples) != serialize_samples(b.samples)) return fail("unified JSON differs between runs");
    std::vector<Json> qa_a, qa_b;
    for (const auto& q : a.qas) qa_a.push_back(to_json(q));
    for (const auto& q : b.qas) qa_b.push_back(to_json(q));
    if (dump_jsonl(qa_a) != dump_jsonl(qa_b)) return fail("QA provenance differs between runs");

    // recompute every answer from its provenance cells
    std::map<std::string, ChartTable> tables;
    for (const auto& q : a.qas) {
        auto it = tables.find(q.provenance.table_path);
        if (it == tables.end()) {
            it = tables.emplace(q.provenance.table_path,
                                parse_chart_csv(read_file(kFixtures + "/chartqa/tables/" + q.provenance.table_path),
                                                q.provenance.table_path))
                     .first;
        }
        const auto& t = it->second;
        const auto col = std::find_if(t.value_columns.begin(), t.value_columns.end(),
                                      [&](const ValueColumn& c) { return c.name == q.provenance.column; });
        if (col == t.value_columns.end()) return fail("unknown column " + q.provenance.column);
        std::vector<double> finite;
        for (const auto& v : col->values)
            if (v) finite.push_back(*v);
        const auto& rows = q.provenance.rows;
        std::string expected;
        char buf[64];
        switch (q.template_id) {
        case TemplateId::argmax_label:
            if (*col->values[rows[0]] != *std::max_element(finite.begin(), finite.end())) return fail("argmax row");
            expected = t.categories[rows[0]];
            break;
        case TemplateId::argmin_label:
            if (*col->values[rows[0]] != *std::min_element(finite.begin(), finite.end())) return fail("argmin row");
            expected = t.categories[rows[0]];
            break;
        case TemplateId::max_value:
            if (*col->values[rows[0]] != *std::max_element(finite.begin(), finite.end())) return fail("max row");
            expected = format_number(*col->values[rows[0]]);
            break;
        case TemplateId::min_value:
            if (*col->values[rows[0]] != *std::min_element(finite.begin(), finite.end())) return fail("min row");
            expected = format_number(*col->values[rows[0]]);
            break;
        case TemplateId::ratio:
            std::snprintf(buf, sizeof buf, "%.2f", std::round(100.0 * *col->values[rows[0]] / *col->values[rows[1]]) / 100.0 + 0.0);
            expected = buf;
            break;
        }
        if (expected != q.answer) return fail(q.question + " expected " + expected + " got " + q.answer);
    }

    const auto table = parse_chart_csv("year,value\n2019,3\n2020,7\n2021,5\n", "fixture.csv");
    const auto argmax = synthesize_qa(table, {TemplateId::argmax_label}, 42);
    if (argmax.size() != 1 || argmax[0].answer != "2020") return fail("argmax fixture did not yield 2020");
    return {Verdict::pass, std::to_string(a.qas.size()) + " QA pairs recomputed, argmax 2020"};
}

Outcome okvqa_scale() {
    const char* env = std::getenv("COTKIT_OKVQA_DIR");
    if (!env || !*env) {
        const auto r = ingest_okvqa(read_json_file(kFixtures + "/okvqa/questions_train.json"),
                                    read_json_file(kFixtures + "/okvqa/annotations_train.json"), Split::train);
        if (r.samples.size() != 3) return fail("fixture ingest gave " + std::to_string(r.samples.size()));
        return {Verdict::skip, "COTKIT_OKVQA_DIR unset; fixture ingest ok (3 samples)"};
    }
    const fs::path root = env;
    std::string summary;
    std::size_t checked = 0;
    for (Split split : {Split::train, Split::val, Split::test}) {
        const std::string s(to_string(split));
        const fs::path q = root / ("OpenEnded_mscoco_" + s + "2014_questions.json");
        const fs::path a = root / ("mscoco_" + s + "2014_annotations.json");
        if (!fs::exists(q) || !fs::exists(a)) continue;
        const auto r = ingest_okvqa(read_json_file(q), read_json_file(a), split);
        const std::size_t want = expected_question_count(split);
        summary += s + "=" + std::to_string(r.samples.size()) + " ";
        if (r.samples.size() != want) return fail(summary + "(expected " + std::to_string(want) + ")");
        ++checked;
    }
    if (checked == 0) return {Verdict::skip, "no OK-VQA split files under " + root.string()};
    return {Verdict::pass, summary};
}

int run_cli(const std::string& args) {
    const std::string cmd = "'" + kCli + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end_golden() {
    const fs::path root = fs::temp_directory_path() / "cotkit_acceptance_e2e";
    fs::remove_all(root);
    auto pipeline = [&](const fs::path& dir, unsigned workers) -> std::string {
        const std::string w = " --workers " + std::to_string(workers);
        const std::string d = dir.string();
        struct Leg {
            std::string ingest, unified, preds;
        };
        const std::vector<Leg> legs = {
            {"--dataset okvqa --split train --questions " + kFixtures + "/okvqa/questions_train.json --annotations " +
                 kFixtures + "/okvqa/annotations_train.json",
             d + "/okvqa.json", kFixtures + "/predictions/okvqa_train.jsonl"},
            {"--dataset aokvqa --split val --records-dir " + kFixtures + "/aokvqa/records --captions " + kFixtures +
                 "/aokvqa/captions_val.json --features " + kFixtures + "/aokvqa/features_val.json",
             d + "/aokvqa.json", kFixtures + "/predictions/aokvqa_val.jsonl"},
            {"--dataset chartqa --split train --tables-dir " + kFixtures + "/chartqa/tables", d + "/chartqa.json",
             kFixtures + "/predictions/chartqa_train.jsonl"},
        };
        for (std::size_t k = 0; k < legs.size(); ++k) {
            const auto& leg = legs[k];
            const std::string tag = std::to_string(k);
            if (run_cli("ingest " + leg.ingest + w + " --out " + leg.unified) != 0) return "ingest " + tag + " failed";
            if (run_cli("prompts --unified " + leg.unified + " --rationale-source gt --out " + d + "/prompts" + tag +
                        ".jsonl") != 0)
                return "prompts " + tag + " failed";
            if (run_cli("score --unified " + leg.unified + " --predictions " + leg.preds + w + " --out " + d + "/report" +
                        tag) != 0)
                return "score " + tag + " failed";
        }
        return {};
    };
    const auto t0 = std::chrono::steady_clock::now();
    for (auto [name, workers] : {std::pair{"a", 1u}, std::pair{"b", 3u}}) {
        if (auto err = pipeline(root / name, workers); !err.empty()) return fail(err);
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), root / "a");
        const auto other = root / "b" / rel;
        if (!fs::exists(other) || read_file(entry.path()) != read_file(other)) {
            return fail("output differs: " + rel.generic_string());
        }
        ++compared;
    }
    if (compared != 3 + 3 + 6) return fail("expected 12 output files, found " + std::to_string(compared));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fs::remove_all(root);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu files byte-identical across 2 runs (%.2f s)", compared, secs);
    return {Verdict::pass, buf};
}

} // namespace

int main() {
    const std::vector<Check> checks = {
        {1, "majority-vote oracle equivalence", 5.0, majority_vote_oracle},
        {2, "metric golden table", 0.0, metric_golden_table},
        {3, "learning-rate schedule", 0.0, lr_schedule},
        {4, "effective batch", 0.0, effective_batch_check},
        {5, "gated-fusion gradient check", 10.0, gated_fusion_gradcheck},
        {6, "concat-fusion shape law", 0.0, concat_shape_law},
        {7, "checkpoint retention policy", 0.0, checkpoint_policy},
        {8, "chart QA synthesis determinism", 0.0, chartqa_synthesis},
        {9, "OK-VQA dataset scale", 0.0, okvqa_scale},
        {10, "end-to-end golden run", 30.0, end_to_end_golden},
    };
    int failures = 0;
    for (const auto& c : checks) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.verdict != Verdict::fail && c.time_limit_s > 0 && secs >= c.time_limit_s) {
            o = fail("took " + std::to_string(secs) + " s, limit " + std::to_string(c.time_limit_s) + " s");
        }
        const char* label = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::skip ? "SKIP" : "FAIL";
        failures += o.verdict == Verdict::fail;
        std::printf("%s %2d %-34s %s [%.3f s]\n", label, c.id, c.name.c_str(), o.detail.c_str(), secs);
    }
    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
