// Command-line front end: ingest, prompts, score, lr-curve, fusion-check.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <cotkit/cotkit.hpp>

namespace {

using namespace cotkit;

int emit(const CommandResult& r) {
    if (!r.summary.empty()) {
        auto& stream = r.exit_code == kExitIoOrConfig ? std::cerr : std::cout;
        stream << r.summary;
        if (r.summary.back() != '\n') stream << '\n';
    }
    return r.exit_code;
}

struct RawOptions {
    std::string dataset = "okvqa";
    std::string split = "train";
    std::string numeric_mode = "absolute";
    std::string rationale_source = "none";
    std::vector<std::string> templates;
    double fail_below = -1.0;
};

void add_common(CLI::App* cmd, RunConfig& cfg, RawOptions& raw) {
    cmd->add_option("--dataset", raw.dataset, "okvqa | aokvqa | chartqa")->check(CLI::IsMember({"okvqa", "aokvqa", "chartqa"}));
    cmd->add_option("--split", raw.split, "train | val | test")->check(CLI::IsMember({"train", "val", "validation", "test"}));
    cmd->add_option("--seed", cfg.seed, "seed for every seeded operation")->capture_default_str();
    cmd->add_option("--workers", cfg.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

RunConfig finish(RunConfig cfg, const RawOptions& raw) {
    cfg.dataset = parse_dataset(raw.dataset);
    cfg.split = parse_split(raw.split);
    cfg.metrics.mode = parse_numeric_mode(raw.numeric_mode);
    if (!raw.templates.empty()) {
        cfg.templates.clear();
        for (const auto& t : raw.templates) cfg.templates.push_back(parse_template_id(t));
    }
    if (raw.rationale_source == "none") cfg.rationale_source = RationaleSource::none;
    else if (raw.rationale_source == "gt") cfg.rationale_source = RationaleSource::ground_truth;
    else cfg.rationale_source = RationaleSource::file;
    if (raw.fail_below >= 0.0) cfg.fail_below = raw.fail_below;
    return cfg;
}

int run_lr_curve(std::int64_t total, std::int64_t warmup, double lr_max, std::int64_t points) {
    train::ScheduleConfig sc{lr_max, total, warmup > 0 ? warmup : train::warmup_steps(total)};
    sc.validate();
    std::printf("step\tlr\n");
    points = std::max<std::int64_t>(points, 2);
    std::int64_t prev = -1;
    for (std::int64_t k = 0; k < points; ++k) {
        const std::int64_t t = k * total / (points - 1);
        if (t == prev) continue;
        prev = t;
        std::printf("%lld\t%.10e\n", static_cast<long long>(t), train::lr_at(t, sc));
    }
    return kExitOk;
}

int run_fusion_check(std::uint64_t seed, int instances, double tolerance, const std::string& dump) {
    double worst = 0.0;
    std::size_t entries = 0;
    for (int k = 0; k < instances; ++k) {
        const auto inst = fusion::random_instance(seed + static_cast<std::uint64_t>(k));
        const auto r = fusion::check_gated_fusion(inst.h_text, inst.h_img, inst.params, inst.upstream);
        worst = std::max(worst, r.max_rel_error);
        entries += r.entries;
    }
    std::printf("%d instances, %zu entries, max relative error %.3e (tolerance %.1e)\n", instances, entries, worst,
                tolerance);
    if (!dump.empty()) {
        const auto inst = fusion::random_instance(seed);
        const auto tape = fusion::gated_fuse_forward(inst.h_text, inst.h_img, inst.params);
        Json j = Json::object();
        j["seed"] = seed;
        j["gate"] = fusion::matrix_to_json(tape.gate);
        j["output"] = fusion::matrix_to_json(tape.output);
        write_file_atomic(dump, j.dump(2) + "\n");
    }
    return worst <= tolerance ? kExitOk : kExitBelowThreshold;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cotkit: VQA dataset harmonization, prompting and scoring"};
    app.require_subcommand(1);

    RunConfig cfg;
    RawOptions raw;

    auto* ingest = app.add_subcommand("ingest", "convert a source dataset to the unified JSON schema");
    add_common(ingest, cfg, raw);
    ingest->add_option("--questions", cfg.questions, "OK-VQA questions JSON");
    ingest->add_option("--annotations", cfg.annotations, "OK-VQA annotations or ChartQA native annotations JSON");
    ingest->add_option("--records-dir", cfg.records_dir, "A-OKVQA JSONL shard directory");
    ingest->add_option("--captions", cfg.captions, "A-OKVQA caption sidecar JSON");
    ingest->add_option("--features", cfg.features, "A-OKVQA vision feature sidecar JSON");
    ingest->add_option("--tables-dir", cfg.tables_dir, "ChartQA CSV table directory (synthesis mode)");
    ingest->add_option("--image-dir", cfg.image_dir, "ChartQA image directory (native mode)");
    ingest->add_option("--templates", raw.templates, "ChartQA templates to synthesize")->delimiter(',');
    ingest->add_option("--out", cfg.output, "output unified JSON (default data/<dataset>/<split>.json)");
    ingest->add_option("--data-root", cfg.out_dir, "root for the default output path")->capture_default_str();

    auto* prompts = app.add_subcommand("prompts", "dump two-stage prompts as JSON lines");
    add_common(prompts, cfg, raw);
    prompts->add_option("--unified", cfg.unified, "unified JSON")->required();
    prompts->add_option("--out", cfg.output, "output JSONL")->required();
    prompts->add_option("--rationale-source", raw.rationale_source, "none | gt | file")
        ->check(CLI::IsMember({"none", "gt", "file"}))
        ->capture_default_str();
    prompts->add_option("--rationales", cfg.rationales, "JSONL {sample_id, rationale} for --rationale-source file");

    auto* score = app.add_subcommand("score", "score predictions against a unified file");
    add_common(score, cfg, raw);
    score->add_option("--unified", cfg.unified, "unified JSON")->required();
    score->add_option("--predictions", cfg.predictions, "JSONL {sample_id, output}")->required();
    score->add_option("--embeddings", cfg.embeddings, "JSONL {id, vector} keyed by normalized answer text");
    score->add_option("--out", cfg.out_dir, "output directory for report.json and report.txt")->required();
    score->add_option("--epsilon", cfg.metrics.epsilon, "numeric tolerance")->capture_default_str();
    score->add_option("--numeric-mode", raw.numeric_mode, "absolute | relative")
        ->check(CLI::IsMember({"absolute", "relative"}))
        ->capture_default_str();
    score->add_option("--consensus-cap", cfg.metrics.consensus_cap, "consensus score cap")->capture_default_str();
    score->add_option("--fail-below", raw.fail_below, "exit 1 when EM (%) falls below this value");

    std::int64_t total = 5000, warmup = 0, points = 21;
    double lr_max = 5e-5;
    auto* lr = app.add_subcommand("lr-curve", "print the warmup + cosine learning-rate curve");
    lr->add_option("--total-steps", total)->capture_default_str()->check(CLI::PositiveNumber);
    lr->add_option("--warmup-steps", warmup, "default: 10% of total, at least 100");
    lr->add_option("--lr-max", lr_max)->capture_default_str();
    lr->add_option("--points", points)->capture_default_str();

    int instances = 100;
    double tolerance = 1e-5;
    std::string dump;
    auto* fc = app.add_subcommand("fusion-check", "finite-difference check of the gated fusion gradients");
    fc->add_option("--seed", cfg.seed)->capture_default_str();
    fc->add_option("--instances", instances)->capture_default_str()->check(CLI::PositiveNumber);
    fc->add_option("--tolerance", tolerance)->capture_default_str();
    fc->add_option("--dump", dump, "write the first instance's forward pass as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitIoOrConfig;
    }

    try {
        if (lr->parsed()) return run_lr_curve(total, warmup, lr_max, points);
        if (fc->parsed()) return run_fusion_check(cfg.seed, instances, tolerance, dump);
        const RunConfig run = finish(cfg, raw);
        if (ingest->parsed()) return emit(cmd_ingest(run));
        if (prompts->parsed()) return emit(cmd_prompts(run));
        if (score->parsed()) return emit(cmd_score(run));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIoOrConfig;
    }
    return kExitIoOrConfig;
}
