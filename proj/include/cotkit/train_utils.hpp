#ifndef COTKIT_TRAIN_UTILS_HPP
#define COTKIT_TRAIN_UTILS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace cotkit::train {

inline constexpr std::uint64_t kDefaultSeed = 42;

/// Settings a training run must pin for reproducible results.
inline std::vector<std::string> determinism_checklist(std::uint64_t seed = kDefaultSeed) {
    return {
        "seed python, numpy and torch RNGs with " + std::to_string(seed),
        "enable cudnn deterministic mode and disable cudnn benchmark autotuning",
        "request deterministic algorithms from the framework",
        "seed every data-loader worker from the run seed",
        "record the seed in every report and checkpoint",
    };
}

struct ScheduleConfig {
    double lr_max = 5e-5;
    std::int64_t total_steps = 0;
    std::int64_t warmup_steps = 0;

    void validate() const {
        if (!(lr_max > 0.0) || !std::isfinite(lr_max)) throw Error(ErrorCode::InvalidArgument, "lr_max must be > 0");
        if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
            throw Error(ErrorCode::InvalidArgument, "need 0 < warmup_steps < total_steps");
        }
    }
};

/// Linear warmup to lr_max over W steps, then half-cosine decay to 0 at T.
inline double lr_at(std::int64_t t, const ScheduleConfig& cfg) {
    cfg.validate();
    if (t < 0 || t > cfg.total_steps) {
        throw Error(ErrorCode::StepOutOfRange,
                    "step " + std::to_string(t) + " outside [0, " + std::to_string(cfg.total_steps) + "]");
    }
    const auto w = static_cast<double>(cfg.warmup_steps);
    if (t <= cfg.warmup_steps) return cfg.lr_max * static_cast<double>(t) / w;
    const double progress = (static_cast<double>(t) - w) / (static_cast<double>(cfg.total_steps) - w);
    return cfg.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// 10% of the run, at least 100 steps, and always below `total` so the
/// schedule stays well-formed on toy runs.
inline std::int64_t warmup_steps(std::int64_t total) {
    if (total < 1) throw Error(ErrorCode::InvalidArgument, "total steps must be >= 1");
    const auto tenth = std::llround(0.10 * static_cast<double>(total));
    return std::min<std::int64_t>(std::max<std::int64_t>(tenth, 100), total - 1);
}

inline std::int64_t effective_batch(std::int64_t per_device, std::int64_t devices, std::int64_t grad_accum) {
    if (per_device < 1 || devices < 1 || grad_accum < 1) {
        throw Error(ErrorCode::InvalidArgument, "batch factors must all be >= 1");
    }
    return per_device * devices * grad_accum;
}

// ---------------------------------------------------------------------------
// Checkpoint retention

enum class MetricDirection { maximize, minimize };

struct CheckpointPolicy {
    std::int64_t save_every = 500;
    std::size_t keep_best = 3;
    MetricDirection direction = MetricDirection::maximize;

    void validate() const {
        if (save_every < 1 || keep_best < 1) {
            throw Error(ErrorCode::InvalidArgument, "save_every and keep_best must be >= 1");
        }
    }
};

struct RetainedCheckpoint {
    std::string id;
    std::int64_t step = 0;
    double metric = 0.0;

    friend bool operator==(const RetainedCheckpoint&, const RetainedCheckpoint&) = default;
};

enum class ActionKind { save, remove, noop };

inline std::string_view to_string(ActionKind k) {
    switch (k) {
    case ActionKind::save: return "save";
    case ActionKind::remove: return "delete";
    case ActionKind::noop: return "noop";
    }
    return "";
}

struct CheckpointAction {
    ActionKind kind = ActionKind::noop;
    std::int64_t step = 0;
    std::string id;
    std::optional<double> metric;

    friend bool operator==(const CheckpointAction&, const CheckpointAction&) = default;
};

inline std::string checkpoint_id(std::int64_t step) { return "checkpoint-" + std::to_string(step); }

/// Tracks the best `keep_best` checkpoints seen at save points. Single
/// writer: `step` mutates the retained set.
class CheckpointManager {
public:
    explicit CheckpointManager(CheckpointPolicy policy) : policy_(policy) { policy_.validate(); }

    const CheckpointPolicy& policy() const { return policy_; }
    const std::vector<RetainedCheckpoint>& retained() const { return retained_; }

    /// Saves at multiples of save_every, then deletes the worst retained
    /// checkpoint (older step first on metric ties) while over capacity.
    std::vector<CheckpointAction> step(std::int64_t step, double metric) {
        if (last_step_ && step <= *last_step_) {
            throw Error(ErrorCode::NonMonotonicStep,
                        "step " + std::to_string(step) + " after " + std::to_string(*last_step_));
        }
        last_step_ = step;
        if (step <= 0 || step % policy_.save_every != 0) {
            return {{ActionKind::noop, step, {}, std::nullopt}};
        }
        std::vector<CheckpointAction> actions;
        RetainedCheckpoint saved{checkpoint_id(step), step, metric};
        retained_.push_back(saved);
        actions.push_back({ActionKind::save, step, saved.id, metric});
        while (retained_.size() > policy_.keep_best) {
            auto worst = std::min_element(retained_.begin(), retained_.end(),
                                          [&](const auto& a, const auto& b) { return worse(a, b); });
            actions.push_back({ActionKind::remove, step, worst->id, worst->metric});
            retained_.erase(worst);
        }
        return actions;
    }

    /// Rebuilds the retained set from an action log; no metrics are
    /// re-evaluated. This is what resuming from a checkpoint does.
    static std::vector<RetainedCheckpoint> replay(const std::vector<CheckpointAction>& log) {
        std::vector<RetainedCheckpoint> out;
        for (const auto& a : log) {
            if (a.kind == ActionKind::save) {
                out.push_back({a.id, a.step, a.metric.value_or(0.0)});
            } else if (a.kind == ActionKind::remove) {
                std::erase_if(out, [&](const RetainedCheckpoint& c) { return c.id == a.id; });
            }
        }
        return out;
    }

    /// Continues from a replayed state; subsequent steps must exceed `last_step`.
    void restore(std::vector<RetainedCheckpoint> retained, std::int64_t last_step) {
        retained_ = std::move(retained);
        last_step_ = last_step;
    }

private:
    // True when a should be deleted before b.
    bool worse(const RetainedCheckpoint& a, const RetainedCheckpoint& b) const {
        if (a.metric != b.metric) {
            return policy_.direction == MetricDirection::maximize ? a.metric < b.metric : a.metric > b.metric;
        }
        return a.step < b.step;
    }

    CheckpointPolicy policy_;
    std::vector<RetainedCheckpoint> retained_;
    std::optional<std::int64_t> last_step_;
};

inline Json to_json(const CheckpointAction& a) {
    Json j = Json::object();
    j["step"] = a.step;
    j["action"] = to_string(a.kind);
    j["id"] = a.id.empty() ? Json(nullptr) : Json(a.id);
    j["metric"] = a.metric ? Json(*a.metric) : Json(nullptr);
    return j;
}

inline CheckpointAction action_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("step") || !j.contains("action")) {
        throw Error(ErrorCode::MalformedRecord, "action log entry needs step and action");
    }
    CheckpointAction a;
    a.step = j["step"].get<std::int64_t>();
    const auto kind = j["action"].get<std::string>();
    if (kind == "save") a.kind = ActionKind::save;
    else if (kind == "delete") a.kind = ActionKind::remove;
    else if (kind == "noop") a.kind = ActionKind::noop;
    else throw Error(ErrorCode::MalformedRecord, "unknown action '" + kind + "'");
    if (j.contains("id") && j["id"].is_string()) a.id = j["id"].get<std::string>();
    if (j.contains("metric") && j["metric"].is_number()) a.metric = j["metric"].get<double>();
    return a;
}

inline std::string serialize_action_log(const std::vector<CheckpointAction>& log) {
    std::vector<Json> rows;
    rows.reserve(log.size());
    for (const auto& a : log) rows.push_back(to_json(a));
    return dump_jsonl(rows);
}

inline std::vector<CheckpointAction> parse_action_log(std::string_view text) {
    std::vector<CheckpointAction> out;
    for_each_jsonl(text, "action log", [&](std::size_t, const Json& j) { out.push_back(action_from_json(j)); });
    return out;
}

} // namespace cotkit::train

#endif
