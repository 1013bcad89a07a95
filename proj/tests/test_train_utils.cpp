#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <cotkit/train_utils.hpp>

using namespace cotkit;
using namespace cotkit::train;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no exception";
    return ErrorCode::InvalidArgument;
}

std::vector<std::int64_t> retained_steps(const CheckpointManager& m) {
    std::vector<std::int64_t> out;
    for (const auto& c : m.retained()) out.push_back(c.step);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST(Schedule, Endpoints) {
    const ScheduleConfig cfg{5e-5, 5000, 500};
    EXPECT_EQ(lr_at(0, cfg), 0.0);
    EXPECT_EQ(lr_at(500, cfg), 5e-5);
    EXPECT_LE(lr_at(5000, cfg), 1e-12 * 5e-5);
    EXPECT_DOUBLE_EQ(lr_at(250, cfg), 2.5e-5);
    EXPECT_DOUBLE_EQ(lr_at(2750, cfg), 2.5e-5);
}

TEST(Schedule, ContinuousAtKneeAndMonotoneAfter) {
    const ScheduleConfig cfg{1e-3, 20000, 2000};
    const double left = cfg.lr_max * (2000.0 - 1e-9) / 2000.0;
    EXPECT_NEAR(left, lr_at(2000, cfg), 1e-12);
    EXPECT_NEAR(lr_at(2001, cfg), cfg.lr_max, 1e-9);
    double prev = lr_at(2000, cfg);
    for (std::int64_t t = 2001; t <= 20000; ++t) {
        const double v = lr_at(t, cfg);
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(Schedule, Errors) {
    const ScheduleConfig cfg{1e-3, 100, 10};
    EXPECT_EQ(code_of([&] { lr_at(-1, cfg); }), ErrorCode::StepOutOfRange);
    EXPECT_EQ(code_of([&] { lr_at(101, cfg); }), ErrorCode::StepOutOfRange);
    EXPECT_EQ(code_of([] { lr_at(0, ScheduleConfig{1e-3, 100, 100}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { lr_at(0, ScheduleConfig{0.0, 100, 10}); }), ErrorCode::InvalidArgument);
}

TEST(Warmup, TenPercentMinimumHundred) {
    EXPECT_EQ(warmup_steps(5000), 500);
    EXPECT_EQ(warmup_steps(200), 100);
    EXPECT_EQ(warmup_steps(50), 49);
    EXPECT_EQ(warmup_steps(2), 1);
    EXPECT_EQ(warmup_steps(1005), 101);
    EXPECT_THROW(warmup_steps(0), Error);
}

TEST(Batch, Product) {
    EXPECT_EQ(effective_batch(1, 2, 4), 8);
    EXPECT_EQ(effective_batch(8, 1, 1), 8);
    EXPECT_EQ(effective_batch(4, 4, 2), 32);
    EXPECT_THROW(effective_batch(0, 1, 1), Error);
}

TEST(Batch, SymmetricUnderPermutation) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::int64_t> v = {1 + static_cast<std::int64_t>(rng() % 64), 1 + static_cast<std::int64_t>(rng() % 8),
                                       1 + static_cast<std::int64_t>(rng() % 16)};
        const auto expected = v[0] * v[1] * v[2];
        std::sort(v.begin(), v.end());
        do {
            EXPECT_EQ(effective_batch(v[0], v[1], v[2]), expected);
        } while (std::next_permutation(v.begin(), v.end()));
    }
}

TEST(Checkpoints, ThreeSavesAllRetained) {
    CheckpointManager m({500, 3, MetricDirection::maximize});
    m.step(500, 0.2);
    m.step(1000, 0.4);
    m.step(1500, 0.3);
    EXPECT_EQ(retained_steps(m), (std::vector<std::int64_t>{500, 1000, 1500}));
}

TEST(Checkpoints, FourthSaveDeletesWorst) {
    CheckpointManager m({500, 3, MetricDirection::maximize});
    m.step(500, 0.2);
    m.step(1000, 0.4);
    m.step(1500, 0.3);
    const auto actions = m.step(2000, 0.5);
    ASSERT_EQ(actions.size(), 2u);
    EXPECT_EQ(actions[0].kind, ActionKind::save);
    EXPECT_EQ(actions[1].kind, ActionKind::remove);
    EXPECT_EQ(actions[1].id, "checkpoint-500");
}

TEST(Checkpoints, OffScheduleIsNoop) {
    CheckpointManager m({});
    const auto a = m.step(750, 0.9);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].kind, ActionKind::noop);
    EXPECT_TRUE(m.retained().empty());
}

TEST(Checkpoints, TieDeletesOlderStep) {
    CheckpointManager m({1, 2, MetricDirection::maximize});
    m.step(1, 0.5);
    m.step(2, 0.5);
    const auto a = m.step(3, 0.5);
    EXPECT_EQ(a.back().id, "checkpoint-1");
}

TEST(Checkpoints, MinimizeDirection) {
    CheckpointManager m({1, 1, MetricDirection::minimize});
    m.step(1, 0.5);
    const auto a = m.step(2, 0.2);
    EXPECT_EQ(a.back().id, "checkpoint-1");
    EXPECT_EQ(m.retained().at(0).step, 2);
}

TEST(Checkpoints, NonMonotonic) {
    CheckpointManager m({});
    m.step(500, 0.1);
    EXPECT_EQ(code_of([&] { m.step(500, 0.1); }), ErrorCode::NonMonotonicStep);
    EXPECT_EQ(code_of([&] { m.step(100, 0.1); }), ErrorCode::NonMonotonicStep);
}

TEST(Checkpoints, RetainedAreBestSeen) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t keep = 1 + rng() % 4;
        CheckpointManager m({2, keep, trial % 2 ? MetricDirection::minimize : MetricDirection::maximize});
        std::vector<std::pair<double, std::int64_t>> seen; // (metric, step) at save points
        std::vector<CheckpointAction> log;
        for (std::int64_t s = 1; s <= 40; ++s) {
            const double metric = static_cast<double>(rng() % 10) / 10.0;
            if (s % 2 == 0) seen.emplace_back(metric, s);
            for (auto& a : m.step(s, metric)) log.push_back(a);
            ASSERT_LE(m.retained().size(), keep);
        }
        // oracle: rank by metric, newer step first on ties
        auto sorted = seen;
        std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return trial % 2 ? a.first < b.first : a.first > b.first;
            return a.second > b.second;
        });
        std::vector<std::int64_t> expected;
        for (std::size_t i = 0; i < keep; ++i) expected.push_back(sorted[i].second);
        std::sort(expected.begin(), expected.end());
        EXPECT_EQ(retained_steps(m), expected);

        auto replayed = CheckpointManager::replay(parse_action_log(serialize_action_log(log)));
        auto current = m.retained();
        auto by_id = [](const RetainedCheckpoint& a, const RetainedCheckpoint& b) { return a.id < b.id; };
        std::sort(replayed.begin(), replayed.end(), by_id);
        std::sort(current.begin(), current.end(), by_id);
        EXPECT_EQ(replayed, current);
    }
}

TEST(Checkpoints, RestoreContinues) {
    CheckpointManager a({1, 2, MetricDirection::maximize});
    std::vector<CheckpointAction> log;
    for (std::int64_t s = 1; s <= 5; ++s)
        for (auto& x : a.step(s, static_cast<double>(s % 3))) log.push_back(x);
    CheckpointManager b({1, 2, MetricDirection::maximize});
    b.restore(CheckpointManager::replay(log), 5);
    EXPECT_EQ(a.step(6, 5.0), b.step(6, 5.0));
    EXPECT_THROW(b.step(6, 1.0), Error);
}

TEST(ActionLog, JsonShape) {
    const CheckpointAction a{ActionKind::remove, 2000, "checkpoint-500", 0.2};
    EXPECT_EQ(to_json(a).dump(), R"({"step":2000,"action":"delete","id":"checkpoint-500","metric":0.2})");
    const CheckpointAction n{ActionKind::noop, 750, "", std::nullopt};
    EXPECT_EQ(to_json(n).dump(), R"({"step":750,"action":"noop","id":null,"metric":null})");
    EXPECT_EQ(action_from_json(to_json(a)), a);
    EXPECT_THROW(action_from_json(parse_json(R"({"step":1,"action":"archive"})", "t")), Error);
}

TEST(Determinism, ChecklistMentionsSeed) {
    const auto items = determinism_checklist(42);
    ASSERT_FALSE(items.empty());
    EXPECT_NE(items.front().find("42"), std::string::npos);
}
