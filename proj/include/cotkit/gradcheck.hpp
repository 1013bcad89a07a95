#ifndef COTKIT_GRADCHECK_HPP
#define COTKIT_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "fusion.hpp"

namespace cotkit::fusion {

/// Finite-difference check of gated_fuse_backward against the forward pass
/// alone, using the scalar loss L = sum(upstream .* h_fused).
struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t entries = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero
/// analytically from dividing round-off by round-off.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckResult check_gated_fusion(const Matrix<double>& h_text, const Matrix<double>& h_img,
                                          const FusionParams<double>& params, const Matrix<double>& upstream,
                                          double step = 1e-4) {
    const auto tape = gated_fuse_forward(h_text, h_img, params);
    const auto grads = gated_fuse_backward(tape, upstream);

    auto loss = [&](const Matrix<double>& t, const Matrix<double>& i, const FusionParams<double>& p) {
        return gated_fuse_forward(t, i, p).output.cwiseProduct(upstream).sum();
    };
    GradCheckResult r;
    auto probe = [&](Matrix<double>& x, const Matrix<double>& analytic, auto&& eval) {
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double saved = x.data()[k];
            x.data()[k] = saved + step;
            const double up = eval();
            x.data()[k] = saved - step;
            const double down = eval();
            x.data()[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic.data()[k];
            r.max_rel_error = std::max(r.max_rel_error, relative_error(a, numeric));
            r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
            ++r.entries;
        }
    };
    Matrix<double> t = h_text, i = h_img;
    FusionParams<double> p = params;
    probe(t, grads.h_text, [&] { return loss(t, h_img, params); });
    probe(i, grads.h_img, [&] { return loss(h_text, i, params); });
    probe(p.gate_weights, grads.gate_weights, [&] { return loss(h_text, h_img, p); });
    return r;
}

struct GradCheckInstance {
    Matrix<double> h_text, h_img, upstream;
    FusionParams<double> params;
};

/// Random instance: rows in [1, 4], width in [1, max_width], activations
/// uniform(-1, 1), weights from FusionParams::seeded.
inline GradCheckInstance random_instance(std::uint64_t seed, Eigen::Index max_width = 8) {
    std::mt19937_64 rng(seed);
    auto unit = [&] { return -1.0 + 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(max_width));
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 4);
    GradCheckInstance inst;
    inst.params = FusionParams<double>::seeded(d, d, rng());
    auto fill = [&](Matrix<double>& m) {
        m.resize(rows, d);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = unit();
    };
    fill(inst.h_text);
    fill(inst.h_img);
    fill(inst.upstream);
    return inst;
}

} // namespace cotkit::fusion

#endif
