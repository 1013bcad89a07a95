#ifndef COTKIT_FUSION_HPP
#define COTKIT_FUSION_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "io.hpp"

namespace cotkit::fusion {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Reference weights for both fusion routes. Hidden states are row
/// matrices: one row per token, `text_width()` columns.
template <typename Scalar = double>
struct FusionParams {
    Matrix<Scalar> gate_weights; // d_text x d_text
    Matrix<Scalar> projection;   // d_text x d_img

    Eigen::Index text_width() const { return gate_weights.rows(); }
    Eigen::Index image_width() const { return projection.cols(); }

    void validate() const {
        if (gate_weights.rows() <= 0 || gate_weights.rows() != gate_weights.cols()) {
            throw Error(ErrorCode::ShapeMismatch, "gate weights must be a non-empty square matrix");
        }
        if (projection.size() > 0 && projection.rows() != gate_weights.rows()) {
            throw Error(ErrorCode::ShapeMismatch, "projection must have d_text rows");
        }
        if (!gate_weights.allFinite() || !projection.allFinite()) {
            throw Error(ErrorCode::InvalidArgument, "fusion weights must be finite");
        }
    }

    /// Deterministic uniform(-0.1, 0.1) initialization.
    static FusionParams seeded(Eigen::Index d_text, Eigen::Index d_img, std::uint64_t seed) {
        if (d_text <= 0 || d_img <= 0) throw Error(ErrorCode::InvalidArgument, "dimensions must be positive");
        std::mt19937_64 rng(seed);
        auto draw = [&] {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            return static_cast<Scalar>(-0.1 + 0.2 * u);
        };
        FusionParams p;
        p.gate_weights.resize(d_text, d_text);
        p.projection.resize(d_text, d_img);
        for (Eigen::Index i = 0; i < p.gate_weights.size(); ++i) p.gate_weights.data()[i] = draw();
        for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = draw();
        return p;
    }
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

/// Everything the backward pass needs, including a copy of the gate
/// weights so a replay does not depend on the caller's params.
template <typename Scalar = double>
struct FusionTape {
    Matrix<Scalar> h_text;
    Matrix<Scalar> h_img;
    Matrix<Scalar> gate_weights;
    Matrix<Scalar> gate; // sigmoid(h_text * W_g^T), same shape as h_text
    Matrix<Scalar> output;
};

template <typename Scalar = double>
struct FusionGradients {
    Matrix<Scalar> h_text;
    Matrix<Scalar> h_img;
    Matrix<Scalar> gate_weights;
};

/// h_fused = sigmoid(W_g h_text) (elementwise) h_img + h_text, row-wise.
template <typename Scalar>
FusionTape<Scalar> gated_fuse_forward(const Matrix<Scalar>& h_text, const Matrix<Scalar>& h_img,
                                      const FusionParams<Scalar>& params) {
    params.validate();
    if (h_text.cols() != params.text_width() || h_img.rows() != h_text.rows() || h_img.cols() != h_text.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "h_text " + std::to_string(h_text.rows()) + "x" + std::to_string(h_text.cols()) + ", h_img " +
                        std::to_string(h_img.rows()) + "x" + std::to_string(h_img.cols()) + ", d_text " +
                        std::to_string(params.text_width()));
    }
    FusionTape<Scalar> tape;
    tape.h_text = h_text;
    tape.h_img = h_img;
    tape.gate_weights = params.gate_weights;
    Matrix<Scalar> pre = h_text * params.gate_weights.transpose();
    tape.gate = pre.unaryExpr([](Scalar x) { return sigmoid(x); });
    tape.output = tape.gate.cwiseProduct(h_img) + h_text;
    return tape;
}

template <typename Scalar>
FusionGradients<Scalar> gated_fuse_backward(const FusionTape<Scalar>& tape, const Matrix<Scalar>& upstream) {
    const auto rows = tape.h_text.rows();
    const auto d = tape.h_text.cols();
    const bool consistent = tape.h_img.rows() == rows && tape.h_img.cols() == d && tape.gate.rows() == rows &&
                            tape.gate.cols() == d && tape.output.rows() == rows && tape.output.cols() == d &&
                            tape.gate_weights.rows() == d && tape.gate_weights.cols() == d;
    if (!consistent || upstream.rows() != rows || upstream.cols() != d) {
        throw Error(ErrorCode::TapeMismatch, "upstream gradient or tape does not match the recorded forward pass");
    }
    const Matrix<Scalar> one_minus = Matrix<Scalar>::Ones(rows, d) - tape.gate;
    // Gradient w.r.t. the gate pre-activation.
    const Matrix<Scalar> pre_grad =
        upstream.cwiseProduct(tape.h_img).cwiseProduct(tape.gate).cwiseProduct(one_minus);
    FusionGradients<Scalar> g;
    g.h_img = tape.gate.cwiseProduct(upstream);
    g.h_text = upstream + pre_grad * tape.gate_weights;
    g.gate_weights = pre_grad.transpose() * tape.h_text;
    return g;
}

template <typename Scalar = double>
struct ConcatResult {
    Matrix<Scalar> sequence;
    std::vector<int> mask;
};

/// Projects vision rows into the text width and appends them after the
/// text rows; the attention mask gains one 1 per vision row.
template <typename Scalar>
ConcatResult<Scalar> project_and_concat(const Matrix<Scalar>& text_seq, const Matrix<Scalar>& vision,
                                        const std::vector<int>& text_mask, const FusionParams<Scalar>& params) {
    params.validate();
    const auto t = text_seq.rows();
    const auto v = vision.rows();
    if (text_seq.cols() != params.text_width() || static_cast<Eigen::Index>(text_mask.size()) != t ||
        (v > 0 && vision.cols() != params.image_width())) {
        throw Error(ErrorCode::ShapeMismatch, "text, mask or vision shape does not match the params");
    }
    for (int m : text_mask) {
        if (m != 0 && m != 1) throw Error(ErrorCode::InvalidArgument, "attention mask must be binary");
    }
    ConcatResult<Scalar> r;
    r.sequence.resize(t + v, params.text_width());
    r.sequence.topRows(t) = text_seq;
    if (v > 0) r.sequence.bottomRows(v) = vision * params.projection.transpose();
    r.mask = text_mask;
    r.mask.insert(r.mask.end(), static_cast<std::size_t>(v), 1);
    return r;
}

template <typename Derived>
Json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(static_cast<double>(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Dump format for comparing fused sequences across implementations.
template <typename Seq>
Json fused_sequence_to_json(const Seq& fused) {
    Json j = Json::object();
    j["rows"] = fused.sequence.rows();
    j["cols"] = fused.sequence.cols();
    j["sequence"] = matrix_to_json(fused.sequence);
    j["mask"] = fused.mask;
    return j;
}

} // namespace cotkit::fusion

#endif
