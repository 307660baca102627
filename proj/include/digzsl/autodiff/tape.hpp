#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation applied to its Vars. Columns are samples by
// convention, so a batch of B images of D pixels is a D x B matrix. Parameters
// are referenced, never copied, when they enter a tape; gradients of trainable
// parameters accumulate into Parameter::grad during backward().

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace digzsl::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Matrix v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), trainable(train) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Per-parameter record of which tags (e.g. reverse-diffusion step indices)
// pushed a non-zero gradient into it. Used to audit gradient paths.
struct GradientAudit {
    // parameter name -> tag -> sum of |g| contributed under that tag
    std::map<std::string, std::map<int, double>> contributions;

    double total(const std::string& name) const;
    bool touched(const std::string& name) const { return total(name) != 0.0; }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    // Free variable whose gradient is read back with grad().
    Var leaf(Matrix value);
    Var parameter(Parameter& p);

    // Used by op implementations: records a node computed from `parents`.
    Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
    Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);

    void backward(const Var& scalar_output);

    const Matrix& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Gradient of the last backward() output with respect to `v`; zeros if none flowed.
    Matrix grad(const Var& v) const;
    const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
    void accumulate(std::size_t id, const Matrix& g);
    void accumulate(std::size_t id, Matrix&& g);

    // Tag attached to subsequently recorded parameter leaves.
    void set_tag(int tag) noexcept { tag_ = tag; }
    int tag() const noexcept { return tag_; }

    // While set, parameters enter the tape as constants regardless of their trainable flag.
    void set_parameters_frozen(bool frozen) noexcept { frozen_ = frozen; }
    bool parameters_frozen() const noexcept { return frozen_; }

    const GradientAudit& audit() const noexcept { return audit_; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix owned;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
        int tag = 0;
    };

    std::deque<Node> nodes_;
    GradientAudit audit_;
    int tag_ = 0;
    bool frozen_ = false;
};

// ---- operations -----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a + s * b
Var axpy(const Var& a, double s, const Var& b);
// Adds column vector `col` to every column of `a`.
Var add_col(const Var& a, const Var& col);
// Multiplies column j of `a` by the constant weights[j].
Var scale_cols(const Var& a, const RowVector& weights);
Var silu(const Var& a);
Var relu(const Var& a);
Var clamp(const Var& a, double lo, double hi);
// Divides each column by its Euclidean norm. Throws DegenerateInput on a zero column.
Var normalize_cols(const Var& a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var sum(const Var& a);
Var sum_squares(const Var& a);
// Mean over columns of -log softmax(scale * logits)[target_j].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets, double scale = 1.0);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace digzsl::ad
