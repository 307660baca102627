#include "digzsl/autodiff/tape.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>
#include <sstream>

namespace digzsl::ad {

namespace {

void require_same_tape(const Var& a, const Var& b) {
    if (a.tape() != b.tape() || a.tape() == nullptr) {
        throw StructuralError("autodiff: operands belong to different tapes");
    }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream msg;
        msg << "autodiff " << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
            << b.cols();
        throw StructuralError(msg.str());
    }
}

}  // namespace

double GradientAudit::total(const std::string& name) const {
    auto it = contributions.find(name);
    if (it == contributions.end()) return 0.0;
    double s = 0.0;
    for (const auto& [tag, v] : it->second) s += v;
    return s;
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw StructuralError("autodiff: scalar() on a non 1x1 value");
    return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = p.trainable && !frozen_;
    n.tag = tag_;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    for (const Var& p : parents) {
        if (p.tape() != this) throw StructuralError("autodiff: parent recorded on a different tape");
        n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
}

Matrix Tape::grad(const Var& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) return Matrix::Zero(value(v.id()).rows(), value(v.id()).cols());
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::accumulate(std::size_t id, Matrix&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = std::move(g);
    } else {
        n.grad += g;
    }
}

void Tape::backward(const Var& out) {
    if (out.tape() != this) throw StructuralError("autodiff: backward on a foreign Var");
    if (value(out.id()).size() != 1) throw StructuralError("autodiff: backward requires a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[out.id()].requires_grad) return;
    nodes_[out.id()].grad = Matrix::Ones(1, 1);

    for (std::size_t i = out.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.param != nullptr) {
            n.param->grad += n.grad;
            audit_.contributions[n.param->name][n.tag] += n.grad.cwiseAbs().sum();
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

// ---- operations -----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    require_same_tape(a, b);
    if (a.cols() != b.rows()) {
        std::ostringstream msg;
        msg << "autodiff matmul: inner dimensions " << a.cols() << " and " << b.rows() << " differ";
        throw StructuralError(msg.str());
    }
    Tape& t = *a.tape();
    const std::size_t ia = a.id(), ib = b.id();
    Matrix out = a.value() * b.value();
    return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g * tp.value(ib).transpose()));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(tp.value(ia).transpose() * g));
    });
}

Var add(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "add");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self));
        tp.accumulate(ib, tp.upstream(self));
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "sub");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(-tp.upstream(self)));
    });
}

Var hadamard(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "hadamard");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g.cwiseProduct(tp.value(ib))));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.cwiseProduct(tp.value(ia))));
    });
}

Var scale(const Var& a, double s) {
    const std::size_t ia = a.id();
    return a.tape()->record(s * a.value(), {a}, [ia, s](Tape& tp, std::size_t self) {
        tp.accumulate(ia, Matrix(s * tp.upstream(self)));
    });
}

Var axpy(const Var& a, double s, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "axpy");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() + s * b.value(), {a, b}, [ia, ib, s](Tape& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(s * tp.upstream(self)));
    });
}

Var add_col(const Var& a, const Var& col) {
    require_same_tape(a, col);
    if (col.cols() != 1 || col.rows() != a.rows()) throw StructuralError("autodiff add_col: bias shape mismatch");
    const std::size_t ia = a.id(), ic = col.id();
    Matrix out = a.value().colwise() + col.value().col(0);
    return a.tape()->record(std::move(out), {a, col}, [ia, ic](Tape& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self));
        if (tp.requires_grad(ic)) tp.accumulate(ic, Matrix(tp.upstream(self).rowwise().sum()));
    });
}

Var scale_cols(const Var& a, const RowVector& weights) {
    if (weights.size() != a.cols()) throw StructuralError("autodiff scale_cols: weight count mismatch");
    const std::size_t ia = a.id();
    Matrix out = a.value() * weights.asDiagonal();
    return a.tape()->record(std::move(out), {a}, [ia, weights](Tape& tp, std::size_t self) {
        tp.accumulate(ia, Matrix(tp.upstream(self) * weights.asDiagonal()));
    });
}

Var silu(const Var& a) {
    const std::size_t ia = a.id();
    const Matrix& x = a.value();
    Matrix sig = (1.0 + (-x.array()).exp()).inverse().matrix();
    Matrix out = x.cwiseProduct(sig);
    return a.tape()->record(std::move(out), {a}, [ia, sig = std::move(sig)](Tape& tp, std::size_t self) {
        const Matrix& xv = tp.value(ia);
        // d/dx x*s(x) = s(x) * (1 + x * (1 - s(x)))
        Matrix d = (sig.array() * (1.0 + xv.array() * (1.0 - sig.array()))).matrix();
        tp.accumulate(ia, Matrix(tp.upstream(self).cwiseProduct(d)));
    });
}

Var relu(const Var& a) {
    const std::size_t ia = a.id();
    Matrix out = a.value().cwiseMax(0.0);
    return a.tape()->record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
        Matrix mask = (tp.value(ia).array() > 0.0).cast<double>().matrix();
        tp.accumulate(ia, Matrix(tp.upstream(self).cwiseProduct(mask)));
    });
}

Var clamp(const Var& a, double lo, double hi) {
    const std::size_t ia = a.id();
    Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
    return a.tape()->record(std::move(out), {a}, [ia, lo, hi](Tape& tp, std::size_t self) {
        const auto& x = tp.value(ia).array();
        Matrix mask = ((x >= lo) && (x <= hi)).cast<double>().matrix();
        tp.accumulate(ia, Matrix(tp.upstream(self).cwiseProduct(mask)));
    });
}

Var normalize_cols(const Var& a) {
    const std::size_t ia = a.id();
    const Matrix& x = a.value();
    RowVector norms = x.colwise().norm();
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
        if (!(norms[j] > 0.0) || !std::isfinite(norms[j])) {
            std::ostringstream msg;
            msg << "normalize: column " << j << " has norm " << norms[j];
            throw DegenerateInput(msg.str());
        }
    }
    Matrix out = x * norms.cwiseInverse().asDiagonal();
    return a.tape()->record(out, {a}, [ia, norms, y = out](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        // d y / d x = (I - y y^T) / |x| per column
        RowVector proj = (y.cwiseProduct(g)).colwise().sum();
        Matrix gx = (g - y * proj.asDiagonal()) * norms.cwiseInverse().asDiagonal();
        tp.accumulate(ia, std::move(gx));
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw StructuralError("autodiff concat_cols: no inputs");
    Tape* t = parts.front().tape();
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index total = 0;
    for (const Var& p : parts) {
        if (p.tape() != t) throw StructuralError("autodiff concat_cols: operands belong to different tapes");
        if (p.rows() != rows) throw StructuralError("autodiff concat_cols: row count mismatch");
        total += p.cols();
    }
    Matrix out(rows, total);
    std::vector<std::pair<std::size_t, Eigen::Index>> spans;
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
        out.middleCols(offset, p.cols()) = p.value();
        spans.emplace_back(p.id(), p.cols());
        offset += p.cols();
    }
    return t->record(std::move(out), parts, [spans](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        Eigen::Index off = 0;
        for (const auto& [id, n] : spans) {
            if (tp.requires_grad(id)) tp.accumulate(id, Matrix(g.middleCols(off, n)));
            off += n;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw StructuralError("autodiff concat_rows: no inputs");
    Tape* t = parts.front().tape();
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index total = 0;
    for (const Var& p : parts) {
        if (p.tape() != t) throw StructuralError("autodiff concat_rows: operands belong to different tapes");
        if (p.cols() != cols) throw StructuralError("autodiff concat_rows: column count mismatch");
        total += p.rows();
    }
    Matrix out(total, cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> spans;
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
        out.middleRows(offset, p.rows()) = p.value();
        spans.emplace_back(p.id(), p.rows());
        offset += p.rows();
    }
    return t->record(std::move(out), parts, [spans](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        Eigen::Index off = 0;
        for (const auto& [id, n] : spans) {
            if (tp.requires_grad(id)) tp.accumulate(id, Matrix(g.middleRows(off, n)));
            off += n;
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw StructuralError("autodiff slice_cols: out of range");
    const std::size_t ia = a.id();
    const Eigen::Index rows = a.rows(), cols = a.cols();
    return a.tape()->record(a.value().middleCols(start, count), {a},
                            [ia, start, count, rows, cols](Tape& tp, std::size_t self) {
                                Matrix g = Matrix::Zero(rows, cols);
                                g.middleCols(start, count) = tp.upstream(self);
                                tp.accumulate(ia, std::move(g));
                            });
}

Var sum(const Var& a) {
    const std::size_t ia = a.id();
    const Eigen::Index rows = a.rows(), cols = a.cols();
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape()->record(std::move(out), {a}, [ia, rows, cols](Tape& tp, std::size_t self) {
        tp.accumulate(ia, Matrix::Constant(rows, cols, tp.upstream(self)(0, 0)));
    });
}

Var sum_squares(const Var& a) {
    const std::size_t ia = a.id();
    Matrix out(1, 1);
    out(0, 0) = a.value().squaredNorm();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
        tp.accumulate(ia, Matrix(2.0 * tp.upstream(self)(0, 0) * tp.value(ia)));
    });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets, double scale) {
    const Matrix& z = logits.value();
    if (static_cast<Eigen::Index>(targets.size()) != z.cols()) {
        throw StructuralError("cross_entropy: one target per column required");
    }
    const Eigen::Index n = z.cols();
    Matrix probs(z.rows(), n);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (targets[j] >= static_cast<std::size_t>(z.rows())) throw StructuralError("cross_entropy: target out of range");
        Vector s = scale * z.col(j);
        const double m = s.maxCoeff();
        Vector e = (s.array() - m).exp().matrix();
        const double lse = m + std::log(e.sum());
        probs.col(j) = e / e.sum();
        loss += lse - s[static_cast<Eigen::Index>(targets[j])];
    }
    Matrix out(1, 1);
    out(0, 0) = loss / static_cast<double>(n);
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    const std::size_t il = logits.id();
    return logits.tape()->record(std::move(out), {logits},
                                 [il, probs = std::move(probs), tgt = std::move(tgt), scale](Tape& tp, std::size_t self) {
                                     Matrix g = probs;
                                     for (std::size_t j = 0; j < tgt.size(); ++j) {
                                         g(static_cast<Eigen::Index>(tgt[j]), static_cast<Eigen::Index>(j)) -= 1.0;
                                     }
                                     g *= scale * tp.upstream(self)(0, 0) / static_cast<double>(tgt.size());
                                     tp.accumulate(il, std::move(g));
                                 });
}

}  // namespace digzsl::ad
