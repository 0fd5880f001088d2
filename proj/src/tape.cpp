#include "flownovel/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <utility>

namespace flownovel::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap cmap(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap mmap(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

} // namespace

int Tape::check(Var v) const {
    if (!v.valid() || v.tape_ != this || v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size()))
        throw contract_error("tape: variable does not belong to this tape");
    return v.id_;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = recording_ && requires_grad;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Var v = push(std::move(value), requires_grad, {});
    nodes_[v.id_].is_leaf = true;
    return v;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Var v) {
    int id = check(v);
    if (!ran_backward_) throw contract_error("tape: grad() before backward()");
    return grad_buffer(id);
}

void Tape::backward(Var loss) {
    int id = check(loss);
    if (!recording_) throw contract_error("tape: backward() on a non-recording tape");
    if (ran_backward_) throw contract_error("tape: backward() may run once per tape");
    if (!nodes_[id].value.is_scalar()) throw contract_error("tape: loss must be scalar");
    if (!nodes_[id].requires_grad)
        throw contract_error("tape: loss does not depend on any differentiable leaf");
    ran_backward_ = true;

    grad_buffer(id).fill(1.0);
    for (int i = id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.grad_alloc) continue;
        if (n.backprop) n.backprop(*this);
        if (!n.is_leaf) { // interior gradients are dead once propagated
            n.grad = Tensor();
            n.grad_alloc = false;
        }
    }
}

void Tape::binary_shape_check(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar())
        throw contract_error(std::string("tape: ") + op +
                             ": shapes must match or one operand must be scalar");
}

Var Tape::matmul(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.rows())
        throw contract_error("tape: matmul: inner dimensions disagree");
    Tensor out({va.rows(), vb.cols()});
    mmap(out).noalias() = cmap(va) * cmap(vb);
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        if (t.nodes_[ia].requires_grad)
            mmap(t.grad_buffer(ia)).noalias() += cmap(dy) * cmap(t.nodes_[ib].value).transpose();
        if (t.nodes_[ib].requires_grad)
            mmap(t.grad_buffer(ib)).noalias() += cmap(t.nodes_[ia].value).transpose() * cmap(dy);
    });
}

Var Tape::linear(Var x, Var w, Var b) {
    int ix = check(x), iw = check(w), ib = check(b);
    const Tensor& vx = nodes_[ix].value;
    const Tensor& vw = nodes_[iw].value;
    const Tensor& vb = nodes_[ib].value;
    if (vx.ndim() != 2 || vw.ndim() != 2 || vx.cols() != vw.rows())
        throw contract_error("tape: linear: inner dimensions disagree");
    int out_dim = vw.cols();
    if (static_cast<int>(vb.numel()) != out_dim)
        throw contract_error("tape: linear: bias length must equal output width");
    Tensor out({vx.rows(), out_dim});
    mmap(out).noalias() = cmap(vx) * cmap(vw);
    {
        auto o = mmap(out);
        Eigen::Map<const Eigen::RowVectorXd> bias(vb.data(), out_dim);
        o.rowwise() += bias;
    }
    bool req = wants_grad(x) || wants_grad(w) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ix, iw, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        if (t.nodes_[ix].requires_grad)
            mmap(t.grad_buffer(ix)).noalias() += cmap(dy) * cmap(t.nodes_[iw].value).transpose();
        if (t.nodes_[iw].requires_grad)
            mmap(t.grad_buffer(iw)).noalias() += cmap(t.nodes_[ix].value).transpose() * cmap(dy);
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_buffer(ib);
            Eigen::Map<Eigen::RowVectorXd> m(db.data(), db.numel());
            m += cmap(dy).colwise().sum();
        }
    });
}

namespace {

// Accumulate elementwise gradient honoring scalar broadcast on the operand.
void accumulate_broadcast(Tensor& dst, const Tensor& contribution) {
    if (dst.numel() == contribution.numel()) {
        dst.add_scaled(contribution, 1.0);
    } else { // dst is scalar
        double s = 0.0;
        for (std::size_t i = 0; i < contribution.numel(); ++i) s += contribution[i];
        dst[0] += s;
    }
}

double pick(const Tensor& t, std::size_t i) { return t.is_scalar() ? t[0] : t[i]; }

} // namespace

Var Tape::add(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    binary_shape_check(va, vb, "add");
    const Tensor& big = va.numel() >= vb.numel() ? va : vb;
    Tensor out(big.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = pick(va, i) + pick(vb, i);
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        if (t.nodes_[ia].requires_grad) accumulate_broadcast(t.grad_buffer(ia), dy);
        if (t.nodes_[ib].requires_grad) accumulate_broadcast(t.grad_buffer(ib), dy);
    });
}

Var Tape::sub(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    binary_shape_check(va, vb, "sub");
    const Tensor& big = va.numel() >= vb.numel() ? va : vb;
    Tensor out(big.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = pick(va, i) - pick(vb, i);
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        if (t.nodes_[ia].requires_grad) accumulate_broadcast(t.grad_buffer(ia), dy);
        if (t.nodes_[ib].requires_grad) {
            Tensor neg(dy.shape());
            for (std::size_t i = 0; i < dy.numel(); ++i) neg[i] = -dy[i];
            accumulate_broadcast(t.grad_buffer(ib), neg);
        }
    });
}

Var Tape::mul(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    binary_shape_check(va, vb, "mul");
    const Tensor& big = va.numel() >= vb.numel() ? va : vb;
    Tensor out(big.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = pick(va, i) * pick(vb, i);
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vb2 = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor c(dy.shape());
            for (std::size_t i = 0; i < dy.numel(); ++i) c[i] = dy[i] * pick(vb2, i);
            accumulate_broadcast(t.grad_buffer(ia), c);
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor c(dy.shape());
            for (std::size_t i = 0; i < dy.numel(); ++i) c[i] = dy[i] * pick(va2, i);
            accumulate_broadcast(t.grad_buffer(ib), c);
        }
    });
}

Var Tape::div(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    binary_shape_check(va, vb, "div");
    for (std::size_t i = 0; i < vb.numel(); ++i)
        if (vb[i] == 0.0) throw contract_error("tape: div: division by zero");
    const Tensor& big = va.numel() >= vb.numel() ? va : vb;
    Tensor out(big.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = pick(va, i) / pick(vb, i);
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vb2 = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor c(dy.shape());
            for (std::size_t i = 0; i < dy.numel(); ++i) c[i] = dy[i] / pick(vb2, i);
            accumulate_broadcast(t.grad_buffer(ia), c);
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor c(dy.shape());
            for (std::size_t i = 0; i < dy.numel(); ++i) {
                double bi = pick(vb2, i);
                c[i] = -dy[i] * pick(va2, i) / (bi * bi);
            }
            accumulate_broadcast(t.grad_buffer(ib), c);
        }
    });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::tanh(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(va.shape());
    {
        Eigen::Map<Eigen::ArrayXd> o(out.data(), out.numel());
        Eigen::Map<const Eigen::ArrayXd> x(va.data(), va.numel());
        o = x.tanh();
    }
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        const Tensor& y = t.nodes_[iy].value;
        Tensor& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
    });
}

Var Tape::exp(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(va.shape());
    {
        Eigen::Map<Eigen::ArrayXd> o(out.data(), out.numel());
        Eigen::Map<const Eigen::ArrayXd> x(va.data(), va.numel());
        o = x.exp();
    }
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        const Tensor& y = t.nodes_[iy].value;
        Tensor& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] * y[i];
    });
}

Var Tape::log(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(va.shape());
    for (std::size_t i = 0; i < va.numel(); ++i) {
        if (va[i] <= 0.0) throw contract_error("tape: log: nonpositive argument");
        out[i] = std::log(va[i]);
    }
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        const Tensor& x = t.nodes_[ia].value;
        Tensor& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] / x[i];
    });
}

Var Tape::axpy(double alpha, Var x, Var y) {
    int ix = check(x), iy0 = check(y);
    const Tensor& vx = nodes_[ix].value;
    const Tensor& vy = nodes_[iy0].value;
    if (!vx.same_shape(vy)) throw contract_error("tape: axpy: shape mismatch");
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = alpha * vx[i] + vy[i];
    bool req = wants_grad(x) || wants_grad(y);
    int io = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [alpha, ix, iy0, io](Tape& t) {
        const Tensor& dy = t.nodes_[io].grad;
        if (t.nodes_[ix].requires_grad) t.grad_buffer(ix).add_scaled(dy, alpha);
        if (t.nodes_[iy0].requires_grad) t.grad_buffer(iy0).add_scaled(dy, 1.0);
    });
}

Var Tape::scale(Var a, double alpha) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = alpha * va[i];
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [alpha, ia, iy](Tape& t) {
        t.grad_buffer(ia).add_scaled(t.nodes_[iy].grad, alpha);
    });
}

Var Tape::add_const(Var a, double c) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] + c;
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy](Tape& t) {
        t.grad_buffer(ia).add_scaled(t.nodes_[iy].grad, 1.0);
    });
}

Var Tape::sum(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(s), req, [ia, iy](Tape& t) {
        double g = t.nodes_[iy].grad[0];
        Tensor& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
    });
}

Var Tape::mean(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.numel() == 0) throw contract_error("tape: mean of empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    double inv_n = 1.0 / static_cast<double>(va.numel());
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(s * inv_n), req, [ia, iy, inv_n](Tape& t) {
        double g = t.nodes_[iy].grad[0] * inv_n;
        Tensor& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
    });
}

Var Tape::row_sum(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.ndim() != 2) throw contract_error("tape: row_sum requires rank 2");
    int rows = va.rows(), cols = va.cols();
    Tensor out({rows});
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += va.at(r, c);
        out[r] = s;
    }
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy, rows, cols](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        Tensor& da = t.grad_buffer(ia);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) da.at(r, c) += dy[r];
    });
}

Var Tape::slice_cols(Var a, int begin, int end) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.ndim() != 2) throw contract_error("tape: slice_cols requires rank 2");
    if (begin < 0 || end > va.cols() || begin >= end)
        throw contract_error("tape: slice_cols: bad column range");
    int rows = va.rows(), width = end - begin;
    Tensor out({rows, width});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < width; ++c) out.at(r, c) = va.at(r, begin + c);
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy, begin, rows, width](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        Tensor& da = t.grad_buffer(ia);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < width; ++c) da.at(r, begin + c) += dy.at(r, c);
    });
}

Var Tape::concat_cols(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.ndim() != 2 || vb.ndim() != 2 || va.rows() != vb.rows())
        throw contract_error("tape: concat_cols: row counts disagree");
    int rows = va.rows(), ca = va.cols(), cb = vb.cols();
    Tensor out({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < ca; ++c) out.at(r, c) = va.at(r, c);
        for (int c = 0; c < cb; ++c) out.at(r, ca + c) = vb.at(r, c);
    }
    bool req = wants_grad(a) || wants_grad(b);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, ib, iy, rows, ca, cb](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_buffer(ia);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < ca; ++c) da.at(r, c) += dy.at(r, c);
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_buffer(ib);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cb; ++c) db.at(r, c) += dy.at(r, ca + c);
        }
    });
}

Var Tape::reverse_cols(Var a) {
    int ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.ndim() != 2) throw contract_error("tape: reverse_cols requires rank 2");
    int rows = va.rows(), cols = va.cols();
    Tensor out({rows, cols});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = va.at(r, cols - 1 - c);
    bool req = wants_grad(a);
    int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), req, [ia, iy, rows, cols](Tape& t) {
        const Tensor& dy = t.nodes_[iy].grad;
        Tensor& da = t.grad_buffer(ia);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) da.at(r, cols - 1 - c) += dy.at(r, c);
    });
}

} // namespace flownovel::ad
