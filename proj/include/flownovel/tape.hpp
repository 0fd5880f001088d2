#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "flownovel/tensor.hpp"

namespace flownovel::ad {

class Tape;

// Lightweight handle to a node on a tape. Only valid while its tape lives.
class Var {
public:
    Var() = default;
    Tape& tape() const {
        if (!tape_) throw contract_error("var: default-constructed handle");
        return *tape_;
    }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Define-by-run reverse-mode tape. Nodes are appended in topological order;
// backward() visits them exactly once in reverse. A tape is rebuilt per
// training step and is single-threaded; independent tapes may run on
// separate threads.
//
// With recording=false the tape is a plain value arena: ops compute values
// but record no gradient rules, which is the inference path.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant(double value) { return constant(Tensor::scalar(value)); }

    Var matmul(Var a, Var b);
    Var linear(Var x, Var w, Var b); // x*w with row-broadcast bias
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var tanh(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var axpy(double alpha, Var x, Var y); // alpha*x + y, shapes equal
    Var scale(Var a, double alpha);
    Var add_const(Var a, double c);
    Var sum(Var a);      // -> scalar
    Var mean(Var a);     // -> scalar
    Var row_sum(Var a);  // [B,D] -> [B]
    Var slice_cols(Var a, int begin, int end);
    Var concat_cols(Var a, Var b);
    Var reverse_cols(Var a);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }

    // Gradient of the last backward() loss w.r.t. v. Defined for leaves;
    // interior gradients are released during the backward sweep. A leaf not
    // on the path to the loss reports all zeros.
    const Tensor& grad(Var v);

    // Reverse sweep from a scalar loss. May be called once per tape.
    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backprop;
        bool requires_grad = false;
        bool grad_alloc = false;
        bool is_leaf = false;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
    bool ran_backward_ = false;

    int check(Var v) const;
    bool wants_grad(Var v) const { return recording_ && nodes_[v.id_].requires_grad; }
    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
    Tensor& grad_buffer(int id);

    // elementwise helper: returns true if either operand is scalar
    static void binary_shape_check(const Tensor& a, const Tensor& b, const char* op);
};

// operator sugar; both operands must live on the same tape
inline Var operator+(Var a, Var b) { return a.tape().add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape().sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape().mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape().div(a, b); }
inline Var operator-(Var a) { return a.tape().neg(a); }
inline Var matmul(Var a, Var b) { return a.tape().matmul(a, b); }
inline Var tanh(Var a) { return a.tape().tanh(a); }
inline Var exp(Var a) { return a.tape().exp(a); }
inline Var log(Var a) { return a.tape().log(a); }

} // namespace flownovel::ad
