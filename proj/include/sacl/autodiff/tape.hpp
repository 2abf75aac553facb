#pragma once

// Reverse-mode differentiation over dense double tensors.
//
// A Tape is a Wengert list: leaves (constants, parameters, inputs, injection
// sites) and primitive operations appended in evaluation order, which is a
// topological order by construction. backward() sweeps it in reverse.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sacl/core/tensor.hpp"

namespace sacl::ad {

struct Var {
    static constexpr std::uint32_t kNone = 0xFFFFFFFFu;
    std::uint32_t id = kNone;
    bool valid() const { return id != kNone; }
};

enum class OpKind : std::uint8_t {
    Constant,
    Parameter,
    Input,
    Site,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    Pow,
    LogSoftmax,
    Concat,
    Slice,
    Sum,
    Pick,
    ClampMin,
    Dropout,
    Inject,
    Dot,
    L2Normalize,
};

std::string_view op_name(OpKind op);

using GradientMap = std::map<std::string, Tensor>;

class Tape {
public:
    Tape() = default;
    Tape(Tape&&) noexcept = default;
    Tape& operator=(Tape&&) noexcept = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Validation mode: every primitive output is checked for NaN/Inf.
    void set_validate(bool on) { validate_ = on; }
    void reserve(std::size_t nodes) { nodes_.reserve(nodes); }

    // Leaves. Named leaves can be requested by name in gradients().
    Var constant(Tensor value);
    // Borrowed: `value` must outlive the tape.
    Var parameter(std::string name, const Tensor& value);
    Var input(std::string name, Tensor value);
    // Additive injection site, consumed through inject().
    Var site(std::string name, Tensor value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var exp(Var a);
    Var log(Var a);
    // x^p for x >= 0; derivative at x == 0 is taken as 0 when p < 1.
    Var pow(Var a, double p);
    // log(softmax(x)) of a vector, computed with max subtraction.
    Var log_softmax(Var a);
    Var concat(std::span<const Var> parts);
    Var slice(Var a, std::size_t begin, std::size_t length);
    Var sum(Var a);
    Var pick(Var a, std::size_t index);
    Var clamp_min(Var a, double floor);
    // `mask` holds the already-scaled keep factors (0 or 1/(1-p)).
    Var dropout(Var a, std::vector<double> mask);
    // x + site, leaving entries with a zero site value bit-identical to x.
    Var inject(Var x, Var site);
    Var dot(Var a, Var b);
    Var l2_normalize(Var a);

    const Tensor& value(Var v) const;
    OpKind kind(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const { return nodes_.size(); }
    Var find(std::string_view name) const;

    // Reverse sweep from a scalar output. May be called repeatedly; each call
    // discards adjoints of the previous one.
    void backward(Var output);

    // Adjoint of v from the last backward(); zero if v was off every path.
    Tensor grad(Var v) const;
    bool has_grad(Var v) const;
    std::span<const double> grad_span(Var v) const;

    GradientMap gradients(std::span<const std::string> wanted) const;
    std::vector<std::string> names() const;

private:
    struct Node {
        OpKind op = OpKind::Constant;
        bool requires_grad = false;
        std::uint32_t a = Var::kNone;
        std::uint32_t b = Var::kNone;
        std::uint32_t args_begin = 0;
        std::uint32_t args_count = 0;
        std::size_t index = 0;
        double scalar = 0.0;
        const Tensor* borrowed = nullptr;
        Tensor value;
        std::vector<double> aux;
        std::vector<double> grad;
    };

    Var push(Node node);
    Var named_leaf(OpKind op, std::string name, Node node);
    const Node& node(Var v) const;
    std::vector<double>& grad_buffer(std::uint32_t id);
    void propagate(std::uint32_t id);

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> args_;
    std::unordered_map<std::string, std::uint32_t> names_;
    bool validate_ = false;
};

// Graph-builder interface: the builder receives the tape and a Var for every
// named input and site, and returns the output Var.
using VarMap = std::map<std::string, Var>;
using GraphBuilder = std::function<Var(Tape&, const VarMap&)>;

struct Evaluation {
    Tensor output;
    Var output_var;
    Tape record;
};

Evaluation evaluate(const GraphBuilder& build, const std::map<std::string, Tensor>& inputs,
                    const std::map<std::string, Tensor>& sites = {}, bool validate = false);

// Gradient of a scalar record output with respect to every wanted variable.
GradientMap backward(Evaluation& evaluation, std::span<const std::string> wanted);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_variable;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    // One-sided differences disagree: the function has a kink at the point.
    bool non_differentiable = false;
    std::string kink_variable;
    std::size_t kink_index = 0;
    std::size_t coordinates_checked = 0;
    bool passed = false;
};

// Compares tape gradients of a scalar graph with central differences at every
// coordinate of every named point tensor. Relative error is
// |a - n| / max(|a|, |n|, 1e-6 * max(1, |f|)).
FiniteDiffReport finite_diff_check(const GraphBuilder& build,
                                   const std::map<std::string, Tensor>& point,
                                   double rel_tol = 1e-4, double step = 1e-5);

}  // namespace sacl::ad
