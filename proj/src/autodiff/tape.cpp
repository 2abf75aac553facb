#include "sacl/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sacl/core/error.hpp"
#include "sacl/simd/kernels.hpp"

namespace sacl::ad {

std::string_view op_name(OpKind op) {
    switch (op) {
        case OpKind::Constant: return "constant";
        case OpKind::Parameter: return "parameter";
        case OpKind::Input: return "input";
        case OpKind::Site: return "site";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "hadamard";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Pow: return "pow";
        case OpKind::LogSoftmax: return "log_softmax";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::Sum: return "sum";
        case OpKind::Pick: return "pick";
        case OpKind::ClampMin: return "clamp_min";
        case OpKind::Dropout: return "dropout";
        case OpKind::Inject: return "inject";
        case OpKind::Dot: return "dot";
        case OpKind::L2Normalize: return "l2_normalize";
    }
    return "?";
}

namespace {

bool is_leaf(OpKind op) {
    return op == OpKind::Constant || op == OpKind::Parameter || op == OpKind::Input ||
           op == OpKind::Site;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
}

void require_vector(const Tensor& a, std::string_view op) {
    if (a.rank() != 1) throw ShapeError(std::string(op) + ": expected a vector, got " + a.shape().str());
}

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("variable not on this tape");
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.borrowed != nullptr ? *n.borrowed : n.value;
}

Var Tape::push(Node n) {
    if (validate_ && !is_leaf(n.op) && !n.value.all_finite()) {
        throw NumericalError("non-finite value produced by " + std::string(op_name(n.op)) +
                             " at node " + std::to_string(nodes_.size()));
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::named_leaf(OpKind op, std::string name, Node n) {
    n.op = op;
    n.requires_grad = true;
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    if (!names_.emplace(std::move(name), id).second) {
        throw std::invalid_argument("duplicate variable name on tape");
    }
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = OpKind::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::parameter(std::string name, const Tensor& value) {
    Node n;
    n.borrowed = &value;
    return named_leaf(OpKind::Parameter, std::move(name), std::move(n));
}

Var Tape::input(std::string name, Tensor value) {
    Node n;
    n.value = std::move(value);
    return named_leaf(OpKind::Input, std::move(name), std::move(n));
}

Var Tape::site(std::string name, Tensor value) {
    if (validate_ && !value.all_finite()) throw NumericalError("non-finite injection site value");
    Node n;
    n.value = std::move(value);
    return named_leaf(OpKind::Site, std::move(name), std::move(n));
}

Var Tape::find(std::string_view name) const {
    auto it = names_.find(std::string(name));
    if (it == names_.end()) return Var{};
    return Var{it->second};
}

std::vector<std::string> Tape::names() const {
    std::vector<std::string> out;
    out.reserve(names_.size());
    for (const auto& [k, v] : names_) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Forward primitives

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Node n;
    n.op = OpKind::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    if (A.rank() == 2 && B.rank() == 1) {
        const std::size_t m = A.shape()[0], k = A.shape()[1];
        if (B.shape()[0] != k) throw ShapeError("matmul: " + A.shape().str() + " x " + B.shape().str());
        n.value = Tensor(Shape{m});
        simd::matvec(A.data(), m, k, B.data(), n.value.data());
    } else if (A.rank() == 1 && B.rank() == 2) {
        const std::size_t k = B.shape()[0], cols = B.shape()[1];
        if (A.shape()[0] != k) throw ShapeError("matmul: " + A.shape().str() + " x " + B.shape().str());
        n.value = Tensor(Shape{cols});
        simd::matvec_t_acc(B.data(), k, cols, A.data(), n.value.data());
    } else if (A.rank() == 2 && B.rank() == 2) {
        const std::size_t m = A.shape()[0], k = A.shape()[1], cols = B.shape()[1];
        if (B.shape()[0] != k) throw ShapeError("matmul: " + A.shape().str() + " x " + B.shape().str());
        n.value = Tensor(Shape{m, cols});
        for (std::size_t i = 0; i < m; ++i) {
            simd::matvec_t_acc(B.data(), k, cols, A.data() + i * k, n.value.data() + i * cols);
        }
    } else {
        throw ShapeError("matmul: unsupported ranks " + A.shape().str() + " x " + B.shape().str());
    }
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "add");
    Node n;
    n.op = OpKind::Add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = A;
    for (std::size_t i = 0; i < B.size(); ++i) n.value[i] += B[i];
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "sub");
    Node n;
    n.op = OpKind::Sub;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = A;
    for (std::size_t i = 0; i < B.size(); ++i) n.value[i] -= B[i];
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "hadamard");
    Node n;
    n.op = OpKind::Mul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] * B[i];
    return push(std::move(n));
}

namespace {

template <class F>
Tensor map_values(const Tensor& in, F f) {
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return out;
}

}  // namespace

Var Tape::scale(Var a, double s) {
    Node n;
    n.op = OpKind::Scale;
    n.a = a.id;
    n.scalar = s;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [s](double x) { return s * x; });
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
    Node n;
    n.op = OpKind::AddScalar;
    n.a = a.id;
    n.scalar = s;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [s](double x) { return x + s; });
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    Node n;
    n.op = OpKind::Sigmoid;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), sigmoid_value);
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    Node n;
    n.op = OpKind::Tanh;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [](double x) { return std::tanh(x); });
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    Node n;
    n.op = OpKind::Relu;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
    return push(std::move(n));
}

Var Tape::exp(Var a) {
    Node n;
    n.op = OpKind::Exp;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [](double x) { return std::exp(x); });
    return push(std::move(n));
}

Var Tape::log(Var a) {
    Node n;
    n.op = OpKind::Log;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [](double x) { return std::log(x); });
    return push(std::move(n));
}

Var Tape::pow(Var a, double p) {
    const Tensor& A = value(a);
    for (std::size_t i = 0; i < A.size(); ++i) {
        if (A[i] < 0.0) throw std::domain_error("pow: negative base");
    }
    Node n;
    n.op = OpKind::Pow;
    n.a = a.id;
    n.scalar = p;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(A, [p](double x) { return p == 0.0 ? 1.0 : std::pow(x, p); });
    return push(std::move(n));
}

Var Tape::log_softmax(Var a) {
    const Tensor& A = value(a);
    require_vector(A, "log_softmax");
    const double mx = *std::max_element(A.values().begin(), A.values().end());
    double s = 0.0;
    for (double x : A.values()) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    Node n;
    n.op = OpKind::LogSoftmax;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(A, [lse](double x) { return x - lse; });
    return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t total = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& t = value(p);
        if (t.rank() > 1) throw ShapeError("concat: inputs must be scalars or vectors");
        total += t.size();
        rg = rg || node(p).requires_grad;
    }
    Node n;
    n.op = OpKind::Concat;
    n.requires_grad = rg;
    n.args_begin = static_cast<std::uint32_t>(args_.size());
    n.args_count = static_cast<std::uint32_t>(parts.size());
    n.value = Tensor(Shape{total});
    std::size_t off = 0;
    for (Var p : parts) {
        args_.push_back(p.id);
        const Tensor& t = value(p);
        std::copy(t.data(), t.data() + t.size(), n.value.data() + off);
        off += t.size();
    }
    return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t begin, std::size_t length) {
    const Tensor& A = value(a);
    require_vector(A, "slice");
    if (length == 0 || begin + length > A.size()) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + length) + ") outside " + A.shape().str());
    }
    Node n;
    n.op = OpKind::Slice;
    n.a = a.id;
    n.index = begin;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor(Shape{length}, std::vector<double>(A.data() + begin, A.data() + begin + length));
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double x : A.values()) s += x;
    Node n;
    n.op = OpKind::Sum;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Var Tape::pick(Var a, std::size_t index) {
    const Tensor& A = value(a);
    if (index >= A.size()) throw ShapeError("pick: index out of range");
    Node n;
    n.op = OpKind::Pick;
    n.a = a.id;
    n.index = index;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::scalar(A[index]);
    return push(std::move(n));
}

Var Tape::clamp_min(Var a, double floor) {
    Node n;
    n.op = OpKind::ClampMin;
    n.a = a.id;
    n.scalar = floor;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(value(a), [floor](double x) { return x < floor ? floor : x; });
    return push(std::move(n));
}

Var Tape::dropout(Var a, std::vector<double> mask) {
    const Tensor& A = value(a);
    if (mask.size() != A.size()) throw ShapeError("dropout: mask length mismatch");
    Node n;
    n.op = OpKind::Dropout;
    n.a = a.id;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] * mask[i];
    n.aux = std::move(mask);
    return push(std::move(n));
}

Var Tape::inject(Var x, Var s) {
    const Tensor& X = value(x);
    const Tensor& S = value(s);
    require_same_shape(X, S, "inject");
    Node n;
    n.op = OpKind::Inject;
    n.a = x.id;
    n.b = s.id;
    n.requires_grad = node(x).requires_grad || node(s).requires_grad;
    n.value = X;
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (S[i] != 0.0) n.value[i] += S[i];
    }
    return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "dot");
    Node n;
    n.op = OpKind::Dot;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor::scalar(simd::dot(A.data(), B.data(), A.size()));
    return push(std::move(n));
}

Var Tape::l2_normalize(Var a) {
    const Tensor& A = value(a);
    require_vector(A, "l2_normalize");
    const double norm = std::sqrt(simd::dot(A.data(), A.data(), A.size()));
    if (norm == 0.0) throw NumericalError("l2_normalize: zero-norm vector");
    Node n;
    n.op = OpKind::L2Normalize;
    n.a = a.id;
    n.scalar = norm;
    n.requires_grad = node(a).requires_grad;
    n.value = map_values(A, [norm](double x) { return x / norm; });
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Reverse sweep

std::vector<double>& Tape::grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(Var{id}).size(), 0.0);
    return n.grad;
}

void Tape::backward(Var output) {
    const Tensor& out = value(output);
    if (out.size() != 1) throw ShapeError("backward: output is not scalar, shape " + out.shape().str());
    for (Node& n : nodes_) n.grad.clear();
    grad_buffer(output.id)[0] = 1.0;
    for (std::uint32_t i = output.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.grad.empty() || !n.requires_grad || is_leaf(n.op)) continue;
        propagate(i);
    }
}

void Tape::propagate(std::uint32_t id) {
    // Copy what we need first: grad_buffer() may not reallocate nodes_, but
    // keeping references to n.grad while touching other nodes is still fine.
    const Node& n = nodes_[id];
    const std::vector<double>& g = n.grad;
    const Tensor& y = n.value;
    auto wants = [this](std::uint32_t in) { return in != Var::kNone && nodes_[in].requires_grad; };

    switch (n.op) {
        case OpKind::MatMul: {
            const Tensor& A = value(Var{n.a});
            const Tensor& B = value(Var{n.b});
            if (A.rank() == 2 && B.rank() == 1) {
                const std::size_t m = A.shape()[0], k = A.shape()[1];
                if (wants(n.a)) simd::rank1_acc(grad_buffer(n.a).data(), m, k, g.data(), B.data());
                if (wants(n.b)) simd::matvec_t_acc(A.data(), m, k, g.data(), grad_buffer(n.b).data());
            } else if (A.rank() == 1 && B.rank() == 2) {
                const std::size_t k = B.shape()[0], cols = B.shape()[1];
                if (wants(n.a)) {
                    auto& ga = grad_buffer(n.a);
                    for (std::size_t r = 0; r < k; ++r) ga[r] += simd::dot(B.data() + r * cols, g.data(), cols);
                }
                if (wants(n.b)) simd::rank1_acc(grad_buffer(n.b).data(), k, cols, A.data(), g.data());
            } else {
                const std::size_t m = A.shape()[0], k = A.shape()[1], cols = B.shape()[1];
                if (wants(n.a)) {
                    auto& ga = grad_buffer(n.a);
                    std::vector<double> row(k);
                    for (std::size_t i = 0; i < m; ++i) {
                        simd::matvec(B.data(), k, cols, g.data() + i * cols, row.data());
                        simd::axpy(1.0, row.data(), ga.data() + i * k, k);
                    }
                }
                if (wants(n.b)) {
                    auto& gb = grad_buffer(n.b);
                    for (std::size_t i = 0; i < m; ++i) {
                        simd::rank1_acc(gb.data(), k, cols, A.data() + i * k, g.data() + i * cols);
                    }
                }
            }
            break;
        }
        case OpKind::Add:
        case OpKind::Sub: {
            if (wants(n.a)) simd::axpy(1.0, g.data(), grad_buffer(n.a).data(), g.size());
            if (wants(n.b)) {
                simd::axpy(n.op == OpKind::Add ? 1.0 : -1.0, g.data(), grad_buffer(n.b).data(), g.size());
            }
            break;
        }
        case OpKind::Mul: {
            if (wants(n.a)) simd::hadamard_acc(g.data(), value(Var{n.b}).data(), grad_buffer(n.a).data(), g.size());
            if (wants(n.b)) simd::hadamard_acc(g.data(), value(Var{n.a}).data(), grad_buffer(n.b).data(), g.size());
            break;
        }
        case OpKind::Scale: {
            if (wants(n.a)) simd::axpy(n.scalar, g.data(), grad_buffer(n.a).data(), g.size());
            break;
        }
        case OpKind::AddScalar: {
            if (wants(n.a)) simd::axpy(1.0, g.data(), grad_buffer(n.a).data(), g.size());
            break;
        }
        case OpKind::Sigmoid: {
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
        }
        case OpKind::Tanh: {
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
        }
        case OpKind::Relu: {
            const Tensor& x = value(Var{n.a});
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x[i] > 0.0) ga[i] += g[i];
            }
            break;
        }
        case OpKind::Exp: {
            simd::hadamard_acc(g.data(), y.data(), grad_buffer(n.a).data(), g.size());
            break;
        }
        case OpKind::Log: {
            const Tensor& x = value(Var{n.a});
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
            break;
        }
        case OpKind::Pow: {
            const Tensor& x = value(Var{n.a});
            const double p = n.scalar;
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (p == 0.0) continue;
                if (x[i] == 0.0 && p != 1.0) continue;
                ga[i] += g[i] * p * std::pow(x[i], p - 1.0);
            }
            break;
        }
        case OpKind::LogSoftmax: {
            double gs = 0.0;
            for (double v : g) gs += v;
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] - std::exp(y[i]) * gs;
            break;
        }
        case OpKind::Concat: {
            std::size_t off = 0;
            for (std::uint32_t k = 0; k < n.args_count; ++k) {
                const std::uint32_t in = args_[n.args_begin + k];
                const std::size_t len = value(Var{in}).size();
                if (wants(in)) simd::axpy(1.0, g.data() + off, grad_buffer(in).data(), len);
                off += len;
            }
            break;
        }
        case OpKind::Slice: {
            simd::axpy(1.0, g.data(), grad_buffer(n.a).data() + n.index, g.size());
            break;
        }
        case OpKind::Sum: {
            auto& ga = grad_buffer(n.a);
            for (double& v : ga) v += g[0];
            break;
        }
        case OpKind::Pick: {
            grad_buffer(n.a)[n.index] += g[0];
            break;
        }
        case OpKind::ClampMin: {
            const Tensor& x = value(Var{n.a});
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x[i] >= n.scalar) ga[i] += g[i];
            }
            break;
        }
        case OpKind::Dropout: {
            simd::hadamard_acc(g.data(), n.aux.data(), grad_buffer(n.a).data(), g.size());
            break;
        }
        case OpKind::Inject: {
            if (wants(n.a)) simd::axpy(1.0, g.data(), grad_buffer(n.a).data(), g.size());
            if (wants(n.b)) simd::axpy(1.0, g.data(), grad_buffer(n.b).data(), g.size());
            break;
        }
        case OpKind::Dot: {
            const Tensor& A = value(Var{n.a});
            const Tensor& B = value(Var{n.b});
            if (wants(n.a)) simd::axpy(g[0], B.data(), grad_buffer(n.a).data(), B.size());
            if (wants(n.b)) simd::axpy(g[0], A.data(), grad_buffer(n.b).data(), A.size());
            break;
        }
        case OpKind::L2Normalize: {
            const double yg = simd::dot(y.data(), g.data(), g.size());
            auto& ga = grad_buffer(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (g[i] - y[i] * yg) / n.scalar;
            break;
        }
        case OpKind::Constant:
        case OpKind::Parameter:
        case OpKind::Input:
        case OpKind::Site:
            break;
    }
}

bool Tape::has_grad(Var v) const { return !node(v).grad.empty(); }

std::span<const double> Tape::grad_span(Var v) const { return node(v).grad; }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    const Tensor& val = value(v);
    if (n.grad.empty()) return Tensor(val.shape());
    return Tensor(val.shape(), n.grad);
}

GradientMap Tape::gradients(std::span<const std::string> wanted) const {
    GradientMap out;
    for (const std::string& name : wanted) {
        const Var v = find(name);
        if (!v.valid()) throw std::invalid_argument("unknown variable id: " + name);
        out.emplace(name, grad(v));
    }
    return out;
}

// ---------------------------------------------------------------------------

Evaluation evaluate(const GraphBuilder& build, const std::map<std::string, Tensor>& inputs,
                    const std::map<std::string, Tensor>& sites, bool validate) {
    Evaluation ev;
    ev.record.set_validate(validate);
    VarMap vars;
    for (const auto& [name, t] : inputs) {
        if (validate && !t.all_finite()) throw NumericalError("non-finite input " + name);
        vars.emplace(name, ev.record.input(name, t));
    }
    for (const auto& [name, t] : sites) vars.emplace(name, ev.record.site(name, t));
    ev.output_var = build(ev.record, vars);
    ev.output = ev.record.value(ev.output_var);
    return ev;
}

GradientMap backward(Evaluation& evaluation, std::span<const std::string> wanted) {
    for (const std::string& name : wanted) {
        if (!evaluation.record.find(name).valid()) {
            throw std::invalid_argument("unknown variable id: " + name);
        }
    }
    evaluation.record.backward(evaluation.output_var);
    return evaluation.record.gradients(wanted);
}

}  // namespace sacl::ad
