#include "mvcc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvcc {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C[m,n] (+)= A[m,k] * B[k,n]
void mm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!acc) std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] (+)= A[m,n] * B[k,n]^T
void mm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool acc) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * n;
            double dot = 0.0;
            for (int p = 0; p < n; ++p) dot += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + dot : dot;
        }
    }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
void mm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
    for (int p = 0; p < m; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * k;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < k; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_str(t.shape()));
    }
}

bool track(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

Tensor make_output(Shape shape, bool tracked) {
    return Tensor::zeros(std::move(shape), tracked);
}

// Rows/last-axis split for ops normalized over the trailing dimension.
std::pair<std::size_t, int> rows_and_width(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("expected rank >= 1, got scalar-rank tensor");
    const int width = x.dim(x.rank() - 1);
    return {x.size() / static_cast<std::size_t>(width), width};
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    const std::size_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->values.assign(n, 0.0);
    impl->requires_grad = requires_grad;
    if (requires_grad) impl->grad.assign(n, 0.0);
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.impl()->values.begin(), t.impl()->values.end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    if (n != values.size()) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    if (requires_grad) impl->grad.assign(n, 0.0);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

std::span<double> Tensor::grad() {
    if (!impl_->requires_grad) throw ContractError("tensor does not require grad");
    return impl_->grad;
}

std::span<const double> Tensor::grad() const {
    if (!impl_->requires_grad) throw ContractError("tensor does not require grad");
    return impl_->grad;
}

void Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
        impl_->grad.assign(impl_->values.size(), 0.0);
    } else {
        impl_->grad.clear();
        impl_->grad.shrink_to_fit();
    }
}

void Tensor::zero_grad() {
    if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->values[0];
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>(*impl_);
    return Tensor(std::move(impl));
}

void backward(const Tensor& loss, Tape& tape) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss was not produced through the tape");
    }
    loss.impl()->grad[0] = 1.0;
    for (std::size_t i = tape.size(); i-- > 0;) {
        tape.node(i).pull();
    }
}

// ---- op helpers ------------------------------------------------------------

namespace {

void record_node(Tape& tape, Tensor out, std::vector<Tensor> parents,
                 std::function<void()> pull) {
    TapeNode node;
    node.out = out.ptr();
    node.parents.reserve(parents.size());
    for (auto& p : parents) node.parents.push_back(p.ptr());
    node.pull = std::move(pull);
    tape.record(std::move(node));
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_output({m, n}, tracked);
    mm_nn(m, k, n, a.values().data(), b.values().data(), out.values().data(), false);
    if (tracked) {
        record_node(tape, out, {a, b}, [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
            if (ai->requires_grad) mm_nt(m, n, k, oi->grad.data(), bi->values.data(), ai->grad.data(), true);
            if (bi->requires_grad) mm_tn(m, k, n, ai->values.data(), oi->grad.data(), bi->grad.data(), true);
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
    require_rank2(x, "transpose");
    const int m = x.dim(0), n = x.dim(1);
    const bool tracked = track(tape, {&x});
    Tensor out = make_output({n, m}, tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            ov[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    xi->grad[static_cast<std::size_t>(i) * n + j] +=
                        oi->grad[static_cast<std::size_t>(j) * m + i];
        });
    }
    return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), tracked);
    const auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (tracked) {
        record_node(tape, out, {a, b}, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
            if (ai->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), tracked);
    const auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (tracked) {
        record_node(tape, out, {a, b}, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
            if (ai->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), tracked);
    const auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (tracked) {
        record_node(tape, out, {a, b}, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
            if (ai->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i)
                    ai->grad[i] += oi->grad[i] * bi->values[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i)
                    bi->grad[i] += oi->grad[i] * ai->values[i];
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * s;
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), s] {
            for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i] * s;
        });
    }
    return out;
}

Tensor add_rowvec(Tape& tape, const Tensor& x, const Tensor& v) {
    require_rank2(x, "add_rowvec");
    const int r = x.dim(0), c = x.dim(1);
    if (static_cast<std::size_t>(c) != v.size()) {
        throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
    }
    const bool tracked = track(tape, {&x, &v});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values(), vv = v.values();
    auto ov = out.values();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            ov[static_cast<std::size_t>(i) * c + j] = xv[static_cast<std::size_t>(i) * c + j] + vv[j];
    if (tracked) {
        record_node(tape, out, {x, v}, [xi = x.impl(), vi = v.impl(), oi = out.impl(), r, c] {
            if (xi->requires_grad)
                for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
            if (vi->requires_grad)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        vi->grad[j] += oi->grad[static_cast<std::size_t>(i) * c + j];
        });
    }
    return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
    }
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl()] {
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                const double v = xi->values[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                xi->grad[i] += oi->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
    const auto [rows, width] = rows_and_width(x);
    const bool tracked = track(tape, {&x});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * width;
        double* o = ov.data() + r * width;
        double mx = in[0];
        for (int j = 1; j < width; ++j) mx = std::max(mx, in[j]);
        double total = 0.0;
        for (int j = 0; j < width; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        const double inv = 1.0 / total;
        for (int j = 0; j < width; ++j) o[j] *= inv;
    }
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), rows = rows, width = width] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = oi->values.data() + r * width;
                const double* dy = oi->grad.data() + r * width;
                double* dx = xi->grad.data() + r * width;
                double dot = 0.0;
                for (int j = 0; j < width; ++j) dot += dy[j] * y[j];
                for (int j = 0; j < width; ++j) dx[j] += (dy[j] - dot) * y[j];
            }
        });
    }
    return out;
}

Tensor masked_softmax(Tape& tape, const Tensor& x, const std::vector<std::uint8_t>& allowed) {
    const auto [rows, width] = rows_and_width(x);
    if (allowed.size() != x.size()) {
        throw ShapeError("masked_softmax: bitmap size " + std::to_string(allowed.size()) +
                         " does not match tensor " + shape_str(x.shape()));
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * width;
        const std::uint8_t* ok = allowed.data() + r * width;
        double* o = ov.data() + r * width;
        double mx = 0.0;
        bool any = false;
        for (int j = 0; j < width; ++j) {
            if (!ok[j]) continue;
            mx = any ? std::max(mx, in[j]) : in[j];
            any = true;
        }
        if (!any) throw ContractError("masked_softmax: row " + std::to_string(r) +
                                      " has no allowed entries");
        double total = 0.0;
        for (int j = 0; j < width; ++j) {
            if (ok[j]) {
                o[j] = std::exp(in[j] - mx);
                total += o[j];
            } else {
                o[j] = 0.0;
            }
        }
        const double inv = 1.0 / total;
        for (int j = 0; j < width; ++j) {
            if (ok[j]) o[j] *= inv;
        }
    }
    if (tracked) {
        // Disallowed entries have y == 0, so the softmax pullback already
        // sends zero gradient there.
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), rows = rows, width = width] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = oi->values.data() + r * width;
                const double* dy = oi->grad.data() + r * width;
                double* dx = xi->grad.data() + r * width;
                double dot = 0.0;
                for (int j = 0; j < width; ++j) dot += dy[j] * y[j];
                for (int j = 0; j < width; ++j) dx[j] += (dy[j] - dot) * y[j];
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    const auto [rows, width] = rows_and_width(x);
    if (gain.size() != static_cast<std::size_t>(width) ||
        bias.size() != static_cast<std::size_t>(width)) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match feature width " +
                         std::to_string(width));
    }
    const bool tracked = track(tape, {&x, &gain, &bias});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values(), gv = gain.values(), bv = bias.values();
    auto ov = out.values();
    // xhat is re-derived in the pullback from values; keep inv_sigma per row.
    std::vector<double> inv_sigma(rows), mean(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * width;
        double mu = 0.0;
        for (int j = 0; j < width; ++j) mu += in[j];
        mu /= width;
        double var = 0.0;
        for (int j = 0; j < width; ++j) {
            const double d = in[j] - mu;
            var += d * d;
        }
        var /= width;
        const double inv = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_sigma[r] = inv;
        double* o = ov.data() + r * width;
        for (int j = 0; j < width; ++j) o[j] = (in[j] - mu) * inv * gv[j] + bv[j];
    }
    if (tracked) {
        record_node(tape, out, {x, gain, bias},
                    [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl(),
                     rows = rows, width = width, mean = std::move(mean),
                     inv_sigma = std::move(inv_sigma)] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* in = xi->values.data() + r * width;
                const double* dy = oi->grad.data() + r * width;
                const double mu = mean[r];
                const double inv = inv_sigma[r];
                double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
                for (int j = 0; j < width; ++j) {
                    const double xhat = (in[j] - mu) * inv;
                    const double gdy = gi->values[j] * dy[j];
                    sum_gdy += gdy;
                    sum_gdy_xhat += gdy * xhat;
                    if (gi->requires_grad) gi->grad[j] += dy[j] * xhat;
                    if (bi->requires_grad) bi->grad[j] += dy[j];
                }
                if (xi->requires_grad) {
                    double* dx = xi->grad.data() + r * width;
                    const double inv_n = 1.0 / width;
                    for (int j = 0; j < width; ++j) {
                        const double xhat = (in[j] - mu) * inv;
                        const double gdy = gi->values[j] * dy[j];
                        dx[j] += inv * (gdy - inv_n * sum_gdy - xhat * inv_n * sum_gdy_xhat);
                    }
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_rows");
    require_rank2(b, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_rows: widths disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const int ra = a.dim(0), rb = b.dim(0), c = a.dim(1);
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_output({ra + rb, c}, tracked);
    auto ov = out.values();
    std::copy(a.values().begin(), a.values().end(), ov.begin());
    std::copy(b.values().begin(), b.values().end(),
              ov.begin() + static_cast<std::ptrdiff_t>(a.size()));
    if (tracked) {
        record_node(tape, out, {a, b}, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
            const std::size_t na = ai->values.size();
            if (ai->requires_grad)
                for (std::size_t i = 0; i < na; ++i) ai->grad[i] += oi->grad[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < bi->values.size(); ++i)
                    bi->grad[i] += oi->grad[na + i];
        });
    }
    return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, int begin, int count) {
    require_rank2(x, "slice_rows");
    const int r = x.dim(0), c = x.dim(1);
    if (begin < 0 || count < 1 || begin + count > r) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_output({count, c}, tracked);
    const std::size_t off = static_cast<std::size_t>(begin) * c;
    std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(off),
              x.values().begin() + static_cast<std::ptrdiff_t>(off + out.size()),
              out.values().begin());
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), off] {
            for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[off + i] += oi->grad[i];
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int begin, int count) {
    require_rank2(x, "slice_cols");
    const int r = x.dim(0), c = x.dim(1);
    if (begin < 0 || count < 1 || begin + count > c) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_output({r, count}, tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < count; ++j)
            ov[static_cast<std::size_t>(i) * count + j] =
                xv[static_cast<std::size_t>(i) * c + begin + j];
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), r, c, begin, count] {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < count; ++j)
                    xi->grad[static_cast<std::size_t>(i) * c + begin + j] +=
                        oi->grad[static_cast<std::size_t>(i) * count + j];
        });
    }
    return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int r = parts[0].dim(0);
    int c = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.dim(0) != r) {
            throw ShapeError("concat_cols: row counts disagree, " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        }
        c += p.dim(1);
    }
    bool tracked = false;
    if (tape.recording()) {
        for (const Tensor& p : parts) tracked = tracked || p.requires_grad();
    }
    Tensor out = make_output({r, c}, tracked);
    auto ov = out.values();
    int col = 0;
    for (const Tensor& p : parts) {
        const int pc = p.dim(1);
        const auto pv = p.values();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < pc; ++j)
                ov[static_cast<std::size_t>(i) * c + col + j] =
                    pv[static_cast<std::size_t>(i) * pc + j];
        col += pc;
    }
    if (tracked) {
        std::vector<std::shared_ptr<TensorImpl>> impls;
        impls.reserve(parts.size());
        for (const Tensor& p : parts) impls.push_back(p.ptr());
        TapeNode node;
        node.out = out.ptr();
        node.parents = impls;
        node.pull = [impls, oi = out.impl(), r, c] {
            int col = 0;
            for (const auto& pi : impls) {
                const int pc = pi->shape[1];
                if (pi->requires_grad) {
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < pc; ++j)
                            pi->grad[static_cast<std::size_t>(i) * pc + j] +=
                                oi->grad[static_cast<std::size_t>(i) * c + col + j];
                }
                col += pc;
            }
        };
        tape.record(std::move(node));
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
    require_rank2(table, "gather_rows");
    const int rows = table.dim(0), c = table.dim(1);
    if (ids.empty()) throw ShapeError("gather_rows: empty id list");
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw ContractError("gather_rows: id " + std::to_string(id) + " outside table with " +
                                std::to_string(rows) + " rows");
        }
    }
    const bool tracked = track(tape, {&table});
    Tensor out = make_output({static_cast<int>(ids.size()), c}, tracked);
    const auto tv = table.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = tv.data() + static_cast<std::size_t>(ids[i]) * c;
        std::copy(src, src + c, ov.data() + i * c);
    }
    if (tracked) {
        record_node(tape, out, {table}, [ti = table.impl(), oi = out.impl(), ids, c] {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                double* dst = ti->grad.data() + static_cast<std::size_t>(ids[i]) * c;
                const double* src = oi->grad.data() + i * c;
                for (int j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor row_select(Tape& tape, const Tensor& x, const std::vector<std::uint8_t>& keep) {
    require_rank2(x, "row_select");
    const int r = x.dim(0), c = x.dim(1);
    if (keep.size() != static_cast<std::size_t>(r)) {
        throw ShapeError("row_select: mask length " + std::to_string(keep.size()) +
                         " does not match " + std::to_string(r) + " rows");
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_output(x.shape(), tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (int i = 0; i < r; ++i) {
        double* o = ov.data() + static_cast<std::size_t>(i) * c;
        if (keep[static_cast<std::size_t>(i)]) {
            const double* in = xv.data() + static_cast<std::size_t>(i) * c;
            std::copy(in, in + c, o);
        }
        // else: rows were zero-initialized
    }
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), keep, r, c] {
            for (int i = 0; i < r; ++i) {
                if (!keep[static_cast<std::size_t>(i)]) continue;
                double* dst = xi->grad.data() + static_cast<std::size_t>(i) * c;
                const double* src = oi->grad.data() + static_cast<std::size_t>(i) * c;
                for (int j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor take_rows(Tape& tape, const Tensor& x, const std::vector<int>& rows) {
    require_rank2(x, "take_rows");
    const int r = x.dim(0), c = x.dim(1);
    if (rows.empty()) throw ContractError("take_rows: empty row list");
    for (int i : rows) {
        if (i < 0 || i >= r) {
            throw ShapeError("take_rows: row " + std::to_string(i) + " outside " +
                             shape_str(x.shape()));
        }
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_output({static_cast<int>(rows.size()), c}, tracked);
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = xv.data() + static_cast<std::size_t>(rows[i]) * c;
        std::copy(src, src + c, ov.data() + i * c);
    }
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl(), rows, c] {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                double* dst = xi->grad.data() + static_cast<std::size_t>(rows[i]) * c;
                const double* src = oi->grad.data() + i * c;
                for (int j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_output({1}, tracked);
    double total = 0.0;
    for (double v : x.values()) total += v;
    out.values()[0] = total;
    if (tracked) {
        record_node(tape, out, {x}, [xi = x.impl(), oi = out.impl()] {
            const double g = oi->grad[0];
            for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
        });
    }
    return out;
}

Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                          int ignore_id) {
    require_rank2(logits, "cross_entropy_rows");
    const int t_len = logits.dim(0), k = logits.dim(1);
    if (targets.size() != static_cast<std::size_t>(t_len)) {
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t_len) + " rows");
    }
    int counted = 0;
    for (int y : targets) {
        if (y == ignore_id) continue;
        if (y < 0 || y >= k) {
            throw ContractError("cross_entropy_rows: target id " + std::to_string(y) +
                                " outside vocabulary of size " + std::to_string(k));
        }
        ++counted;
    }
    if (counted == 0) {
        throw ContractError("cross_entropy_rows: every target position is ignored");
    }
    const bool tracked = track(tape, {&logits});
    Tensor out = make_output({1}, tracked);
    const auto lv = logits.values();
    double total = 0.0;
    for (int t = 0; t < t_len; ++t) {
        if (targets[static_cast<std::size_t>(t)] == ignore_id) continue;
        const double* row = lv.data() + static_cast<std::size_t>(t) * k;
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum_exp = 0.0;
        for (int j = 0; j < k; ++j) sum_exp += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum_exp);
        total += lse - row[targets[static_cast<std::size_t>(t)]];
    }
    out.values()[0] = total / counted;
    if (tracked) {
        record_node(tape, out, {logits},
                    [li = logits.impl(), oi = out.impl(), targets, ignore_id, t_len, k, counted] {
            const double g = oi->grad[0] / counted;
            for (int t = 0; t < t_len; ++t) {
                const int y = targets[static_cast<std::size_t>(t)];
                if (y == ignore_id) continue;
                const double* row = li->values.data() + static_cast<std::size_t>(t) * k;
                double* drow = li->grad.data() + static_cast<std::size_t>(t) * k;
                double mx = row[0];
                for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                double sum_exp = 0.0;
                for (int j = 0; j < k; ++j) sum_exp += std::exp(row[j] - mx);
                const double inv = 1.0 / sum_exp;
                for (int j = 0; j < k; ++j) {
                    const double p = std::exp(row[j] - mx) * inv;
                    drow[j] += g * (p - (j == y ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

}  // namespace mvcc
