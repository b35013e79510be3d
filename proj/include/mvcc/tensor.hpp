#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvcc/errors.hpp"

namespace mvcc {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> values;  // row-major
    std::vector<double> grad;    // same length as values iff requires_grad
    bool requires_grad = false;
};

// Shared-handle tensor. Copies alias the same storage; clone() deep-copies.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return impl_->values.size(); }

    std::span<double> values() { return impl_->values; }
    std::span<const double> values() const { return impl_->values; }
    std::span<double> grad();
    std::span<const double> grad() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    void zero_grad();

    double item() const;  // scalar tensors only

    Tensor clone() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }

    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl> impl_;
};

struct TapeNode {
    std::shared_ptr<TensorImpl> out;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> pull;  // propagate out->grad into parent grads
};

// Ordered record of executed operations. Backward replays it once, in reverse
// insertion order.
class Tape {
public:
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    void record(TapeNode node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    const TapeNode& node(std::size_t i) const { return nodes_[i]; }

private:
    std::vector<TapeNode> nodes_;
    bool recording_ = true;
};

// Populates gradients of every requires_grad tensor reachable from `loss`.
// Throws ContractError if loss is not scalar or carries no gradient.
void backward(const Tensor& loss, Tape& tape);

// ---- differentiable operations -------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double s);

// x: [r, c], v: [c] or [1, c]; adds v to every row of x.
Tensor add_rowvec(Tape& tape, const Tensor& x, const Tensor& v);

Tensor gelu(Tape& tape, const Tensor& x);

// Softmax over the last axis, max-stabilized.
Tensor softmax(Tape& tape, const Tensor& x);

// Softmax over the last axis restricted to `allowed` entries (row-major
// bitmap, one byte per element of x). Disallowed outputs are exactly 0.0 and
// never enter max/sum, so they cannot leak values or gradients. Every row
// must have at least one allowed entry.
Tensor masked_softmax(Tape& tape, const Tensor& x, const std::vector<std::uint8_t>& allowed);

// Per-row standardization over the last axis followed by the affine map
// gain * xhat + bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_rows(Tape& tape, const Tensor& x, int begin, int count);
Tensor slice_cols(Tape& tape, const Tensor& x, int begin, int count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// Embedding lookup: rows of `table` selected by `ids`.
Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// Row k of the output equals row k of x when keep[k] != 0 and is exactly 0.0
// otherwise. Identical to broadcasting a {0,1} row mask over channels, minus
// signed-zero artifacts.
Tensor row_select(Tape& tape, const Tensor& x, const std::vector<std::uint8_t>& keep);

// Gathers rows of an activation (drop-style filtering).
Tensor take_rows(Tape& tape, const Tensor& x, const std::vector<int>& rows);

Tensor sum(Tape& tape, const Tensor& x);  // -> scalar

// Mean over rows with target != ignore_id of -log softmax(logits_row)[target].
// Throws ContractError when every target is ignored.
Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                          int ignore_id);

}  // namespace mvcc
