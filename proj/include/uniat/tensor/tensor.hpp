// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with reverse-mode differentiation on a linear tape.
//
// Tensor is a handle: copies share storage, which is what lets the tape route
// adjoints back into parameters. A tape records one forward pass and may be
// replayed exactly once; call reset() before reusing it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uniat::tensor {

using Shape = std::vector<std::size_t>;

[[nodiscard]] std::string shape_string(const Shape& shape);
[[nodiscard]] std::size_t shape_numel(const Shape& shape);

template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(s_); }
    [[nodiscard]] const Shape& shape() const { return s_->shape; }
    [[nodiscard]] std::size_t ndim() const { return s_->shape.size(); }
    [[nodiscard]] std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
    [[nodiscard]] std::size_t numel() const { return s_->values.size(); }
    /// Leading dimension; 1 for scalars and vectors.
    [[nodiscard]] std::size_t rows() const;
    /// Product of the trailing dimensions (row length).
    [[nodiscard]] std::size_t cols() const;

    [[nodiscard]] std::span<T> values() { return s_->values; }
    [[nodiscard]] std::span<const T> values() const { return s_->values; }
    [[nodiscard]] T item() const;
    T& operator[](std::size_t i) { return s_->values[i]; }
    const T& operator[](std::size_t i) const { return s_->values[i]; }

    [[nodiscard]] bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool on) { s_->requires_grad = on; }

    [[nodiscard]] bool has_grad() const { return !s_->grad.empty(); }
    /// Empty span when no gradient has been accumulated.
    [[nodiscard]] std::span<const T> grad() const { return s_->grad; }
    /// Allocates a zero gradient buffer on first use.
    std::span<T> ensure_grad();
    void zero_grad();
    void drop_grad() { s_->grad.clear(); s_->grad.shrink_to_fit(); }

    /// Deep copy of the values; the copy does not require grad.
    [[nodiscard]] Tensor detach() const;
    [[nodiscard]] bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

private:
    struct Storage {
        Shape shape;
        std::vector<T> values;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> s_;
};

template <typename T>
class Tape {
public:
    /// Receives the output adjoint and accumulates into the op's inputs.
    using Adjoint = std::function<void(std::span<const T>)>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// A tape that never records; used for inference.
    static Tape inference() { return Tape(false); }

    [[nodiscard]] bool recording() const noexcept { return recording_; }

    /// True when an op over these inputs has to be recorded.
    [[nodiscard]] bool tracks(std::initializer_list<const Tensor<T>*> inputs) const;

    void record(const char* op, const Tensor<T>& output, Adjoint adjoint);

    /// Replays adjoints in reverse order starting from a scalar loss.
    void backward(const Tensor<T>& loss);

    void reset();

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] bool consumed() const noexcept { return consumed_; }
    [[nodiscard]] std::vector<std::string> recorded_ops() const;

    /// Test hook: scales the incoming adjoint of every `op` node by (1 + scale).
    void inject_fault(std::string op, T scale) { fault_.emplace(std::move(op), scale); }

private:
    struct Node {
        const char* op;
        Tensor<T> output;
        Adjoint adjoint;
    };
    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
    std::optional<std::pair<std::string, T>> fault_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace uniat::tensor

namespace uniat::tensor {

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

}  // namespace uniat::tensor
