// SPDX-License-Identifier: Apache-2.0

#include "uniat/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "uniat/core/error.hpp"

namespace uniat::tensor {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    s_->shape = std::move(shape);
    s_->values = std::move(values);
    s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
    return s_->shape.size() < 2 ? 1 : s_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
    const std::size_t r = rows();
    return r == 0 ? 0 : numel() / r;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return s_->values[0];
}

template <typename T>
std::span<T> Tensor<T>::ensure_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
    return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(s_->shape, s_->values, false);
}

template <typename T>
bool Tape<T>::tracks(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!recording_) return false;
    for (const Tensor<T>* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
void Tape<T>::record(const char* op, const Tensor<T>& output, Adjoint adjoint) {
    if (consumed_) throw Error("recording on a consumed tape; call reset() first");
    nodes_.push_back(Node{op, output, std::move(adjoint)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw Error("backward already replayed on this tape; call reset() first");
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward needs a scalar loss, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    std::size_t start = nodes_.size();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].output.same_storage(loss)) {
            start = i;
            break;
        }
    }
    if (start == nodes_.size()) throw Error("loss is detached from this tape");

    Tensor<T> root = loss;
    root.ensure_grad()[0] = T(1);
    std::vector<T> faulty;
    for (std::size_t i = start + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.output.has_grad()) continue;
        std::span<const T> dy = node.output.grad();
        if (fault_ && fault_->first == node.op) {
            faulty.assign(dy.begin(), dy.end());
            for (T& v : faulty) v *= T(1) + fault_->second;
            dy = faulty;
        }
        node.adjoint(dy);
    }
    consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
    nodes_.clear();
    consumed_ = false;
}

template <typename T>
std::vector<std::string> Tape<T>::recorded_ops() const {
    std::vector<std::string> out;
    out.reserve(nodes_.size());
    for (const Node& n : nodes_) out.emplace_back(n.op);
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace uniat::tensor
