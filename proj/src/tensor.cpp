#include "wgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wgen {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2)
    throw ShapeError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
}
}  // namespace

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
}

template <class T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<T> values) {
  return Tensor({rows, cols}, std::vector<T>(values));
}

template <class T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar " + shape_string(shape_));
  return data_[0];
}

template <class T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <class T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

// c[m×p] += a[m×k] · b[k×p]. The i-k-j order keeps the inner loop contiguous
// so it vectorizes; the summation order is fixed, so results are
// reproducible run to run.
template <class T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                     std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * p;
    const T* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = ai[kk];
      if (av == T(0)) continue;
      const T* bk = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += av * bk[j];
    }
  }
}

template void gemm_accumulate<float>(const float*, const float*, float*, std::size_t,
                                     std::size_t, std::size_t);
template void gemm_accumulate<double>(const double*, const double*, double*, std::size_t,
                                      std::size_t, std::size_t);

}  // namespace wgen
