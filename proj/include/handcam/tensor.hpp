#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace handcam {

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("tensor dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// 32-bit float tensor, row-major. Copying a Tensor copies the handle, not the
// buffer: ops and the tape share storage through these handles. Use clone()
// for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f)
      : storage_(std::make_shared<Storage>()) {
    storage_->shape = std::move(shape);
    storage_->data.assign(shape_numel(storage_->shape), fill);
  }

  Tensor(Shape shape, std::vector<float> data)
      : storage_(std::make_shared<Storage>()) {
    if (data.size() != shape_numel(shape))
      throw TensorError("data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    storage_->shape = std::move(shape);
    storage_->data = std::move(data);
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  int dim(int i) const { return storage_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(storage_->shape.size()); }
  std::size_t numel() const { return storage_->data.size(); }

  float* data() { return storage_->data.data(); }
  const float* data() const { return storage_->data.data(); }
  std::vector<float>& vec() { return storage_->data; }
  const std::vector<float>& vec() const { return storage_->data; }

  float item() const {
    if (numel() != 1) throw TensorError("item() requires a single-element tensor, got " + shape_str(shape()));
    return storage_->data[0];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    storage_->requires_grad = rg;
    if (rg) ensure_grad();
    return *this;
  }

  bool has_grad() const { return !storage_->grad.empty(); }
  void ensure_grad() {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0f);
  }
  float* grad() { ensure_grad(); return storage_->grad.data(); }
  const std::vector<float>& grad_vec() const { return storage_->grad; }
  void zero_grad() {
    if (!storage_->grad.empty()) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0f);
  }

  // Identity of the underlying buffer; used by the tape to track nodes.
  const void* id() const { return storage_.get(); }
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

  Tensor clone() const {
    Tensor t(storage_->shape, storage_->data);
    return t;
  }

  bool all_finite() const {
    for (float v : storage_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until needed; same length as data otherwise
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> storage_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace handcam
