#pragma once

#include <functional>
#include <string>
#include <vector>

#include "handcam/tensor.hpp"

namespace handcam {

// Reverse-mode tape. Ops record one node per call (in execution order);
// backward() replays the closures in exact reverse order, so every node's
// gradient is propagated exactly once.
class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<const void*> inputs;  // storage ids, for debugging/inspection
    const void* output;
    std::function<void()> backward;   // saved context lives in the closure
  };

  void record(const char* op, std::vector<const void*> inputs, const void* output,
              std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  // Seeds d(loss)/d(loss) = 1 and propagates through all recorded nodes.
  // Gradients accumulate into each tensor's grad buffer. A tape can only be
  // walked once; reuse signals a bookkeeping bug in the training loop.
  void backward(Tensor& loss) {
    if (loss.numel() != 1)
      throw TensorError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (consumed_)
      throw TensorError("backward: tape already consumed; rebuild the graph before calling again");
    bool on_tape = nodes_.empty();  // allow leaf-only graphs (e.g. loss built from constants)
    for (const Node& n : nodes_)
      if (n.output == loss.id()) { on_tape = true; break; }
    if (!on_tape)
      throw TensorError("backward: loss tensor was not produced on this tape");
    consumed_ = true;
    loss.ensure_grad();
    loss.grad()[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward) it->backward();
    }
  }

  // Vector-Jacobian product: seeds an arbitrary output tensor with the given
  // cotangent and replays the tape. Same single-use contract as backward().
  void backward_seeded(Tensor& output, const std::vector<float>& seed) {
    if (seed.size() != output.numel())
      throw TensorError("backward_seeded: seed size does not match output");
    if (consumed_)
      throw TensorError("backward_seeded: tape already consumed");
    bool on_tape = false;
    for (const Node& n : nodes_)
      if (n.output == output.id()) { on_tape = true; break; }
    if (!on_tape)
      throw TensorError("backward_seeded: output tensor was not produced on this tape");
    consumed_ = true;
    output.ensure_grad();
    float* g = output.grad();
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward) it->backward();
    }
  }

  bool consumed() const { return consumed_; }
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace handcam
