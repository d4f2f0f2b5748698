#pragma once

#include <string>
#include <utility>
#include <vector>

#include "safire/random.h"
#include "safire/tensor.h"

namespace safire {

/// Named, insertion-ordered collection of trainable leaves.
class ParamStore {
 public:
  /// Registers `value` under `name` and marks it as grad-tracking.
  Tensor add(std::string name, Tensor value);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;

  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);

}  // namespace safire
