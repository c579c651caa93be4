#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fusion/tensor.hpp"

namespace fusion {

// Inverted dropout mask: entries are 0 with probability `rate`, else
// 1/(1-rate). The same (seed, key) pair always yields the identical mask.
Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed, std::uint64_t key);

// Named dropout sites for one forward pass.
//
// Masks are keyed by site name; a site named after a shared parameter scope
// therefore reuses one mask everywhere that parameter consumes input, and a
// mask multiplied into a [len x d] sequence is one [d] vector shared by
// every time step. A fresh salt per forward pass redraws all masks while
// keeping within-pass sharing intact. Inactive contexts pass tensors
// through untouched.
class DropoutContext {
 public:
  DropoutContext() = default;  // disabled
  DropoutContext(double rate, std::uint64_t seed, std::uint64_t salt);

  static DropoutContext disabled() { return DropoutContext(); }

  bool active() const { return active_; }
  double rate() const { return rate_; }

  // The shared [dim] mask for a named site.
  Tensor mask(const std::string& key, int dim);

  // Multiply the site mask into x (row-broadcast for matrices). No-op when
  // inactive.
  Tensor apply(Graph& g, const Tensor& x, const std::string& key);

  // Introspection for the placement policy tests.
  const std::map<std::string, Tensor>& masks() const { return cache_; }
  const std::map<std::string, int>& applications() const { return applied_; }

 private:
  bool active_ = false;
  double rate_ = 0.0;
  std::uint64_t seed_ = 0;
  std::uint64_t salt_ = 0;
  std::map<std::string, Tensor> cache_;
  std::map<std::string, int> applied_;
};

}  // namespace fusion
