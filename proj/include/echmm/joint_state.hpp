#pragma once

#include "echmm/common.hpp"

#include <span>
#include <vector>

namespace echmm {

/// Mixed-radix (base H) index over the joint states of an ordered neighbor
/// set. The first neighbor is the most significant digit.
class JointStateIndex {
 public:
  JointStateIndex(int states, int width) : states_(states), width_(width), size_(1) {
    if (states < 1 || width < 1) throw InputError("joint index needs states >= 1 and width >= 1");
    for (int i = 0; i < width; ++i) {
      if (size_ > std::numeric_limits<int>::max() / states)
        throw InputError("joint state space too large");
      size_ *= states;
    }
  }

  int states() const { return states_; }
  int width() const { return width_; }
  int size() const { return size_; }

  int encode(std::span<const int> digits) const {
    if (static_cast<int>(digits.size()) != width_) throw ShapeError("joint state width mismatch");
    int ordinal = 0;
    for (int d : digits) {
      if (d < 0 || d >= states_) throw InputError("state digit out of range");
      ordinal = ordinal * states_ + d;
    }
    return ordinal;
  }

  std::vector<int> decode(int ordinal) const {
    if (ordinal < 0 || ordinal >= size_) throw InputError("joint ordinal out of range");
    std::vector<int> digits(static_cast<std::size_t>(width_));
    for (int i = width_ - 1; i >= 0; --i) {
      digits[static_cast<std::size_t>(i)] = ordinal % states_;
      ordinal /= states_;
    }
    return digits;
  }

 private:
  int states_;
  int width_;
  int size_;
};

}  // namespace echmm
