#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace tki {

using NodeIndex = std::size_t;
using Coords = std::array<int, 3>;

// Uniform periodic grid on T^d (d <= 3). Node n_a sits at k_a = -pi + 2 pi n_a / N_a,
// so k_a = 0 is n_a = N/2 and k_a = pi is n_a = 0. Nodes are ordered
// lexicographically with the last axis fastest.
class BZGrid {
 public:
  BZGrid() = default;
  // Throws OddGrid unless every size is even and >= 2.
  explicit BZGrid(std::vector<int> sizes, int fdomain_axis = -1);

  int dim() const { return static_cast<int>(sizes_.size()); }
  int size(int axis) const { return sizes_[static_cast<std::size_t>(axis)]; }
  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t node_count() const { return count_; }
  int min_size() const;

  // Axis a whose half n_a in [N_a/2, N_a) is the default fundamental domain.
  int fdomain_axis() const { return fdomain_axis_; }

  NodeIndex index(const Coords& n) const;
  Coords coords(NodeIndex idx) const;
  double k(int axis, int n) const;
  std::array<double, 3> momentum(NodeIndex idx) const;
  double spacing(int axis) const;

  NodeIndex shift(NodeIndex idx, int axis, int delta) const;
  // k -> -k.
  NodeIndex involution(NodeIndex idx) const;
  bool is_trim(NodeIndex idx) const;
  std::vector<NodeIndex> trims() const;

  bool operator==(const BZGrid& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<int> sizes_;
  std::array<std::size_t, 3> strides_{0, 0, 0};
  std::size_t count_ = 0;
  int fdomain_axis_ = 0;
};

inline int wrap(int n, int size) {
  int r = n % size;
  return r < 0 ? r + size : r;
}

}  // namespace tki
