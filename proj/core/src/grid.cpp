#include "tki/grid.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "tki/error.hpp"

namespace tki {

BZGrid::BZGrid(std::vector<int> sizes, int fdomain_axis) : sizes_(std::move(sizes)) {
  if (sizes_.empty() || sizes_.size() > 3) {
    throw Error(ErrorCode::IncompatibleGrid, "grid dimension must be 1, 2 or 3");
  }
  for (int n : sizes_) {
    if (n < 2 || n % 2 != 0) throw Error(ErrorCode::OddGrid, "grid size " + std::to_string(n) + " is not even");
  }
  count_ = 1;
  for (int a = dim() - 1; a >= 0; --a) {
    strides_[static_cast<std::size_t>(a)] = count_;
    count_ *= static_cast<std::size_t>(sizes_[static_cast<std::size_t>(a)]);
  }
  fdomain_axis_ = fdomain_axis < 0 ? dim() - 1 : fdomain_axis;
  if (fdomain_axis_ >= dim()) throw Error(ErrorCode::IncompatibleGrid, "fundamental-domain axis out of range");
}

int BZGrid::min_size() const { return *std::min_element(sizes_.begin(), sizes_.end()); }

NodeIndex BZGrid::index(const Coords& n) const {
  NodeIndex idx = 0;
  for (int a = 0; a < dim(); ++a) {
    idx += static_cast<NodeIndex>(wrap(n[static_cast<std::size_t>(a)], size(a))) * strides_[static_cast<std::size_t>(a)];
  }
  return idx;
}

Coords BZGrid::coords(NodeIndex idx) const {
  Coords n{0, 0, 0};
  for (int a = 0; a < dim(); ++a) {
    auto s = strides_[static_cast<std::size_t>(a)];
    n[static_cast<std::size_t>(a)] = static_cast<int>(idx / s);
    idx %= s;
  }
  return n;
}

double BZGrid::k(int axis, int n) const { return -std::numbers::pi + 2 * std::numbers::pi * n / size(axis); }

double BZGrid::spacing(int axis) const { return 2 * std::numbers::pi / size(axis); }

std::array<double, 3> BZGrid::momentum(NodeIndex idx) const {
  Coords n = coords(idx);
  std::array<double, 3> k{0, 0, 0};
  for (int a = 0; a < dim(); ++a) k[static_cast<std::size_t>(a)] = this->k(a, n[static_cast<std::size_t>(a)]);
  return k;
}

NodeIndex BZGrid::shift(NodeIndex idx, int axis, int delta) const {
  Coords n = coords(idx);
  n[static_cast<std::size_t>(axis)] += delta;
  return index(n);
}

NodeIndex BZGrid::involution(NodeIndex idx) const {
  Coords n = coords(idx);
  for (int a = 0; a < dim(); ++a) n[static_cast<std::size_t>(a)] = -n[static_cast<std::size_t>(a)];
  return index(n);
}

bool BZGrid::is_trim(NodeIndex idx) const {
  Coords n = coords(idx);
  for (int a = 0; a < dim(); ++a) {
    int v = n[static_cast<std::size_t>(a)];
    if (v != 0 && v != size(a) / 2) return false;
  }
  return true;
}

std::vector<NodeIndex> BZGrid::trims() const {
  std::vector<NodeIndex> out;
  for (int mask = 0; mask < (1 << dim()); ++mask) {
    Coords n{0, 0, 0};
    for (int a = 0; a < dim(); ++a) n[static_cast<std::size_t>(a)] = (mask >> a) & 1 ? size(a) / 2 : 0;
    out.push_back(index(n));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tki
