#pragma once

#include <vector>

namespace acq {

inline constexpr int kMinQuota = 1;
inline constexpr int kMaxQuota = 200;

// Partition of the creative-count range [1, 200] into right-closed bins:
// bin 0 is [b0, b1], bin k is (b_k, b_k+1].
class CreativeBinning {
 public:
  // {1, 2, 3, 5, 8, 15, 30, 60, 120, 200}: nine bins.
  static CreativeBinning Default();

  explicit CreativeBinning(std::vector<int> boundaries);

  int bin_count() const { return static_cast<int>(boundaries_.size()) - 1; }
  const std::vector<int>& boundaries() const { return boundaries_; }

  int BinOf(int creative_count) const;
  int Width(int bin) const;
  int RightEdge(int bin) const;

  // One candidate quota per bin: the bin's right edge.
  std::vector<int> CandidateQuotas() const;

  friend bool operator==(const CreativeBinning&, const CreativeBinning&) = default;

 private:
  std::vector<int> boundaries_;
};

}  // namespace acq
