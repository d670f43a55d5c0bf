#include "acq/binning.hpp"

#include <algorithm>
#include <string>

#include "acq/error.hpp"

namespace acq {

CreativeBinning CreativeBinning::Default() {
  return CreativeBinning({1, 2, 3, 5, 8, 15, 30, 60, 120, 200});
}

CreativeBinning::CreativeBinning(std::vector<int> boundaries) : boundaries_(std::move(boundaries)) {
  Require(boundaries_.size() >= 2, "binning needs at least two boundaries");
  Require(boundaries_.front() == kMinQuota, "binning must start at 1");
  Require(boundaries_.back() == kMaxQuota, "binning must end at 200");
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    Require(boundaries_[i] > boundaries_[i - 1], "binning boundaries must be strictly ascending");
  }
}

int CreativeBinning::BinOf(int creative_count) const {
  if (creative_count < kMinQuota || creative_count > kMaxQuota) {
    Fail(ErrorKind::kInvalidArgument,
         "creative count " + std::to_string(creative_count) + " outside [1, 200]");
  }
  // First right edge >= count; bin 0 also owns the left edge itself.
  auto it = std::lower_bound(boundaries_.begin() + 1, boundaries_.end(), creative_count);
  return static_cast<int>(it - boundaries_.begin()) - 1;
}

int CreativeBinning::Width(int bin) const {
  return boundaries_.at(bin + 1) - boundaries_.at(bin);
}

int CreativeBinning::RightEdge(int bin) const { return boundaries_.at(bin + 1); }

std::vector<int> CreativeBinning::CandidateQuotas() const {
  return std::vector<int>(boundaries_.begin() + 1, boundaries_.end());
}

}  // namespace acq
