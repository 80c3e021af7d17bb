#include "handpass/dsp.hpp"

#include <algorithm>

#include "handpass/scaler.hpp"

namespace handpass {

SubcarrierMask SubcarrierMask::vht80() {
  return from_excluded({-128, -127, -126, -125, -124, -123, -1, 0, 1, 123, 124, 125, 126, 127},
                       {-103, -75, -39, -11, 11, 39, 75, 103});
}

SubcarrierMask SubcarrierMask::from_excluded(std::vector<int> null_indices,
                                             std::vector<int> pilot_indices) {
  SubcarrierMask mask;
  std::sort(null_indices.begin(), null_indices.end());
  std::sort(pilot_indices.begin(), pilot_indices.end());
  mask.null_indices = std::move(null_indices);
  mask.pilot_indices = std::move(pilot_indices);
  for (int k = kLowestSubcarrier; k <= kHighestSubcarrier; ++k) {
    const bool excluded =
        std::binary_search(mask.null_indices.begin(), mask.null_indices.end(), k) ||
        std::binary_search(mask.pilot_indices.begin(), mask.pilot_indices.end(), k);
    if (!excluded) mask.useful.push_back(k);
  }
  return mask;
}

bool SubcarrierMask::is_useful(int k) const {
  return std::binary_search(useful.begin(), useful.end(), k);
}

std::string_view to_string(ScalerKind kind) {
  switch (kind) {
    case ScalerKind::MinMax:
      return "minmax";
    case ScalerKind::ZScore:
      return "zscore";
    case ScalerKind::Robust:
      return "robust";
  }
  return "minmax";
}

std::optional<ScalerKind> parse_scaler_kind(std::string_view name) {
  if (name == "minmax") return ScalerKind::MinMax;
  if (name == "zscore") return ScalerKind::ZScore;
  if (name == "robust") return ScalerKind::Robust;
  return std::nullopt;
}

}  // namespace handpass
