#include "glamsa/sobol_report.hpp"

#include <algorithm>

namespace glamsa {

const IndexEstimate* SobolReport::find(const Subset& subset) const {
  for (const auto& e : entries) {
    if (e.subset == subset) return &e;
  }
  return nullptr;
}

IndexEstimate& SobolReport::upsert(const Subset& subset) {
  for (auto& e : entries) {
    if (e.subset == subset) return e;
  }
  entries.push_back(IndexEstimate{subset, {}, {}, {}, {}, {}});
  return entries.back();
}

double clip_index(double value) { return std::clamp(value, -0.1, 1.1); }

std::string subset_label(const Subset& subset) {
  std::string out;
  for (std::size_t k = 0; k < subset.size(); ++k) {
    if (k > 0) out += ',';
    out += 'x' + std::to_string(subset[k] + 1);
  }
  return out;
}

}  // namespace glamsa
