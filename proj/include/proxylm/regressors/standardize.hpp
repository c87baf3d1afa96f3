#pragma once

#include <cmath>
#include <vector>

#include "proxylm/records.hpp"

namespace proxylm {

/// Column statistics from a training split. Missing cells are imputed with the
/// column mean before scaling, so they map to exactly zero.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std; 1 for constant columns

  static Standardizer fit(const DesignMatrix& m) {
    Standardizer s;
    const auto d = m.d();
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < m.n; ++i)
        if (!m.is_missing(i, j)) {
          sum += m.at(i, j);
          ++cnt;
        }
      if (cnt == 0) continue;
      const double mu = sum / static_cast<double>(cnt);
      double ss = 0.0;
      for (std::size_t i = 0; i < m.n; ++i)
        if (!m.is_missing(i, j)) ss += (m.at(i, j) - mu) * (m.at(i, j) - mu);
      const double sd = std::sqrt(ss / static_cast<double>(cnt));
      s.mean[j] = mu;
      s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  static Standardizer identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

  /// Standardized, imputed copy of row i.
  std::vector<double> transform(const DesignMatrix& m, std::size_t i) const {
    std::vector<double> out(m.d());
    for (std::size_t j = 0; j < m.d(); ++j) out[j] = m.is_missing(i, j) ? 0.0 : (m.at(i, j) - mean[j]) / scale[j];
    return out;
  }

  bool operator==(const Standardizer&) const = default;
};

}  // namespace proxylm
