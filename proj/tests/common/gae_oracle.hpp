#pragma once

#include <cstdint>
#include <vector>

namespace forklift::testdata {

// Brute-force GAE: A_t = sum_l (gamma lam)^l delta_{t+l}, truncated at the
// first episode end.
inline std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<std::uint8_t>& d, double g, double l) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = d[k] ? 0.0 : v[k + 1];
      a[t] += coef * (r[k] + g * next - v[k]);
      if (d[k]) break;
      coef *= g * l;
    }
  }
  return a;
}

}  // namespace forklift::testdata
