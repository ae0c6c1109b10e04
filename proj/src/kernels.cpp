#include "smm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

std::string to_string(BandwidthRule r) {
  return r == BandwidthRule::inverse_median ? "inverse_median" : "half_inverse_median";
}

BandwidthRule parse_bandwidth_rule(std::string_view name) {
  if (name == "inverse_median") return BandwidthRule::inverse_median;
  if (name == "half_inverse_median") return BandwidthRule::half_inverse_median;
  throw InvalidArgument(fmt::format("unknown bandwidth rule '{}'", name));
}

double median_sq_distance(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  if (n < 2) throw InvalidArgument("median heuristic needs at least two instruments");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((z.row(i) - z.row(j)).squaredNorm());
  const std::size_t mid = (d.size() - 1) / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  return d[mid];
}

double median_heuristic(const Eigen::MatrixXd& z, BandwidthRule rule) {
  const double med = median_sq_distance(z);
  if (!(med > 0.0)) throw DegenerateData("median pairwise instrument distance is zero");
  return rule == BandwidthRule::inverse_median ? 1.0 / med : 1.0 / (2.0 * med);
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double eta) {
  if (a.cols() != b.cols()) throw InvalidArgument("kernel arguments have different dimensions");
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) k(i, j) = std::exp(-eta * (a.row(i) - b.row(j)).squaredNorm());
  return k;
}

GramBundle gram(const Eigen::MatrixXd& z, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("kernel bandwidth must be positive and finite");
  const Eigen::Index n = z.rows();
  GramBundle g;
  g.bandwidth_eta = eta;
  g.z_hash = fingerprint(z);
  g.L.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    g.L(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-eta * (z.row(i) - z.row(j)).squaredNorm());
      g.L(i, j) = v;
      g.L(j, i) = v;
    }
  }
  g.factor = pivoted_cholesky(g.L);
  return g;
}

GramBundle gram(const Eigen::MatrixXd& z, BandwidthRule rule) { return gram(z, median_heuristic(z, rule)); }

std::uint64_t fingerprint(const Eigen::MatrixXd& z) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  const Eigen::Index shape[2] = {z.rows(), z.cols()};
  mix(shape, sizeof(shape));
  mix(z.data(), sizeof(double) * static_cast<std::size_t>(z.size()));
  return h;
}

}  // namespace smm
