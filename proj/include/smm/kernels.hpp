#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "smm/linalg.hpp"

namespace smm {

/// eta = 1 / median of squared pairwise distances (default), or 1 / (2 median) where
/// the median of squared distances plays the role of sigma^2.
enum class BandwidthRule { inverse_median, half_inverse_median };

std::string to_string(BandwidthRule r);
BandwidthRule parse_bandwidth_rule(std::string_view name);

/// Exact median over all n(n-1)/2 pairs; the lower-middle element for even counts.
double median_sq_distance(const Eigen::MatrixXd& z);
double median_heuristic(const Eigen::MatrixXd& z, BandwidthRule rule = BandwidthRule::inverse_median);

/// RBF Gram matrix k(z, z') = exp(-eta ||z - z'||^2) plus the pivoted Cholesky
/// factor that downstream solves reuse across stages.
struct GramBundle {
  Eigen::MatrixXd L;
  double bandwidth_eta = 1.0;
  std::uint64_t z_hash = 0;
  LowRankFactor factor;
};

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double eta);
GramBundle gram(const Eigen::MatrixXd& z, double eta);
GramBundle gram(const Eigen::MatrixXd& z, BandwidthRule rule = BandwidthRule::inverse_median);

/// FNV-1a over the raw bytes of z (with its shape).
std::uint64_t fingerprint(const Eigen::MatrixXd& z);

}  // namespace smm
