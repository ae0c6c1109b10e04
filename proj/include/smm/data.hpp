#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

namespace smm {

enum class Scenario { simple_iv, adversarial_nl, network_iv };
enum class NetworkVariant { sin, abs, step, linear };

std::string to_string(Scenario s);
std::string to_string(NetworkVariant v);
Scenario parse_scenario(std::string_view name);
NetworkVariant parse_network_variant(std::string_view name);

/// Observations (t_i, y_i, z_i), i = 1..n, one row per sample. Immutable once built;
/// construction rejects mismatched row counts, empty blocks and non-finite entries.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd t, Eigen::MatrixXd y, Eigen::MatrixXd z,
          std::optional<Scenario> tag = std::nullopt);

  Eigen::Index size() const { return t_.rows(); }
  Eigen::Index dim_t() const { return t_.cols(); }
  Eigen::Index dim_y() const { return y_.cols(); }
  Eigen::Index dim_z() const { return z_.cols(); }

  const Eigen::MatrixXd& t() const { return t_; }
  const Eigen::MatrixXd& y() const { return y_; }
  const Eigen::MatrixXd& z() const { return z_; }
  const std::optional<Scenario>& scenario() const { return tag_; }

  /// Scalar outcome column; throws Unsupported when d_y != 1.
  Eigen::VectorXd outcome() const;

  Dataset with_t(Eigen::MatrixXd t) const { return Dataset(std::move(t), y_, z_, tag_); }
  Dataset with_y(Eigen::MatrixXd y) const { return Dataset(t_, std::move(y), z_, tag_); }
  /// Rows reordered so that row i of the result is row perm[i] of this dataset.
  Dataset permuted(const Eigen::VectorXi& perm) const;

 private:
  Eigen::MatrixXd t_;
  Eigen::MatrixXd y_;
  Eigen::MatrixXd z_;
  std::optional<Scenario> tag_;
};

struct ScenarioParams {
  Scenario scenario = Scenario::simple_iv;
  NetworkVariant variant = NetworkVariant::sin;  // network_iv only
  Eigen::RowVectorXd a;                          // 1x5, adversarial_nl only
  Eigen::VectorXd b;                             // 5x1, adversarial_nl only
  Eigen::VectorXd theta0;                        // simple_iv only
};

/// Latent draws behind a SimpleIV sample; exposed so tests can inspect the noise.
struct SimpleIvDraws {
  Eigen::VectorXd z0, u, eta1, eta2;
};
SimpleIvDraws draw_simple_iv(Eigen::Index n, std::uint64_t seed);
Dataset assemble_simple_iv(const SimpleIvDraws& draws, const Eigen::VectorXd& theta0);

/// Latent draws behind a NetworkIV sample.
struct NetworkIvDraws {
  Eigen::VectorXd z, e, gamma, delta;
};
NetworkIvDraws draw_network_iv(Eigen::Index n, std::uint64_t seed);
Dataset assemble_network_iv(const NetworkIvDraws& draws, NetworkVariant variant);

std::pair<Dataset, ScenarioParams> gen_simple_iv(Eigen::Index n, std::uint64_t seed);
std::pair<Dataset, ScenarioParams> gen_adversarial_nl(Eigen::Index n, std::uint64_t seed);
std::pair<Dataset, ScenarioParams> gen_network_iv(Eigen::Index n, std::uint64_t seed,
                                                  NetworkVariant variant);

/// Fresh sample of n rows from the process described by `params` (for adversarial_nl
/// this reuses the stored A and B instead of drawing new ones).
Dataset sample_scenario(const ScenarioParams& params, Eigen::Index n, std::uint64_t seed);

/// Replaces t in exactly round(fraction * n) rows, chosen without replacement, by
/// per-column uniform draws on [min, max] of the input t.
Dataset corrupt_covariates(const Dataset& ds, double fraction, std::uint64_t seed);

/// Structural function f0 of the scenario at a single treatment value.
double true_response(const ScenarioParams& params, const Eigen::Ref<const Eigen::VectorXd>& t);
Eigen::VectorXd true_responses(const ScenarioParams& params, const Eigen::MatrixXd& t);

void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);
std::string to_csv_string(const Dataset& ds);
Dataset parse_csv_string(std::string_view text);

}  // namespace smm
