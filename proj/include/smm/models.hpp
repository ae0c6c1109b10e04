#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "smm/data.hpp"

namespace smm {

enum class ModelFamily { linear, quadratic, mlp };

std::string to_string(ModelFamily f);
ModelFamily parse_model_family(std::string_view name);

/// Layer widths of a leaky-ReLU network with a linear scalar head.
struct MlpArch {
  std::vector<int> hidden;
  double slope = 0.01;
};

/// Parametric structural function f(t; theta) with analytic derivatives.
///
/// Linear:    f = theta^T t (no intercept), p = d_t.
/// Quadratic: f = theta1 t^2 + theta2 t + theta3, scalar t.
/// MLP:       hidden leaky-ReLU layers followed by a linear scalar output. Parameters
///            are stored layer by layer as W (out x in, row-major) followed by b.
class ParamModel {
 public:
  static ParamModel linear(int dim_t);
  static ParamModel quadratic();
  static ParamModel mlp(int dim_t, std::vector<int> hidden, double slope = 0.01);

  ModelFamily family() const { return family_; }
  int dim_t() const { return dim_t_; }
  Eigen::Index num_params() const { return theta_.size(); }
  const Eigen::VectorXd& theta() const { return theta_; }
  const MlpArch& arch() const { return arch_; }

  ParamModel with_theta(Eigen::VectorXd theta) const;
  /// Glorot-uniform weights and zero biases for MLPs; zeros otherwise.
  ParamModel initialized(std::uint64_t seed) const;

  /// True when the input Laplacian vanishes for every theta (linear, leaky-ReLU MLP).
  bool piecewise_affine() const { return family_ != ModelFamily::quadratic; }
  /// True when f is linear in theta.
  bool linear_in_theta() const { return family_ != ModelFamily::mlp; }

  double value(const Eigen::Ref<const Eigen::VectorXd>& t) const;
  Eigen::VectorXd grad_input(const Eigen::Ref<const Eigen::VectorXd>& t) const;
  double laplacian_input(const Eigen::Ref<const Eigen::VectorXd>& t) const;
  Eigen::VectorXd jac_theta(const Eigen::Ref<const Eigen::VectorXd>& t) const;
  /// d(Laplacian_t f)/d theta; independent of t for every supported family.
  Eigen::VectorXd laplacian_theta_grad() const;

  // Batched versions over the rows of t (n x d_t).
  Eigen::VectorXd values(const Eigen::MatrixXd& t) const;
  Eigen::MatrixXd input_grads(const Eigen::MatrixXd& t) const;  // n x d_t
  Eigen::VectorXd laplacians(const Eigen::MatrixXd& t) const;
  Eigen::MatrixXd jacobian(const Eigen::MatrixXd& t) const;  // n x p
  /// sum_i w_i * d f(t_i)/d theta, without forming the Jacobian.
  Eigen::VectorXd vjp(const Eigen::MatrixXd& t, const Eigen::VectorXd& w) const;
  /// Values and w-weighted parameter gradient from one forward/backward pass.
  /// `weights` maps the value vector to w.
  Eigen::VectorXd values_and_vjp(const Eigen::MatrixXd& t,
                                 const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& weights,
                                 Eigen::VectorXd& grad) const;

  /// Minimum |pre-activation| over all hidden units at t (infinity for non-MLPs).
  double kink_distance(const Eigen::Ref<const Eigen::VectorXd>& t) const;

 private:
  ParamModel(ModelFamily family, int dim_t, MlpArch arch, Eigen::Index p);

  void check_input(Eigen::Index cols) const;

  struct Layer {
    int in, out;
    Eigen::Index offset;  // start of W in theta; b follows at offset + in*out
  };
  std::vector<Layer> layers() const;

  ModelFamily family_;
  int dim_t_;
  MlpArch arch_;
  Eigen::VectorXd theta_;
};

/// Residual psi = y - f(t) with its derivatives, one row per observation.
struct MomentEval {
  Eigen::VectorXd psi;
  Eigen::MatrixXd grad_t_psi;      // n x d_t, equals -grad_t f
  Eigen::VectorXd laplacian_t_psi; // n, equals -Laplacian_t f
  Eigen::MatrixXd jac_theta_psi;   // n x p, equals -d f / d theta (empty if not requested)
};

MomentEval moment_eval(const ParamModel& model, const Dataset& ds, bool with_jacobian = true);

}  // namespace smm
