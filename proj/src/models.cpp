#include "smm/models.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "smm/error.hpp"
#include "smm/random.hpp"

namespace smm {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

Eigen::Index mlp_param_count(int dim_t, const std::vector<int>& hidden) {
  Eigen::Index p = 0;
  int in = dim_t;
  for (int h : hidden) {
    p += static_cast<Eigen::Index>(in) * h + h;
    in = h;
  }
  return p + in + 1;
}

}  // namespace

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::linear:
      return "linear";
    case ModelFamily::quadratic:
      return "quadratic";
    case ModelFamily::mlp:
      return "mlp";
  }
  return "unknown";
}

ModelFamily parse_model_family(std::string_view name) {
  if (name == "linear") return ModelFamily::linear;
  if (name == "quadratic") return ModelFamily::quadratic;
  if (name == "mlp") return ModelFamily::mlp;
  throw InvalidArgument(fmt::format("unknown model family '{}'", name));
}

ParamModel::ParamModel(ModelFamily family, int dim_t, MlpArch arch, Eigen::Index p)
    : family_(family), dim_t_(dim_t), arch_(std::move(arch)), theta_(Eigen::VectorXd::Zero(p)) {}

ParamModel ParamModel::linear(int dim_t) {
  if (dim_t < 1) throw InvalidArgument("linear model needs d_t >= 1");
  return ParamModel(ModelFamily::linear, dim_t, {}, dim_t);
}

ParamModel ParamModel::quadratic() { return ParamModel(ModelFamily::quadratic, 1, {}, 3); }

ParamModel ParamModel::mlp(int dim_t, std::vector<int> hidden, double slope) {
  if (dim_t < 1) throw InvalidArgument("MLP needs d_t >= 1");
  for (int h : hidden)
    if (h < 1) throw InvalidArgument("MLP hidden widths must be positive");
  if (!(slope >= 0.0 && slope < 1.0)) throw InvalidArgument("leaky-ReLU slope must lie in [0, 1)");
  const Eigen::Index p = mlp_param_count(dim_t, hidden);
  return ParamModel(ModelFamily::mlp, dim_t, MlpArch{std::move(hidden), slope}, p);
}

ParamModel ParamModel::with_theta(Eigen::VectorXd theta) const {
  if (theta.size() != theta_.size())
    throw InvalidArgument(fmt::format("parameter vector has length {}, model expects {}", theta.size(), theta_.size()));
  ParamModel out = *this;
  out.theta_ = std::move(theta);
  return out;
}

std::vector<ParamModel::Layer> ParamModel::layers() const {
  std::vector<Layer> out;
  Eigen::Index offset = 0;
  int in = dim_t_;
  for (int h : arch_.hidden) {
    out.push_back({in, h, offset});
    offset += static_cast<Eigen::Index>(in) * h + h;
    in = h;
  }
  out.push_back({in, 1, offset});
  return out;
}

ParamModel ParamModel::initialized(std::uint64_t seed) const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(theta_.size());
  if (family_ == ModelFamily::mlp) {
    Rng rng(seed, streams::model_init);
    for (const Layer& l : layers()) {
      const double bound = std::sqrt(6.0 / (l.in + l.out));
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(l.in) * l.out; ++k)
        theta[l.offset + k] = rng.uniform(-bound, bound);
    }
  }
  return with_theta(std::move(theta));
}

void ParamModel::check_input(Eigen::Index cols) const {
  if (cols != dim_t_) throw InvalidArgument(fmt::format("treatment has dimension {}, model expects {}", cols, dim_t_));
}

// ---------------------------------------------------------------------------
// MLP passes. Activations are stored column-per-sample.

namespace {

struct Forward {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[k] = activation of hidden layer k
  Eigen::RowVectorXd out;
};

double leaky(double z, double slope) { return z > 0.0 ? z : slope * z; }
double leaky_slope(double z, double slope) { return z > 0.0 ? 1.0 : slope; }

}  // namespace

Eigen::VectorXd ParamModel::values(const Eigen::MatrixXd& t) const {
  check_input(t.cols());
  switch (family_) {
    case ModelFamily::linear:
      return t * theta_;
    case ModelFamily::quadratic: {
      const auto tc = t.col(0).array();
      return (theta_[0] * tc.square() + theta_[1] * tc + theta_[2]).matrix();
    }
    case ModelFamily::mlp: {
      Eigen::VectorXd dummy;
      return values_and_vjp(t, nullptr, dummy);
    }
  }
  throw InvalidArgument("unknown model family");
}

Eigen::VectorXd ParamModel::values_and_vjp(const Eigen::MatrixXd& t,
                                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& weights,
                                           Eigen::VectorXd& grad) const {
  check_input(t.cols());
  if (family_ != ModelFamily::mlp) {
    Eigen::VectorXd v = values(t);
    if (weights) grad = vjp(t, weights(v));
    return v;
  }

  const auto ls = layers();
  const double slope = arch_.slope;
  Forward fw;
  fw.post.push_back(t.transpose());
  for (std::size_t k = 0; k + 1 < ls.size(); ++k) {
    const Layer& l = ls[k];
    ConstWeights w(theta_.data() + l.offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + l.offset + static_cast<Eigen::Index>(l.in) * l.out, l.out);
    Eigen::MatrixXd z = w * fw.post.back();
    z.colwise() += b;
    fw.post.push_back(z.unaryExpr([slope](double v) { return leaky(v, slope); }));
    fw.pre.push_back(std::move(z));
  }
  const Layer& head = ls.back();
  ConstWeights wh(theta_.data() + head.offset, 1, head.in);
  const double bh = theta_[head.offset + head.in];
  fw.out = (wh * fw.post.back()).array() + bh;
  Eigen::VectorXd v = fw.out.transpose();
  if (!weights) return v;

  const Eigen::VectorXd w = weights(v);
  grad = Eigen::VectorXd::Zero(theta_.size());
  Eigen::MatrixXd delta = w.transpose();  // 1 x n
  for (std::size_t k = ls.size(); k-- > 0;) {
    const Layer& l = ls[k];
    Weights gw(grad.data() + l.offset, l.out, l.in);
    gw.noalias() = delta * fw.post[k].transpose();
    grad.segment(l.offset + static_cast<Eigen::Index>(l.in) * l.out, l.out) = delta.rowwise().sum();
    if (k == 0) break;
    ConstWeights wk(theta_.data() + l.offset, l.out, l.in);
    Eigen::MatrixXd back = wk.transpose() * delta;
    const Eigen::MatrixXd& z = fw.pre[k - 1];
    delta = back.array() * z.unaryExpr([slope](double s) { return leaky_slope(s, slope); }).array();
  }
  return v;
}

Eigen::VectorXd ParamModel::vjp(const Eigen::MatrixXd& t, const Eigen::VectorXd& w) const {
  check_input(t.cols());
  if (w.size() != t.rows()) throw InvalidArgument("vjp weight length does not match row count");
  switch (family_) {
    case ModelFamily::linear:
      return t.transpose() * w;
    case ModelFamily::quadratic: {
      const auto tc = t.col(0).array();
      const auto wa = w.array();
      return Eigen::Vector3d((wa * tc.square()).sum(), (wa * tc).sum(), wa.sum());
    }
    case ModelFamily::mlp: {
      Eigen::VectorXd grad;
      values_and_vjp(t, [&w](const Eigen::VectorXd&) { return w; }, grad);
      return grad;
    }
  }
  throw InvalidArgument("unknown model family");
}

Eigen::MatrixXd ParamModel::input_grads(const Eigen::MatrixXd& t) const {
  check_input(t.cols());
  const Eigen::Index n = t.rows();
  switch (family_) {
    case ModelFamily::linear:
      return theta_.transpose().replicate(n, 1);
    case ModelFamily::quadratic:
      return (2.0 * theta_[0] * t.col(0).array() + theta_[1]).matrix();
    case ModelFamily::mlp:
      break;
  }
  const auto ls = layers();
  const double slope = arch_.slope;
  std::vector<Eigen::MatrixXd> pre;
  Eigen::MatrixXd a = t.transpose();
  for (std::size_t k = 0; k + 1 < ls.size(); ++k) {
    const Layer& l = ls[k];
    ConstWeights w(theta_.data() + l.offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + l.offset + static_cast<Eigen::Index>(l.in) * l.out, l.out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    a = z.unaryExpr([slope](double v) { return leaky(v, slope); });
    pre.push_back(std::move(z));
  }
  const Layer& head = ls.back();
  Eigen::MatrixXd delta = ConstWeights(theta_.data() + head.offset, 1, head.in).transpose().replicate(1, n);
  for (std::size_t k = ls.size() - 1; k-- > 0;) {
    const Layer& l = ls[k];
    delta.array() *= pre[k].unaryExpr([slope](double s) { return leaky_slope(s, slope); }).array();
    delta = ConstWeights(theta_.data() + l.offset, l.out, l.in).transpose() * delta;
  }
  return delta.transpose();
}

Eigen::VectorXd ParamModel::laplacians(const Eigen::MatrixXd& t) const {
  check_input(t.cols());
  if (family_ == ModelFamily::quadratic) return Eigen::VectorXd::Constant(t.rows(), 2.0 * theta_[0]);
  return Eigen::VectorXd::Zero(t.rows());
}

Eigen::MatrixXd ParamModel::jacobian(const Eigen::MatrixXd& t) const {
  check_input(t.cols());
  const Eigen::Index n = t.rows();
  switch (family_) {
    case ModelFamily::linear:
      return t;
    case ModelFamily::quadratic: {
      Eigen::MatrixXd j(n, 3);
      j.col(0) = t.col(0).array().square();
      j.col(1) = t.col(0);
      j.col(2).setOnes();
      return j;
    }
    case ModelFamily::mlp:
      break;
  }
  Eigen::MatrixXd j(n, theta_.size());
  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  for (Eigen::Index i = 0; i < n; ++i) j.row(i) = vjp(t.row(i), one).transpose();
  return j;
}

Eigen::VectorXd ParamModel::laplacian_theta_grad() const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta_.size());
  if (family_ == ModelFamily::quadratic) g[0] = 2.0;
  return g;
}

double ParamModel::value(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  return values(t.transpose())[0];
}

Eigen::VectorXd ParamModel::grad_input(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  return input_grads(t.transpose()).row(0).transpose();
}

double ParamModel::laplacian_input(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  return laplacians(t.transpose())[0];
}

Eigen::VectorXd ParamModel::jac_theta(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  return jacobian(t.transpose()).row(0).transpose();
}

double ParamModel::kink_distance(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  check_input(t.size());
  if (family_ != ModelFamily::mlp) return std::numeric_limits<double>::infinity();
  const auto ls = layers();
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd a = t;
  for (std::size_t k = 0; k + 1 < ls.size(); ++k) {
    const Layer& l = ls[k];
    ConstWeights w(theta_.data() + l.offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + l.offset + static_cast<Eigen::Index>(l.in) * l.out, l.out);
    Eigen::VectorXd z = w * a + b;
    best = std::min(best, z.cwiseAbs().minCoeff());
    a = z.unaryExpr([this](double v) { return leaky(v, arch_.slope); });
  }
  return best;
}

MomentEval moment_eval(const ParamModel& model, const Dataset& ds, bool with_jacobian) {
  const Eigen::VectorXd y = ds.outcome();
  MomentEval me;
  me.psi = y - model.values(ds.t());
  me.grad_t_psi = -model.input_grads(ds.t());
  me.laplacian_t_psi = -model.laplacians(ds.t());
  if (with_jacobian) me.jac_theta_psi = -model.jacobian(ds.t());
  return me;
}

}  // namespace smm
