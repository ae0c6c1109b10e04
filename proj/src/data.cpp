#include "smm/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "smm/error.hpp"
#include "smm/random.hpp"

namespace smm {

namespace {

constexpr double kNoiseVar = 0.1;  // N(0, 0.1) read as variance

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

Eigen::VectorXd uniform_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n, double stddev) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal(0.0, stddev);
  return v;
}

void require_rows(Eigen::Index n) {
  if (n < 1) throw InvalidArgument("sample size must be at least 1");
}

double network_f0(NetworkVariant v, double t) {
  switch (v) {
    case NetworkVariant::sin:
      return std::sin(t);
    case NetworkVariant::abs:
      return std::abs(t);
    case NetworkVariant::step:
      return t >= 0.0 ? 1.0 : 0.0;
    case NetworkVariant::linear:
      return t;
  }
  throw InvalidArgument("unknown NetworkIV variant");
}

double quadratic(const Eigen::VectorXd& theta, double t) { return theta[0] * t * t + theta[1] * t + theta[2]; }

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::simple_iv:
      return "simple_iv";
    case Scenario::adversarial_nl:
      return "adversarial_nl";
    case Scenario::network_iv:
      return "network_iv";
  }
  return "unknown";
}

std::string to_string(NetworkVariant v) {
  switch (v) {
    case NetworkVariant::sin:
      return "sin";
    case NetworkVariant::abs:
      return "abs";
    case NetworkVariant::step:
      return "step";
    case NetworkVariant::linear:
      return "linear";
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "simple_iv") return Scenario::simple_iv;
  if (name == "adversarial_nl") return Scenario::adversarial_nl;
  if (name == "network_iv") return Scenario::network_iv;
  throw InvalidArgument(fmt::format("unknown scenario '{}'", name));
}

NetworkVariant parse_network_variant(std::string_view name) {
  if (name == "sin") return NetworkVariant::sin;
  if (name == "abs") return NetworkVariant::abs;
  if (name == "step") return NetworkVariant::step;
  if (name == "linear") return NetworkVariant::linear;
  throw InvalidArgument(fmt::format("unknown NetworkIV variant '{}'", name));
}

Dataset::Dataset(Eigen::MatrixXd t, Eigen::MatrixXd y, Eigen::MatrixXd z, std::optional<Scenario> tag)
    : t_(std::move(t)), y_(std::move(y)), z_(std::move(z)), tag_(tag) {
  if (t_.rows() < 1) throw InvalidArgument("dataset needs at least one row");
  if (y_.rows() != t_.rows() || z_.rows() != t_.rows())
    throw InvalidArgument(fmt::format("row count mismatch: t={}, y={}, z={}", t_.rows(), y_.rows(), z_.rows()));
  if (t_.cols() < 1 || y_.cols() < 1 || z_.cols() < 1) throw InvalidArgument("dataset blocks must be non-empty");
  if (!all_finite(t_) || !all_finite(y_) || !all_finite(z_))
    throw InvalidArgument("dataset contains NaN or Inf entries");
}

Eigen::VectorXd Dataset::outcome() const {
  if (y_.cols() != 1) throw Unsupported("only scalar outcomes (d_y = 1) are supported");
  return y_.col(0);
}

Dataset Dataset::permuted(const Eigen::VectorXi& perm) const {
  if (perm.size() != size()) throw InvalidArgument("permutation length does not match dataset size");
  Eigen::MatrixXd t(t_.rows(), t_.cols()), y(y_.rows(), y_.cols()), z(z_.rows(), z_.cols());
  for (Eigen::Index i = 0; i < size(); ++i) {
    t.row(i) = t_.row(perm[i]);
    y.row(i) = y_.row(perm[i]);
    z.row(i) = z_.row(perm[i]);
  }
  return Dataset(std::move(t), std::move(y), std::move(z), tag_);
}

SimpleIvDraws draw_simple_iv(Eigen::Index n, std::uint64_t seed) {
  require_rows(n);
  Rng rng(seed, streams::train);
  SimpleIvDraws d;
  d.z0 = uniform_vector(rng, n, -5.0, 5.0);
  d.u = normal_vector(rng, n, 1.0);
  d.eta1 = normal_vector(rng, n, 1.0);
  d.eta2 = normal_vector(rng, n, 1.0);
  return d;
}

Dataset assemble_simple_iv(const SimpleIvDraws& d, const Eigen::VectorXd& theta0) {
  const Eigen::Index n = d.z0.size();
  Eigen::MatrixXd t(n, 1), y(n, 1), z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = std::sin(std::numbers::pi * d.z0[i] / 10.0);
    t(i, 0) = -0.75 * d.z0[i] + 3.5 * d.u[i] + 0.14 * d.eta1[i] - 0.6;
    y(i, 0) = quadratic(theta0, t(i, 0)) - 10.0 * d.u[i] + 0.1 * d.eta2[i];
  }
  return Dataset(std::move(t), std::move(y), std::move(z), Scenario::simple_iv);
}

NetworkIvDraws draw_network_iv(Eigen::Index n, std::uint64_t seed) {
  require_rows(n);
  Rng rng(seed, streams::train);
  NetworkIvDraws d;
  d.z = uniform_vector(rng, n, -3.0, 3.0);
  d.e = normal_vector(rng, n, 1.0);
  d.gamma = normal_vector(rng, n, std::sqrt(kNoiseVar));
  d.delta = normal_vector(rng, n, std::sqrt(kNoiseVar));
  return d;
}

Dataset assemble_network_iv(const NetworkIvDraws& d, NetworkVariant variant) {
  const Eigen::Index n = d.z.size();
  Eigen::MatrixXd t(n, 1), y(n, 1), z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = d.z[i];
    t(i, 0) = d.z[i] + d.e[i] + d.gamma[i];
    y(i, 0) = network_f0(variant, t(i, 0)) + d.e[i] + d.delta[i];
  }
  return Dataset(std::move(t), std::move(y), std::move(z), Scenario::network_iv);
}

namespace {

ScenarioParams simple_iv_params() {
  ScenarioParams p;
  p.scenario = Scenario::simple_iv;
  p.theta0 = Eigen::Vector3d(3.0, -0.5, 0.5);
  return p;
}

ScenarioParams adversarial_params(std::uint64_t seed) {
  Rng rng(seed, streams::scenario);
  ScenarioParams p;
  p.scenario = Scenario::adversarial_nl;
  p.a.resize(5);
  p.b.resize(5);
  for (int k = 0; k < 5; ++k) p.a[k] = rng.uniform(-1.5, 1.5);
  for (int k = 0; k < 5; ++k) p.b[k] = rng.uniform(0.1, 0.3);
  return p;
}

Dataset sample_adversarial(const ScenarioParams& p, Eigen::Index n, std::uint64_t seed) {
  require_rows(n);
  Rng rng(seed, streams::train);
  const double noise_sd = std::sqrt(kNoiseVar);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(5, 0.2);
  Eigen::MatrixXd t(n, 5), y(n, 1), z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = rng.uniform(-3.0, 3.0);
    const double u = rng.normal();
    Eigen::VectorXd ti = p.b * zi + c * u;
    for (int k = 0; k < 5; ++k) ti[k] += rng.normal(0.0, noise_sd);
    const double eta2 = rng.normal(0.0, noise_sd);
    z(i, 0) = zi;
    t.row(i) = ti.transpose();
    y(i, 0) = true_response(p, ti) + u + eta2;
  }
  return Dataset(std::move(t), std::move(y), std::move(z), Scenario::adversarial_nl);
}

}  // namespace

std::pair<Dataset, ScenarioParams> gen_simple_iv(Eigen::Index n, std::uint64_t seed) {
  auto params = simple_iv_params();
  return {assemble_simple_iv(draw_simple_iv(n, seed), params.theta0), std::move(params)};
}

std::pair<Dataset, ScenarioParams> gen_adversarial_nl(Eigen::Index n, std::uint64_t seed) {
  require_rows(n);
  auto params = adversarial_params(seed);
  Dataset ds = sample_adversarial(params, n, seed);
  return {std::move(ds), std::move(params)};
}

std::pair<Dataset, ScenarioParams> gen_network_iv(Eigen::Index n, std::uint64_t seed, NetworkVariant variant) {
  ScenarioParams params;
  params.scenario = Scenario::network_iv;
  params.variant = variant;
  return {assemble_network_iv(draw_network_iv(n, seed), variant), std::move(params)};
}

Dataset sample_scenario(const ScenarioParams& params, Eigen::Index n, std::uint64_t seed) {
  switch (params.scenario) {
    case Scenario::simple_iv:
      return assemble_simple_iv(draw_simple_iv(n, seed), params.theta0);
    case Scenario::adversarial_nl:
      return sample_adversarial(params, n, seed);
    case Scenario::network_iv:
      return assemble_network_iv(draw_network_iv(n, seed), params.variant);
  }
  throw InvalidArgument("unknown scenario");
}

Dataset corrupt_covariates(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument(fmt::format("corruption fraction {} outside [0, 1]", fraction));
  const Eigen::Index n = ds.size();
  const auto count = static_cast<Eigen::Index>(std::lround(fraction * static_cast<double>(n)));
  if (count == 0) return ds;

  Rng rng(seed, streams::corruption);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  // Fisher-Yates prefix of length `count`.
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  const Eigen::RowVectorXd lo = ds.t().colwise().minCoeff();
  const Eigen::RowVectorXd hi = ds.t().colwise().maxCoeff();
  Eigen::MatrixXd t = ds.t();
  for (Eigen::Index k = 0; k < count; ++k) {
    const Eigen::Index row = order[static_cast<std::size_t>(k)];
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(row, c) = rng.uniform(lo[c], hi[c]);
  }
  return ds.with_t(std::move(t));
}

double true_response(const ScenarioParams& params, const Eigen::Ref<const Eigen::VectorXd>& t) {
  switch (params.scenario) {
    case Scenario::simple_iv:
      if (t.size() != 1) throw InvalidArgument("SimpleIV treatments are scalar");
      return quadratic(params.theta0, t[0]);
    case Scenario::adversarial_nl: {
      if (t.size() != params.a.size()) throw InvalidArgument("treatment dimension does not match A");
      const double at = params.a.dot(t);
      return 1.5 * std::cos(at) + 0.1 * at;
    }
    case Scenario::network_iv:
      if (t.size() != 1) throw InvalidArgument("NetworkIV treatments are scalar");
      return network_f0(params.variant, t[0]);
  }
  throw Unsupported("scenario has no closed-form structural function");
}

Eigen::VectorXd true_responses(const ScenarioParams& params, const Eigen::MatrixXd& t) {
  Eigen::VectorXd out(t.rows());
  for (Eigen::Index i = 0; i < t.rows(); ++i) out[i] = true_response(params, t.row(i).transpose());
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string to_csv_string(const Dataset& ds) {
  std::string out;
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < ds.dim_t(); ++c) header.push_back(fmt::format("t{}", c));
  for (Eigen::Index c = 0; c < ds.dim_y(); ++c) header.push_back(fmt::format("y{}", c));
  for (Eigen::Index c = 0; c < ds.dim_z(); ++c) header.push_back(fmt::format("z{}", c));
  out += fmt::format("{}\n", fmt::join(header, ","));

  std::vector<double> row;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    row.clear();
    for (Eigen::Index c = 0; c < ds.dim_t(); ++c) row.push_back(ds.t()(i, c));
    for (Eigen::Index c = 0; c < ds.dim_y(); ++c) row.push_back(ds.y()(i, c));
    for (Eigen::Index c = 0; c < ds.dim_z(); ++c) row.push_back(ds.z()(i, c));
    // fmt's default float format is the shortest exact round-trip representation.
    out += fmt::format("{}\n", fmt::join(row, ","));
  }
  return out;
}

Dataset parse_csv_string(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty file", 0);

  auto split = [](std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t p = 0;
    while (true) {
      std::size_t q = line.find(',', p);
      cells.push_back(line.substr(p, q == std::string_view::npos ? std::string_view::npos : q - p));
      if (q == std::string_view::npos) break;
      p = q + 1;
    }
    return cells;
  };

  enum class Block { t, y, z };
  std::vector<Block> kinds;
  int dt = 0, dy = 0, dz = 0;
  for (std::string_view name : split(lines[0])) {
    if (name.size() < 2) throw ParseError(fmt::format("bad column name '{}'", name), 1);
    const char prefix = name[0];
    int index = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), index);
    if (ec != std::errc() || ptr != name.data() + name.size())
      throw ParseError(fmt::format("bad column name '{}'", name), 1);
    int& counter = prefix == 't' ? dt : prefix == 'y' ? dy : prefix == 'z' ? dz : index;
    if (prefix != 't' && prefix != 'y' && prefix != 'z')
      throw ParseError(fmt::format("bad column name '{}'", name), 1);
    if (index != counter) throw ParseError(fmt::format("column '{}' out of order", name), 1);
    ++counter;
    kinds.push_back(prefix == 't' ? Block::t : prefix == 'y' ? Block::y : Block::z);
  }
  if (dt == 0 || dy == 0 || dz == 0) throw ParseError("header must name t, y and z columns", 1);

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  if (n == 0) throw ParseError("no data rows", 1);
  Eigen::MatrixXd t(n, dt), y(n, dy), z(n, dz);
  for (Eigen::Index i = 0; i < n; ++i) {
    const long line_no = static_cast<long>(i) + 2;
    auto cells = split(lines[static_cast<std::size_t>(i) + 1]);
    if (cells.size() != kinds.size())
      throw ParseError(fmt::format("expected {} columns, found {}", kinds.size(), cells.size()), line_no);
    int ct = 0, cy = 0, cz = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double value = 0.0;
      std::string_view cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ParseError(fmt::format("cannot parse '{}' as a number", cell), line_no);
      if (!std::isfinite(value)) throw ParseError(fmt::format("non-finite value '{}'", cell), line_no);
      switch (kinds[c]) {
        case Block::t:
          t(i, ct++) = value;
          break;
        case Block::y:
          y(i, cy++) = value;
          break;
        case Block::z:
          z(i, cz++) = value;
          break;
      }
    }
  }
  return Dataset(std::move(t), std::move(y), std::move(z));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument(fmt::format("cannot open '{}' for writing", path.string()));
  out << to_csv_string(ds);
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv_string(buf.str());
}

}  // namespace smm
