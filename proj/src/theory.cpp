#include "arl/theory.hpp"

#include "arl/errors.hpp"
#include "arl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace arl {

namespace {

void check_noise(int c, double eta) {
  if (c < 2) throw DomainError("theory: need at least two classes");
  if (!(eta >= 0.0) || eta > 1.0 - 1.0 / c + 1e-12) {
    std::ostringstream msg;
    msg << "theory: noise rate " << eta << " violates eta <= 1 - 1/c = " << (1.0 - 1.0 / c);
    throw DomainError(msg.str());
  }
}

// Loss table L(u_g, j) for every grid row g and label j.
MatrixXd loss_table(const HyperParams& h, const MatrixXd& grid) {
  MatrixXd table(grid.rows(), grid.cols());
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    const VectorXd u = grid.row(g).transpose();
    for (Eigen::Index j = 0; j < grid.cols(); ++j) table(g, j) = simplex_loss(h, u, static_cast<int>(j));
  }
  return table;
}

double lipschitz_from_table(const MatrixXd& grid, const MatrixXd& table, int resolution) {
  // Index grid rows by their integer compositions.
  const int c = static_cast<int>(grid.cols());
  std::map<std::vector<int>, Eigen::Index> index;
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    std::vector<int> key(c);
    for (int j = 0; j < c; ++j) key[j] = static_cast<int>(std::lround(grid(g, j) * resolution));
    index.emplace(std::move(key), g);
  }
  const double step = 1.0 / resolution;
  double best = 0.0;
  for (const auto& [key, g] : index) {
    for (int a = 0; a < c; ++a) {
      if (key[a] == 0) continue;
      for (int b = 0; b < c; ++b) {
        if (b == a) continue;
        auto moved = key;
        --moved[a];
        ++moved[b];
        const Eigen::Index g2 = index.at(moved);
        best = std::max(best, (table.row(g2) - table.row(g)).cwiseAbs().maxCoeff() / step);
      }
    }
  }
  return best;
}

}  // namespace

BoundConstants bound_constants(const HyperParams& h, int num_classes, double noise_rate) {
  h.validate();
  check_noise(num_classes, noise_rate);
  const double c = num_classes;
  const double eta = noise_rate;
  const double log_c = std::log(c);
  const double denom = c - 1.0 - eta * c;  // zero at eta = 1 - 1/c
  BoundConstants out;
  out.num_classes = num_classes;
  out.noise_rate = noise_rate;
  out.hyper = h;
  switch (h.variant) {
    case LossVariant::kPolySoft: {
      if (h.lambda < log_c - 1e-12) {
        throw DomainError("theory: polysoft bound needs lambda >= log c");
      }
      const double coef = c * (h.d - 1.0) * eta / h.d;
      out.A = coef / (c - 1.0) * std::max(0.0, h.lambda - log_c);
      const double gap = std::min(0.0, log_c - h.lambda);
      if (denom > 0.0) {
        out.A_prime = coef / denom * gap;
      } else {
        out.A_prime = gap == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
      }
      break;
    }
    case LossVariant::kBiTempered: {
      const double t1 = h.t1;
      const double tail = (c - std::pow(c, t1)) / ((1.0 - t1) * (2.0 - t1));
      out.A = eta / (1.0 - t1) - eta * tail / (c - 1.0);
      out.A_prime = denom > 0.0 ? eta * tail / denom - eta * (c - 1.0) / ((1.0 - t1) * denom)
                                : -std::numeric_limits<double>::infinity();
      break;
    }
    default:
      throw DomainError("theory: no bound constants for loss '" + std::string(to_string(h.variant)) +
                        "'");
  }
  return out;
}

FiniteWorld FiniteWorld::round_robin(int points, int num_classes, double grid_step,
                                     double noise_rate) {
  if (points < 1) throw ConfigError("theory: need at least one input point");
  FiniteWorld w;
  w.num_classes = num_classes;
  w.grid_step = grid_step;
  w.noise_rate = noise_rate;
  for (int k = 0; k < points; ++k) w.clean_labels.push_back(k % num_classes);
  return w;
}

int FiniteWorld::grid_resolution() const {
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw ConfigError("theory: grid step must lie in (0, 1]");
  const double r = 1.0 / grid_step;
  const long res = std::lround(r);
  if (std::abs(r - static_cast<double>(res)) > 1e-9 * r) {
    throw ConfigError("theory: 1 / grid step must be an integer");
  }
  return static_cast<int>(res);
}

double simplex_grid_size(int num_classes, int resolution) {
  // C(resolution + c - 1, c - 1)
  double out = 1.0;
  for (int k = 1; k < num_classes; ++k) out = out * (resolution + k) / k;
  return out;
}

MatrixXd simplex_grid(int num_classes, int resolution) {
  if (num_classes < 1 || resolution < 1) throw ConfigError("simplex grid: invalid size");
  const double count = simplex_grid_size(num_classes, resolution);
  if (count > kEnumerationBudget) throw ConfigError("simplex grid exceeds the enumeration budget");
  MatrixXd grid(static_cast<Eigen::Index>(std::llround(count)), num_classes);
  std::vector<int> parts(num_classes, 0);
  Eigen::Index row = 0;
  std::function<void(int, int)> fill = [&](int slot, int remaining) {
    if (slot == num_classes - 1) {
      parts[slot] = remaining;
      for (int j = 0; j < num_classes; ++j) {
        grid(row, j) = static_cast<double>(parts[j]) / resolution;
      }
      ++row;
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      parts[slot] = v;
      fill(slot + 1, remaining - v);
    }
  };
  fill(0, resolution);
  return grid;
}

double simplex_loss(const HyperParams& h, const Eigen::Ref<const VectorXd>& u, int label) {
  const double p = std::clamp(u[label], kProbabilityFloor, 1.0 - kProbabilityFloor);
  switch (h.variant) {
    case LossVariant::kCe:
      return -std::log(p);
    case LossVariant::kGce:
      return (1.0 - std::pow(p, h.q)) / h.q;
    case LossVariant::kSl:
      return h.gamma1 * -std::log(p) + h.gamma2 * -h.rce_A * (u.sum() - u[label]);
    case LossVariant::kBiTempered:
      return detail::bi_tempered_value<double>(u, label, h.t1);
    case LossVariant::kPolySoft:
      return polysoft<double>(-std::log(p), h.lambda, h.d).value;
  }
  return 0.0;
}

double exact_risk(const FiniteWorld& world, const MatrixXd& assignment, const HyperParams& h,
                  bool noisy) {
  const int c = world.num_classes;
  const auto k_count = static_cast<Eigen::Index>(world.clean_labels.size());
  if (assignment.rows() != k_count || assignment.cols() != c) {
    throw DomainError("exact_risk: assignment must have one simplex row per point");
  }
  const int res = world.grid_resolution();
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (std::abs(assignment.row(k).sum() - 1.0) > 1e-9 || assignment.row(k).minCoeff() < 0.0) {
      throw DomainError("exact_risk: row " + std::to_string(k) + " is not on the simplex");
    }
    for (int j = 0; j < c; ++j) {
      const double scaled = assignment(k, j) * res;
      if (std::abs(scaled - std::round(scaled)) > 1e-6) {
        throw DomainError("exact_risk: row " + std::to_string(k) + " is not on the grid");
      }
    }
  }
  const double eta = noisy ? world.noise_rate : 0.0;
  double total = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const VectorXd u = assignment.row(k).transpose();
    const int y = world.clean_labels[static_cast<std::size_t>(k)];
    double point = (1.0 - eta) * simplex_loss(h, u, y);
    if (eta > 0.0) {
      for (int j = 0; j < c; ++j) {
        if (j != y) point += eta / (c - 1) * simplex_loss(h, u, j);
      }
    }
    total += point;
  }
  return total / static_cast<double>(k_count);
}

LossSumRange loss_sum_range(const HyperParams& h, int num_classes, int resolution) {
  const MatrixXd grid = simplex_grid(num_classes, resolution);
  const VectorXd sums = loss_table(h, grid).rowwise().sum();
  return {sums.minCoeff(), sums.maxCoeff()};
}

double grid_lipschitz(const HyperParams& h, int num_classes, int resolution) {
  const MatrixXd grid = simplex_grid(num_classes, resolution);
  return lipschitz_from_table(grid, loss_table(h, grid), resolution);
}

RiskReport riskgap_verify(const FiniteWorld& world, const HyperParams& h) {
  const int c = world.num_classes;
  const int res = world.grid_resolution();
  const double eta = world.noise_rate;
  RiskReport report;
  report.constants = bound_constants(h, c, eta);

  const double work = simplex_grid_size(c, res) * static_cast<double>(world.clean_labels.size());
  if (work > kEnumerationBudget) {
    throw ConfigError("theory: grid scan of " + format_number(work, 4) +
                      " evaluations exceeds the budget");
  }
  const MatrixXd grid = simplex_grid(c, res);
  const MatrixXd table = loss_table(h, grid);
  const VectorXd sums = table.rowwise().sum();

  const auto k_count = static_cast<Eigen::Index>(world.clean_labels.size());
  report.clean_minimizer.resize(k_count, c);
  report.noisy_minimizer.resize(k_count, c);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const int y = world.clean_labels[static_cast<std::size_t>(k)];
    const VectorXd clean = table.col(y);
    const VectorXd noisy = (1.0 - eta) * clean + eta / (c - 1) * (sums - clean);
    Eigen::Index best_clean;
    Eigen::Index best_noisy;
    clean.minCoeff(&best_clean);
    noisy.minCoeff(&best_noisy);
    report.clean_minimizer.row(k) = grid.row(best_clean);
    report.noisy_minimizer.row(k) = grid.row(best_noisy);
  }

  report.clean_risk_fstar = exact_risk(world, report.clean_minimizer, h, false);
  report.clean_risk_fhat = exact_risk(world, report.noisy_minimizer, h, false);
  report.noisy_risk_fstar = exact_risk(world, report.clean_minimizer, h, true);
  report.noisy_risk_fhat = exact_risk(world, report.noisy_minimizer, h, true);
  report.lipschitz = lipschitz_from_table(grid, table, res);
  report.tol_grid = report.lipschitz * world.grid_step;
  report.noisy_gap = report.noisy_risk_fstar - report.noisy_risk_fhat;
  report.clean_gap = report.clean_risk_fstar - report.clean_risk_fhat;

  const double tol = report.tol_grid;
  report.noisy_lower_ok = report.noisy_gap >= -tol;
  report.noisy_upper_ok = report.noisy_gap <= report.constants.A + tol;
  report.clean_upper_ok = report.clean_gap <= tol;
  report.clean_lower_ok = report.clean_gap >= report.constants.A_prime - tol;
  return report;
}

nlohmann::json to_json(const RiskReport& r) {
  auto rows = [](const MatrixXd& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out.emplace_back();
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.back().push_back(m(i, j));
    }
    return out;
  };
  const auto finite_or_null = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {
      {"loss", to_string(r.constants.hyper.variant)},
      {"hyper", [&] {
         nlohmann::json j = nlohmann::json::object();
         const auto names = r.constants.hyper.active_names();
         const VectorXd v = r.constants.hyper.active_values();
         for (std::size_t k = 0; k < names.size(); ++k) j[names[k]] = v[static_cast<Eigen::Index>(k)];
         return j;
       }()},
      {"classes", r.constants.num_classes},
      {"noise_rate", r.constants.noise_rate},
      {"constants", {{"A", finite_or_null(r.constants.A)}, {"A_prime", finite_or_null(r.constants.A_prime)}}},
      {"minima",
       {{"clean_risk_fstar", r.clean_risk_fstar},
        {"clean_risk_fhat", r.clean_risk_fhat},
        {"noisy_risk_fstar", r.noisy_risk_fstar},
        {"noisy_risk_fhat", r.noisy_risk_fhat},
        {"fstar", rows(r.clean_minimizer)},
        {"fhat", rows(r.noisy_minimizer)}}},
      {"tol_grid", r.tol_grid},
      {"lipschitz", r.lipschitz},
      {"slacks",
       {{"noisy_lower", r.noisy_gap},
        {"noisy_upper", finite_or_null(r.constants.A - r.noisy_gap)},
        {"clean_upper", -r.clean_gap},
        {"clean_lower", finite_or_null(r.clean_gap - r.constants.A_prime)}}},
      {"checks",
       {{"noisy_lower", r.noisy_lower_ok},
        {"noisy_upper", r.noisy_upper_ok},
        {"clean_lower", r.clean_lower_ok},
        {"clean_upper", r.clean_upper_ok}}},
      {"pass", r.all_ok()}};
}

}  // namespace arl
