#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "uot/entropy.hpp"
#include "uot/estimator.hpp"
#include "uot/measures.hpp"
#include "uot/potentials.hpp"
#include "uot/primal.hpp"
#include "uot/rates.hpp"
#include "uot/semidual.hpp"

namespace uot::config {

using nlohmann::json;

/// Bad or malformed configuration input; maps to a usage error in the CLI.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Parses a JSON file, reporting parse failures with line/column positions.
inline json parse_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("malformed JSON in " + path + " at line " + std::to_string(line) +
                      ", column " + std::to_string(col) + ": " + e.what());
  }
}

template <class T>
T require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing config key: " + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for key '" + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Entropy: {"kind": "kl"|"balanced"|"chi2", "tau": number}
// ---------------------------------------------------------------------------

inline Entropy entropy_from_json(const json& j) {
  const std::string kind = require<std::string>(j, "kind");
  const double tau = j.value("tau", 1.0);
  if (kind == "kl") return Entropy(EntropyKind::kl, tau);
  if (kind == "balanced") return Entropy(EntropyKind::balanced, tau);
  if (kind == "chi2") return Entropy(EntropyKind::chi2, tau);
  throw ConfigError("unknown entropy kind: " + kind);
}

inline json to_json(const Entropy& e) {
  return json{{"kind", to_string(e.kind())}, {"tau", e.tau()}};
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

inline DensitySpec density_from_json(const json& j) {
  DensitySpec spec;
  const std::string kind = require<std::string>(j, "kind");
  if (kind == "uniform_ball")
    spec.kind = DensityKind::uniform_ball;
  else if (kind == "truncated_gaussian")
    spec.kind = DensityKind::truncated_gaussian;
  else if (kind == "grid_density")
    spec.kind = DensityKind::grid_density;
  else
    throw ConfigError("unknown density kind: " + kind);
  spec.dim = require<int>(j, "dim");
  spec.radius = require<double>(j, "radius");
  if (spec.kind == DensityKind::truncated_gaussian) {
    spec.mean = Vec(std::span<const double>(require<std::vector<double>>(j, "mean")));
    spec.var_diag = Vec(std::span<const double>(require<std::vector<double>>(j, "var")));
  }
  if (spec.kind == DensityKind::grid_density) {
    const auto box = require<std::vector<double>>(j, "box");
    if (box.size() != 2) throw ConfigError("density box must be [lo, hi]");
    spec.box_lo = box[0];
    spec.box_hi = box[1];
    spec.shape = require<std::vector<int>>(j, "shape");
    spec.values = require<std::vector<double>>(j, "values");
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Potential classes and potentials
//   class:     {"kind","dim","lambda","l","M":[m0,m1,m2],"R",("pieces"),
//               ("box":[lo,hi],"shape":[...])}
//   potential: {"kind","lambda","theta":[...]}, grid kind adds
//              {"box":[lo,hi],"shape":[...],"values":[...]}
// ---------------------------------------------------------------------------

inline PotentialKind potential_kind_from_string(const std::string& kind) {
  if (kind == "quad_shift") return PotentialKind::quad_shift;
  if (kind == "max_quad") return PotentialKind::max_quad;
  if (kind == "grid") return PotentialKind::grid;
  throw ConfigError("unknown potential kind: " + kind);
}

inline PotentialClass class_from_json(const json& j) {
  const PotentialKind kind = potential_kind_from_string(require<std::string>(j, "kind"));
  const int dim = require<int>(j, "dim");
  const double lambda = require<double>(j, "lambda");
  const double l = require<double>(j, "l");
  const auto mc = require<std::vector<double>>(j, "M");
  if (mc.size() != 3) throw ConfigError("class M must be [m0, m1, m2]");
  const double R = require<double>(j, "R");
  const int pieces = j.value("pieces", 8);
  GridSpec grid;
  if (kind == PotentialKind::grid) {
    const auto box = require<std::vector<double>>(j, "box");
    if (box.size() != 2) throw ConfigError("class box must be [lo, hi]");
    grid.lo = box[0];
    grid.hi = box[1];
    grid.shape = require<std::vector<int>>(j, "shape");
  }
  return PotentialClass(kind, dim, lambda, l, {mc[0], mc[1], mc[2]}, R, pieces, grid);
}

/// Potential from JSON. With a class, theta is read and checked against it;
/// standalone potentials get an implicit wide-bound class (R defaults to
/// `default_R`), which is enough for evaluation and analytic conjugates.
inline Potential potential_from_json(const json& j, const PotentialClass* cls = nullptr,
                                     double default_R = 8.0) {
  if (cls) {
    const auto theta = cls->kind() == PotentialKind::grid && j.contains("values")
                           ? require<std::vector<double>>(j, "values")
                           : require<std::vector<double>>(j, "theta");
    return cls->make(theta);
  }
  const PotentialKind kind = potential_kind_from_string(require<std::string>(j, "kind"));
  const double lambda = require<double>(j, "lambda");
  const double R = j.value("R", default_R);
  std::vector<double> theta;
  int dim = 0;
  GridSpec grid;
  int pieces = 8;
  if (kind == PotentialKind::grid) {
    const auto box = require<std::vector<double>>(j, "box");
    if (box.size() != 2) throw ConfigError("potential box must be [lo, hi]");
    grid.lo = box[0];
    grid.hi = box[1];
    grid.shape = require<std::vector<int>>(j, "shape");
    dim = static_cast<int>(grid.shape.size());
    theta = j.contains("values") ? require<std::vector<double>>(j, "values")
                                 : require<std::vector<double>>(j, "theta");
  } else {
    theta = require<std::vector<double>>(j, "theta");
    if (kind == PotentialKind::quad_shift) {
      dim = j.value("dim", static_cast<int>(theta.size()) - 1);
    } else {
      dim = require<int>(j, "dim");
      if (theta.size() % static_cast<std::size_t>(dim + 1) != 0)
        throw ConfigError("max_quad theta length must be a multiple of dim+1");
      pieces = static_cast<int>(theta.size() / static_cast<std::size_t>(dim + 1));
    }
  }
  // Implicit class with bounds sized from theta itself.
  double max_a = 0.0, max_b = 0.0;
  if (kind != PotentialKind::grid) {
    const std::size_t stride = static_cast<std::size_t>(dim) + 1;
    for (std::size_t off = 0; off + stride <= theta.size(); off += stride) {
      double na2 = 0.0;
      for (int a = 0; a < dim; ++a) na2 += theta[off + static_cast<std::size_t>(a)] *
                                            theta[off + static_cast<std::size_t>(a)];
      max_a = std::max(max_a, std::sqrt(na2));
      max_b = std::max(max_b, std::abs(theta[off + static_cast<std::size_t>(dim)]));
    }
  }
  const double a_bound = 2.0 * max_a + 1.0;
  const double b_bound = 2.0 * max_b + 1.0;
  const double lower = -(b_bound + a_bound * a_bound / (2.0 * lambda) + 1.0);
  const PotentialClass wide(kind, dim, lambda, lower,
                            {b_bound, a_bound, std::max(lambda, 1.0)}, R, pieces, grid);
  return wide.make(std::move(theta));
}

inline json to_json(const Potential& z) {
  json j{{"kind", to_string(z.kind())}, {"lambda", z.lambda()}, {"theta", z.theta()}};
  if (z.kind() == PotentialKind::grid) {
    const GridSpec& g = z.cls().grid();
    j["box"] = {g.lo, g.hi};
    j["shape"] = g.shape;
    j["values"] = z.theta();
  }
  return j;
}

// ---------------------------------------------------------------------------
// Measures: {"csv": path} | {"points": [[...],...], "weights": [...]}
//         | {"density": {...}, "n": int, "seed": int}
// ---------------------------------------------------------------------------

inline DiscreteMeasure measure_from_json(const json& j) {
  if (j.contains("csv")) return read_measure_csv(require<std::string>(j, "csv"));
  if (j.contains("points")) {
    const auto raw = require<std::vector<std::vector<double>>>(j, "points");
    const auto weights = require<std::vector<double>>(j, "weights");
    std::vector<Vec> pts;
    pts.reserve(raw.size());
    for (const auto& p : raw) pts.emplace_back(std::span<const double>(p));
    return DiscreteMeasure(std::move(pts), weights);
  }
  if (j.contains("density")) {
    const DensitySpec spec = density_from_json(j.at("density"));
    const auto n = require<std::size_t>(j, "n");
    const Seed seed{j.value("seed", std::uint64_t{0})};
    return sample(spec, n, seed);
  }
  throw ConfigError("measure needs one of: csv, points, density");
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

inline json to_json(const StabilityReport& r) {
  return json{{"lhs", r.lhs},
              {"grad_term", r.grad_term},
              {"l2_conj_term", r.l2_conj_term},
              {"l2_term", r.l2_term},
              {"C_z", r.C_z},
              {"C_z_star", r.C_z_star},
              {"satisfied", r.satisfied}};
}

inline json to_json(const PrimalSolution& s) {
  return json{{"objective", s.objective},
              {"iterations", s.iterations},
              {"converged", s.converged},
              {"kkt_residual", s.kkt_residual}};
}

inline json to_json(const FitResult& f) {
  return json{{"potential", to_json(f.z)},
              {"objective", f.objective},
              {"grad_norm", f.grad_norm},
              {"iterations", f.iterations},
              {"winner_restart", f.winner_restart},
              {"capped", f.capped},
              {"uot_estimate", uot_estimate(f)}};
}

inline void write_coupling_csv(const Coupling& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("write_coupling_csv: cannot open " + path);
  os << "i,j,value\n";
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j)
      os << i << "," << j << "," << fmt17(c.at(i, j)) << "\n";
}

// ---------------------------------------------------------------------------
// Fit and rate configs
// ---------------------------------------------------------------------------

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig cfg;
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.grad_tol = j.value("grad_tol", cfg.grad_tol);
  cfg.step_init = j.value("step_init", cfg.step_init);
  cfg.step_shrink = j.value("step_shrink", cfg.step_shrink);
  cfg.armijo = j.value("armijo", cfg.armijo);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.seed = Seed{j.value("seed", std::uint64_t{0})};
  cfg.validate();
  return cfg;
}

inline RateConfig rate_config_from_json(const json& j) {
  const PotentialClass cls = class_from_json(j.at("class"));
  const Potential z0 = potential_from_json(j.at("z0"), &cls);
  RateConfig cfg{z0};
  cfg.mu_spec = density_from_json(j.at("mu_density"));
  cfg.population = j.value("population", cfg.population);
  cfg.entropy = entropy_from_json(j.at("entropy"));
  if (j.contains("n_grid")) cfg.n_grid = require<std::vector<std::size_t>>(j, "n_grid");
  cfg.replicas = j.value("replicas", cfg.replicas);
  cfg.lambda = j.value("lambda", cls.lambda());
  if (j.contains("cprime") && !j.at("cprime").is_null())
    cfg.cprime = j.at("cprime").get<double>();
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.seed = Seed{j.value("seed", std::uint64_t{0})};
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("fit")) cfg.fit_cfg = fit_config_from_json(j.at("fit"));
  cfg.validate();
  return cfg;
}

}  // namespace uot::config
