#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "uot/common.hpp"
#include "uot/estimator.hpp"
#include "uot/measures.hpp"
#include "uot/semidual.hpp"
#include "uot/svg.hpp"

namespace uot {

// ---------------------------------------------------------------------------
// Rate exponents: E[d^2] ~ n^{-rate}.
// ---------------------------------------------------------------------------

/// Two regimes joined continuously at alpha + 2 = d/2, where both formulas
/// give 1/2: (alpha+2)/d below, 1/(1 + d/(2(alpha+2))) above.
inline double rate_exponent_ours(double alpha, double d) {
  if (d < 1.0 || alpha < 0.0) throw Error("rate_exponent_ours: need d >= 1 and alpha >= 0");
  const double s = alpha + 2.0;
  if (s < d / 2.0) return s / d;
  return 1.0 / (1.0 + d / (2.0 * s));
}

/// (alpha+1)/(alpha + d/2), the smooth-map estimation rate of
/// Hutter and Rigollet (2021).
inline double rate_exponent_hr(double alpha, double d) {
  if (d < 1.0 || alpha < 0.0) throw Error("rate_exponent_hr: need d >= 1 and alpha >= 0");
  return (alpha + 1.0) / (alpha + d / 2.0);
}

// ---------------------------------------------------------------------------
// Log-log slope fitting
// ---------------------------------------------------------------------------

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 1.96 * SE of the slope
};

/// Ordinary least squares of log(mean) on log(n).
inline SlopeFit slope_fit(std::span<const std::pair<double, double>> pairs) {
  const std::size_t k = pairs.size();
  if (k < 2) throw Error("slope_fit: need at least 2 points");
  std::vector<double> xs(k), ys(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(pairs[i].second > 0.0)) throw Error("slope_fit: means must be positive");
    xs[i] = std::log(pairs[i].first);
    ys[i] = std::log(pairs[i].second);
  }
  const double xbar = pairwise_sum(xs) / static_cast<double>(k);
  const double ybar = pairwise_sum(ys) / static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
  }
  if (!(sxx > 0.0)) throw Error("slope_fit: degenerate abscissae");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = ybar - f.slope * xbar;
  if (k > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double r = ys[i] - (f.intercept + f.slope * xs[i]);
      rss += r * r;
    }
    f.half_width = 1.96 * std::sqrt(std::max(rss, 0.0) / static_cast<double>(k - 2) / sxx);
  }
  return f;
}

inline SlopeFit slope_fit(const std::vector<std::pair<double, double>>& pairs) {
  return slope_fit(std::span<const std::pair<double, double>>(pairs));
}

// ---------------------------------------------------------------------------
// Worker pool: UOTLAB_THREADS caps the fan-out; results are aggregated in
// task order afterwards, so the thread count never changes any output.
// ---------------------------------------------------------------------------

inline unsigned worker_count(std::size_t tasks) {
  unsigned w = std::thread::hardware_concurrency();
  if (w == 0) w = 1;
  if (const char* env = std::getenv("UOTLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) w = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(tasks, 1)));
}

template <class Fn>
void parallel_for(std::size_t ntasks, Fn&& fn) {
  const unsigned workers = worker_count(ntasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < ntasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t t = next.fetch_add(1);
        if (t >= ntasks) return;
        try {
          fn(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Monte Carlo rate experiment
// ---------------------------------------------------------------------------

struct RateConfig {
  explicit RateConfig(Potential z0_) : z0(std::move(z0_)) {}

  Potential z0;                       // ground truth; its class is the search class
  DensitySpec mu_spec;                // population density for mu
  std::size_t population = 512;       // atoms in the discrete population mu
  Entropy entropy{EntropyKind::kl, 1.0};
  std::vector<std::size_t> n_grid{64, 128, 256, 512, 1024, 2048, 4096, 8192};
  int replicas = 32;
  double lambda = 1.0;                // d_H weight; usually the class lambda
  std::optional<double> cprime;       // default: class_cprime
  double alpha = 0.0;                 // metric-entropy exponent of the theory line
  Seed seed{0};
  std::string out_dir = ".";
  FitConfig fit_cfg{.restarts = 1};   // quad_shift needs a single start

  void validate() const {
    if (n_grid.size() < 2) throw Error("RateConfig: n_grid needs at least 2 values");
    for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
      if (!(n_grid[i] < n_grid[i + 1]))
        throw Error("RateConfig: n_grid must be strictly increasing");
    if (replicas < 8) throw Error("RateConfig: need at least 8 replicas for slope fits");
    if (!(lambda > 0.0)) throw Error("RateConfig: lambda must be positive");
    if (population < 1) throw Error("RateConfig: population must be >= 1");
  }
};

struct RatePoint {
  std::size_t n = 0;
  double mean_d2 = 0.0;
  double stderr_d2 = 0.0;
  int replicas_ok = 0;
};

struct RateReport {
  std::vector<RatePoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;
  double theoretical_exponent = 0.0;
  std::vector<std::vector<double>> replica_d2;  // [n index][replica], NaN = failed
};

namespace detail {

inline Seed replica_seed(Seed root, std::size_t n, std::size_t k) {
  return Seed{splitmix64(root.value ^ splitmix64(static_cast<std::uint64_t>(n)))}.replica(k);
}

}  // namespace detail

/// For each n and replica: resample mu and the consistent nu, fit over the
/// class, and record d_{H deg}(z_hat, z0)^2 against the population instance.
/// Replica k at sample size n always sees the same derived seed, so runs are
/// bit-identical whatever the worker count or the replica total.
inline RateReport rate_experiment(const RateConfig& cfg) {
  cfg.validate();
  const PotentialClass& cls = cfg.z0.cls();
  {
    std::vector<double> projected = cls.project(cfg.z0.theta());
    for (std::size_t i = 0; i < projected.size(); ++i)
      if (std::abs(projected[i] - cfg.z0.theta()[i]) > 1e-10)
        throw Error("rate_experiment: z0 must lie in the configured class");
  }

  const DiscreteMeasure mu = sample(cfg.mu_spec, cfg.population, cfg.seed.replica(0xA11CE));
  const DiscreteMeasure nu = make_consistent_instance(mu, cfg.z0, cfg.entropy);
  const SemiDualProblem pop(mu, nu, cfg.entropy, cls.R());
  const DiscreteMeasure nu_tilde = tilt(pop, cfg.z0).second;
  const double cprime = cfg.cprime ? *cfg.cprime : class_cprime(cls, cfg.entropy, cls.R());

  const std::size_t nN = cfg.n_grid.size();
  const std::size_t reps = static_cast<std::size_t>(cfg.replicas);
  std::vector<double> d2(nN * reps, std::numeric_limits<double>::quiet_NaN());

  parallel_for(nN * reps, [&](std::size_t t) {
    const std::size_t ni = t / reps;
    const std::size_t k = t % reps;
    const std::size_t n = cfg.n_grid[ni];
    const Seed s = detail::replica_seed(cfg.seed, n, k);
    try {
      const DiscreteMeasure mu_hat = sample_atoms(mu, n, s.replica(1));
      const DiscreteMeasure nu_hat = sample_atoms(nu, n, s.replica(2));
      FitConfig fc = cfg.fit_cfg;
      fc.seed = s.replica(3);
      const FitResult fr = fit(mu_hat, nu_hat, cls, cfg.entropy, fc);
      d2[t] = h_circ_squared_with(nu_tilde, pop, fr.z, cfg.z0, cfg.lambda, cprime);
    } catch (const Error&) {
      // recorded as NaN; accounted for below
    }
  });

  RateReport rep;
  rep.theoretical_exponent = -1.0 / (1.0 + cfg.alpha / 2.0);
  rep.replica_d2.resize(nN);
  std::vector<std::pair<double, double>> fit_pairs;
  for (std::size_t ni = 0; ni < nN; ++ni) {
    rep.replica_d2[ni].assign(d2.begin() + static_cast<long>(ni * reps),
                              d2.begin() + static_cast<long>((ni + 1) * reps));
    std::vector<double> ok;
    ok.reserve(reps);
    for (double v : rep.replica_d2[ni])
      if (!std::isnan(v)) ok.push_back(v);
    if (ok.size() < static_cast<std::size_t>(0.8 * static_cast<double>(reps)))
      throw Error("rate_experiment: more than 20% replica failures at n=" +
                  std::to_string(cfg.n_grid[ni]));
    RatePoint pt;
    pt.n = cfg.n_grid[ni];
    pt.replicas_ok = static_cast<int>(ok.size());
    pt.mean_d2 = pairwise_sum(ok) / static_cast<double>(ok.size());
    double var = 0.0;
    for (double v : ok) var += (v - pt.mean_d2) * (v - pt.mean_d2);
    if (ok.size() > 1) var /= static_cast<double>(ok.size() - 1);
    pt.stderr_d2 = std::sqrt(var / static_cast<double>(ok.size()));
    rep.points.push_back(pt);
    if (ok.size() == reps)
      fit_pairs.emplace_back(static_cast<double>(pt.n), pt.mean_d2);
  }
  const SlopeFit sf = slope_fit(fit_pairs);
  rep.slope = sf.slope;
  rep.intercept = sf.intercept;
  rep.half_width = sf.half_width;
  return rep;
}

inline void write_rates_csv(const RateReport& rep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("write_rates_csv: cannot open " + path);
  os << "n,mean_d2,stderr_d2,replicas_ok\n";
  for (const RatePoint& p : rep.points)
    os << p.n << "," << fmt17(p.mean_d2) << "," << fmt17(p.stderr_d2) << "," << p.replicas_ok
       << "\n";
}

// ---------------------------------------------------------------------------
// Rate-exponent comparison figure
// ---------------------------------------------------------------------------

/// For each dimension: a CSV (alpha, ours, hr) and an SVG with both exponent
/// curves over the alpha grid and the regime kink marked at alpha = d/2 - 2.
/// Returns the written paths.
inline std::vector<std::string> figure1(const std::vector<int>& d_list,
                                        const std::vector<double>& alpha_grid,
                                        const std::string& out_dir) {
  if (alpha_grid.empty()) throw Error("figure1: empty alpha grid");
  for (std::size_t i = 0; i + 1 < alpha_grid.size(); ++i)
    if (!(alpha_grid[i] < alpha_grid[i + 1]))
      throw Error("figure1: alpha grid must be increasing");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  std::vector<std::string> written;
  for (int d : d_list) {
    std::vector<double> ours(alpha_grid.size()), hr(alpha_grid.size());
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
      ours[i] = rate_exponent_ours(alpha_grid[i], d);
      hr[i] = rate_exponent_hr(alpha_grid[i], d);
    }

    const std::string base = out_dir + "/fig1_d" + std::to_string(d);
    {
      std::ofstream os(base + ".csv");
      if (!os) throw Error("figure1: cannot open " + base + ".csv");
      os << "alpha,ours,hr\n";
      for (std::size_t i = 0; i < alpha_grid.size(); ++i)
        os << fmt17(alpha_grid[i]) << "," << fmt17(ours[i]) << "," << fmt17(hr[i]) << "\n";
    }
    written.push_back(base + ".csv");

    SvgPlot plot(alpha_grid.front(), alpha_grid.back(), 0.0, 1.05, "alpha",
                 "rate exponent, d=" + std::to_string(d));
    plot.polyline(alpha_grid, ours, "#1f77b4", "ours");
    plot.polyline(alpha_grid, hr, "#d62728", "hutter-rigollet");
    const double kink = d / 2.0 - 2.0;
    if (kink > alpha_grid.front() && kink < alpha_grid.back())
      plot.vline(kink, "#7f7f7f", "alpha = d/2 - 2");
    plot.write(base + ".svg");
    written.push_back(base + ".svg");
  }
  return written;
}

}  // namespace uot
