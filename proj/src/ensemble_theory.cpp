#include "zero_tta/ensemble_theory.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <string>
#include <thread>

#include "zero_tta/core_math.hpp"
#include "zero_tta/rng.hpp"

namespace zero_tta {
namespace {

// log(n!) - log(sqrt(2 pi n) (n/e)^n)
double stirling_error(double n) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  if (n <= 15.0) {
    return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  const double nn = n * n;
  if (n > 500) return (s0 - s1 / nn) / n;
  if (n > 80) return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x log(x / np) + np - x, without cancellation near x = np.
double deviance(double x, double np) {
  if (std::abs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log(x / np) + np - x;
}

double binomial_pmf_raw(double x, double n, double p, double q) {
  if (p == 0.0) return x == 0.0 ? 1.0 : 0.0;
  if (q == 0.0) return x == n ? 1.0 : 0.0;
  if (x == 0.0) {
    const double lc = p < 0.1 ? -deviance(n, n * q) - n * p : n * std::log(q);
    return std::exp(lc);
  }
  if (x == n) {
    const double lc = q < 0.1 ? -deviance(n, n * p) - n * q : n * std::log(p);
    return std::exp(lc);
  }
  const double lc = stirling_error(n) - stirling_error(x) - stirling_error(n - x) - deviance(x, n * p) -
                    deviance(n - x, n * q);
  const double lf = std::log(2.0 * std::numbers::pi) + std::log(x) + std::log1p(-x / n);
  return std::exp(lc - 0.5 * lf);
}

std::int64_t majority_threshold(std::int64_t n) { return n / 2 + 1; }

}  // namespace

void EnsembleParams::validate() const {
  if (n_voters < 1) throw DomainError("ensemble needs at least one voter");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DomainError("voter error rate must lie in [0, 1], got " + std::to_string(epsilon));
  }
}

double binomial_error_pmf(const EnsembleParams& params, std::int64_t k) {
  params.validate();
  if (k < 0 || k > params.n_voters) {
    throw DomainError("binomial_error_pmf: k=" + std::to_string(k) + " outside [0, " +
                      std::to_string(params.n_voters) + "]");
  }
  return binomial_pmf_raw(static_cast<double>(k), static_cast<double>(params.n_voters), params.epsilon,
                          1.0 - params.epsilon);
}

double majority_error(const EnsembleParams& params) {
  params.validate();
  double sum = 0.0;
  // Largest k first keeps the tail sum accurate when eps is small.
  for (std::int64_t k = params.n_voters; k >= majority_threshold(params.n_voters); --k) {
    sum += binomial_error_pmf(params, k);
  }
  return std::min(sum, 1.0);
}

double half_split_mass(const EnsembleParams& params) {
  params.validate();
  if (params.n_voters % 2 != 0) return 0.0;
  return binomial_error_pmf(params, params.n_voters / 2);
}

CondorcetProfile condorcet_profile(double epsilon, const std::vector<std::int64_t>& odd_ns) {
  CondorcetProfile profile;
  profile.guarantee_applies = epsilon < 0.5;
  std::int64_t prev_n = 0;
  for (std::int64_t n : odd_ns) {
    if (n < 1 || n % 2 == 0) throw DomainError("condorcet_profile: voter counts must be odd, got " + std::to_string(n));
    if (n <= prev_n) throw DomainError("condorcet_profile: voter counts must be strictly ascending");
    prev_n = n;
    profile.points.push_back({n, majority_error({n, epsilon})});
  }
  profile.strictly_decreasing = true;
  for (std::size_t i = 1; i < profile.points.size(); ++i) {
    if (!(profile.points[i].majority_error < profile.points[i - 1].majority_error)) {
      profile.strictly_decreasing = false;
    }
  }
  return profile;
}

MonteCarloEstimate monte_carlo_majority_error(const EnsembleParams& params, std::int64_t trials, std::uint64_t seed,
                                              unsigned threads) {
  params.validate();
  if (trials < 1) throw DomainError("monte_carlo_majority_error: trials must be >= 1");

  constexpr std::int64_t kPartition = 1 << 16;
  const std::int64_t partitions = (trials + kPartition - 1) / kPartition;
  const std::int64_t n = params.n_voters;
  const std::int64_t threshold = majority_threshold(n);
  const bool even = n % 2 == 0;

  struct Counts {
    std::int64_t wrong = 0;
    std::int64_t half = 0;
  };
  auto run_partition = [&](std::int64_t p) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p)));
    const std::int64_t begin = p * kPartition;
    const std::int64_t end = std::min(trials, begin + kPartition);
    Counts c;
    for (std::int64_t t = begin; t < end; ++t) {
      std::int64_t errors = 0;
      for (std::int64_t v = 0; v < n; ++v) errors += uniform01(rng) < params.epsilon ? 1 : 0;
      if (errors >= threshold) {
        ++c.wrong;
      } else if (even && errors * 2 == n) {
        ++c.half;
      }
    }
    return c;
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, partitions));
  std::vector<Counts> per_partition(static_cast<std::size_t>(partitions));
  {
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::int64_t p = w; p < partitions; p += threads) per_partition[static_cast<std::size_t>(p)] = run_partition(p);
      }));
    }
    for (auto& f : workers) f.get();
  }

  Counts total;
  for (const auto& c : per_partition) {
    total.wrong += c.wrong;
    total.half += c.half;
  }
  MonteCarloEstimate out;
  out.trials = trials;
  const double t = static_cast<double>(trials);
  out.estimate = static_cast<double>(total.wrong) / t;
  out.half_split_rate = static_cast<double>(total.half) / t;
  out.estimate_with_half_splits = out.estimate + 0.5 * out.half_split_rate;
  out.standard_error = std::sqrt(out.estimate * (1.0 - out.estimate) / t);
  return out;
}

RiskBound risk_bound_check(std::size_t label, const ProbabilityMatrix& probs, RiskLoss loss) {
  if (probs.rows() == 0) throw DomainError("risk_bound_check: no rows");
  if (label >= probs.cols()) throw DomainError("risk_bound_check: label out of range");
  auto distance = [&](std::span<const double> p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double d = (c == label ? 1.0 : 0.0) - p[c];
      acc += loss == RiskLoss::L1 ? std::abs(d) : d * d;
    }
    return loss == RiskLoss::L1 ? acc : std::sqrt(acc);
  };
  const auto mean = marginal_distribution(probs, std::vector<bool>(probs.rows(), true));
  RiskBound out;
  out.lhs = distance(mean);
  for (std::size_t i = 0; i < probs.rows(); ++i) out.rhs += distance(probs.row(i));
  out.rhs /= static_cast<double>(probs.rows());
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

LabelGroupReport label_group_marginal_error(const std::vector<LabelGroup>& groups) {
  if (groups.empty()) throw DomainError("label_group_marginal_error: no groups");
  LabelGroupReport report;
  for (const auto& g : groups) {
    if (g.predictions.rows() == 0) {
      throw DomainError("label_group_marginal_error: empty group for label " + std::to_string(g.label));
    }
    if (g.label >= g.predictions.cols()) throw DomainError("label_group_marginal_error: label out of range");
    LabelGroupEntry e;
    e.label = g.label;
    e.group_size = g.predictions.rows();
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < g.predictions.rows(); ++i) {
      if (argmax(g.predictions.row(i)) != g.label) ++wrong;
    }
    e.base_error = static_cast<double>(wrong) / static_cast<double>(e.group_size);
    const auto mean = marginal_distribution(g.predictions, std::vector<bool>(g.predictions.rows(), true));
    e.marginal_error = argmax(mean) != g.label ? 1.0 : 0.0;
    report.mean_base_error += e.base_error;
    report.mean_marginal_error += e.marginal_error;
    report.per_label.push_back(e);
  }
  report.mean_base_error /= static_cast<double>(groups.size());
  report.mean_marginal_error /= static_cast<double>(groups.size());
  return report;
}

}  // namespace zero_tta
