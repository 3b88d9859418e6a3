// Copyright 2026 The dpflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dpflow/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dpflow/error.h"

namespace dpflow {
namespace {

// ln(1e30): series terms further than this below the largest are dropped.
constexpr double kTruncationLogRatio = 69.07755278982137;

double LogBinomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(1 + e^x) without overflow.
double Log1pExp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void CheckSamplingParams(double q, double sigma) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ConfigurationError("sampling ratio must lie in (0, 1]");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigurationError("noise multiplier must be positive and finite");
  }
}

void CheckDelta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigurationError("delta must lie in (0, 1)");
  }
}

}  // namespace

std::vector<int> DefaultRdpOrders() {
  std::vector<int> orders;
  for (int a = 2; a <= 256; ++a) orders.push_back(a);
  return orders;
}

double RdpSubsampledGaussian(int alpha, double q, double sigma) {
  if (alpha < 2) throw ConfigurationError("RDP order must be >= 2");
  CheckSamplingParams(q, sigma);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double log_q = std::log(q);

  std::vector<double> log_terms;
  log_terms.reserve(alpha - 1);
  // j = 2: min{4 (e^eps(2) - 1), 2 e^eps(2)} with eps(2) = 1/sigma^2.
  const double eps2 = 2.0 * inv_two_var;
  const double log_a2 =
      std::min(std::log(4.0) + std::log(std::expm1(eps2)),
               std::log(2.0) + eps2);
  log_terms.push_back(2.0 * log_q + LogBinomial(alpha, 2) + log_a2);
  // j >= 3: e^{(j-1) eps(j)} * 2 with eps(j) = j / (2 sigma^2).
  for (int j = 3; j <= alpha; ++j) {
    log_terms.push_back(j * log_q + LogBinomial(alpha, j) +
                        (j - 1.0) * j * inv_two_var + std::numbers::ln2);
  }
  const double max_log = *std::max_element(log_terms.begin(), log_terms.end());
  double rel_sum = 0.0;
  for (double lt : log_terms) {
    if (lt >= max_log - kTruncationLogRatio) rel_sum += std::exp(lt - max_log);
  }
  const double log_series = max_log + std::log(rel_sum);
  return Log1pExp(log_series) / (alpha - 1.0);
}

RdpCurve RdpCurve::Composed(double steps) const {
  RdpCurve out = *this;
  for (double& e : out.epsilons) e *= steps;
  return out;
}

RdpCurve SubsampledGaussianCurve(double q, double sigma,
                                 const std::vector<int>& orders) {
  RdpCurve curve;
  curve.orders = orders;
  curve.epsilons.reserve(orders.size());
  for (int a : orders) curve.epsilons.push_back(RdpSubsampledGaussian(a, q, sigma));
  return curve;
}

RdpConversion RdpToDp(const RdpCurve& curve, double delta) {
  CheckDelta(delta);
  if (curve.orders.empty() || curve.orders.size() != curve.epsilons.size()) {
    throw AccountingError("RDP curve has an empty or inconsistent order grid");
  }
  const double log_inv_delta = -std::log(delta);
  RdpConversion best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const int a = curve.orders[i];
    if (a < 2) throw AccountingError("RDP order below 2 in curve");
    const double eps = curve.epsilons[i] + log_inv_delta / (a - 1.0);
    if (eps < best.epsilon) best = {eps, a};
  }
  if (!std::isfinite(best.epsilon)) {
    throw AccountingError("RDP conversion produced a non-finite epsilon");
  }
  return best;
}

double NormalCdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double LogNormalCdf(double x) {
  if (x > -30.0) return std::log(NormalCdf(x));
  // log Phi(x) ~ -x^2/2 - log(-x) - log(2 pi)/2 + log(1 - 1/x^2 + 3/x^4 - ...)
  const double x2 = x * x;
  const double series =
      1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) +
      105.0 / (x2 * x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log(series);
}

double GdpMu(std::int64_t steps, double q, double sigma) {
  if (steps < 0) throw ConfigurationError("step count must be >= 0");
  if (!(sigma > 0.0)) throw ConfigurationError("GDP needs sigma > 0");
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigurationError("sampling ratio must lie in [0, 1]");
  }
  return q * std::sqrt(static_cast<double>(steps) *
                       std::expm1(1.0 / (sigma * sigma)));
}

double GdpDeltaForEps(double mu, double epsilon) {
  if (!(mu > 0.0)) throw ConfigurationError("GDP mu must be positive");
  if (!(epsilon >= 0.0)) throw ConfigurationError("epsilon must be >= 0");
  // delta = A - B with log B < log A; computed as A * (1 - B/A) in log space.
  const double log_a = LogNormalCdf(-epsilon / mu + mu / 2.0);
  const double log_b = epsilon + LogNormalCdf(-epsilon / mu - mu / 2.0);
  if (log_a == -std::numeric_limits<double>::infinity()) return 0.0;
  const double delta = std::exp(log_a) * -std::expm1(log_b - log_a);
  return std::max(delta, 0.0);
}

GdpEpsilon GdpEpsForDelta(double mu, double delta) {
  CheckDelta(delta);
  if (!(mu > 0.0)) throw ConfigurationError("GDP mu must be positive");
  if (delta >= GdpDeltaForEps(mu, 0.0)) return {0.0, false};
  double lo = 0.0;
  double hi = 1.0;
  while (GdpDeltaForEps(mu, hi) > delta) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw AccountingError("GDP epsilon bracket diverged");
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (GdpDeltaForEps(mu, mid) > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {hi, true};
}

std::string ToString(AccountantMethod method) {
  return method == AccountantMethod::kRdp ? "rdp" : "gdp";
}

AccountantMethod ParseAccountantMethod(const std::string& name) {
  if (name == "rdp" || name == "ma") return AccountantMethod::kRdp;
  if (name == "gdp") return AccountantMethod::kGdp;
  throw ConfigurationError("unknown accountant: " + name);
}

RdpAccountant::RdpAccountant(double q, double sigma, double delta,
                             std::vector<int> orders)
    : delta_(delta) {
  CheckSamplingParams(q, sigma);
  CheckDelta(delta);
  if (orders.empty()) throw AccountingError("empty RDP order grid");
  step_curve_ = SubsampledGaussianCurve(q, sigma, orders);
}

RdpConversion RdpAccountant::Conversion(std::int64_t steps) const {
  return RdpToDp(step_curve_.Composed(static_cast<double>(steps)), delta_);
}

double RdpAccountant::Epsilon(std::int64_t steps) const {
  if (steps < 0) throw ConfigurationError("step count must be >= 0");
  if (steps == 0) return 0.0;
  return Conversion(steps).epsilon;
}

GdpAccountant::GdpAccountant(double q, double sigma, double delta)
    : q_(q), sigma_(sigma), delta_(delta) {
  CheckSamplingParams(q, sigma);
  CheckDelta(delta);
}

double GdpAccountant::Mu(std::int64_t steps) const {
  return GdpMu(steps, q_, sigma_);
}

double GdpAccountant::Epsilon(std::int64_t steps) const {
  if (steps < 0) throw ConfigurationError("step count must be >= 0");
  if (steps == 0) return 0.0;
  const double mu = Mu(steps);
  if (!std::isfinite(mu)) throw AccountingError("GDP mu is not finite");
  return GdpEpsForDelta(mu, delta_).epsilon;
}

std::unique_ptr<PrivacyAccountant> MakeAccountant(AccountantMethod method,
                                                  double q, double sigma,
                                                  double delta) {
  if (method == AccountantMethod::kRdp) {
    return std::make_unique<RdpAccountant>(q, sigma, delta);
  }
  return std::make_unique<GdpAccountant>(q, sigma, delta);
}

double AccountantEpsilon(const AccountantState& state) {
  return MakeAccountant(state.method, state.q, state.sigma, state.delta)
      ->Epsilon(state.steps);
}

}  // namespace dpflow
