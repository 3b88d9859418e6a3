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

#ifndef DPFLOW_ACCOUNTANT_H_
#define DPFLOW_ACCOUNTANT_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dpflow {

// ---------------------------------------------------------------------------
// Renyi DP of the subsampled Gaussian mechanism (sampling without
// replacement). The base Gaussian mechanism with noise multiplier sigma has
// eps(alpha) = alpha / (2 sigma^2) and eps(inf) = inf, so every
// min{2, (e^eps(inf) - 1)^j} factor of the amplification bound equals 2.

// Orders 2..256 inclusive.
std::vector<int> DefaultRdpOrders();

// Amplified RDP epsilon of one step at integer order `alpha` >= 2 for
// sampling ratio q in (0, 1]. Evaluated in log space; binomial series terms
// below 1e-30 of the largest term are dropped.
double RdpSubsampledGaussian(int alpha, double q, double sigma);

// Cumulative RDP epsilon per order.
struct RdpCurve {
  std::vector<int> orders;
  std::vector<double> epsilons;

  // Pointwise t-fold composition.
  RdpCurve Composed(double steps) const;
};

RdpCurve SubsampledGaussianCurve(double q, double sigma,
                                 const std::vector<int>& orders);

struct RdpConversion {
  double epsilon = 0.0;
  int order = 0;  // minimizing order
};

// eps = min_alpha [eps(alpha) + log(1/delta) / (alpha - 1)].
RdpConversion RdpToDp(const RdpCurve& curve, double delta);

// ---------------------------------------------------------------------------
// Gaussian differential privacy.

// Standard normal CDF and its logarithm (asymptotic series in the far left
// tail).
double NormalCdf(double x);
double LogNormalCdf(double x);

// mu = q * sqrt(t * (exp(1/sigma^2) - 1)); central-limit approximation of
// t-fold composition of the subsampled Gaussian mechanism.
double GdpMu(std::int64_t steps, double q, double sigma);

// delta(eps) = Phi(-eps/mu + mu/2) - e^eps Phi(-eps/mu - mu/2).
double GdpDeltaForEps(double mu, double epsilon);

struct GdpEpsilon {
  double epsilon = 0.0;
  // False when delta >= delta(0): no positive epsilon is needed and 0 is
  // returned.
  bool bracketed = true;
};

// Inverts GdpDeltaForEps by bracketing bisection to 1e-12 in epsilon.
GdpEpsilon GdpEpsForDelta(double mu, double delta);

// ---------------------------------------------------------------------------
// Accountants: the P(t, q, sigma, C, delta) of the training loop. The clip
// norm does not enter because the noise scales with it.

enum class AccountantMethod { kRdp, kGdp };

std::string ToString(AccountantMethod method);
AccountantMethod ParseAccountantMethod(const std::string& name);

inline constexpr const char* kGdpApproximationLabel = "CLT-approximate";

class PrivacyAccountant {
 public:
  virtual ~PrivacyAccountant() = default;
  // Spent epsilon after `steps` noisy steps; 0 for steps == 0.
  virtual double Epsilon(std::int64_t steps) const = 0;
  virtual std::string Name() const = 0;
};

class RdpAccountant final : public PrivacyAccountant {
 public:
  RdpAccountant(double q, double sigma, double delta,
                std::vector<int> orders = DefaultRdpOrders());
  double Epsilon(std::int64_t steps) const override;
  RdpConversion Conversion(std::int64_t steps) const;
  std::string Name() const override { return "rdp"; }
  const RdpCurve& step_curve() const { return step_curve_; }

 private:
  double delta_;
  RdpCurve step_curve_;
};

class GdpAccountant final : public PrivacyAccountant {
 public:
  GdpAccountant(double q, double sigma, double delta);
  double Epsilon(std::int64_t steps) const override;
  double Mu(std::int64_t steps) const;
  std::string Name() const override { return "gdp"; }

 private:
  double q_;
  double sigma_;
  double delta_;
};

struct AccountantState {
  AccountantMethod method = AccountantMethod::kGdp;
  std::int64_t steps = 0;
  double q = 0.01;
  double sigma = 1.0;
  double delta = 1e-5;
};

// Validates (q, sigma, delta) and builds the matching accountant.
std::unique_ptr<PrivacyAccountant> MakeAccountant(AccountantMethod method,
                                                  double q, double sigma,
                                                  double delta);

double AccountantEpsilon(const AccountantState& state);

}  // namespace dpflow

#endif  // DPFLOW_ACCOUNTANT_H_
