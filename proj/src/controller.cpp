#include "estrack/controller.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "estrack/errors.hpp"

namespace estrack {

namespace {

constexpr double kPi = std::numbers::pi;

double amplitude_scale(const ESGains& g) { return 2.0 * g.gamma / (g.eta * std::sqrt(g.epsilon)); }

}  // namespace

void ESGains::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("gains: gamma must be positive");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ContractError("gains: epsilon must be positive");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractError("gains: eta must be positive");
  if (n_u < 1) throw ContractError("gains: n_u must be at least 1");
  if (!(h_floor >= 0.0)) throw ContractError("gains: h_floor must be nonnegative");
}

double ESGains::dither_frequency() const { return 2.0 * kPi / (eta * epsilon); }

double dither_period(const ESGains& gains) { return gains.eta * gains.epsilon; }

void es_rhs(double t, double y, const ESGains& gains, std::span<double> out) {
  if (!(y >= 0.0)) throw ContractError("es_rhs: cost must be nonnegative, got " + std::to_string(y));
  if (out.size() != static_cast<std::size_t>(gains.n_u)) {
    throw ContractError("es_rhs: output span must hold n_u rates");
  }
  if (y <= gains.h_floor) {
    for (double& v : out) v = 0.0;
    return;
  }
  const double c = amplitude_scale(gains);
  const double log_y = std::log(y);
  const double omega = 2.0 * kPi / (gains.eta * gains.epsilon);
  for (int j = 1; j <= gains.n_u; ++j) {
    out[j - 1] = c * std::sqrt(kPi * j * y) * std::sin(log_y + omega * j * t);
  }
}

std::vector<double> es_rhs(double t, double y, const ESGains& gains) {
  std::vector<double> out(static_cast<std::size_t>(gains.n_u));
  es_rhs(t, y, gains, out);
  return out;
}

double es_rate_bound(double y, const ESGains& gains) {
  const double n = gains.n_u;
  return amplitude_scale(gains) * std::sqrt(kPi * y * n * (n + 1.0) / 2.0);
}

InputVec reduced_rate(double t, double h_now, double h_frozen, const ESGains& gains) {
  if (gains.n_u != 2) throw ContractError("reduced_rate: the reactor has two inputs");
  if (!(h_now >= 0.0) || !(h_frozen >= 0.0)) throw ContractError("reduced_rate: cost must be nonnegative");
  if (h_now <= gains.h_floor || h_frozen <= gains.h_floor) return {0.0, 0.0};
  const double c = amplitude_scale(gains);
  const double phase = std::log(h_frozen);
  const double omega = 2.0 * kPi / (gains.eta * gains.epsilon);
  InputVec out;
  for (int j = 1; j <= 2; ++j) {
    out[j - 1] = c * std::sqrt(kPi * j * h_now) * std::sin(phase + omega * j * t);
  }
  return out;
}

double window_start(double t, const ESGains& gains) {
  const double w = dither_period(gains);
  return std::floor(t / w) * w;
}

}  // namespace estrack
