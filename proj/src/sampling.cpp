#include "tpgf/sampling.hpp"

#include <cmath>

namespace tpgf {

namespace {
// exp() overflows double beyond this argument.
constexpr double kMaxExponent = 709.0;

double decay(double exponent, double lambda) {
  if (exponent > kMaxExponent) return 0.0;
  return lambda / (lambda + std::exp(exponent));
}

void require_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be positive and finite, got " + std::to_string(lambda));
  }
}
}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::TeacherForcing: return "teacher_forcing";
    case Strategy::ScheduledSampling: return "scheduled_sampling";
    case Strategy::Tpg: return "tpg";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "teacher_forcing") return Strategy::TeacherForcing;
  if (name == "scheduled_sampling") return Strategy::ScheduledSampling;
  if (name == "tpg") return Strategy::Tpg;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected teacher_forcing, scheduled_sampling or tpg)");
}

void ScheduleConfig::validate() const {
  require_lambda(lambda);
  if (m1_lambda < 0.0 || !std::isfinite(m1_lambda)) throw ConfigError("m1_lambda must be >= 0");
  if (stage1_iters < 0) throw ConfigError("stage1_iters must be non-negative");
  if (transition_iters < 1) throw ConfigError("transition_iters must be positive");
  if (strategy == Strategy::Tpg && stage1_iters < 1) {
    throw ConfigError("strategy tpg requires stage1_iters >= 1");
  }
}

double inverse_sigmoid_epsilon(double i, double lambda) {
  require_lambda(lambda);
  if (i < 0) throw ConfigError("batch index must be non-negative");
  return decay(i / lambda, lambda);
}

double index_aware_epsilon(double i, std::int64_t v, double lambda) {
  require_lambda(lambda);
  if (i < 0) throw ConfigError("batch index must be non-negative");
  if (v < 2) throw ConfigError("sequence index v must be >= 2, got " + std::to_string(v));
  return decay(i * std::log(static_cast<double>(v)) / lambda, lambda);
}

SamplingDecision draw_tau(double epsilon, Rng& rng, InputSource preferred) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("draw_tau: epsilon must lie in [0, 1], got " + std::to_string(epsilon));
  }
  SamplingDecision d;
  d.epsilon_used = epsilon;
  d.tau = rng.bernoulli(epsilon) ? 1 : 0;
  d.source = d.tau == 1 ? preferred : InputSource::OwnPrediction;
  return d;
}

M1Source m1_source_index(std::int64_t j) {
  if (j < 1) throw BoundsError("m1_source_index: target index must be >= 1, got " + std::to_string(j));
  return {j % 2 == 1 ? Parity::Odd : Parity::Even, (j + 1) / 2};
}

double epsilon_for(const ScheduleConfig& config, std::int64_t i, std::int64_t v) {
  switch (config.strategy) {
    case Strategy::TeacherForcing:
      return 1.0;
    case Strategy::ScheduledSampling:
      return inverse_sigmoid_epsilon(static_cast<double>(i), config.lambda);
    case Strategy::Tpg: {
      if (i < config.stage1_iters) return 1.0;
      const std::int64_t local = i - config.stage1_iters;
      if (local >= config.transition_iters) return 0.0;
      return config.index_aware ? index_aware_epsilon(static_cast<double>(local), v, config.lambda)
                                : inverse_sigmoid_epsilon(static_cast<double>(local), config.lambda);
    }
  }
  return 1.0;
}

double m1_epsilon(const ScheduleConfig& config, std::int64_t i) {
  return inverse_sigmoid_epsilon(static_cast<double>(i), config.effective_m1_lambda());
}

}  // namespace tpgf
