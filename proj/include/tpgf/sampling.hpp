#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "tpgf/rng.hpp"
#include "tpgf/tensor.hpp"

namespace tpgf {

enum class Strategy { TeacherForcing, ScheduledSampling, Tpg };

std::string_view to_string(Strategy s);
/// Accepts "teacher_forcing", "scheduled_sampling", "tpg".
Strategy parse_strategy(std::string_view name);

/// Decoder-input sampling schedule.
///
/// For TPG the first `stage1_iters` global batches train the half-timescale
/// model; the transition then anneals the probability of feeding the
/// intermediate model's output. `transition_iters` caps the transition: from
/// batch stage1_iters + transition_iters on, epsilon is forced to 0.
struct ScheduleConfig {
  Strategy strategy = Strategy::ScheduledSampling;
  double lambda = 200.0;
  /// TPG transition uses the log(v) decay when set, plain inverse sigmoid otherwise.
  bool index_aware = true;
  std::int64_t stage1_iters = 0;
  std::int64_t transition_iters = 1'000'000;
  /// Decay speed for the half-timescale model's own schedule; 0 means `lambda`.
  double m1_lambda = 0.0;

  void validate() const;
  double effective_m1_lambda() const { return m1_lambda > 0.0 ? m1_lambda : lambda; }
};

enum class InputSource { GroundTruth, OwnPrediction, IntermediateModel };

struct SamplingDecision {
  int tau = 0;
  double epsilon_used = 0.0;
  InputSource source = InputSource::OwnPrediction;
};

/// lambda / (lambda + exp(i / lambda)).
double inverse_sigmoid_epsilon(double i, double lambda);

/// lambda / (lambda + exp(i * log(v) / lambda)) for sequence index v >= 2.
double index_aware_epsilon(double i, std::int64_t v, double lambda);

/// Bernoulli(epsilon) coin. tau = 1 selects `preferred`, tau = 0 the model's
/// own previous prediction.
SamplingDecision draw_tau(double epsilon, Rng& rng, InputSource preferred = InputSource::GroundTruth);

/// Returns `preferred` when tau == 1, `fallback` when tau == 0.
template <typename Scalar>
SeqTensor<Scalar> mix_inputs(int tau, const SeqTensor<Scalar>& fallback, const SeqTensor<Scalar>& preferred) {
  if (fallback.shape() != preferred.shape()) {
    throw DimensionError("mix_inputs: shape mismatch " + shape_string(fallback.shape()) + " vs " +
                         shape_string(preferred.shape()));
  }
  if (tau != 0 && tau != 1) throw ConfigError("mix_inputs: tau must be 0 or 1");
  return tau == 1 ? preferred : fallback;
}

/// Splits along time into 1-based odd positions (1, 3, 5, ...) and even
/// positions (2, 4, ...).
template <typename Scalar>
std::pair<SeqTensor<Scalar>, SeqTensor<Scalar>> subsample_odd_even(const SeqTensor<Scalar>& seq) {
  const Index t = seq.time_steps();
  if (t < 1) throw DimensionError("subsample_odd_even: empty sequence");
  std::vector<Index> odd, even;
  for (Index k = 0; k < t; ++k) (k % 2 == 0 ? odd : even).push_back(k);
  return {slice_time(seq, std::span<const Index>(odd)), slice_time(seq, std::span<const Index>(even))};
}

/// Inverse of subsample_odd_even.
template <typename Scalar>
SeqTensor<Scalar> interleave_odd_even(const SeqTensor<Scalar>& odd, const SeqTensor<Scalar>& even) {
  const Index n_odd = odd.time_steps();
  const Index n_even = even.time_steps();
  if (n_odd != n_even && n_odd != n_even + 1) {
    throw DimensionError("interleave_odd_even: lengths " + std::to_string(n_odd) + " and " +
                         std::to_string(n_even) + " are not an odd/even split");
  }
  if (odd.frame_size() != even.frame_size() && n_even > 0) {
    throw DimensionError("interleave_odd_even: frame shapes differ");
  }
  Shape shape = odd.shape();
  shape[0] = n_odd + n_even;
  SeqTensor<Scalar> out(shape);
  for (Index k = 0; k < n_odd; ++k) out.frame(2 * k) = odd.frame(k);
  for (Index k = 0; k < n_even; ++k) out.frame(2 * k + 1) = even.frame(k);
  return out;
}

enum class Parity { Odd, Even };

struct M1Source {
  Parity parity;
  std::int64_t k_half;  // 1-based position within the parity subsequence
};

/// Where target step j (1-based) of the full horizon lives in the
/// half-timescale forecasts.
M1Source m1_source_index(std::int64_t j);

/// Probability of taking the preferred (non-own) decoder input at global
/// batch i for sequence index v = decoder step + 1.
double epsilon_for(const ScheduleConfig& config, std::int64_t i, std::int64_t v);

/// Schedule of the half-timescale model during TPG stage 1 (plain inverse
/// sigmoid with the m1 lambda).
double m1_epsilon(const ScheduleConfig& config, std::int64_t i);

}  // namespace tpgf
