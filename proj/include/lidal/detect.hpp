// SPDX-License-Identifier: Apache-2.0
//
// Bayes detection thresholds, ROC curves, and the slot-domain optimum
// receivers: exhaustive-enumeration (ESR) and sequential-rule (SOR) decoders.
#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "lidal/common.hpp"
#include "lidal/frontend.hpp"

namespace lidal::det {

/// Per-slot amplitude statistics of the reflected-signal model.
struct SignalStats {
  double mu = 0.0;       ///< mean reflected amplitude [A]
  double sigma_s = 0.0;  ///< signal fluctuation std (clothing reflectivity) [A]
  double sigma_t = 1.0;  ///< receiver noise std [A]
  double a_o = 0.0;      ///< optional channel gain scalar [W or A]

  double sigma_total() const { return std::sqrt(sigma_s * sigma_s + sigma_t * sigma_t); }
  double beta_sigma() const {
    return (sigma_s * sigma_s + sigma_t * sigma_t) / (sigma_t * sigma_t);
  }
};

/// Bayes cost structure. The false-positive / false-alarm weights are
/// gamma_fp = p_absent*cost_fp and gamma_fa = p_present*cost_miss.
struct CostPolicy {
  double p_absent = 0.5;   ///< prior of the empty-slot hypothesis
  double p_present = 0.5;  ///< prior of the occupied-slot hypothesis
  double cost_fp = 1.0;    ///< cost of declaring a target where none is
  double cost_miss = 1.0;  ///< cost of missing a present target
  double cost_tn = 0.0, cost_tp = 0.0;

  double gamma_fp() const { return p_absent * cost_fp; }
  double gamma_fa() const { return p_present * cost_miss; }
  static CostPolicy symmetric() { return {}; }
  /// Policy with gamma_fp/gamma_fa equal to `ratio` (equal priors).
  static CostPolicy with_ratio(double ratio) { return {0.5, 0.5, ratio, 1.0, 0.0, 0.0}; }
};

/// N slot coefficients (mean current over each slot, amperes).
struct SlotObservation {
  std::vector<double> z;
  double slot_width_s = 2e-9;
  int slot_count() const { return static_cast<int>(z.size()); }
};

/// Decoded occupancy.
struct DetectionDecision {
  std::set<int> occupied_slots;
  int target_count = 0;
  std::uint64_t hypothesis_id = 0;  ///< rank in (k, lexicographic) candidate order
};

/// Bayes-optimum slot threshold [A]: the upper crossing of the weighted
/// empty/occupied likelihoods. For beta_sigma == 1 (no signal fluctuation)
/// returns the analytic limit mu/2 + (sigma_t^2/mu) ln(gamma_fp/gamma_fa).
/// Throws if beta_sigma < 1 or mu <= 0.
double optimum_threshold(const SignalStats& stats, const CostPolicy& policy);

/// P(noise exceeds the policy threshold) = erfc(D/(sqrt2 sigma_t))/2.
double prob_false_detection(const SignalStats& stats, const CostPolicy& policy);
/// Same, at an explicit threshold.
double prob_false_detection_at(const SignalStats& stats, double threshold_a);

/// P(occupied-slot coefficient exceeds the threshold); total sigma.
double prob_detection(const SignalStats& stats, const CostPolicy& policy);
double prob_detection_at(const SignalStats& stats, double threshold_a);

/// Threshold sweep over [0, mu + 5 sigma]: (threshold, P_FD, P_D) triples.
struct RocPoint {
  double threshold_a, p_fd, p_d;
};
std::vector<RocPoint> roc_curve(const SignalStats& stats, int n_points);

/// Projects a sampled snapshot onto the rectangular slot basis: z_j is the
/// mean current over slot j, so coefficients carry the per-slot amplitude
/// statistics directly.
SlotObservation orthonormal_expand(const fe::Snapshot& s, int n_slots);

/// Exhaustive-enumeration decoder: evaluates every candidate occupancy with
/// at most k_max targets (expected coefficient mu in occupied slots, 0
/// elsewhere) and returns the minimum-squared-error candidate.
/// Throws when the candidate count exceeds 10^6 (use the sequential rule).
DetectionDecision esr_decide(const SlotObservation& obs, const SignalStats& stats, int k_max);

/// Number of candidate answers with at most k_max of n slots occupied.
std::uint64_t candidate_count(int n_slots, int k_max);

/// Sequential-rule decoder with low/high thresholds: below low -> absent,
/// above high -> present, between -> pairwise comparison with the right
/// neighbor (straddling pulses resolve to the larger coefficient; ties to the
/// earlier slot; gray-gray pairs are consumed together).
DetectionDecision sor_decide(const SlotObservation& obs, double d_th_low, double d_th_high);

/// Closed-form correct-decision probability for one target among n slots,
/// as a function of the observed coefficient: Phi(z/sigma_t)^(n-1).
double prob_correct_single(double z, double sigma_t, int n_slots);

/// Enumeration-receiver form for k targets among n slots: Phi(z/sigma_t)^(n-k).
double prob_correct_esr(double z, double sigma_t, int n_slots, int k);

/// Sequential-rule analytic bound (conservative: high threshold on occupied
/// slots, low threshold on empty slots, uniform prior over 0..n targets).
struct SorBound {
  double p_correct_target;  ///< P(occupied coefficient > high threshold)
  double p_correct_empty;   ///< P(empty coefficient < low threshold)
  double p_correct;         ///< prior-averaged total
};
SorBound prob_correct_sor(const SignalStats& stats, double d_th_low, double d_th_high,
                          int n_slots);

}  // namespace lidal::det
