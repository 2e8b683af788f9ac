// SPDX-License-Identifier: Apache-2.0

#include "lidal/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lidal::det {

double optimum_threshold(const SignalStats& st, const CostPolicy& policy) {
  if (!(st.mu > 0.0)) throw std::invalid_argument("optimum_threshold: mu must be positive");
  if (!(st.sigma_t > 0.0))
    throw std::invalid_argument("optimum_threshold: sigma_t must be positive");
  const double beta = st.beta_sigma();
  if (beta < 1.0 - 1e-12)
    throw std::invalid_argument("optimum_threshold: variance ratio below 1");
  const double ratio = policy.gamma_fp() / policy.gamma_fa();
  if (!(ratio > 0.0)) throw std::invalid_argument("optimum_threshold: invalid cost ratio");
  const double mu = st.mu, sigma = st.sigma_total();
  if (beta - 1.0 < 1e-9) {
    // No-fluctuation limit: classical equal-variance likelihood crossing.
    return mu / 2.0 + (st.sigma_t * st.sigma_t / mu) * std::log(ratio);
  }
  const double bm1 = beta - 1.0;
  const double a = mu / bm1;
  const double log_term = std::log(sigma / st.sigma_t * ratio);
  const double rad = a * a + mu * mu / bm1 + 2.0 * sigma * sigma / bm1 * log_term;
  if (rad < 0.0)
    throw std::domain_error("optimum_threshold: no positive likelihood crossing");
  return std::sqrt(rad) - a;
}

double prob_false_detection_at(const SignalStats& st, double d) {
  return gaussian_tail(d, 0.0, st.sigma_t);
}

double prob_false_detection(const SignalStats& st, const CostPolicy& policy) {
  return prob_false_detection_at(st, optimum_threshold(st, policy));
}

double prob_detection_at(const SignalStats& st, double d) {
  return gaussian_tail(d, st.mu, st.sigma_total());
}

double prob_detection(const SignalStats& st, const CostPolicy& policy) {
  return prob_detection_at(st, optimum_threshold(st, policy));
}

std::vector<RocPoint> roc_curve(const SignalStats& st, int n_points) {
  if (n_points < 2) throw std::invalid_argument("roc_curve: need at least two points");
  std::vector<RocPoint> out;
  out.reserve(static_cast<std::size_t>(n_points));
  const double hi = st.mu + 5.0 * st.sigma_total();
  for (int i = 0; i < n_points; ++i) {
    const double d = hi * static_cast<double>(i) / static_cast<double>(n_points - 1);
    out.push_back({d, prob_false_detection_at(st, d), prob_detection_at(st, d)});
  }
  return out;
}

SlotObservation orthonormal_expand(const fe::Snapshot& s, int n_slots) {
  const int spp = s.samples_per_slot();
  if (spp <= 0) throw std::invalid_argument("orthonormal_expand: bad slot/sample ratio");
  if (static_cast<std::size_t>(n_slots) * static_cast<std::size_t>(spp) > s.samples.size())
    throw std::invalid_argument("orthonormal_expand: snapshot shorter than N slots");
  SlotObservation obs;
  obs.slot_width_s = s.slot_width_s;
  obs.z.resize(static_cast<std::size_t>(n_slots));
  for (int j = 0; j < n_slots; ++j) {
    double acc = 0.0;
    for (int k = 0; k < spp; ++k)
      acc += s.samples[static_cast<std::size_t>(j) * spp + static_cast<std::size_t>(k)];
    obs.z[static_cast<std::size_t>(j)] = acc / static_cast<double>(spp);
  }
  return obs;
}

std::uint64_t candidate_count(int n, int k_max) {
  if (n < 0 || k_max < 0 || k_max > n)
    throw std::invalid_argument("candidate_count: need 0 <= k_max <= n_slots");
  std::uint64_t total = 0;
  // Sum of binomials C(n, 0..k_max), computed incrementally.
  double c = 1.0;
  for (int k = 0; k <= std::min(k_max, n); ++k) {
    total += static_cast<std::uint64_t>(std::llround(c));
    c = c * static_cast<double>(n - k) / static_cast<double>(k + 1);
  }
  return total;
}

DetectionDecision esr_decide(const SlotObservation& obs, const SignalStats& st, int k_max) {
  const int n = obs.slot_count();
  if (k_max > n) throw std::invalid_argument("esr_decide: k_max exceeds slot count");
  const std::uint64_t c_a = candidate_count(n, k_max);
  if (c_a > 1000000ull)
    throw std::runtime_error(
        "esr_decide: candidate enumeration too large; use the sequential-rule decoder");

  // Baseline error with all slots empty; flipping slot j to occupied changes
  // the error by (z_j - mu)^2 - z_j^2, so enumerate subsets by their flips.
  double base = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double z = obs.z[static_cast<std::size_t>(j)];
    base += z * z;
    delta[static_cast<std::size_t>(j)] = (z - st.mu) * (z - st.mu) - z * z;
  }

  DetectionDecision best;
  double best_err = base;  // empty hypothesis, id 0
  std::uint64_t rank = 0;
  std::vector<int> pick;
  // Depth-first enumeration in (k, lexicographic) order.
  for (int k = 1; k <= k_max; ++k) {
    pick.assign(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
    while (true) {
      ++rank;
      double err = base;
      for (int idx : pick) err += delta[static_cast<std::size_t>(idx)];
      if (err < best_err - 1e-15) {
        best_err = err;
        best.occupied_slots.clear();
        best.occupied_slots.insert(pick.begin(), pick.end());
        best.hypothesis_id = rank;
      }
      // Next k-combination of {0..n-1}.
      int i = k - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - k + i) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (int j2 = i + 1; j2 < k; ++j2)
        pick[static_cast<std::size_t>(j2)] = pick[static_cast<std::size_t>(j2 - 1)] + 1;
    }
  }
  best.target_count = static_cast<int>(best.occupied_slots.size());
  return best;
}

DetectionDecision sor_decide(const SlotObservation& obs, double d_th_low, double d_th_high) {
  if (!(d_th_low <= d_th_high))
    throw std::invalid_argument("sor_decide: low threshold must not exceed high threshold");
  const int n = obs.slot_count();
  enum class State { kUndecided, kAbsent, kPresent };
  std::vector<State> state(static_cast<std::size_t>(n), State::kUndecided);
  auto gray = [&](int j) {
    const double z = obs.z[static_cast<std::size_t>(j)];
    return z >= d_th_low && z <= d_th_high;
  };
  for (int j = 0; j < n; ++j) {
    if (state[static_cast<std::size_t>(j)] != State::kUndecided) continue;
    const double z = obs.z[static_cast<std::size_t>(j)];
    if (z < d_th_low) {
      state[static_cast<std::size_t>(j)] = State::kAbsent;
    } else if (z > d_th_high) {
      state[static_cast<std::size_t>(j)] = State::kPresent;
    } else {
      // Straddle rule: compare with the right neighbor (left for the last
      // slot) and keep only the larger coefficient; a gray right neighbor is
      // consumed by this pairwise decision.
      const int m = (j + 1 < n) ? j + 1 : j - 1;
      if (m < 0) {
        state[static_cast<std::size_t>(j)] = State::kPresent;  // single-slot frame
        continue;
      }
      const double zm = obs.z[static_cast<std::size_t>(m)];
      const bool wins = (z > zm) || (z == zm && j < m);
      state[static_cast<std::size_t>(j)] = wins ? State::kPresent : State::kAbsent;
      if (m == j + 1 && gray(m))
        state[static_cast<std::size_t>(m)] = wins ? State::kAbsent : State::kPresent;
    }
  }
  DetectionDecision d;
  for (int j = 0; j < n; ++j)
    if (state[static_cast<std::size_t>(j)] == State::kPresent) d.occupied_slots.insert(j);
  d.target_count = static_cast<int>(d.occupied_slots.size());
  // Rank the decided subset in (k, lexicographic) candidate order: all
  // candidates with fewer occupied slots precede this k-block.
  std::uint64_t rank = 0;
  if (d.target_count > 0) {
    const int k = d.target_count;
    rank = candidate_count(n, k - 1);
    std::uint64_t lex = 0;
    int prev = -1, left = k;
    for (int slot : d.occupied_slots) {
      for (int s = prev + 1; s < slot; ++s) {
        // k-subsets that begin with s at this depth
        double c = 1.0;
        for (int t = 1; t < left; ++t)
          c = c * static_cast<double>(n - s - 1 - (t - 1)) / static_cast<double>(t);
        lex += static_cast<std::uint64_t>(std::llround(c));
      }
      prev = slot;
      --left;
    }
    rank += lex;
  }
  d.hypothesis_id = rank;
  return d;
}

double prob_correct_single(double z, double sigma_t, int n_slots) {
  return std::pow(normal_cdf(z / sigma_t), n_slots - 1);
}

double prob_correct_esr(double z, double sigma_t, int n_slots, int k) {
  if (k >= n_slots) throw std::invalid_argument("prob_correct_esr: needs k < n_slots");
  return std::pow(normal_cdf(z / sigma_t), n_slots - k);
}

SorBound prob_correct_sor(const SignalStats& st, double d_th_low, double d_th_high,
                          int n_slots) {
  SorBound b{};
  const double sigma = st.sigma_total();
  b.p_correct_target = gaussian_tail(d_th_high, st.mu, sigma);
  b.p_correct_empty = 1.0 - gaussian_tail(d_th_low, 0.0, sigma);
  // Uniform prior over the target count 0..n; given k targets all k occupied
  // slots must clear the high mark and all n-k empty slots must stay under
  // the low mark, independently of which slots they are.
  double total = 0.0;
  for (int k = 0; k <= n_slots; ++k)
    total += std::pow(b.p_correct_target, k) * std::pow(b.p_correct_empty, n_slots - k);
  b.p_correct = total / static_cast<double>(n_slots + 1);
  return b;
}

}  // namespace lidal::det
