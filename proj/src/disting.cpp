// SPDX-License-Identifier: Apache-2.0
#include "lidal/disting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lidal::dst {

namespace {

/// Robust scale of a correlation trace: 1.4826 * median absolute deviation.
double robust_scale(std::vector<double> values) {
  if (values.empty()) return 0.0;
  for (double& v : values) v = std::abs(v);
  auto mid = values.begin() + values.size() / 2;
  std::nth_element(values.begin(), mid, values.end());
  return 1.4826 * *mid;
}

/// Dense cross-correlation R(l) = sum_t a[t] * b[t + l], l in [-(n-1), n-1].
std::vector<double> cross_correlate(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  std::vector<double> r(2 * n - 1, 0.0);
  for (int lag = -(n - 1); lag <= n - 1; ++lag) {
    double s = 0.0;
    const int t_lo = std::max(0, -lag);
    const int t_hi = std::min(n, n - lag);
    for (int t = t_lo; t < t_hi; ++t) s += a[t] * b[t + lag];
    r[lag + n - 1] = s;
  }
  return r;
}

struct Peak {
  int lag = 0;
  double value = 0.0;
};

/// Local maxima of |r| above the floor, merged within `merge_span` samples.
std::vector<Peak> significant_peaks(const std::vector<double>& r, int center, double floor,
                                    int merge_span) {
  std::vector<Peak> peaks;
  const int n = static_cast<int>(r.size());
  for (int i = 0; i < n; ++i) {
    const double v = std::abs(r[i]);
    if (v <= floor) continue;
    if (i > 0 && std::abs(r[i - 1]) > v) continue;
    if (i + 1 < n && std::abs(r[i + 1]) >= v) continue;
    const Peak p{i - center, v};
    if (!peaks.empty() && std::abs(p.lag - peaks.back().lag) <= merge_span) {
      if (p.value > peaks.back().value) peaks.back() = p;
    } else {
      peaks.push_back(p);
    }
  }
  return peaks;
}

}  // namespace

void SnapshotCube::append(fe::Snapshot s) {
  if (!snapshots.empty()) {
    const auto& ref = snapshots.front();
    if (s.samples.size() != ref.samples.size() ||
        std::abs(s.sample_period_s - ref.sample_period_s) > 1e-15 ||
        std::abs(s.slot_width_s - ref.slot_width_s) > 1e-15)
      throw std::invalid_argument("SnapshotCube: frame geometry mismatch");
    if (s.index <= snapshots.back().index)
      throw std::invalid_argument("SnapshotCube: frame indices must increase");
  } else {
    slot_width_s = s.slot_width_s;
    if (n_slots == 0)
      n_slots = static_cast<int>(s.samples.size() / std::max(1, s.samples_per_slot()));
  }
  snapshots.push_back(std::move(s));
}

fe::Snapshot bsm_subtract(const fe::Snapshot& s_i, const fe::Snapshot& s_i1) {
  if (s_i.samples.size() != s_i1.samples.size() ||
      std::abs(s_i.sample_period_s - s_i1.sample_period_s) > 1e-15)
    throw std::invalid_argument("bsm_subtract: snapshots are not aligned");
  fe::Snapshot out = s_i1;
  for (std::size_t k = 0; k < out.samples.size(); ++k) out.samples[k] -= s_i.samples[k];
  return out;
}

MovementReport fast_xcorr(const fe::Snapshot& s_i, const fe::Snapshot& s_i1,
                          const CcmOptions& opts) {
  if (s_i.samples.size() != s_i1.samples.size())
    throw std::invalid_argument("fast_xcorr: snapshots are not aligned");
  MovementReport rep;
  const int n = static_cast<int>(s_i.samples.size());
  auto r = cross_correlate(s_i.samples, s_i1.samples);
  const int center = n - 1;
  // Normalize by the sqrt of the overlap support so the noise level of the
  // correlation trace is flat across lags.
  for (int i = 0; i < static_cast<int>(r.size()); ++i)
    r[i] /= std::sqrt(static_cast<double>(n - std::abs(i - center)));
  const int pulse_span =
      std::max(1, static_cast<int>(std::lround(opts.pulse_width_s / s_i.sample_period_s)));

  const double floor = opts.kappa * robust_scale(r);
  const auto peaks = significant_peaks(r, center, floor, pulse_span);
  for (const auto& p : peaks)
    rep.correlation_peaks.push_back({p.lag * s_i.sample_period_s, p.value});

  // Zero-lag structure is static background. A nonzero-lag peak is benign
  // only when matched by a comparable peak at the mirrored lag (stationary
  // target against stationary clutter); anything unpaired means motion.
  const int pair_tol = std::max(4, opts.zero_lag_tolerance);
  rep.tmi = 0;
  for (const auto& p : peaks) {
    if (std::abs(p.lag) <= opts.zero_lag_tolerance) continue;
    bool paired = false;
    for (const auto& q : peaks) {
      if (std::abs(q.lag) <= opts.zero_lag_tolerance) continue;
      if (std::abs(q.lag + p.lag) > pair_tol) continue;
      const double ratio = q.value / p.value;
      if (ratio > 0.5 && ratio < 2.0) {
        paired = true;
        break;
      }
    }
    if (!paired) {
      rep.tmi = 1;
      break;
    }
  }
  return rep;
}

SlowCorrResult slow_xcorr(const SnapshotCube& cube, int slot_j, const CcmOptions& opts) {
  const int s_depth = cube.history_depth;
  if (cube.size() < s_depth + 1)
    throw std::runtime_error("slow_xcorr: insufficient history buffered");
  if (slot_j < 0 || slot_j >= cube.n_slots)
    throw std::invalid_argument("slow_xcorr: slot index out of range");

  const auto& latest = cube.latest();
  const int sps = latest.samples_per_slot();
  const int begin = slot_j * sps;
  if (begin + sps > static_cast<int>(latest.samples.size()))
    throw std::invalid_argument("slow_xcorr: slot beyond frame length");

  // Mean of the previous S slot windows (normalized so amplitudes stay
  // comparable with the latest frame).
  std::vector<double> hist(sps, 0.0);
  for (int s = cube.size() - 1 - s_depth; s < cube.size() - 1; ++s)
    for (int k = 0; k < sps; ++k) hist[k] += cube.snapshots[s].samples[begin + k];
  for (double& v : hist) v /= static_cast<double>(s_depth);

  std::vector<double> now(latest.samples.begin() + begin, latest.samples.begin() + begin + sps);

  // Occupancy significance of each side from the window-mean current.
  const double root_n = std::sqrt(static_cast<double>(sps));
  double m_hist = 0.0, m_now = 0.0;
  for (double v : hist) m_hist += v;
  for (double v : now) m_now += v;
  m_hist /= sps;
  m_now /= sps;
  const bool occ_hist =
      m_hist > opts.kappa * opts.sigma_t_a / (root_n * std::sqrt(double(s_depth)));
  const bool occ_now = m_now > opts.kappa * opts.sigma_t_a / root_n;

  SlowCorrResult res;
  const auto r = cross_correlate(now, hist);
  const int center = sps - 1;
  int best = center;
  for (int i = 0; i < static_cast<int>(r.size()); ++i)
    if (std::abs(r[i]) > std::abs(r[best])) best = i;
  res.lag_s = (best - center) * latest.sample_period_s;

  if (!occ_hist && !occ_now) {
    // Noise on both sides: no dominant peak above the detection floor.
    res.weight = 0;
    res.lag_s = 0.0;
  } else if (occ_hist != occ_now) {
    // Content appeared or disappeared within the history span.
    res.weight = 1;
  } else {
    // Both occupied: static content correlates at zero lag with steady
    // strength. A body can hold its range bin while closing tangentially,
    // so a significant level shift against the window mean counts as motion
    // even when the lag stays near zero.
    const double drift_floor =
        opts.kappa * opts.sigma_t_a *
        std::sqrt(1.0 + 1.0 / static_cast<double>(s_depth)) / root_n;
    const bool level_shift = std::abs(m_now - m_hist) > drift_floor;
    res.weight =
        (std::abs(best - center) <= opts.zero_lag_tolerance && !level_shift)
            ? 0
            : 1;
  }
  return res;
}

std::vector<std::optional<double>> toa_estimate(const SnapshotCube& cube,
                                                const std::vector<int>& slot_weights,
                                                const std::vector<double>& pulse_template,
                                                const CcmOptions& opts) {
  if (cube.size() == 0) throw std::runtime_error("toa_estimate: empty cube");
  if (pulse_template.empty()) throw std::invalid_argument("toa_estimate: empty template");
  const auto& latest = cube.latest();
  const int sps = latest.samples_per_slot();
  const int n_samples = static_cast<int>(latest.samples.size());
  const int len_g = static_cast<int>(pulse_template.size());

  double g2 = 0.0;
  for (double g : pulse_template) g2 += g * g;
  const double floor = opts.kappa * opts.sigma_t_a * std::sqrt(g2);

  std::vector<std::optional<double>> toa(slot_weights.size());
  for (std::size_t j = 0; j < slot_weights.size(); ++j) {
    if (slot_weights[j] != 1) continue;
    // Search one slot before the nominal start through one slot past the
    // end, so pulses straddling the slot boundary are still located.
    const int lo = std::max(0, static_cast<int>(j) * sps - sps);
    const int hi = std::min(n_samples - len_g, static_cast<int>(j + 2) * sps);
    double best_v = -1.0;
    int best_lag = -1;
    for (int lag = lo; lag <= hi; ++lag) {
      double v = 0.0;
      for (int k = 0; k < len_g; ++k) v += latest.samples[lag + k] * pulse_template[k];
      if (v > best_v) {
        best_v = v;
        best_lag = lag;
      }
    }
    if (best_lag >= 0 && best_v > floor)
      toa[j] = best_lag * latest.sample_period_s;
  }
  return toa;
}

det::SlotObservation gate_slots(const det::SlotObservation& obs,
                                const std::vector<int>& slot_weights) {
  if (obs.z.size() != slot_weights.size())
    throw std::invalid_argument("gate_slots: weight/coefficient length mismatch");
  det::SlotObservation out = obs;
  for (std::size_t j = 0; j < out.z.size(); ++j)
    if (slot_weights[j] == 0) out.z[j] = 0.0;
  return out;
}

std::vector<double> rectangular_template(double pulse_width_s, double sample_period_s) {
  const int n = std::max(1, static_cast<int>(std::lround(pulse_width_s / sample_period_s)));
  return std::vector<double>(static_cast<std::size_t>(n), 1.0);
}

}  // namespace lidal::dst
