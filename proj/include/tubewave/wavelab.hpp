#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tubewave {

class InsufficientSamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WindowNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Event {
  double t = 0.0;
  std::string kind;
  std::string payload;
};

/// Per-sample diagnostics of a run.
struct DiagnosticsSeries {
  std::vector<double> t;
  std::vector<double> max_amp;
  std::vector<std::vector<double>> crest_positions;
  std::vector<double> kink_position;  // NaN when no kink is tracked
  std::vector<Event> events;

  void push(double time, double amp, std::vector<double> crests,
            double kink = std::numeric_limits<double>::quiet_NaN()) {
    t.push_back(time);
    max_amp.push_back(amp);
    crest_positions.push_back(std::move(crests));
    kink_position.push_back(kink);
  }
};

/// Thresholds shared by every detector.
struct DetectorConfig {
  double blowup_threshold = 50.0;
  double split_threshold = 0.25;
  double split_min_separation = 10.0;
  int split_window = 5;
  double self_similar_tol = 0.03;
  double growth_lo = 1e-4;
  double growth_hi = 1e-1;
  double track_max_jump = 2.0;
  int min_fit_samples = 10;
  double sawtooth_threshold = 1e-3;
};

/// Uniformly spaced frame of a scalar field.
struct Frame {
  double t = 0.0;
  double x0 = 0.0;
  double dx = 1.0;
  std::vector<double> values;
};

struct Crest {
  double x = 0.0;
  double amp = 0.0;
};

/// Strict local maxima above threshold, refined by a parabola through three points.
inline std::vector<Crest> local_maxima(const std::vector<double>& f, double x0, double dx,
                                       double threshold) {
  std::vector<Crest> out;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) {
    if (!(f[i] > threshold)) continue;
    if (f[i] > f[i - 1] && f[i] >= f[i + 1]) {
      const double a = f[i - 1], b = f[i], c = f[i + 1];
      const double den = a - 2.0 * b + c;
      const double off = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
      out.push_back({x0 + (double(i) + off) * dx, b - 0.25 * (a - c) * off});
    }
  }
  return out;
}

struct Trajectory {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> amp;
  bool lost = false;
};

/// Links per-sample crest positions into tracks by nearest-neighbour continuation.
inline std::vector<Trajectory> link_tracks(const std::vector<double>& t,
                                           const std::vector<std::vector<double>>& crests,
                                           double max_jump) {
  std::vector<Trajectory> done, live;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& cr = crests[i];
    std::vector<bool> used(cr.size(), false);
    std::vector<Trajectory> next;
    for (auto& tr : live) {
      int best = -1;
      double bd = max_jump;
      for (std::size_t j = 0; j < cr.size(); ++j) {
        const double d = std::abs(cr[j] - tr.x.back());
        if (!used[j] && d <= bd) {
          bd = d;
          best = int(j);
        }
      }
      if (best >= 0) {
        used[best] = true;
        tr.t.push_back(t[i]);
        tr.x.push_back(cr[best]);
        tr.amp.push_back(0.0);
        next.push_back(std::move(tr));
      } else {
        tr.lost = true;
        done.push_back(std::move(tr));
      }
    }
    for (std::size_t j = 0; j < cr.size(); ++j)
      if (!used[j]) next.push_back({{t[i]}, {cr[j]}, {0.0}, false});
    live = std::move(next);
  }
  for (auto& tr : live) done.push_back(std::move(tr));
  return done;
}

/// Links local maxima across frames by nearest-neighbour continuation.
inline std::vector<Trajectory> track_pulses(const std::vector<Frame>& frames, double threshold,
                                            double max_jump) {
  std::vector<Trajectory> done, live;
  for (const auto& fr : frames) {
    auto crests = local_maxima(fr.values, fr.x0, fr.dx, threshold);
    std::vector<bool> used(crests.size(), false);
    std::vector<Trajectory> next;
    for (auto& tr : live) {
      int best = -1;
      double bd = max_jump;
      for (std::size_t j = 0; j < crests.size(); ++j) {
        const double d = std::abs(crests[j].x - tr.x.back());
        if (!used[j] && d <= bd) {
          bd = d;
          best = int(j);
        }
      }
      if (best >= 0) {
        used[best] = true;
        tr.t.push_back(fr.t);
        tr.x.push_back(crests[best].x);
        tr.amp.push_back(crests[best].amp);
        next.push_back(std::move(tr));
      } else {
        tr.lost = true;
        done.push_back(std::move(tr));
      }
    }
    for (std::size_t j = 0; j < crests.size(); ++j) {
      if (used[j]) continue;
      Trajectory tr;
      tr.t.push_back(fr.t);
      tr.x.push_back(crests[j].x);
      tr.amp.push_back(crests[j].amp);
      next.push_back(std::move(tr));
    }
    live = std::move(next);
  }
  for (auto& tr : live) done.push_back(std::move(tr));
  std::sort(done.begin(), done.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.t.front() != b.t.front() ? a.t.front() < b.t.front() : a.x.front() < b.x.front();
  });
  return done;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  int n = 0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = int(x.size());
  if (n < 2) throw InsufficientSamples("need at least two samples");
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw InsufficientSamples("degenerate abscissae");
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ss = 0;
    for (int i = 0; i < n; ++i) {
      const double e = y[i] - f.intercept - f.slope * x[i];
      ss += e * e;
    }
    f.slope_stderr = std::sqrt(ss / (n - 2) / sxx);
  }
  return f;
}

struct SpeedFit {
  double speed = 0.0;
  double stderr_ = 0.0;
  int samples = 0;
};

/// Least-squares speed of a trajectory over t ∈ [t_lo, t_hi].
inline SpeedFit fit_speed(const Trajectory& tr, double t_lo, double t_hi, int min_samples = 10) {
  std::vector<double> t, x;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    if (tr.t[i] >= t_lo && tr.t[i] <= t_hi) {
      t.push_back(tr.t[i]);
      x.push_back(tr.x[i]);
    }
  }
  if (int(t.size()) < min_samples) throw InsufficientSamples("too few samples in speed window");
  const auto f = least_squares(t, x);
  return {f.slope, f.slope_stderr, f.n};
}

inline std::optional<double> detect_blowup(const DiagnosticsSeries& s, double threshold) {
  for (std::size_t i = 0; i < s.t.size(); ++i)
    if (!std::isfinite(s.max_amp[i]) || s.max_amp[i] > threshold) return s.t[i];
  return std::nullopt;
}

struct SplitVerdict {
  bool split = false;
  double t_split = 0.0;
  int left = -1;
  int right = -1;
};

/// Two simultaneous tracks, separated by more than the minimum distance and
/// moving apart over `window` consecutive common samples.
inline SplitVerdict detect_split(const std::vector<Trajectory>& tracks, const DetectorConfig& cfg) {
  SplitVerdict v;
  for (std::size_t a = 0; a < tracks.size(); ++a) {
    for (std::size_t b = 0; b < tracks.size(); ++b) {
      if (a == b) continue;
      const auto& A = tracks[a];
      const auto& B = tracks[b];
      // Common samples by time.
      std::size_t i = 0, j = 0;
      int run = 0;
      double prev_sep = -1.0;
      while (i < A.t.size() && j < B.t.size()) {
        if (A.t[i] < B.t[j]) { ++i; continue; }
        if (B.t[j] < A.t[i]) { ++j; continue; }
        const double sep = B.x[j] - A.x[i];
        if (sep > cfg.split_min_separation && prev_sep >= 0.0 && sep > prev_sep) {
          if (++run >= cfg.split_window) {
            if (!v.split || A.t[i] < v.t_split) {
              v.split = true;
              v.t_split = A.t[i];
              v.left = int(a);
              v.right = int(b);
            }
            break;
          }
        } else {
          run = 0;
        }
        prev_sep = sep;
        ++i;
        ++j;
      }
    }
  }
  return v;
}

struct RateFit {
  double rate = 0.0;
  double stderr_ = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
  int samples = 0;
};

/// Exponential rate of a positive series from samples whose amplitude lies in
/// [lo, hi]; the longest contiguous run in the window is used.
inline RateFit fit_growth_rate(const std::vector<double>& t, const std::vector<double>& amp,
                               double lo, double hi, int min_samples = 10) {
  std::size_t best_b = 0, best_e = 0, b = 0;
  bool in = false;
  for (std::size_t i = 0; i <= t.size(); ++i) {
    const bool ok = i < t.size() && amp[i] >= lo && amp[i] <= hi && std::isfinite(amp[i]);
    if (ok && !in) { b = i; in = true; }
    if (!ok && in) {
      if (i - b > best_e - best_b) { best_b = b; best_e = i; }
      in = false;
    }
  }
  if (int(best_e - best_b) < min_samples) throw WindowNotFound("no exponential-growth window");
  std::vector<double> x(t.begin() + best_b, t.begin() + best_e), y;
  for (std::size_t i = best_b; i < best_e; ++i) y.push_back(std::log(amp[i]));
  const auto f = least_squares(x, y);
  return {f.slope, f.slope_stderr, x.front(), x.back(), f.n};
}

/// Linear interpolation of a uniformly sampled function; NaN outside.
inline double sample_uniform(const std::vector<double>& f, double x0, double dx, double x) {
  const double s = (x - x0) / dx;
  if (!(s >= 0.0) || s > double(f.size() - 1)) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t i = std::min<std::size_t>(std::size_t(s), f.size() - 2);
  const double w = s - double(i);
  return (1.0 - w) * f[i] + w * f[i + 1];
}

struct SelfSimilarVerdict {
  bool self_similar = false;
  double collapse_error = 0.0;  // max-norm discrepancy / jump
};

/// Upper envelope of a frame in the similarity variable η = (x − x_sym)/(t − t0):
/// maxima over η-bins of the given width, for η in [eta_lo, eta_hi].
inline std::vector<double> similarity_envelope(const Frame& fr, double x_sym, double t0,
                                               double eta_lo, double eta_hi, double bin) {
  const int nb = int(std::ceil((eta_hi - eta_lo) / bin));
  std::vector<double> env(nb, -std::numeric_limits<double>::infinity());
  const double s = fr.t - t0;
  for (std::size_t i = 0; i < fr.values.size(); ++i) {
    const double eta = (fr.x0 + double(i) * fr.dx - x_sym) / s;
    const int b = int(std::floor((eta - eta_lo) / bin));
    if (b >= 0 && b < nb) env[b] = std::max(env[b], fr.values[i]);
  }
  return env;
}

/// Collapse of two late frames in η = (x − x_sym)/(t − t0). With bin > 0 the
/// upper envelopes are compared, which discounts short waves riding on the fan.
inline SelfSimilarVerdict detect_self_similar(const Frame& f1, const Frame& f2, double x_sym,
                                              double t0, double jump, double tol,
                                              double eta_lo, double eta_hi, double bin = 0.0) {
  SelfSimilarVerdict v;
  double err = 0.0;
  if (bin > 0.0) {
    const auto e1 = similarity_envelope(f1, x_sym, t0, eta_lo, eta_hi, bin);
    const auto e2 = similarity_envelope(f2, x_sym, t0, eta_lo, eta_hi, bin);
    for (std::size_t b = 0; b < e1.size(); ++b)
      if (std::isfinite(e1[b]) && std::isfinite(e2[b])) err = std::max(err, std::abs(e1[b] - e2[b]));
  } else {
    const double s1 = f1.t - t0, s2 = f2.t - t0;
    for (std::size_t i = 0; i < f1.values.size(); ++i) {
      const double x = f1.x0 + double(i) * f1.dx;
      const double eta = (x - x_sym) / s1;
      if (eta < eta_lo || eta > eta_hi) continue;
      const double g = sample_uniform(f2.values, f2.x0, f2.dx, x_sym + eta * s2);
      if (std::isfinite(g)) err = std::max(err, std::abs(f1.values[i] - g));
    }
  }
  v.collapse_error = err / std::abs(jump);
  v.self_similar = v.collapse_error < tol;
  return v;
}

/// Position where f first crosses `level` scanning from the left, linearly interpolated.
inline std::optional<double> first_crossing(const std::vector<double>& f, double x0, double dx,
                                            double level, std::size_t from = 0,
                                            std::size_t to = std::size_t(-1)) {
  to = std::min(to, f.size());
  for (std::size_t i = from + 1; i < to; ++i) {
    const double a = f[i - 1] - level, b = f[i] - level;
    if ((a < 0.0) != (b < 0.0)) {
      const double w = a / (a - b);
      return x0 + (double(i - 1) + w) * dx;
    }
  }
  return std::nullopt;
}

}  // namespace tubewave
