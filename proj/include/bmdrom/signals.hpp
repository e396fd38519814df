#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"

namespace bmdrom {

enum class SignalKind { impulse_train, sine_bank, chirp, prbs9, gust_one_cosine, zero };

inline std::string to_string(SignalKind k) {
  switch (k) {
    case SignalKind::impulse_train: return "impulse_train";
    case SignalKind::sine_bank: return "sine_bank";
    case SignalKind::chirp: return "chirp";
    case SignalKind::prbs9: return "prbs9";
    case SignalKind::gust_one_cosine: return "gust_one_cosine";
    case SignalKind::zero: return "zero";
  }
  return "?";
}

inline SignalKind signal_kind_from(const std::string& s) {
  for (auto k : {SignalKind::impulse_train, SignalKind::sine_bank,
                 SignalKind::chirp, SignalKind::prbs9,
                 SignalKind::gust_one_cosine, SignalKind::zero})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown signal kind '" + s + "'");
}

inline constexpr double kMeanChord = 0.29;

struct SignalSpec {
  SignalKind kind = SignalKind::zero;
  int n_u = 6;
  int n_s = 500;  // sequences carry n_s + 1 samples
  double dt = 0.006;
  double amplitude = 1.0;
  // Empty mask means every channel.
  std::vector<int> channels;
  // sine bank: frequencies as fractions of f_r = V / c-bar, one per channel
  std::vector<double> freq_fractions;
  // chirp: start and end fractions of f_r
  double chirp_from = 1.0 / (50.0 * std::numbers::pi);
  double chirp_to = 2.0 / (15.0 * std::numbers::pi);
  // impulse train: samples between impulses and first impulse index
  int spacing = 10;
  int offset = 5;
  // PRBS: samples per chip
  int chip_steps = 1;
  // gust: duration and start time in seconds
  double gust_length_s = 0.5;
  double gust_start_s = 0.0;
  double mean_chord = kMeanChord;
  std::uint64_t seed = 1;
};

inline SignalSpec sine_bank_spec() {
  SignalSpec s;
  s.kind = SignalKind::sine_bank;
  s.channels = {0, 2, 4};
  const double pi = std::numbers::pi;
  s.freq_fractions = {1.0 / (5.0 * pi), 1.0 / (10.0 * pi), 1.0 / (20.0 * pi)};
  return s;
}

inline double reduced_frequency(double speed, double chord = kMeanChord) {
  return speed / chord;
}

// Maximal-length 9-bit LFSR (x^9 + x^5 + 1), period 511. Emits the low bit.
inline std::vector<int> prbs9_bits(std::uint32_t state, int n) {
  state &= 0x1ffu;
  if (state == 0) state = 1;
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = static_cast<int>(state & 1u);
    const std::uint32_t fb = ((state >> 8) ^ (state >> 4)) & 1u;
    state = ((state << 1) | fb) & 0x1ffu;
  }
  return out;
}

inline Vector gust_one_cosine(double length_s, double amplitude, double dt,
                              int n, double start_s = 0.0) {
  if (!(length_s > 0.0)) throw ConfigError("gust length must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  Vector g = Vector::Zero(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * dt - start_s;
    if (t >= 0.0 && t <= length_s)
      g(k) = 0.5 * amplitude *
             (1.0 - std::cos(2.0 * std::numbers::pi * t / length_s));
  }
  return g;
}

// White noise through a first-order low-pass with the given corner (Hz);
// stationary standard deviation `sigma`. Stand-in for Dryden turbulence.
inline Vector filtered_noise(double sigma, double corner_hz, double dt, int n,
                             std::uint64_t seed) {
  if (!(corner_hz > 0.0)) throw ConfigError("corner frequency must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::exp(-2.0 * std::numbers::pi * corner_hz * dt);
  const double b = sigma * std::sqrt(1.0 - a * a);
  Vector v(n);
  double y = sigma * normal(rng);
  for (int k = 0; k < n; ++k) {
    v(k) = y;
    y = a * y + b * normal(rng);
  }
  return v;
}

// speed holds one value per sample (n_s + 1) or a single constant.
inline Matrix generate(const SignalSpec& spec, const Vector& speed) {
  const int n = spec.n_s + 1;
  if (spec.n_u < 1 || spec.n_s < 0) throw ConfigError("signal dimensions");
  if (!(spec.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!std::isfinite(spec.amplitude)) throw ConfigError("amplitude not finite");
  std::vector<int> ch = spec.channels;
  if (ch.empty()) {
    ch.resize(spec.n_u);
    std::iota(ch.begin(), ch.end(), 0);
  }
  for (int c : ch)
    if (c < 0 || c >= spec.n_u) throw ConfigError("channel outside n_u");
  auto speed_at = [&](int k) {
    const double v = speed.size() == 1 ? speed(0) : speed(k);
    if (!(v > 0.0)) throw ConfigError("speed must be positive");
    return v;
  };
  if (speed.size() != 1 && speed.size() != n)
    throw DimensionError("speed profile length must be 1 or n_s + 1");

  Matrix u = Matrix::Zero(spec.n_u, n);
  // phase_k = 2 pi sum_{i<k} f_i dt
  auto phases = [&](auto freq) {
    Vector ph(n);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      ph(k) = acc;
      acc += 2.0 * std::numbers::pi * freq(k) * spec.dt;
    }
    return ph;
  };

  switch (spec.kind) {
    case SignalKind::zero:
      break;
    case SignalKind::impulse_train: {
      if (spec.spacing < 1) throw ConfigError("impulse spacing must be >= 1");
      std::mt19937_64 rng(spec.seed);
      int k = spec.offset;
      while (k < spec.n_s) {
        std::vector<int> order = ch;
        std::shuffle(order.begin(), order.end(), rng);
        for (int c : order) {
          if (k < spec.n_s) u(c, k) = spec.amplitude;
          k += spec.spacing;
        }
      }
      break;
    }
    case SignalKind::sine_bank: {
      if (spec.freq_fractions.size() != ch.size())
        throw ConfigError("one sine frequency per channel required");
      for (size_t i = 0; i < ch.size(); ++i) {
        const double frac = spec.freq_fractions[i];
        if (!(frac > 0.0)) throw ConfigError("frequencies must be positive");
        const Vector ph = phases([&](int k) {
          return frac * reduced_frequency(speed_at(k), spec.mean_chord);
        });
        for (int k = 0; k < n; ++k) u(ch[i], k) = spec.amplitude * std::sin(ph(k));
      }
      break;
    }
    case SignalKind::chirp: {
      if (!(spec.chirp_from > 0.0 && spec.chirp_to > 0.0))
        throw ConfigError("chirp frequencies must be positive");
      const double T = spec.n_s * spec.dt;
      const Vector ph = phases([&](int k) {
        const double fr = reduced_frequency(speed_at(k), spec.mean_chord);
        const double s = T > 0.0 ? (k * spec.dt) / T : 0.0;
        return fr * (spec.chirp_from + (spec.chirp_to - spec.chirp_from) * s);
      });
      for (int c : ch)
        for (int k = 0; k < n; ++k) u(c, k) = spec.amplitude * std::sin(ph(k));
      break;
    }
    case SignalKind::prbs9: {
      if (spec.chip_steps < 1 || n < spec.chip_steps)
        throw ConfigError("sequence shorter than one PRBS chip");
      std::mt19937_64 rng(spec.seed);
      std::uniform_int_distribution<std::uint32_t> init(1, 511);
      for (int c : ch) {
        const int chips = (n + spec.chip_steps - 1) / spec.chip_steps;
        const auto bits = prbs9_bits(init(rng), chips);
        for (int k = 0; k < n; ++k)
          u(c, k) = bits[k / spec.chip_steps] ? spec.amplitude : -spec.amplitude;
      }
      break;
    }
    case SignalKind::gust_one_cosine: {
      const Vector g = gust_one_cosine(spec.gust_length_s, spec.amplitude,
                                       spec.dt, n, spec.gust_start_s);
      for (int c : ch) u.row(c) = g.transpose();
      break;
    }
  }
  return u;
}

inline Matrix generate(const SignalSpec& spec, double speed) {
  return generate(spec, Vector::Constant(1, speed));
}

inline double relative_error(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
    throw DimensionError("relative_error: shape mismatch");
  const double nt = truth.norm();
  if (nt == 0.0) throw NumericalError("relative_error: truth has zero norm");
  return (predicted - truth).norm() / nt;
}

inline Vector linear_profile(double from, double to, int n) {
  if (n == 1) return Vector::Constant(1, from);
  Vector v(n);
  for (int k = 0; k < n; ++k) v(k) = from + (to - from) * k / (n - 1);
  v(n - 1) = to;
  return v;
}

}  // namespace bmdrom
