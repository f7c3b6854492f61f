#pragma once

// Stimulus code generation: degree-6 m-sequences, Gold code sets, bit-pair
// modulation and greedy low-correlation subset selection.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvep/error.hpp"
#include "cvep/types.hpp"

namespace cvep {

inline constexpr int kRegisterDegree = 6;
inline constexpr std::size_t kCodeLength = (1u << kRegisterDegree) - 1;  // 63
inline constexpr std::size_t kModulatedLength = 2 * kCodeLength;         // 126

/// Binary stimulus sequence presented one bit per frame.
struct BitSequence {
  std::vector<std::uint8_t> bits;
  double rate_hz = kFrameRateHz;

  std::size_t size() const noexcept { return bits.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits[i]; }

  std::size_t ones() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }

  /// Bit at frame f of the sequence repeated end to end.
  std::uint8_t cyclic(std::size_t f) const { return bits[f % bits.size()]; }

  friend bool operator==(const BitSequence& a, const BitSequence& b) {
    return a.bits == b.bits;
  }
};

inline std::string to_string(const BitSequence& s) {
  std::string out(s.size(), '0');
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] ? '1' : '0';
  return out;
}

inline BitSequence parse_bits(std::string_view text) {
  BitSequence s;
  s.bits.reserve(text.size());
  for (char c : text) {
    if (c == '0' || c == '1') {
      s.bits.push_back(static_cast<std::uint8_t>(c - '0'));
    } else {
      throw Error(Errc::InvalidArgument, "code characters must be '0' or '1'");
    }
  }
  return s;
}

/// Longest run of `value` in the sequence (non-cyclic).
inline std::size_t longest_run(const BitSequence& s, std::uint8_t value) {
  std::size_t best = 0, run = 0;
  for (auto b : s.bits) {
    run = (b == value) ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

/// Fibonacci LFSR over GF(2). Each tap t feeds back the bit t positions
/// behind the new one: a[k+6] = XOR_t a[k+6-t]. The six initial register bits
/// are the first six output bits.
inline BitSequence generate_m_sequence(std::span<const int> taps,
                                       std::span<const std::uint8_t> init) {
  if (init.size() != static_cast<std::size_t>(kRegisterDegree)) {
    throw Error(Errc::LengthMismatch, "register state must have 6 bits");
  }
  if (std::none_of(init.begin(), init.end(), [](std::uint8_t b) { return b != 0; })) {
    throw Error(Errc::InvalidSeed, "all-zero register state");
  }
  if (taps.empty() || std::find(taps.begin(), taps.end(), kRegisterDegree) == taps.end()) {
    throw Error(Errc::NotPrimitive, "taps must include the register degree 6");
  }
  for (int t : taps) {
    if (t < 1 || t > kRegisterDegree) {
      throw Error(Errc::NotPrimitive, "tap outside 1..6");
    }
  }

  std::vector<std::uint8_t> a(init.begin(), init.end());
  for (auto& b : a) b = b ? 1 : 0;
  a.reserve(kCodeLength + kRegisterDegree);
  while (a.size() < kCodeLength + kRegisterDegree) {
    const std::size_t next = a.size();
    std::uint8_t v = 0;
    for (int t : taps) v ^= a[next - static_cast<std::size_t>(t)];
    a.push_back(v);
  }

  // The state after 63 steps must return to the seed, and no earlier.
  for (std::size_t period = 1; period <= kCodeLength; ++period) {
    bool repeats = true;
    for (std::size_t j = 0; j < static_cast<std::size_t>(kRegisterDegree); ++j) {
      if (a[period + j] != a[j]) {
        repeats = false;
        break;
      }
    }
    if (repeats && period < kCodeLength) {
      throw Error(Errc::NotPrimitive, "feedback polynomial is not maximal-length");
    }
  }

  a.resize(kCodeLength);
  return BitSequence{std::move(a), kFrameRateHz};
}

/// Sequence rotated left by k: out[j] = s[(j + k) mod n].
inline BitSequence cyclic_shift(const BitSequence& s, std::size_t k) {
  BitSequence out = s;
  if (!s.bits.empty()) {
    std::rotate(out.bits.begin(), out.bits.begin() + static_cast<std::ptrdiff_t>(k % s.size()),
                out.bits.end());
  }
  return out;
}

/// Periodic correlation in the +-1 alphabet at one shift.
inline int periodic_correlation(const BitSequence& a, const BitSequence& b, std::size_t shift) {
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, "sequences differ in length");
  }
  const std::size_t n = a.size();
  int acc = 0;
  for (std::size_t j = 0; j < n; ++j) {
    acc += (a[j] == b[(j + shift) % n]) ? 1 : -1;
  }
  return acc;
}

/// Largest |periodic correlation| over all shifts (all nonzero shifts when a is b).
inline int max_abs_correlation(const BitSequence& a, const BitSequence& b, bool skip_zero_shift) {
  int best = 0;
  for (std::size_t k = skip_zero_shift ? 1 : 0; k < a.size(); ++k) {
    best = std::max(best, std::abs(periodic_correlation(a, b, k)));
  }
  return best;
}

/// {a, b} followed by a XOR shift_k(b) for k = 0..62.
inline std::vector<BitSequence> gold_set(const BitSequence& seq_a, const BitSequence& seq_b) {
  if (seq_a.size() != kCodeLength || seq_b.size() != kCodeLength) {
    throw Error(Errc::LengthMismatch, "Gold construction needs two 63-bit m-sequences");
  }
  if (seq_a == seq_b) {
    throw Error(Errc::DegeneratePair, "identical parent sequences");
  }
  std::vector<BitSequence> out;
  out.reserve(kCodeLength + 2);
  out.push_back(seq_a);
  out.push_back(seq_b);
  for (std::size_t k = 0; k < kCodeLength; ++k) {
    const BitSequence shifted = cyclic_shift(seq_b, k);
    BitSequence g = seq_a;
    for (std::size_t j = 0; j < kCodeLength; ++j) g.bits[j] ^= shifted[j];
    out.push_back(std::move(g));
  }
  return out;
}

/// Each bit b becomes (b, !b), so every flash lasts one or two frames.
inline BitSequence modulate(const BitSequence& code) {
  if (code.size() != kCodeLength) {
    throw Error(Errc::LengthMismatch, "modulation expects a 63-bit code");
  }
  BitSequence out;
  out.rate_hz = code.rate_hz;
  out.bits.reserve(2 * code.size());
  for (auto b : code.bits) {
    out.bits.push_back(b);
    out.bits.push_back(static_cast<std::uint8_t>(b ^ 1u));
  }
  return out;
}

/// Even-indexed bits of a modulated code.
inline BitSequence demodulate(const BitSequence& modulated) {
  if (modulated.size() % 2 != 0) {
    throw Error(Errc::LengthMismatch, "modulated code has odd length");
  }
  BitSequence out;
  out.rate_hz = modulated.rate_hz;
  for (std::size_t i = 0; i < modulated.size(); i += 2) out.bits.push_back(modulated[i]);
  return out;
}

/// Greedy subset: starting from the first code, repeatedly add the candidate
/// whose worst |cross-correlation| against the codes already chosen is
/// smallest. Ties go to the lowest index. Codes are scored as given.
inline std::vector<BitSequence> select_subset(std::span<const BitSequence> codes, std::size_t n) {
  if (n > codes.size()) {
    throw Error(Errc::InsufficientCodes, "requested more codes than available");
  }
  if (n == 0) return {};
  if (n == codes.size()) return {codes.begin(), codes.end()};

  const std::size_t m = codes.size();
  std::vector<int> worst(m, 0);
  std::vector<bool> taken(m, false);
  std::vector<std::size_t> chosen{0};
  taken[0] = true;
  auto absorb = [&](std::size_t picked) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!taken[j]) {
        worst[j] = std::max(worst[j], max_abs_correlation(codes[picked], codes[j], false));
      }
    }
  };
  absorb(0);
  while (chosen.size() < n) {
    std::size_t best = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (!taken[j] && (best == m || worst[j] < worst[best])) best = j;
    }
    taken[best] = true;
    chosen.push_back(best);
    absorb(best);
  }

  std::vector<BitSequence> out;
  out.reserve(n);
  for (auto i : chosen) out.push_back(codes[i]);
  return out;
}

struct PreferredPair {
  std::vector<int> taps_a{6, 1};
  std::vector<int> taps_b{6, 5, 2, 1};
};

/// Modulated 126-bit stimulus codes: Gold set of the preferred pair,
/// modulated, reduced to n codes by select_subset.
inline std::vector<BitSequence> stimulus_codes(std::size_t n = 20, const PreferredPair& pair = {}) {
  const std::vector<std::uint8_t> ones(kRegisterDegree, 1);
  const auto a = generate_m_sequence(pair.taps_a, ones);
  const auto b = generate_m_sequence(pair.taps_b, ones);
  std::vector<BitSequence> modulated;
  for (const auto& g : gold_set(a, b)) modulated.push_back(modulate(g));
  return select_subset(modulated, n);
}

inline void write_codes(std::ostream& os, std::span<const BitSequence> codes) {
  for (const auto& c : codes) os << to_string(c) << '\n';
}

inline std::vector<BitSequence> read_codes(std::istream& is) {
  std::vector<BitSequence> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_bits(line));
  }
  return out;
}

}  // namespace cvep
