#pragma once

// Decoding curves, bandpass sweeps and paired statistics.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvep/cca.hpp"
#include "cvep/codegen.hpp"
#include "cvep/error.hpp"
#include "cvep/outcome.hpp"
#include "cvep/session.hpp"
#include "cvep/sigproc.hpp"
#include "cvep/simulator.hpp"
#include "cvep/umm.hpp"

namespace cvep {

/// A trial classifier that may learn from its own past predictions.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual DecodeOutcome decode(const Trial& trial) = 0;
  virtual void learn(const Trial& /*trial*/, const DecodeOutcome& /*outcome*/) {}
  virtual void reset() {}
};

namespace detail {

template <class Impl>
class DecoderAdapter final : public Decoder {
 public:
  explicit DecoderAdapter(Impl impl) : impl_(std::move(impl)) {}
  DecodeOutcome decode(const Trial& trial) override { return impl_.decode(trial); }
  void learn(const Trial& trial, const DecodeOutcome& outcome) override { impl_.learn(trial, outcome); }
  void reset() override { impl_.reset(); }

 private:
  Impl impl_;
};

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

enum class Method { cca_e1, cca_ec, umm_t11, umm_tcw };

inline constexpr Method kAllMethods[] = {Method::cca_e1, Method::cca_ec, Method::umm_t11, Method::umm_tcw};

inline std::string_view method_tag(Method m) {
  switch (m) {
    case Method::cca_e1: return "CCA_e1";
    case Method::cca_ec: return "CCA_ec";
    case Method::umm_t11: return "UMM_t11";
    case Method::umm_tcw: return "UMM_tcw";
  }
  return "?";
}

inline Method parse_method(std::string_view tag) {
  const std::string t = detail::lower(tag);
  for (Method m : kAllMethods) {
    if (detail::lower(method_tag(m)) == t) return m;
  }
  throw Error(Errc::ConfigError, "unknown method '" + std::string(tag) + "'");
}

struct DecoderConfig {
  Index lag = kResponseLength;
  UmmConfig umm;
};

inline std::unique_ptr<Decoder> make_decoder(Method m, std::vector<BitSequence> codes, const DecoderConfig& cfg = {}) {
  switch (m) {
    case Method::cca_e1:
      return std::make_unique<detail::DecoderAdapter<CcaDecoder>>(CcaDecoder(std::move(codes), Accumulation::instantaneous, cfg.lag));
    case Method::cca_ec:
      return std::make_unique<detail::DecoderAdapter<CcaDecoder>>(CcaDecoder(std::move(codes), Accumulation::cumulative, cfg.lag));
    case Method::umm_t11:
      return std::make_unique<detail::DecoderAdapter<UmmDecoder>>(UmmDecoder(std::move(codes), Accumulation::instantaneous, cfg.umm));
    case Method::umm_tcw:
      return std::make_unique<detail::DecoderAdapter<UmmDecoder>>(UmmDecoder(std::move(codes), Accumulation::cumulative, cfg.umm));
  }
  throw Error(Errc::ConfigError, "unknown method");
}

using DecoderFactory = std::function<std::unique_ptr<Decoder>(const std::vector<BitSequence>&)>;

struct NamedDecoder {
  std::string tag;
  DecoderFactory make;
};

inline NamedDecoder named_decoder(Method m, DecoderConfig cfg = {}) {
  return {std::string(method_tag(m)),
          [m, cfg](const std::vector<BitSequence>& codes) { return make_decoder(m, codes, cfg); }};
}

/// 1.05 s to 10.5 s in half-cycle steps, then to 31.5 s in full cycles.
inline std::vector<double> decoding_durations() {
  std::vector<double> out;
  for (int k = 1; k <= 10; ++k) out.push_back(static_cast<double>(63 * k) / kFrameRateHz);
  for (int k = 1; k <= 10; ++k) out.push_back(static_cast<double>(630 + 126 * k) / kFrameRateHz);
  return out;
}

struct TrialRecord {
  Index trial = 0;
  int true_label = -1;
  int predicted = -1;
  double confidence = 0.0;

  bool correct() const { return true_label == predicted; }
};

struct CurvePoint {
  double duration_s = 0.0;
  Index n_trials = 0;
  Index n_correct = 0;
  std::vector<TrialRecord> log;

  double accuracy() const { return n_trials ? static_cast<double>(n_correct) / static_cast<double>(n_trials) : 0.0; }
};

struct DecodingCurve {
  std::string method_tag;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;

  std::vector<double> durations_s() const {
    std::vector<double> d;
    for (const auto& p : points) d.push_back(p.duration_s);
    return d;
  }
  std::vector<double> accuracy() const {
    std::vector<double> a;
    for (const auto& p : points) a.push_back(p.accuracy());
    return a;
  }
};

/// Decodes every trial cut to dur_s, in session order, learning after each
/// trial. The decoder is reset first, so no state crosses durations.
inline CurvePoint evaluate_duration(const Session& session, Decoder& decoder, double dur_s) {
  if (session.is_raw()) throw Error(Errc::ConfigError, "session must be preprocessed before decoding");
  const Index n = samples_for_duration(dur_s, session.fs_hz, session.frame_rate_hz);
  decoder.reset();
  CurvePoint p;
  p.duration_s = dur_s;
  for (std::size_t i = 0; i < session.trials.size(); ++i) {
    const Trial& full = session.trials[i];
    if (full.length() < n) throw Error(Errc::TrialTooShort, "session trials shorter than requested duration");
    const Trial t = full.prefix(n);
    const DecodeOutcome out = decoder.decode(t);
    TrialRecord r{static_cast<Index>(i), full.label.value_or(-1), out.label, out.confidence};
    p.n_correct += r.correct() ? 1 : 0;
    ++p.n_trials;
    p.log.push_back(r);
    decoder.learn(t, out);
  }
  return p;
}

inline DecodingCurve decoding_curve(const Session& session, const NamedDecoder& method,
                                    std::span<const double> durations) {
  DecodingCurve c;
  c.method_tag = method.tag;
  c.seed = session.seed;
  auto decoder = method.make(session.codes);
  for (double d : durations) c.points.push_back(evaluate_duration(session, *decoder, d));
  return c;
}

inline DecodingCurve decoding_curve(const Session& session, const NamedDecoder& method) {
  const auto d = decoding_durations();
  return decoding_curve(session, method, d);
}

/// Average ranks (1-based), ties sharing their mean rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation; NaN when either sample is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(Errc::ShapeError, "spearman needs two equal samples");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

inline constexpr double kSignificanceLevel = 0.025;

struct WilcoxonResult {
  double statistic = 0.0;  // W+, rank sum of positive differences
  double p_value = 1.0;
  Index n = 0;             // pairs left after dropping zero differences
  bool exact = false;
  double alpha = kSignificanceLevel;

  bool significant() const { return p_value < alpha; }
};

inline constexpr Index kExactWilcoxonMax = 20;
inline constexpr Index kMinWilcoxonPairs = 5;

/// One-sided paired signed-rank test of H1: a > b. Zero differences are
/// dropped; tied magnitudes share average ranks. Exact null distribution for
/// n <= 20, otherwise the normal approximation with tie and continuity
/// correction.
inline WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeError, "paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  if (diff.empty()) throw Error(Errc::DegenerateSample, "all paired differences are zero");
  const Index n = static_cast<Index>(diff.size());
  if (n < kMinWilcoxonPairs) throw Error(Errc::InsufficientSample, "fewer than 5 non-zero differences");

  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > 0.0) w_plus += ranks[i];
  }

  WilcoxonResult r;
  r.statistic = w_plus;
  r.n = n;
  if (n <= kExactWilcoxonMax) {
    // Doubled ranks are integers; count sign assignments by rank-sum.
    std::vector<int> twice(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      twice[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += twice[i];
    }
    std::vector<double> ways(static_cast<std::size_t>(total + 1), 0.0);
    ways[0] = 1.0;
    for (int w : twice) {
      for (int s = total; s >= w; --s) ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - w)];
    }
    const int observed = static_cast<int>(std::lround(2.0 * w_plus));
    double tail = 0.0;
    for (int s = observed; s <= total; ++s) tail += ways[static_cast<std::size_t>(s)];
    r.p_value = tail / std::ldexp(1.0, static_cast<int>(n));
    r.exact = true;
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (w_plus - mean - 0.5) / std::sqrt(var);
  r.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  return r;
}

/// Normal-approximation p-value regardless of n, for comparison with the
/// exact test.
inline double wilcoxon_normal_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeError, "paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
  }
  if (diff.empty()) throw Error(Errc::DegenerateSample, "all paired differences are zero");
  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);
  double w_plus = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > 0.0) w_plus += ranks[i];
  }
  std::sort(mags.begin(), mags.end());
  for (std::size_t i = 0; i < mags.size();) {
    std::size_t j = i;
    while (j + 1 < mags.size() && mags[j + 1] == mags[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double nn = static_cast<double>(diff.size());
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (w_plus - nn * (nn + 1.0) / 4.0 - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

enum class SweepAxis { highpass, lowpass };

inline std::string_view axis_name(SweepAxis a) { return a == SweepAxis::highpass ? "highpass" : "lowpass"; }

inline SweepAxis parse_axis(std::string_view s) {
  const std::string t = detail::lower(s);
  if (t == "highpass") return SweepAxis::highpass;
  if (t == "lowpass") return SweepAxis::lowpass;
  throw Error(Errc::ConfigError, "axis must be highpass or lowpass");
}

inline std::vector<double> default_cutoffs(SweepAxis axis) {
  if (axis == SweepAxis::highpass) return {0.1, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0};
  return {10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0};
}

inline constexpr double kSweepFixedLowpassHz = 40.0;
inline constexpr double kSweepFixedHighpassHz = 6.0;

/// Produces a decode-ready session for a preprocessing configuration.
struct SessionSource {
  double fs_hz = 512.0;
  std::function<Session(const PipelineConfig&)> make;
};

inline SessionSource session_source(Session raw) {
  const double fs = raw.fs_hz;
  return {fs, [raw = std::move(raw)](const PipelineConfig& cfg) { return preprocess_session(raw, cfg); }};
}

struct SweepCell {
  std::string method;
  double cutoff_hz = 0.0;
  Index n_trials = 0;
  Index n_correct = 0;

  double accuracy() const { return n_trials ? static_cast<double>(n_correct) / static_cast<double>(n_trials) : 0.0; }
};

struct SweepGrid {
  SweepAxis axis = SweepAxis::highpass;
  std::vector<double> cutoffs_hz;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  std::vector<SweepCell> cells;  // method-major

  const SweepCell& at(std::size_t method, std::size_t cutoff) const { return cells.at(method * cutoffs_hz.size() + cutoff); }
};

/// Re-preprocesses the source per cutoff (the other edge held at 40 Hz
/// lowpass or 6 Hz highpass) and decodes full-length trials.
inline SweepGrid bandpass_sweep(const SessionSource& source, std::span<const NamedDecoder> methods, SweepAxis axis,
                                std::span<const double> cutoffs, PipelineConfig base = {}) {
  for (double c : cutoffs) {
    if (!(c > 0.0) || c >= source.fs_hz / 2.0) throw Error(Errc::InvalidCutoff, "sweep cutoff outside (0, Nyquist)");
  }
  SweepGrid g;
  g.axis = axis;
  g.cutoffs_hz.assign(cutoffs.begin(), cutoffs.end());
  for (const auto& m : methods) g.methods.push_back(m.tag);
  std::vector<std::vector<SweepCell>> per_method(methods.size());
  for (double c : cutoffs) {
    PipelineConfig cfg = base;
    if (axis == SweepAxis::highpass) {
      cfg.highpass_hz = c;
      cfg.lowpass_hz = kSweepFixedLowpassHz;
    } else {
      cfg.highpass_hz = kSweepFixedHighpassHz;
      cfg.lowpass_hz = c;
    }
    const Session s = source.make(cfg);
    g.seed = s.seed;
    const double full = s.trials.empty() ? 0.0 : static_cast<double>(s.trial_length()) / s.fs_hz;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto decoder = methods[m].make(s.codes);
      const CurvePoint p = evaluate_duration(s, *decoder, full);
      per_method[m].push_back({methods[m].tag, c, p.n_trials, p.n_correct});
    }
  }
  for (auto& v : per_method) g.cells.insert(g.cells.end(), v.begin(), v.end());
  return g;
}

namespace csv {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void write_curves(std::ostream& os, std::span<const DecodingCurve> curves) {
  os << "method,duration_s,seed,n_trials,n_correct,accuracy\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      os << c.method_tag << ',' << fixed(p.duration_s, 2) << ',' << c.seed << ',' << p.n_trials << ','
         << p.n_correct << ',' << fixed(p.accuracy(), 6) << '\n';
    }
  }
}

inline void write_trial_log(std::ostream& os, std::string_view method, std::uint64_t seed, const CurvePoint& p) {
  os << "method,duration_s,seed,trial,true_label,predicted,correct,confidence\n";
  for (const auto& r : p.log) {
    os << method << ',' << fixed(p.duration_s, 2) << ',' << seed << ',' << r.trial << ',' << r.true_label << ','
       << r.predicted << ',' << (r.correct() ? 1 : 0) << ',' << fixed(r.confidence, 6) << '\n';
  }
}

inline void write_sweep(std::ostream& os, const SweepGrid& g) {
  os << "method,axis,cutoff_hz,seed,n_trials,n_correct,accuracy\n";
  for (const auto& c : g.cells) {
    os << c.method << ',' << axis_name(g.axis) << ',' << fixed(c.cutoff_hz, 2) << ',' << g.seed << ',' << c.n_trials
       << ',' << c.n_correct << ',' << fixed(c.accuracy(), 6) << '\n';
  }
}

struct CurveRow {
  std::string method;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  Index n_trials = 0;
  Index n_correct = 0;
  double accuracy = 0.0;
};

inline std::vector<CurveRow> read_curves(std::istream& is) {
  std::vector<CurveRow> rows;
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::CorruptArchive, "empty curve CSV");
  if (line.rfind("method,duration_s,seed,n_trials,n_correct,accuracy", 0) != 0) {
    throw Error(Errc::CorruptArchive, "unexpected curve CSV header");
  }
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw Error(Errc::CorruptArchive, "curve CSV row needs 6 fields");
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stoull(f[2]), std::stoll(f[3]), std::stoll(f[4]), std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw Error(Errc::CorruptArchive, "malformed number in curve CSV");
    }
  }
  return rows;
}

}  // namespace csv

}  // namespace cvep
