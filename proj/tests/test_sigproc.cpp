#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cvep/sigproc.hpp"

using namespace cvep;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double f_hz, double fs_hz, Index n, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = std::sin(2 * kPi * f_hz * static_cast<double>(i) / fs_hz + phase);
  return x;
}

double rms(std::span<const double> x, std::size_t from, std::size_t to) {
  double s = 0;
  for (std::size_t i = from; i < to; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(to - from));
}

// Magnitude of a bilinear-transformed Butterworth filter with prewarped cutoff.
double butter_gain(bool low, int order, double f, double fc, double fs) {
  const double r = std::tan(kPi * f / fs) / std::tan(kPi * fc / fs);
  const double x = low ? r : 1.0 / r;
  return 1.0 / std::sqrt(1.0 + std::pow(x, 2 * order));
}

}  // namespace

TEST(Design, BandpassMatchesClosedFormButterworth) {
  const double fs = 512.0;
  const auto sos = design(FilterSpec::bandpass(6.0, 50.0), fs);
  ASSERT_EQ(sos.size(), 4u);
  for (double f : {0.5, 3.0, 6.0, 10.0, 20.0, 35.0, 50.0, 80.0, 200.0}) {
    const double expected = butter_gain(false, 4, f, 6.0, fs) * butter_gain(true, 4, f, 50.0, fs);
    EXPECT_NEAR(std::abs(response(sos, f, fs)), expected, 1e-9 * std::max(1.0, expected)) << f << " Hz";
  }
}

TEST(Design, NotchNullAndBandwidth) {
  const double fs = 512.0;
  const auto sos = design(FilterSpec::notch(50.0, 30.0), fs);
  EXPECT_LT(std::abs(response(sos, 50.0, fs)), 1e-12);
  EXPECT_NEAR(std::abs(response(sos, 0.0, fs)), 1.0, 1e-12);
  // The RBJ notch is -3 dB at the band edges; check the gain is close to
  // 1/sqrt(2) half a bandwidth away (the edges are not exactly symmetric).
  const double half_bw = 50.0 / 30.0 / 2.0;
  EXPECT_NEAR(std::abs(response(sos, 50.0 + half_bw, fs)), 1.0 / std::sqrt(2.0), 0.02);
}

TEST(Design, InvalidCutoffs) {
  for (const auto& spec : {FilterSpec::bandpass(6.0, 256.0), FilterSpec::bandpass(60.0, 50.0),
                           FilterSpec::bandpass(0.0, 50.0), FilterSpec::notch(300.0)}) {
    try {
      design(spec, 512.0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidCutoff);
    }
  }
}

TEST(ZeroPhase, DcIsRemoved) {
  const double fs = 512.0;
  const std::vector<double> x(5 * 512, 3.0);
  const auto y = filtfilt(design(FilterSpec::bandpass(6.0, 50.0), fs), x, 512);
  EXPECT_LT(rms(y, 512, 4 * 512), 0.01 * 3.0);
}

TEST(ZeroPhase, SteadyStateStartLeavesConstantsAlone) {
  const std::vector<double> x(300, -2.5);
  const auto y = filtfilt(design(FilterSpec::notch(50.0), 512.0), x, 100);
  for (double v : y) EXPECT_NEAR(v, -2.5, 1e-12);
}

TEST(ZeroPhase, PassbandSineKeepsAmplitude) {
  const double fs = 512.0;
  const auto sos = design(FilterSpec::bandpass(6.0, 50.0), fs);
  const auto x = sine(20.0, fs, 8 * 512);
  const auto y = filtfilt(sos, x, 512);
  const double gain = rms(y, 1024, 7 * 512) / rms(x, 1024, 7 * 512);
  EXPECT_NEAR(gain, 1.0, 0.05);
  // Forward-backward squares the magnitude response.
  EXPECT_NEAR(gain, std::norm(response(sos, 20.0, fs)), 1e-3);
}

TEST(ZeroPhase, NotchAttenuatesLineNoise) {
  const double fs = 512.0;
  const auto x = sine(50.0, fs, 10 * 512);
  const auto y = filtfilt(design(FilterSpec::notch(50.0, 30.0), fs), x, 512);
  const double atten_db = 20.0 * std::log10(rms(x, 2048, 8 * 512) / rms(y, 2048, 8 * 512));
  EXPECT_GE(atten_db, 20.0);
}

TEST(ZeroPhase, NoGroupDelay) {
  const double fs = 512.0;
  const auto x = sine(15.0, fs, 6 * 512, 0.3);
  const auto y = filtfilt(design(FilterSpec::bandpass(6.0, 50.0), fs), x, 512);
  int best_lag = 99;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double c = 0;
    for (std::size_t i = 1024; i < 5 * 512; ++i) c += x[i] * y[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

TEST(ZeroPhase, Linearity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Matrix x(2, 2000), y(2, 2000);
  for (Index i = 0; i < x.size(); ++i) {
    x.data()[i] = n01(rng);
    y.data()[i] = n01(rng);
  }
  const auto spec = FilterSpec::bandpass(2.0, 40.0);
  const Matrix lhs = apply_zero_phase(spec, Matrix(2.5 * x - 0.7 * y), 512.0);
  const Matrix rhs = 2.5 * apply_zero_phase(spec, x, 512.0) - 0.7 * apply_zero_phase(spec, y, 512.0);
  EXPECT_LT((lhs - rhs).norm() / rhs.norm(), 1e-9);

  const Resampler rs(512.0, 180.0);
  const Matrix l2 = rs.apply(Matrix(2.5 * x - 0.7 * y));
  const Matrix r2 = 2.5 * rs.apply(x) - 0.7 * rs.apply(y);
  EXPECT_LT((l2 - r2).norm() / r2.norm(), 1e-9);
}

TEST(Resample, RationalRatios) {
  const auto r = rational_ratio(512.0, 180.0);
  EXPECT_EQ(r.up, 45);
  EXPECT_EQ(r.down, 128);
  const auto q = rational_ratio(44100.0, 48000.0);
  EXPECT_EQ(q.up, 160);
  EXPECT_EQ(q.down, 147);
  // An irrational-looking rate still lands within 1e-9 relative.
  const auto s = rational_ratio(500.0, 180.0 * std::numbers::sqrt2 / 1.4142);
  const double approx = static_cast<double>(s.up) / static_cast<double>(s.down);
  EXPECT_NEAR(approx, (180.0 * std::numbers::sqrt2 / 1.4142) / 500.0, 1e-9 * approx);
}

TEST(Resample, OneSecondMapsToOneSecond) {
  const Resampler rs(512.0, 180.0);
  EXPECT_EQ(rs.output_length(512), 180);
  EXPECT_EQ(rs.apply(std::vector<double>(512, 1.0)).size(), 180u);
  EXPECT_EQ(rs.map_index(256), 90);
}

TEST(Resample, InBandSineMatchesAnalyticSamples) {
  const Resampler rs(512.0, 180.0);
  const auto y = rs.apply(sine(10.0, 512.0, 4 * 512));
  const auto ref = sine(10.0, 180.0, 4 * 180);
  ASSERT_EQ(y.size(), ref.size());
  EXPECT_NEAR(rms(y, 90, 630) / rms(ref, 90, 630), 1.0, 0.02);
  double err = 0;
  for (std::size_t i = 90; i < 630; ++i) err = std::max(err, std::abs(y[i] - ref[i]));
  EXPECT_LT(err, 0.02);
}

TEST(Resample, AliasBandIsSuppressed) {
  const Resampler rs(512.0, 180.0);
  const auto y = rs.apply(sine(100.0, 512.0, 4 * 512));
  EXPECT_LT(rms(y, 90, 630) / (1.0 / std::sqrt(2.0)), 0.05);
}

TEST(Segment, WindowLengthAndAlignment) {
  ContinuousRecording rec;
  rec.fs_hz = 180.0;
  rec.samples.resize(1, 40 * 180);
  for (Index i = 0; i < rec.samples.cols(); ++i) rec.samples(0, i) = static_cast<double>(i);
  rec.markers = {{900, 4}};
  const auto trials = segment_trials(rec);
  ASSERT_EQ(trials.size(), 1u);
  EXPECT_EQ(trials[0].length(), 5670);
  EXPECT_EQ(trials[0].samples(0, 0), 900.0);
  EXPECT_EQ(trials[0].label, 4);

  const auto windows = extract_windows(rec, 0.5, 31.5);
  EXPECT_EQ(windows[0].length(), 90 + 5670);
  EXPECT_EQ(windows[0].samples(0, 0), 810.0);
}

TEST(Segment, MarkerNearEdge) {
  ContinuousRecording rec;
  rec.fs_hz = 180.0;
  rec.samples = Matrix::Zero(1, 40 * 180);
  rec.markers = {{30, 0}};
  try {
    segment_trials(rec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TruncatedTrial);
  }
  rec.markers = {{40 * 180 - 100, 0}};
  EXPECT_THROW(segment_trials(rec), Error);
}

TEST(Pipeline, OrderIsNotchBandpassSegmentResampleCrop) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  ContinuousRecording rec;
  rec.fs_hz = 512.0;
  rec.samples.resize(2, 12 * 512);
  for (Index i = 0; i < rec.samples.size(); ++i) rec.samples.data()[i] = n01(rng);
  rec.markers = {{1024, 1}, {1024 + 4 * 512, 2}};
  PipelineConfig cfg;
  cfg.dur_s = 4.2;

  const auto out = preprocess(rec, cfg);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].length(), 756);
  EXPECT_EQ(out[1].label, 2);

  // Manual chain in the same order.
  auto f = apply_zero_phase(FilterSpec::notch(50.0, 30.0), rec);
  f = apply_zero_phase(FilterSpec::bandpass(6.0, 50.0), f);
  const auto win = extract_windows(f, 0.5, 4.2);
  const Resampler rs(512.0, 180.0);
  const Matrix manual = rs.apply(win[1].samples).middleCols(rs.map_index(256), 756);
  EXPECT_LT((out[1].samples - manual).norm(), 1e-12 * manual.norm());

  // Resampling before filtering gives a different result.
  auto r = resample(rec, 180.0);
  r = apply_zero_phase(FilterSpec::notch(50.0, 30.0), r);
  r = apply_zero_phase(FilterSpec::bandpass(6.0, 50.0), r);
  const auto swapped = segment_trials(r, 0.5, 4.2);
  EXPECT_GT((swapped[1].samples - out[1].samples).norm(), 1e-3 * manual.norm());
}
