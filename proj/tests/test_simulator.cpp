#include <gtest/gtest.h>

#include <set>

#include "cvep/cca.hpp"
#include "cvep/simulator.hpp"

using namespace cvep;

namespace {

double power(const Matrix& m) { return m.squaredNorm() / static_cast<double>(m.size()); }

}  // namespace

TEST(Templates, WindowedAndDistinct) {
  const Matrix r = default_responses(9);
  ASSERT_EQ(r.rows(), 3);
  ASSERT_EQ(r.cols(), 54);
  for (Index e = 0; e < 3; ++e) {
    EXPECT_EQ(r(e, 0), 0.0);
    EXPECT_NEAR(r(e, 53), 0.0, 1e-12);
    EXPECT_NEAR(r.row(e).cwiseAbs().maxCoeff(), 1.0, 1e-12);
  }
  const double corr = r.row(0).dot(r.row(1)) / (r.row(0).norm() * r.row(1).norm());
  EXPECT_LT(std::abs(corr), 0.95);
  EXPECT_EQ(default_responses(9), r);
  EXPECT_NE(default_responses(10), r);
}

TEST(Synthesis, CleanTrialIsTheForwardModel) {
  const auto codes = stimulus_codes();
  const auto model = default_model(5, 6);
  const auto t = synthesize_trial(codes[8], model, 4.2, 1);
  ASSERT_EQ(t.length(), 756);
  const StructureMatrix m(extract_events_for_length(codes[8], 756), 54);
  const Matrix expected = model.mixing * m.reconvolve(model.stacked_responses()).transpose();
  EXPECT_LT((t.samples - expected).cwiseAbs().maxCoeff(), 1e-12);
  const auto fit = fit_filters(t.samples * t.samples.transpose(), m.cross(t.samples), m.gram());
  EXPECT_GE(fit.rho, 0.999);
}

TEST(Synthesis, NoiselessCcaRecoversEveryCode) {
  const auto codes = stimulus_codes();
  const auto model = default_model(6);
  const auto structures = build_structures(codes, samples_for_duration(2.1));
  for (std::size_t k = 0; k < codes.size(); ++k) {
    const auto t = synthesize_trial(codes[k], model, 2.1, k);
    EXPECT_EQ(decode(t, structures, CcaState{}).label, static_cast<int>(k));
  }
}

TEST(Synthesis, RealizedSnr) {
  const auto codes = stimulus_codes();
  for (auto kind : {NoiseKind::white, NoiseKind::pink}) {
    for (double db : {-10.0, 0.0, 5.0}) {
      auto model = default_model(7, 8, snr_from_db(db), kind);
      const auto clean = clean_signal(codes[1], model, samples_for_duration(2.1));
      const auto t = synthesize_trial(codes[1], model, 2.1, 3);
      const double realized = power(clean) / power(t.samples - clean);
      EXPECT_NEAR(realized / snr_from_db(db), 1.0, 0.05) << db;
    }
  }
}

TEST(Synthesis, SignalOffIsUnitNoise) {
  const auto t = synthesize_trial(stimulus_codes(1)[0], default_model(1, 4, 0.0), 2.1, 2);
  EXPECT_NEAR(power(t.samples), 1.0, 1e-12);
}

TEST(Synthesis, PinkNoiseHasMoreLowFrequencyPower) {
  std::mt19937_64 rng(1);
  const Matrix pink = detail::background_noise(NoiseKind::pink, 1, 1 << 14, rng);
  const Matrix white = detail::background_noise(NoiseKind::white, 1, 1 << 14, rng);
  // Lag-one autocorrelation: near zero for white, strongly positive for 1/f.
  auto lag1 = [](const Matrix& x) {
    const Index n = x.cols();
    return x.leftCols(n - 1).cwiseProduct(x.rightCols(n - 1)).sum() / x.squaredNorm();
  };
  EXPECT_LT(std::abs(lag1(white)), 0.05);
  EXPECT_GT(lag1(pink), 0.5);
}

TEST(Synthesis, Errors) {
  auto model = default_model(1);
  model.snr = -1.0;
  try {
    synthesize_trial(stimulus_codes(1)[0], model, 2.1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidSnr);
  }
  EXPECT_THROW(synthesize_trial(stimulus_codes(1)[0], default_model(1), 32.0, 1), Error);
  EXPECT_THROW(synthesize_session(0, default_model(1), 1), Error);
}

TEST(Session, ProtocolShape) {
  const auto s = synthesize_session(5, default_model(2, 4, 1.0), 42, stimulus_codes(), 2.1);
  ASSERT_EQ(s.trials.size(), 100u);
  EXPECT_EQ(s.seed, 42u);
  for (std::size_t run = 0; run < 5; ++run) {
    std::set<int> labels;
    for (std::size_t i = 0; i < 20; ++i) labels.insert(*s.trials[run * 20 + i].label);
    EXPECT_EQ(labels.size(), 20u);
    EXPECT_EQ(*labels.begin(), 0);
    EXPECT_EQ(*labels.rbegin(), 19);
  }
  // Runs are shuffled independently.
  bool differs = false;
  for (std::size_t i = 0; i < 20; ++i) differs |= *s.trials[i].label != *s.trials[20 + i].label;
  EXPECT_TRUE(differs);
}

TEST(Session, Deterministic) {
  const auto model = default_model(3, 4, snr_from_db(-5.0), NoiseKind::pink);
  const auto a = synthesize_session(2, model, 9, stimulus_codes(), 1.05);
  const auto b = synthesize_session(2, model, 9, stimulus_codes(), 1.05);
  const auto c = synthesize_session(2, model, 10, stimulus_codes(), 1.05);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].samples, b.trials[i].samples);
    EXPECT_EQ(a.trials[i].label, b.trials[i].label);
  }
  EXPECT_NE(a.trials[0].samples, c.trials[0].samples);
}

TEST(Recording, RawWindowsPreprocessToDecodableTrials) {
  const auto codes = stimulus_codes();
  const auto model = default_model(4, 4);
  const auto rec = synthesize_recording(1, model, 4, codes, 512.0, 4.2, 1.0, 0.5);
  ASSERT_EQ(rec.markers.size(), 20u);
  const auto raw = raw_session(rec, codes, 4, 0.5, 4.2);
  EXPECT_TRUE(raw.is_raw());
  EXPECT_EQ(raw.pre_onset_samples, 256);
  PipelineConfig cfg;
  cfg.dur_s = 4.2;
  const auto ready = preprocess_session(raw, cfg);
  ASSERT_EQ(ready.trials.size(), 20u);
  EXPECT_EQ(ready.trial_length(), 756);
  const auto structures = build_structures(codes, 756);
  int correct = 0;
  for (const auto& t : ready.trials) correct += decode(t, structures, CcaState{}).label == *t.label;
  EXPECT_EQ(correct, 20);
}
