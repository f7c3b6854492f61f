#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "cvep/codegen.hpp"

using namespace cvep;

namespace {

const std::vector<std::uint8_t> kOnes(6, 1);

// Counts maximal cyclic runs of each length for one bit value.
std::map<std::size_t, int> cyclic_runs(const BitSequence& s, std::uint8_t value) {
  const std::size_t n = s.size();
  std::size_t start = 0;
  while (start < n && s[start] == s[(start + n - 1) % n]) ++start;
  std::map<std::size_t, int> runs;
  std::size_t i = 0;
  while (i < n) {
    const std::size_t at = (start + i) % n;
    std::size_t len = 1;
    while (i + len < n && s[(start + i + len) % n] == s[at]) ++len;
    if (s[at] == value) ++runs[len];
    i += len;
  }
  return runs;
}

}  // namespace

TEST(MSequence, HasMaximalLengthProperties) {
  for (const auto& taps : {std::vector<int>{6, 1}, std::vector<int>{6, 5, 2, 1}}) {
    const auto s = generate_m_sequence(taps, kOnes);
    ASSERT_EQ(s.size(), 63u);
    EXPECT_EQ(s.ones(), 32u);
    for (std::size_t k = 1; k < 63; ++k) EXPECT_EQ(periodic_correlation(s, s, k), -1) << "shift " << k;
    // Golomb run property: half the runs have length one, a quarter two, ...
    const auto ones = cyclic_runs(s, 1), zeros = cyclic_runs(s, 0);
    EXPECT_EQ(ones.at(6), 1);
    EXPECT_EQ(zeros.at(5), 1);
    EXPECT_EQ(ones.at(1) + zeros.at(1), 16);
    EXPECT_EQ(ones.at(2) + zeros.at(2), 8);
  }
}

TEST(MSequence, RecurrenceHoldsCyclically) {
  const auto s = generate_m_sequence(std::vector<int>{6, 1}, kOnes);
  for (std::size_t k = 0; k < 63; ++k) {
    EXPECT_EQ(s.cyclic(k + 6), s.cyclic(k + 5) ^ s.cyclic(k));
  }
}

TEST(MSequence, FirstBitsAreTheSeed) {
  const std::vector<std::uint8_t> seed{1, 0, 0, 1, 0, 1};
  const auto s = generate_m_sequence(std::vector<int>{6, 1}, seed);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(s[i], seed[i]);
}

TEST(MSequence, Errors) {
  const std::vector<int> taps{6, 1};
  try {
    generate_m_sequence(taps, std::vector<std::uint8_t>(6, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidSeed);
  }
  try {
    generate_m_sequence(taps, std::vector<std::uint8_t>(5, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  // x^6 + x^3 + 1 has period 9.
  try {
    generate_m_sequence(std::vector<int>{6, 3}, kOnes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPrimitive);
  }
}

TEST(Gold, SixtyFiveCodesWithThreeValuedCorrelation) {
  const auto a = generate_m_sequence(std::vector<int>{6, 1}, kOnes);
  const auto b = generate_m_sequence(std::vector<int>{6, 5, 2, 1}, kOnes);
  const auto set = gold_set(a, b);
  ASSERT_EQ(set.size(), 65u);
  const std::set<int> allowed{-17, -1, 15};
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i; j < set.size(); ++j) {
      for (std::size_t k = (i == j) ? 1 : 0; k < 63; ++k) {
        ASSERT_TRUE(allowed.count(periodic_correlation(set[i], set[j], k))) << i << "," << j << " shift " << k;
      }
    }
  }
}

TEST(Gold, Errors) {
  const auto a = generate_m_sequence(std::vector<int>{6, 1}, kOnes);
  try {
    gold_set(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegeneratePair);
  }
  BitSequence short_seq{{1, 0, 1}};
  try {
    gold_set(a, short_seq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(Modulation, BalancedWithShortRuns) {
  const auto a = generate_m_sequence(std::vector<int>{6, 1}, kOnes);
  const auto b = generate_m_sequence(std::vector<int>{6, 5, 2, 1}, kOnes);
  for (const auto& g : gold_set(a, b)) {
    const auto m = modulate(g);
    ASSERT_EQ(m.size(), 126u);
    EXPECT_EQ(m.ones(), 63u);
    EXPECT_LE(longest_run(m, 1), 2u);
    EXPECT_LE(longest_run(m, 0), 2u);
    for (const auto& [len, count] : cyclic_runs(m, 1)) EXPECT_LE(len, 2u);
    EXPECT_EQ(demodulate(m), g);
  }
}

TEST(Subset, GreedyMinMaxChoice) {
  const auto a = generate_m_sequence(std::vector<int>{6, 1}, kOnes);
  const auto b = generate_m_sequence(std::vector<int>{6, 5, 2, 1}, kOnes);
  std::vector<BitSequence> pool;
  for (const auto& g : gold_set(a, b)) pool.push_back(modulate(g));
  const auto chosen = select_subset(pool, 20);
  ASSERT_EQ(chosen.size(), 20u);
  EXPECT_EQ(chosen.front(), pool.front());

  // Replay the greedy rule from scratch.
  std::vector<bool> used(pool.size(), false);
  used[0] = true;
  for (std::size_t step = 1; step < chosen.size(); ++step) {
    int best = std::numeric_limits<int>::max();
    std::size_t best_j = pool.size();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (used[j]) continue;
      int worst = 0;
      for (std::size_t s = 0; s < step; ++s) worst = std::max(worst, max_abs_correlation(chosen[s], pool[j], false));
      if (worst < best) {
        best = worst;
        best_j = j;
      }
    }
    ASSERT_EQ(chosen[step], pool[best_j]) << "step " << step;
    used[best_j] = true;
  }
}

TEST(Subset, Errors) {
  std::vector<BitSequence> pool(3, BitSequence{{1, 0}});
  try {
    select_subset(pool, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientCodes);
  }
  EXPECT_TRUE(select_subset(pool, 0).empty());
}

TEST(StimulusCodes, FrozenSubset) {
  const auto codes = stimulus_codes();
  ASSERT_EQ(codes.size(), 20u);
  std::set<std::string> distinct;
  for (const auto& c : codes) distinct.insert(to_string(c));
  EXPECT_EQ(distinct.size(), 20u);
  // Code 0 is the first parent sequence, whose seed 111111 opens with six
  // flashes in the modulated form.
  EXPECT_EQ(to_string(codes[0]),
            "101010101010011001100110100101101001101010011010011001011001011010100101011001101010100101100110010101101001010101100101010101");
  EXPECT_EQ(to_string(codes[19]),
            "101001100101011010101010010101011001010101101010011001100101100101100110101001100101010110101001101010011010100110100101100101");
}

TEST(StimulusCodes, TextRoundTrip) {
  const auto codes = stimulus_codes(5);
  std::stringstream ss;
  write_codes(ss, codes);
  EXPECT_EQ(read_codes(ss), codes);
  EXPECT_THROW(parse_bits("0102"), Error);
}
