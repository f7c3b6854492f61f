#pragma once

// Single-file trial archive: one JSON header line, then the samples of all
// trials as little-endian float32, channel-major within each trial.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvep/codegen.hpp"
#include "cvep/error.hpp"
#include "cvep/session.hpp"

namespace cvep {

inline constexpr int kArchiveVersion = 1;

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace detail

inline nlohmann::json archive_header(const Session& s) {
  nlohmann::json h;
  h["version"] = kArchiveVersion;
  h["channels"] = s.channels();
  h["fs_hz"] = s.fs_hz;
  h["frame_rate_hz"] = s.frame_rate_hz;
  h["n_trials"] = s.trials.size();
  h["trial_len_samples"] = s.trial_length();
  std::vector<std::string> codes;
  for (const auto& c : s.codes) codes.push_back(to_string(c));
  h["codes"] = codes;
  bool labeled = !s.trials.empty();
  for (const auto& t : s.trials) labeled = labeled && t.label.has_value();
  if (labeled) {
    std::vector<int> labels;
    for (const auto& t : s.trials) labels.push_back(*t.label);
    h["labels"] = labels;
  }
  h["seed"] = s.seed;
  if (s.pre_onset_samples > 0) h["pre_onset_samples"] = s.pre_onset_samples;
  return h;
}

inline void write_archive(const Session& s, std::ostream& os) {
  const Index c = s.channels(), n = s.trial_length();
  for (const auto& t : s.trials) {
    if (t.channels() != c || t.length() != n) throw Error(Errc::ShapeError, "trials differ in shape");
  }
  os << archive_header(s).dump() << '\n';
  std::vector<char> buf(static_cast<std::size_t>(c * n) * 4);
  for (const auto& t : s.trials) {
    char* p = buf.data();
    for (Index ch = 0; ch < c; ++ch) {
      for (Index i = 0; i < n; ++i, p += 4) {
        const auto bits = detail::to_little(std::bit_cast<std::uint32_t>(static_cast<float>(t.samples(ch, i))));
        std::memcpy(p, &bits, 4);
      }
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!os) throw Error(Errc::IoError, "failed writing archive");
}

inline void write_archive(const Session& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  write_archive(s, os);
}

inline Session read_archive(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::CorruptArchive, "missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptArchive, std::string("header is not JSON: ") + e.what());
  }
  Session s;
  Index c = 0, n = 0, n_trials = 0;
  std::vector<int> labels;
  try {
    if (h.at("version").get<int>() != kArchiveVersion) {
      throw Error(Errc::UnsupportedVersion, "archive version " + h.at("version").dump());
    }
    c = h.at("channels").get<Index>();
    n = h.at("trial_len_samples").get<Index>();
    n_trials = h.at("n_trials").get<Index>();
    s.fs_hz = h.at("fs_hz").get<double>();
    s.frame_rate_hz = h.at("frame_rate_hz").get<double>();
    for (const auto& code : h.at("codes")) s.codes.push_back(parse_bits(code.get<std::string>()));
    if (h.contains("labels")) labels = h["labels"].get<std::vector<int>>();
    s.seed = h.value("seed", std::uint64_t{0});
    s.pre_onset_samples = h.value("pre_onset_samples", Index{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptArchive, std::string("bad header field: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::UnsupportedVersion) throw;
    throw Error(Errc::CorruptArchive, e.what());
  }
  if (c < 0 || n < 0 || n_trials < 0) throw Error(Errc::CorruptArchive, "negative dimension");
  for (const auto& code : s.codes) {
    if (code.size() != s.codes.front().size()) throw Error(Errc::CorruptArchive, "codes differ in length");
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != n_trials) {
    throw Error(Errc::CorruptArchive, "label count != n_trials");
  }

  std::vector<char> buf(static_cast<std::size_t>(c * n) * 4);
  for (Index k = 0; k < n_trials; ++k) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw Error(Errc::CorruptArchive, "truncated payload");
    Trial t;
    t.fs_hz = s.fs_hz;
    t.frame_rate_hz = s.frame_rate_hz;
    t.samples.resize(c, n);
    const char* p = buf.data();
    for (Index ch = 0; ch < c; ++ch) {
      for (Index i = 0; i < n; ++i, p += 4) {
        std::uint32_t bits;
        std::memcpy(&bits, p, 4);
        t.samples(ch, i) = std::bit_cast<float>(detail::to_little(bits));
      }
    }
    if (!labels.empty()) t.label = labels[static_cast<std::size_t>(k)];
    s.trials.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw Error(Errc::CorruptArchive, "trailing bytes after payload");
  return s;
}

inline Session read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open '" + path + "'");
  return read_archive(is);
}

}  // namespace cvep
