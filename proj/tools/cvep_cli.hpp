#pragma once

// Command-line front end. run_cli() holds all behavior so tests can drive it
// without spawning a process.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvep/cvep.hpp"

namespace cvep::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum Exit : int { ok = 0, usage = 1, data = 2, numerical = 3 };

inline int exit_code(const Error& e) {
  if (is_numerical(e.code())) return numerical;
  if (e.code() == Errc::ConfigError) return usage;
  return data;
}

/// Hyper-parameters shared by the decoding subcommands.
struct RunConfig {
  std::string method = "cca_e1";
  double highpass_hz = 6.0;
  double lowpass_hz = 50.0;
  double notch_hz = 50.0;
  double epoch_len_ms = 300.0;
  int n_events = kNumEvents;
  std::uint64_t seed = 0;
  std::optional<double> shrinkage;
  std::vector<double> durations;

  void validate() const {
    if (!(highpass_hz > 0.0 && highpass_hz < lowpass_hz)) {
      throw Error(Errc::ConfigError, "need 0 < highpass < lowpass");
    }
    const double samples = epoch_len_ms * kDecodeRateHz / 1000.0;
    if (std::abs(samples - std::round(samples)) > 1e-9 || samples < 1.0) {
      throw Error(Errc::ConfigError, "epoch length must be a whole number of 180 Hz samples");
    }
    if (n_events != kNumEvents) throw Error(Errc::ConfigError, "only the 3-event encoding is supported");
    if (shrinkage && !(*shrinkage >= 0.0 && *shrinkage <= 1.0)) {
      throw Error(Errc::ConfigError, "shrinkage must lie in [0, 1]");
    }
  }

  Index epoch_samples() const { return static_cast<Index>(std::llround(epoch_len_ms * kDecodeRateHz / 1000.0)); }

  PipelineConfig pipeline() const {
    PipelineConfig p;
    p.highpass_hz = highpass_hz;
    p.lowpass_hz = lowpass_hz;
    p.notch_hz = notch_hz;
    return p;
  }

  DecoderConfig decoder() const {
    DecoderConfig d;
    d.lag = epoch_samples();
    d.umm.epoch_len = epoch_samples();
    d.umm.taper_len = epoch_samples();
    d.umm.shrinkage = shrinkage;
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"method", method},         {"highpass_hz", highpass_hz}, {"lowpass_hz", lowpass_hz},
                     {"notch_hz", notch_hz},     {"epoch_len_ms", epoch_len_ms}, {"n_events", n_events},
                     {"seed", seed},             {"durations", durations}};
    j["shrinkage"] = shrinkage ? nlohmann::json(*shrinkage) : nlohmann::json(nullptr);
    return j;
  }
};

namespace detail {

inline void add_run_options(CLI::App* cmd, RunConfig& rc, bool with_durations) {
  cmd->add_option("--highpass", rc.highpass_hz, "Bandpass lower edge (Hz) for raw archives")->capture_default_str();
  cmd->add_option("--lowpass", rc.lowpass_hz, "Bandpass upper edge (Hz) for raw archives")->capture_default_str();
  cmd->add_option("--notch", rc.notch_hz, "Line-noise notch (Hz), 0 disables")->capture_default_str();
  cmd->add_option("--epoch-len-ms", rc.epoch_len_ms, "Response / epoch length in ms")->capture_default_str();
  cmd->add_option("--n-events", rc.n_events, "Number of encoding events")->capture_default_str();
  cmd->add_option("--shrinkage", rc.shrinkage, "Fixed UMM shrinkage in [0, 1]; analytic when unset");
  if (with_durations) cmd->add_option("--durations", rc.durations, "Override the 20-point duration grid (s)");
}

inline Session load_decodable(const std::string& path, const RunConfig& rc) {
  Session s = read_archive(path);
  return s.is_raw() ? preprocess_session(s, rc.pipeline()) : s;
}

inline std::vector<NamedDecoder> decoders_for(const std::vector<std::string>& tags, const RunConfig& rc) {
  std::vector<NamedDecoder> out;
  for (const auto& tag : tags) {
    if (cvep::detail::lower(tag) == "all") {
      for (Method m : kAllMethods) out.push_back(named_decoder(m, rc.decoder()));
    } else {
      out.push_back(named_decoder(parse_method(tag), rc.decoder()));
    }
  }
  if (out.empty()) throw Error(Errc::ConfigError, "no method given");
  return out;
}

// Writes to the file, or to `out` when the path is empty or "-".
template <class F>
void emit(const std::string& path, std::ostream& out, F&& write) {
  if (path.empty() || path == "-") {
    write(out);
    return;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  write(os);
  if (!os) throw Error(Errc::IoError, "failed writing '" + path + "'");
}

inline double parse_snr_db(const std::string& text) {
  const std::string t = cvep::detail::lower(text);
  if (t == "inf" || t == "+inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw Error(Errc::ConfigError, "snr must be a number of dB or 'inf'");
  }
}

}  // namespace detail

/// Runs one command line. args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibration-free c-VEP decoding toolkit", "cvep"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  RunConfig rc;

  // codes
  auto* codes_cmd = app.add_subcommand("codes", "Write the modulated stimulus code subset");
  std::size_t n_codes = 20;
  std::string codes_out;
  codes_cmd->add_option("--n", n_codes, "Number of codes")->capture_default_str();
  codes_cmd->add_option("--out", codes_out, "Output file (stdout when omitted)");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Synthesize a labeled session archive");
  std::string snr_text = "inf", noise = "white", sim_out;
  Index runs = 5, channels = 8;
  double sim_duration = 31.5, line_noise = 0.0;
  bool raw = false;
  sim_cmd->add_option("--snr", snr_text, "Signal-to-noise power ratio in dB, or 'inf'")->capture_default_str();
  sim_cmd->add_option("--runs", runs, "Runs of 20 trials")->capture_default_str();
  sim_cmd->add_option("--seed", rc.seed, "Session seed")->capture_default_str();
  sim_cmd->add_option("--channels", channels, "Channel count")->capture_default_str();
  sim_cmd->add_option("--noise", noise, "Background noise: white or pink")
      ->check(CLI::IsMember({"white", "pink"}))
      ->capture_default_str();
  sim_cmd->add_option("--duration", sim_duration, "Trial duration in s")->capture_default_str();
  sim_cmd->add_flag("--raw", raw, "Write unfiltered 512 Hz windows (with 0.5 s pre-onset) instead of 180 Hz trials");
  sim_cmd->add_option("--line-noise", line_noise, "50 Hz line-noise amplitude for --raw")->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Archive path")->required();

  // decode
  auto* dec_cmd = app.add_subcommand("decode", "Per-trial predictions at one duration");
  std::string dec_in, dec_out;
  double dec_duration = 31.5;
  dec_cmd->add_option("--method", rc.method, "cca_e1, cca_ec, umm_t11 or umm_tcw")->required();
  dec_cmd->add_option("--in", dec_in, "Session archive")->required()->check(CLI::ExistingFile);
  dec_cmd->add_option("--duration", dec_duration, "Trial prefix in s")->capture_default_str();
  dec_cmd->add_option("--out", dec_out, "Predictions CSV (stdout when omitted)");
  detail::add_run_options(dec_cmd, rc, false);

  // curve
  auto* curve_cmd = app.add_subcommand("curve", "Accuracy versus trial duration");
  std::vector<std::string> curve_methods;
  std::string curve_in, curve_out, trial_log;
  curve_cmd->add_option("--method", curve_methods, "Method tag(s), or 'all'")->required();
  curve_cmd->add_option("--in", curve_in, "Session archive")->required()->check(CLI::ExistingFile);
  curve_cmd->add_option("--out", curve_out, "Curve CSV (stdout when omitted)");
  curve_cmd->add_option("--trial-log", trial_log, "Per-trial log CSV");
  detail::add_run_options(curve_cmd, rc, true);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy versus one bandpass edge at 31.5 s");
  std::string axis = "highpass", sweep_in, sweep_out;
  std::vector<std::string> sweep_methods{"all"};
  std::vector<double> cutoffs;
  sweep_cmd->add_option("--axis", axis, "highpass or lowpass")
      ->check(CLI::IsMember({"highpass", "lowpass"}))
      ->capture_default_str();
  sweep_cmd->add_option("--in", sweep_in, "Raw session archive (simulate --raw)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep_out, "Sweep CSV (stdout when omitted)");
  sweep_cmd->add_option("--method", sweep_methods, "Method tag(s), or 'all'")->capture_default_str();
  sweep_cmd->add_option("--cutoffs", cutoffs, "Override the default cutoff list (Hz)");
  detail::add_run_options(sweep_cmd, rc, false);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "One-sided paired Wilcoxon test of curve A > curve B");
  std::string stats_a, stats_b, stats_out;
  std::optional<double> stats_duration;
  stats_cmd->add_option("--a", stats_a, "Curve CSV of the hypothesized better method")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--b", stats_b, "Curve CSV of the comparison method")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--duration", stats_duration, "Restrict pairs to one duration (s)");
  stats_cmd->add_option("--out", stats_out, "Report JSON (stdout when omitted)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return usage;
  }

  std::string out_path;
  auto stanza = [&](const CLI::App* cmd, nlohmann::json extra) {
    nlohmann::json j;
    j["tool"] = "cvep";
    j["version"] = kVersion;
    j["command"] = cmd->get_name();
    j["args"] = args;
    j["config"] = rc.to_json();
    j["seed"] = rc.seed;
    j["options"] = cmd->config_to_str(true, false);
    for (auto& [k, v] : extra.items()) j[k] = v;
    const std::string text = j.dump(2) + "\n";
    if (out_path.empty() || out_path == "-") {
      err << "run: " << j.dump() << '\n';
    } else {
      detail::emit(out_path + ".run.json", out, [&](std::ostream& os) { os << text; });
    }
  };

  try {
    if (*codes_cmd) {
      out_path = codes_out;
      const auto codes = stimulus_codes(n_codes);
      detail::emit(codes_out, out, [&](std::ostream& os) { write_codes(os, codes); });
      stanza(codes_cmd, {{"n_codes", n_codes}});
    } else if (*sim_cmd) {
      out_path = sim_out;
      const double db = detail::parse_snr_db(snr_text);
      if (std::isnan(db)) throw Error(Errc::InvalidSnr, "snr is not a number");
      const double snr = std::isinf(db) ? (db > 0 ? std::numeric_limits<double>::infinity() : 0.0) : snr_from_db(db);
      const auto model = default_model(rc.seed, channels, snr, noise == "pink" ? NoiseKind::pink : NoiseKind::white);
      Session s;
      if (raw) {
        const auto codes = stimulus_codes();
        const auto rec = synthesize_recording(runs, model, rc.seed, codes, 512.0, sim_duration, 1.0, line_noise);
        s = raw_session(rec, codes, rc.seed, 0.5, sim_duration);
      } else {
        s = synthesize_session(runs, model, rc.seed, stimulus_codes(), sim_duration);
      }
      write_archive(s, sim_out);
      stanza(sim_cmd, {{"snr_db", snr_text}, {"noise", noise}, {"runs", runs}, {"raw", raw}});
    } else if (*dec_cmd) {
      out_path = dec_out;
      rc.validate();
      const auto decoders = detail::decoders_for({rc.method}, rc);
      const Session s = detail::load_decodable(dec_in, rc);
      rc.seed = s.seed;
      auto decoder = decoders.front().make(s.codes);
      const CurvePoint p = evaluate_duration(s, *decoder, dec_duration);
      detail::emit(dec_out, out, [&](std::ostream& os) { csv::write_trial_log(os, decoders.front().tag, s.seed, p); });
      err << decoders.front().tag << " accuracy " << csv::fixed(p.accuracy(), 4) << " (" << p.n_correct << "/"
          << p.n_trials << ")\n";
      stanza(dec_cmd, {{"input", dec_in}, {"duration_s", dec_duration}, {"accuracy", p.accuracy()}});
    } else if (*curve_cmd) {
      out_path = curve_out;
      rc.validate();
      const auto decoders = detail::decoders_for(curve_methods, rc);
      const Session s = detail::load_decodable(curve_in, rc);
      rc.seed = s.seed;
      const std::vector<double> durations = rc.durations.empty() ? decoding_durations() : rc.durations;
      std::vector<DecodingCurve> curves;
      nlohmann::json summary = nlohmann::json::object();
      for (const auto& d : decoders) {
        curves.push_back(decoding_curve(s, d, durations));
        const auto acc = curves.back().accuracy();
        summary[d.tag] = {{"accuracy", acc}};
        if (durations.size() >= 2) {
          const double rho = spearman(durations, acc);
          summary[d.tag]["spearman"] = std::isnan(rho) ? nlohmann::json(nullptr) : nlohmann::json(rho);
        }
      }
      detail::emit(curve_out, out, [&](std::ostream& os) { csv::write_curves(os, curves); });
      if (!trial_log.empty()) {
        detail::emit(trial_log, out, [&](std::ostream& os) {
          bool first = true;
          for (const auto& c : curves) {
            for (const auto& p : c.points) {
              std::ostringstream block;
              csv::write_trial_log(block, c.method_tag, c.seed, p);
              std::string text = block.str();
              if (!first) text = text.substr(text.find('\n') + 1);
              os << text;
              first = false;
            }
          }
        });
      }
      stanza(curve_cmd, {{"input", curve_in}, {"durations", durations}, {"summary", summary}});
    } else if (*sweep_cmd) {
      out_path = sweep_out;
      rc.validate();
      const auto decoders = detail::decoders_for(sweep_methods, rc);
      Session raw_s = read_archive(sweep_in);
      if (!raw_s.is_raw()) {
        throw Error(Errc::ConfigError, "sweep needs a raw archive (simulate --raw): filters are redesigned per cutoff");
      }
      rc.seed = raw_s.seed;
      const SweepAxis ax = parse_axis(axis);
      const std::vector<double> list = cutoffs.empty() ? default_cutoffs(ax) : cutoffs;
      PipelineConfig base = rc.pipeline();
      const SweepGrid g = bandpass_sweep(session_source(std::move(raw_s)), decoders, ax, list, base);
      detail::emit(sweep_out, out, [&](std::ostream& os) { csv::write_sweep(os, g); });
      stanza(sweep_cmd, {{"input", sweep_in}, {"axis", axis}, {"cutoffs_hz", list}});
    } else if (*stats_cmd) {
      out_path = stats_out;
      auto load = [](const std::string& path) {
        std::ifstream is(path);
        if (!is) throw Error(Errc::IoError, "cannot open '" + path + "'");
        return csv::read_curves(is);
      };
      const auto rows_a = load(stats_a);
      const auto rows_b = load(stats_b);
      auto key = [](const csv::CurveRow& r) { return std::make_pair(r.seed, std::llround(r.duration_s * 100.0)); };
      std::map<std::pair<std::uint64_t, long long>, double> acc_b;
      for (const auto& r : rows_b) {
        if (!acc_b.emplace(key(r), r.accuracy).second) {
          throw Error(Errc::ConfigError, "curve B has several rows per (seed, duration); split methods first");
        }
      }
      std::vector<double> a, b;
      std::map<std::pair<std::uint64_t, long long>, int> seen;
      for (const auto& r : rows_a) {
        if (stats_duration && std::llround(r.duration_s * 100.0) != std::llround(*stats_duration * 100.0)) continue;
        if (++seen[key(r)] > 1) throw Error(Errc::ConfigError, "curve A has several rows per (seed, duration)");
        const auto it = acc_b.find(key(r));
        if (it == acc_b.end()) continue;
        a.push_back(r.accuracy);
        b.push_back(it->second);
      }
      const WilcoxonResult w = wilcoxon_one_sided(a, b);
      nlohmann::json report{{"a", stats_a},
                            {"b", stats_b},
                            {"alternative", "a > b"},
                            {"n_pairs", a.size()},
                            {"n_nonzero", w.n},
                            {"statistic_w_plus", w.statistic},
                            {"p_value", w.p_value},
                            {"exact", w.exact},
                            {"alpha", w.alpha},
                            {"significant", w.significant()}};
      detail::emit(stats_out, out, [&](std::ostream& os) { os << report.dump(2) << '\n'; });
      stanza(stats_cmd, {{"report", report}});
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return data;
  }
  return ok;
}

}  // namespace cvep::cli
