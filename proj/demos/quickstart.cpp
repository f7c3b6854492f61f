// Simulates one session and decodes its 4.2 s prefixes with all methods.

#include <iomanip>
#include <iostream>

#include "cvep/cvep.hpp"

int main() {
  using namespace cvep;
  const std::uint64_t seed = 7;
  const auto model = default_model(seed, 8, snr_from_db(-18.0), NoiseKind::white);
  const Session session = synthesize_session(5, model, seed);
  std::cout << session.trials.size() << " trials, " << session.channels() << " channels, "
            << session.codes.size() << " codes of " << session.codes.front().size() << " bits\n";

  for (Method m : kAllMethods) {
    auto decoder = make_decoder(m, session.codes);
    const CurvePoint p = evaluate_duration(session, *decoder, 4.2);
    std::cout << std::setw(8) << method_tag(m) << "  accuracy at 4.2 s: " << std::fixed << std::setprecision(2)
              << p.accuracy() << '\n';
  }
}
