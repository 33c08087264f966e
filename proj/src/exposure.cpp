#include "popdns/exposure.hpp"

#include <cmath>
#include <string>

#include "popdns/errors.hpp"
#include "popdns/rng.hpp"

namespace popdns {

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::direct: return "direct";
    case Scheme::single_relay: return "single_relay";
    case Scheme::tor3: return "tor3";
    case Scheme::popdns: return "popdns";
  }
  throw ConfigError("unknown scheme");
}

Scheme scheme_from_name(std::string_view s) {
  if (s == "direct") return Scheme::direct;
  if (s == "single_relay") return Scheme::single_relay;
  if (s == "tor3") return Scheme::tor3;
  if (s == "popdns") return Scheme::popdns;
  throw ConfigError("unknown scheme " + std::string(s));
}

namespace {

void validate(const ExposureParams& p) {
  if (p.c < 0.0 || p.c > 1.0) throw ConfigError("c must be in [0, 1]");
  if (p.h < 0.0 || p.h > 1.0) throw ConfigError("h must be in [0, 1]");
  if (p.q_v < 0.0 || p.q_v > 1.0) throw ConfigError("q_v must be in [0, 1]");
  if (p.V < 1) throw ConfigError("V must be >= 1");
  if (p.U < p.V) throw ConfigError("U must be >= V");
  if (p.R < 1) throw ConfigError("R must be >= 1");
}

double traced_or_guessed(double c, uint32_t hops, double guess) {
  double all = std::pow(c, double(hops));
  return all + (1.0 - all) * guess;
}

}  // namespace

double exposure_closed_form(const ExposureParams& p) {
  validate(p);
  double over_u = 1.0 / double(p.U);
  switch (p.scheme) {
    case Scheme::direct:
      return 1.0;
    case Scheme::single_relay:
      return traced_or_guessed(p.c, 1, over_u);
    case Scheme::tor3:
      return traced_or_guessed(p.c, 3, over_u);
    case Scheme::popdns:
      return (1.0 - p.h) * traced_or_guessed(p.c, 3, over_u) +
             p.h * p.q_v * traced_or_guessed(p.c, p.R, 1.0 / double(p.V));
  }
  throw ConfigError("unknown scheme");
}

namespace {

bool all_collude(Rng& rng, double c, uint32_t hops) {
  for (uint32_t i = 0; i < hops; ++i)
    if (!rng.bernoulli(c)) return false;
  return true;
}

bool trial_success(const ExposureParams& p, Rng& rng) {
  switch (p.scheme) {
    case Scheme::direct:
      return true;
    case Scheme::single_relay:
      return all_collude(rng, p.c, 1) || rng.bernoulli(1.0 / double(p.U));
    case Scheme::tor3:
      return all_collude(rng, p.c, 3) || rng.bernoulli(1.0 / double(p.U));
    case Scheme::popdns:
      if (!rng.bernoulli(p.h))  // miss: fallback transport
        return all_collude(rng, p.c, 3) || rng.bernoulli(1.0 / double(p.U));
      if (!rng.bernoulli(p.q_v)) return false;  // hit without a vote
      return all_collude(rng, p.c, p.R) || rng.bernoulli(1.0 / double(p.V));
  }
  throw ConfigError("unknown scheme");
}

}  // namespace

ExposureEstimate exposure_monte_carlo(const ExposureParams& p, uint64_t trials,
                                      uint64_t seed) {
  validate(p);
  if (trials == 0) throw ConfigError("trials must be >= 1");
  Rng master(seed);
  uint64_t successes = 0;
  for (uint64_t i = 0; i < trials; ++i) {
    Rng rng = master.derive("exposure-trial", i);
    if (trial_success(p, rng)) ++successes;
  }
  double mean = double(successes) / double(trials);
  return ExposureEstimate{
      mean, std::sqrt(mean * (1.0 - mean) / double(trials)), trials};
}

double low_collusion_penalty(const ExposureParams& p) {
  ExposureParams popdns = p;
  popdns.scheme = Scheme::popdns;
  ExposureParams tor = p;
  tor.scheme = Scheme::tor3;
  return exposure_closed_form(popdns) - exposure_closed_form(tor);
}

}  // namespace popdns
