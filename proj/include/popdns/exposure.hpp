#pragma once

#include <cstdint>
#include <string_view>

namespace popdns {

/// Resolution paths an adversary may observe. `popdns` is the full scheme:
/// hits leak only through votes pushed over an R-hop mix path, misses fall
/// back to three-relay onion routing.
enum class Scheme { direct, single_relay, tor3, popdns };

std::string_view scheme_name(Scheme s);
Scheme scheme_from_name(std::string_view s);  // throws ConfigError

/// Inputs of the exposure model. c is the fraction of colluding relays;
/// an untraced query is attributed by a uniform guess over the U users
/// (V voters for a traced vote).
struct ExposureParams {
  Scheme scheme = Scheme::popdns;
  double c = 0.0;     // collusion rate, in [0, 1]
  uint64_t U = 10000;  // user population
  uint64_t V = 10000;  // voters per round, V <= U
  double h = 0.944;   // hit ratio (popdns only)
  uint32_t R = 10;    // mix path length (popdns only)
  double q_v = 0.3;   // P(hit query is represented in a vote)
};

/// P(adversary attributes a random query to its sender):
///   direct        1
///   single_relay  c + (1-c)/U
///   tor3          c^3 + (1-c^3)/U
///   popdns        (1-h)(c^3 + (1-c^3)/U) + h q_v (c^R + (1-c^R)/V)
/// A hit that produced no vote is invisible and contributes zero.
double exposure_closed_form(const ExposureParams& p);

struct ExposureEstimate {
  double exposure = 0.0;
  double stderr_ = 0.0;
  uint64_t trials = 0;
};

/// Simulate `trials` independent queries; each relay hop colludes with
/// probability c, untraced events are guessed uniformly. Per-trial draws
/// come from substreams of (seed, trial), so the estimate is independent of
/// evaluation order.
ExposureEstimate exposure_monte_carlo(const ExposureParams& p,
                                      uint64_t trials, uint64_t seed);

/// exposure(popdns) - exposure(tor3) at the same parameters: positive where
/// joining the voting scheme costs privacy, negative where it pays.
double low_collusion_penalty(const ExposureParams& p);

}  // namespace popdns
