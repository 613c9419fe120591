#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "biostream/sim/config.hpp"
#include "biostream/stream/types.hpp"
#include "biostream/stream/wire.hpp"

namespace biostream::sim {

/// Remote (sender) clock = local * (1 + drift) + offset. One-way delays are
/// base + U(0, jitter), drawn independently per direction.
struct LinkModel {
  double base_latency_s = 0.0;
  double jitter_s = 0.0;
  double clock_offset_s = 0.0;
  double clock_drift_ppm = 0.0;
  double turnaround_s = 0.0;  // remote time between receiving a ping and answering
  std::size_t exchanges_per_burst = 10;
  double burst_period_s = 5.0;
  double exchange_spacing_s = 0.01;
  std::uint64_t seed = 1;

  double remote_from_local(double t) const { return t * (1.0 + clock_drift_ppm * 1e-6) + clock_offset_s; }
  double local_from_remote(double t) const { return (t - clock_offset_s) / (1.0 + clock_drift_ppm * 1e-6); }
};

struct TimedMessage {
  double time_s = 0.0;  // send time on the sender's clock
  stream::wire::Message message;
};

struct DeliveredMessage {
  double arrival_local_s = 0.0;
  stream::wire::Message message;
};

struct LinkResult {
  std::vector<DeliveredMessage> delivered;  // FIFO order
  std::vector<std::vector<stream::ClockExchange>> bursts;
};

/// Carries sender frames over a jittery FIFO link and runs a ping burst every
/// burst_period_s, starting at local time `start_local_s`, covering the span
/// of the traffic.
inline LinkResult simulate_link(const std::vector<TimedMessage>& frames, const LinkModel& link,
                                double start_local_s = 0.0) {
  auto rng = make_rng(link.seed, 0x11C4);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  const auto delay = [&] { return link.base_latency_s + (link.jitter_s > 0 ? link.jitter_s * jitter(rng) : 0.0); };

  LinkResult out;
  double last_arrival = -std::numeric_limits<double>::infinity();
  double end_local = start_local_s;
  for (const auto& f : frames) {
    const double sent_local = link.local_from_remote(f.time_s);
    const double arrival = std::max(sent_local + delay(), last_arrival);
    last_arrival = arrival;
    end_local = std::max(end_local, sent_local);
    out.delivered.push_back({arrival, f.message});
  }
  for (double burst = start_local_s; burst <= end_local || out.bursts.empty(); burst += link.burst_period_s) {
    auto& ex = out.bursts.emplace_back();
    for (std::size_t i = 0; i < link.exchanges_per_burst; ++i) {
      stream::ClockExchange e;
      e.t0 = burst + static_cast<double>(i) * link.exchange_spacing_s;
      e.t1 = link.remote_from_local(e.t0 + delay());
      e.t2 = e.t1 + link.turnaround_s;
      e.t3 = link.local_from_remote(e.t2) + delay();
      ex.push_back(e);
    }
  }
  return out;
}

}  // namespace biostream::sim
