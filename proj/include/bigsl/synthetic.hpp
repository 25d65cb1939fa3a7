#pragma once

#include <cstdint>
#include <vector>

#include "bigsl/ingest.hpp"

namespace bigsl {

/// Planted-structure check-in generator. Each spatial cluster is split into small
/// zones laid out on a ring; zones follow a fixed cycle and every zone has one hub
/// POI that takes most arrivals. A step moves to the next zone's hub with
/// probability (1 − p_jump)·p_hub. Each cluster is visited in its own hours of the day.
struct SyntheticSpec {
  int clusters = 4;
  int pois_per_cluster = 40;
  int zones_per_cluster = 20;
  int users = 300;
  double p_hub = 0.9;    // arrival at the zone hub rather than another member
  double p_jump = 0.03;  // move to a random zone of the cluster instead of the next one
  int min_len = 40;
  int max_len = 50;
  double ring_radius = 0.015;  // degrees, zone centers around the cluster center
  double zone_radius = 0.002;  // degrees, members around their zone center
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::vector<CheckIn> checkins;
  std::vector<int> poi_cluster;  // by POI index (ids sort in generation order)
  std::vector<int> poi_zone;     // global zone index by POI index
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace bigsl
