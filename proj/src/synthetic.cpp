#include "bigsl/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "bigsl/errors.hpp"

namespace bigsl {

namespace {

std::string padded(char prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05d", prefix, i);
  return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.clusters < 1 || spec.clusters > 4 || spec.zones_per_cluster < 1 ||
      spec.pois_per_cluster % spec.zones_per_cluster != 0 || spec.pois_per_cluster < spec.zones_per_cluster ||
      spec.users < 1 || spec.min_len < 2 || spec.max_len < spec.min_len) {
    throw ConfigError("bad synthetic spec");
  }
  Rng rng(spec.seed);
  const int per = spec.pois_per_cluster;
  const int zones = spec.zones_per_cluster;
  const int zone_size = per / zones;
  const int n = spec.clusters * per;
  SyntheticData out;
  std::vector<double> lat(n), lon(n);
  out.poi_cluster.resize(n);
  out.poi_zone.resize(n);
  // zone_members[global zone] lists POIs, hub first.
  std::vector<std::vector<int>> zone_members(static_cast<std::size_t>(spec.clusters * zones));
  for (int c = 0; c < spec.clusters; ++c) {
    const double clat = 40.0 + 0.5 * (c / 2);
    const double clon = -74.0 + 0.5 * (c % 2);
    for (int k = 0; k < per; ++k) {
      const int i = c * per + k;
      const int z = k / zone_size;
      const int g = c * zones + z;
      const double angle = 2.0 * std::numbers::pi * z / zones;
      out.poi_cluster[i] = c;
      out.poi_zone[i] = g;
      lat[i] = clat + spec.ring_radius * std::cos(angle) + rng.uniform(-spec.zone_radius, spec.zone_radius);
      lon[i] = clon + spec.ring_radius * std::sin(angle) + rng.uniform(-spec.zone_radius, spec.zone_radius);
      zone_members[g].push_back(i);
    }
  }
  // Zone order along each cluster's cycle is shuffled so it is not the ring order.
  std::vector<int> next_zone(zone_members.size());
  for (int c = 0; c < spec.clusters; ++c) {
    std::vector<int> cycle(zones);
    for (int z = 0; z < zones; ++z) cycle[z] = c * zones + z;
    for (int k = zones - 1; k > 0; --k) std::swap(cycle[k], cycle[rng.below(static_cast<std::uint64_t>(k) + 1)]);
    for (int k = 0; k < zones; ++k) next_zone[cycle[k]] = cycle[(k + 1) % zones];
  }

  const std::int64_t epoch0 = 1704067200;  // 2024-01-01T00:00:00Z
  for (int u = 0; u < spec.users; ++u) {
    const int c = u % spec.clusters;
    const int len = spec.min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
    int cur = c * per + static_cast<int>(rng.below(static_cast<std::uint64_t>(per)));
    std::int64_t day = static_cast<std::int64_t>(rng.below(60));
    for (int t = 0; t < len; ++t) {
      if (t > 0) {
        int z = next_zone[out.poi_zone[cur]];
        if (rng.uniform() < spec.p_jump) z = c * zones + static_cast<int>(rng.below(static_cast<std::uint64_t>(zones)));
        const auto& members = zone_members[z];
        if (zone_size == 1 || rng.uniform() < spec.p_hub) {
          cur = members[0];
        } else {
          cur = members[1 + rng.below(static_cast<std::uint64_t>(zone_size - 1))];
        }
        day += 1 + static_cast<std::int64_t>(rng.below(2));
      }
      // Cluster c is visited only between hours 6c and 6c+6.
      const std::int64_t hour = 6 * c + static_cast<int>(rng.below(6));
      const std::int64_t ts = epoch0 + day * 86400 + hour * 3600 + static_cast<std::int64_t>(rng.below(3600));
      out.checkins.push_back({padded('u', u), padded('p', cur), lat[cur], lon[cur], ts});
    }
  }
  return out;
}

}  // namespace bigsl
