#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bigsl/matrix.hpp"

namespace bigsl {

/// One timestamped, geolocated visit. `timestamp` is Unix seconds (UTC).
struct CheckIn {
  std::string user_id;
  std::string poi_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::int64_t timestamp = 0;

  bool operator==(const CheckIn&) const = default;
};

struct CheckInSequence {
  std::string user_id;
  std::vector<CheckIn> visits;
};

struct Poi {
  std::string id;
  double latitude = 0.0;
  double longitude = 0.0;
};

struct Visit {
  int poi = 0;
  std::int64_t timestamp = 0;
  bool operator==(const Visit&) const = default;
};

/// Chronological trajectory of one user in canonical indices. The first
/// `train_len` visits form the training split, the rest the test split.
struct UserSequence {
  int user = 0;
  std::vector<Visit> visits;
  std::size_t train_len = 0;
};

/// Filtered corpus with canonical indices: users and POIs are indexed by
/// their rank in sorted id order.
struct Dataset {
  std::vector<std::string> users;
  std::vector<Poi> pois;
  std::vector<UserSequence> sequences;  // sequences[m].user == m
  double split_ratio = 0.0;             // 0 until split_train_test runs

  std::size_t num_users() const { return users.size(); }
  std::size_t num_pois() const { return pois.size(); }
  std::size_t num_checkins() const;
  bool is_split() const { return split_ratio > 0.0; }
  /// Returns a sequence view with ids restored.
  CheckInSequence sequence_of(std::size_t user) const;
};

enum class ViewId { kSpatial, kTemporal };
std::string to_string(ViewId v);
ViewId view_from_string(std::string_view s);

struct FeatureView {
  ViewId view = ViewId::kSpatial;
  Matrix features;  // N × d1
  Index width() const { return features.cols(); }
};

struct FilterThresholds {
  std::size_t min_user = 20;
  std::size_t max_user = 50;
  std::size_t min_poi_users = 10;
  /// Repeat POI-then-user filtering until nothing changes.
  bool to_fixpoint = true;
};

constexpr std::size_t kDefaultSlots = 56;

// Timestamps ------------------------------------------------------------

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional "Z" or ±HH:MM suffix into Unix seconds.
bool parse_iso8601(std::string_view text, std::int64_t& out);
std::string format_iso8601(std::int64_t unix_seconds);
/// Monday = 0, in UTC.
int weekday_utc(std::int64_t unix_seconds);
int hour_utc(std::int64_t unix_seconds);
/// weekday·8 + hour/3 for the default 56 slots; in general slots are equal partitions of the week.
int time_slot(std::int64_t unix_seconds, std::size_t slots = kDefaultSlots);

// Operations ------------------------------------------------------------

/// Parses tab-separated lines: user, ISO-8601 time, latitude, longitude, poi.
/// Blank lines are ignored. Throws MalformedRecord with the 1-based line number.
std::vector<CheckIn> parse_checkins(std::istream& in);
std::vector<CheckIn> parse_checkins(std::string_view text);
/// Reads a plain or gzip-compressed file.
std::vector<CheckIn> read_checkin_file(const std::string& path);
std::string serialize_checkins(const std::vector<CheckIn>& checkins);

Dataset filter_dataset(const std::vector<CheckIn>& checkins, const FilterThresholds& thresholds = {});
void split_train_test(Dataset& dataset, double ratio = 0.8);

FeatureView build_spatial_features(const Dataset& dataset);
FeatureView build_temporal_features(const Dataset& dataset, std::size_t slots = kDefaultSlots);

// Preprocessed-dataset file ----------------------------------------------

void write_dataset(std::ostream& out, const Dataset& dataset, std::size_t slots = kDefaultSlots);
Dataset read_dataset(std::istream& in, std::size_t* slots = nullptr);
void save_dataset(const std::string& path, const Dataset& dataset, std::size_t slots = kDefaultSlots);
Dataset load_dataset(const std::string& path, std::size_t* slots = nullptr);

/// Writes to `path` via a temporary sibling and rename.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace bigsl
