#include "bigsl/ingest.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "bigsl/errors.hpp"

namespace bigsl {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

CheckIn parse_line(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split_tabs(line);
  if (fields.size() != 5) {
    throw MalformedRecord(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
  }
  CheckIn c;
  c.user_id = std::string(fields[0]);
  c.poi_id = std::string(fields[4]);
  if (c.user_id.empty() || c.poi_id.empty()) throw MalformedRecord(line_no, "empty identifier");
  if (!parse_iso8601(fields[1], c.timestamp)) throw MalformedRecord(line_no, "bad timestamp");
  if (!parse_double(fields[2], c.latitude) || c.latitude < -90.0 || c.latitude > 90.0) {
    throw MalformedRecord(line_no, "bad latitude");
  }
  if (!parse_double(fields[3], c.longitude) || c.longitude < -180.0 || c.longitude > 180.0) {
    throw MalformedRecord(line_no, "bad longitude");
  }
  return c;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

struct Counts {
  std::map<std::string, std::set<std::string>> poi_users;
  std::map<std::string, std::size_t> user_checkins;
};

Counts count(const std::vector<const CheckIn*>& rows) {
  Counts c;
  for (const CheckIn* r : rows) {
    c.poi_users[r->poi_id].insert(r->user_id);
    ++c.user_checkins[r->user_id];
  }
  return c;
}

}  // namespace

std::size_t Dataset::num_checkins() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.visits.size();
  return n;
}

CheckInSequence Dataset::sequence_of(std::size_t user) const {
  const UserSequence& s = sequences.at(user);
  CheckInSequence out;
  out.user_id = users[user];
  for (const Visit& v : s.visits) {
    const Poi& p = pois[v.poi];
    out.visits.push_back(CheckIn{users[user], p.id, p.latitude, p.longitude, v.timestamp});
  }
  return out;
}

std::string to_string(ViewId v) { return v == ViewId::kSpatial ? "spatial" : "temporal"; }

ViewId view_from_string(std::string_view s) {
  if (s == "spatial") return ViewId::kSpatial;
  if (s == "temporal") return ViewId::kTemporal;
  throw ConfigError("unknown view: " + std::string(s));
}

bool parse_iso8601(std::string_view t, std::int64_t& out) {
  // YYYY-MM-DDTHH:MM:SS[.fff][Z|±HH:MM]
  if (t.size() < 19 || t[4] != '-' || t[7] != '-' || (t[10] != 'T' && t[10] != ' ') || t[13] != ':' ||
      t[16] != ':') {
    return false;
  }
  int year, mon, day, hh, mm, ss;
  if (!parse_int(t.substr(0, 4), year) || !parse_int(t.substr(5, 2), mon) || !parse_int(t.substr(8, 2), day) ||
      !parse_int(t.substr(11, 2), hh) || !parse_int(t.substr(14, 2), mm) || !parse_int(t.substr(17, 2), ss)) {
    return false;
  }
  if (mon < 1 || mon > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 60) return false;
  std::int64_t y2;
  unsigned m2, d2;
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(mon), static_cast<unsigned>(day));
  civil_from_days(days, y2, m2, d2);
  if (y2 != year || static_cast<int>(m2) != mon || static_cast<int>(d2) != day) return false;
  std::string_view rest = t.substr(19);
  if (!rest.empty() && rest[0] == '.') {
    std::size_t k = 1;
    while (k < rest.size() && std::isdigit(static_cast<unsigned char>(rest[k]))) ++k;
    if (k == 1) return false;
    rest = rest.substr(k);
  }
  std::int64_t offset = 0;
  if (rest == "Z" || rest.empty()) {
    offset = 0;
  } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
    int oh, om;
    if (!parse_int(rest.substr(1, 2), oh) || !parse_int(rest.substr(4, 2), om) || oh > 23 || om > 59) return false;
    offset = (rest[0] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
  } else {
    return false;
  }
  out = days * 86400 + hh * 3600 + mm * 60 + ss - offset;
  return true;
}

std::string format_iso8601(std::int64_t t) {
  const std::int64_t days = floor_div(t, 86400);
  const std::int64_t secs = t - days * 86400;
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

int weekday_utc(std::int64_t t) {
  const std::int64_t days = floor_div(t, 86400);
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

int hour_utc(std::int64_t t) {
  const std::int64_t secs = t - floor_div(t, 86400) * 86400;
  return static_cast<int>(secs / 3600);
}

int time_slot(std::int64_t t, std::size_t slots) {
  if (slots == kDefaultSlots) return weekday_utc(t) * 8 + hour_utc(t) / 3;
  const std::int64_t week = 7 * 86400;
  // Seconds since Monday 00:00 UTC.
  const std::int64_t since_monday = weekday_utc(t) * 86400 + (t - floor_div(t, 86400) * 86400);
  return static_cast<int>(since_monday * static_cast<std::int64_t>(slots) / week);
}

std::vector<CheckIn> parse_checkins(std::istream& in) {
  std::vector<CheckIn> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    out.push_back(parse_line(line, line_no));
  }
  return out;
}

std::vector<CheckIn> parse_checkins(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_checkins(in);
}

std::vector<CheckIn> read_checkin_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error("input not found: " + path);
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw Error("cannot open " + path);
  std::string text;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw Error("read error in " + path);
  return parse_checkins(std::string_view(text));
}

std::string serialize_checkins(const std::vector<CheckIn>& checkins) {
  std::string out;
  for (const CheckIn& c : checkins) {
    out += c.user_id;
    out += '\t';
    out += format_iso8601(c.timestamp);
    out += '\t';
    out += format_double(c.latitude);
    out += '\t';
    out += format_double(c.longitude);
    out += '\t';
    out += c.poi_id;
    out += '\n';
  }
  return out;
}

Dataset filter_dataset(const std::vector<CheckIn>& checkins, const FilterThresholds& th) {
  if (checkins.empty()) throw EmptyAfterFilter();
  std::vector<const CheckIn*> rows;
  rows.reserve(checkins.size());
  for (const CheckIn& c : checkins) rows.push_back(&c);

  while (true) {
    const std::size_t before = rows.size();
    Counts c = count(rows);
    std::vector<const CheckIn*> kept;
    for (const CheckIn* r : rows) {
      if (c.poi_users[r->poi_id].size() >= th.min_poi_users) kept.push_back(r);
    }
    c = count(kept);
    rows.clear();
    for (const CheckIn* r : kept) {
      const std::size_t n = c.user_checkins[r->user_id];
      if (n >= th.min_user && n <= th.max_user) rows.push_back(r);
    }
    if (!th.to_fixpoint || rows.size() == before || rows.empty()) break;
  }
  if (rows.empty()) throw EmptyAfterFilter();

  Dataset ds;
  std::map<std::string, std::vector<const CheckIn*>> by_user;
  std::map<std::string, const CheckIn*> first_poi;
  for (const CheckIn* r : rows) {
    by_user[r->user_id].push_back(r);
    first_poi.emplace(r->poi_id, r);
  }
  std::unordered_map<std::string, int> poi_index;
  for (const auto& [id, r] : first_poi) {
    poi_index[id] = static_cast<int>(ds.pois.size());
    ds.pois.push_back(Poi{id, r->latitude, r->longitude});
  }
  for (auto& [uid, list] : by_user) {
    const int u = static_cast<int>(ds.users.size());
    ds.users.push_back(uid);
    std::stable_sort(list.begin(), list.end(),
                     [](const CheckIn* a, const CheckIn* b) { return a->timestamp < b->timestamp; });
    UserSequence seq;
    seq.user = u;
    for (const CheckIn* r : list) seq.visits.push_back(Visit{poi_index.at(r->poi_id), r->timestamp});
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

void split_train_test(Dataset& dataset, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw SequenceTooShort("split ratio " + format_double(ratio) + " leaves an empty split");
  }
  for (const UserSequence& s : dataset.sequences) {
    const std::size_t len = s.visits.size();
    const auto train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(len)));
    if (len < 2 || train == 0 || train >= len) {
      throw SequenceTooShort("user " + dataset.users[s.user] + " has " + std::to_string(len) +
                             " visits; cannot split at ratio " + format_double(ratio));
    }
  }
  for (UserSequence& s : dataset.sequences) {
    s.train_len = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(s.visits.size())));
  }
  dataset.split_ratio = ratio;
}

FeatureView build_spatial_features(const Dataset& dataset) {
  const Index n = static_cast<Index>(dataset.num_pois());
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = dataset.pois[i].latitude;
    x(i, 1) = dataset.pois[i].longitude;
  }
  for (Index c = 0; c < 2; ++c) {
    const double lo = x.col(c).minCoeff();
    const double hi = x.col(c).maxCoeff();
    if (hi > lo) {
      x.col(c) = (x.col(c).array() - lo) / (hi - lo);
    } else {
      x.col(c).setZero();
    }
  }
  return FeatureView{ViewId::kSpatial, std::move(x)};
}

FeatureView build_temporal_features(const Dataset& dataset, std::size_t slots) {
  if (!dataset.is_split()) throw Error("temporal features need a train/test split");
  const Index n = static_cast<Index>(dataset.num_pois());
  Matrix x = Matrix::Zero(n, static_cast<Index>(slots));
  for (const UserSequence& s : dataset.sequences) {
    for (std::size_t k = 0; k < s.train_len; ++k) {
      x(s.visits[k].poi, time_slot(s.visits[k].timestamp, slots)) += 1.0;
    }
  }
  for (Index i = 0; i < n; ++i) {
    const double total = x.row(i).sum();
    if (total > 0.0) {
      x.row(i) /= total;
    } else {
      // POI seen only in test visits: no training signal, so no slot is preferred.
      x.row(i).setConstant(1.0 / static_cast<double>(slots));
    }
  }
  return FeatureView{ViewId::kTemporal, std::move(x)};
}

void write_dataset(std::ostream& out, const Dataset& ds, std::size_t slots) {
  // Layout (tab-separated, one record per line):
  //   bigsl-dataset 1
  //   users M / pois N / checkins C / slots S / split_ratio R
  //   P <index> <poi id> <lat> <lon>                  (N lines)
  //   U <index> <user id> <train_len> <visit count>   (M blocks)
  //   V <poi index> <unix seconds>                    (visit count lines per block)
  out << "bigsl-dataset\t1\n";
  out << "users\t" << ds.num_users() << "\n";
  out << "pois\t" << ds.num_pois() << "\n";
  out << "checkins\t" << ds.num_checkins() << "\n";
  out << "slots\t" << slots << "\n";
  out << "split_ratio\t" << format_double(ds.split_ratio) << "\n";
  for (std::size_t i = 0; i < ds.pois.size(); ++i) {
    const Poi& p = ds.pois[i];
    out << "P\t" << i << "\t" << p.id << "\t" << format_double(p.latitude) << "\t" << format_double(p.longitude)
        << "\n";
  }
  for (const UserSequence& s : ds.sequences) {
    out << "U\t" << s.user << "\t" << ds.users[s.user] << "\t" << s.train_len << "\t" << s.visits.size() << "\n";
    for (const Visit& v : s.visits) out << "V\t" << v.poi << "\t" << v.timestamp << "\n";
  }
}

Dataset read_dataset(std::istream& in, std::size_t* slots_out) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw FormatError("dataset file truncated after line " + std::to_string(line_no));
    ++line_no;
    return split_tabs(line);
  };
  auto header = [&](const char* key) -> std::string {
    auto f = next();
    if (f.size() != 2 || f[0] != key) throw FormatError(std::string("expected header '") + key + "' at line " + std::to_string(line_no));
    return std::string(f[1]);
  };
  auto to_size = [&](const std::string& s) -> std::size_t {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad count at line " + std::to_string(line_no));
    return v;
  };
  if (header("bigsl-dataset") != "1") throw FormatError("unsupported dataset version");
  const std::size_t m = to_size(header("users"));
  const std::size_t n = to_size(header("pois"));
  const std::size_t c = to_size(header("checkins"));
  const std::size_t slots = to_size(header("slots"));
  Dataset ds;
  {
    const std::string r = header("split_ratio");
    if (!parse_double(r, ds.split_ratio)) throw FormatError("bad split ratio");
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto f = next();
    Poi p;
    if (f.size() != 5 || f[0] != "P" || to_size(std::string(f[1])) != i || !parse_double(f[3], p.latitude) ||
        !parse_double(f[4], p.longitude)) {
      throw FormatError("bad POI record at line " + std::to_string(line_no));
    }
    p.id = std::string(f[2]);
    ds.pois.push_back(std::move(p));
  }
  std::size_t total = 0;
  for (std::size_t u = 0; u < m; ++u) {
    auto f = next();
    if (f.size() != 5 || f[0] != "U" || to_size(std::string(f[1])) != u) {
      throw FormatError("bad user record at line " + std::to_string(line_no));
    }
    ds.users.emplace_back(f[2]);
    UserSequence s;
    s.user = static_cast<int>(u);
    s.train_len = to_size(std::string(f[3]));
    const std::size_t len = to_size(std::string(f[4]));
    for (std::size_t k = 0; k < len; ++k) {
      auto v = next();
      Visit visit;
      int poi = 0;
      long long ts = 0;
      if (v.size() != 3 || v[0] != "V" || !parse_int(v[1], poi) ||
          std::from_chars(v[2].data(), v[2].data() + v[2].size(), ts).ec != std::errc() || poi < 0 ||
          static_cast<std::size_t>(poi) >= n) {
        throw FormatError("bad visit record at line " + std::to_string(line_no));
      }
      visit.poi = poi;
      visit.timestamp = ts;
      s.visits.push_back(visit);
    }
    if (s.train_len > len) throw FormatError("train split longer than sequence for user " + ds.users.back());
    total += len;
    ds.sequences.push_back(std::move(s));
  }
  if (total != c) throw FormatError("check-in count does not match header");
  if (slots_out) *slots_out = slots;
  return ds;
}

void save_dataset(const std::string& path, const Dataset& dataset, std::size_t slots) {
  std::ostringstream out;
  write_dataset(out, dataset, slots);
  write_file_atomic(path, out.str());
}

Dataset load_dataset(const std::string& path, std::size_t* slots) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset: " + path);
  return read_dataset(in, slots);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace bigsl
