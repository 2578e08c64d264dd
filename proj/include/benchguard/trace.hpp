#pragma once

// Device timeline analysis.
//
// A trace is a list of complete events (Chrome trace-event format, "ph":"X").
// decompose() splits a computation region of known wall time into
//
//   active    union of kernel and device-to-device copy intervals
//   movement  union of host<->device copies, minus the active union
//   idle      everything else
//
// Overlap between compute and copies is attributed to compute. All interval
// arithmetic is in integer microseconds; only the final fractions are
// floating point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "benchguard/errors.hpp"
#include "benchguard/workload.hpp"

namespace benchguard {

enum class EventCategory { kernel, memcpy_h2d, memcpy_d2h, memcpy_d2d, other };

inline std::string_view to_string(EventCategory c) {
  switch (c) {
    case EventCategory::kernel: return "kernel";
    case EventCategory::memcpy_h2d: return "memcpy_h2d";
    case EventCategory::memcpy_d2h: return "memcpy_d2h";
    case EventCategory::memcpy_d2d: return "memcpy_d2d";
    case EventCategory::other: return "other";
  }
  return "other";
}

struct TraceEvent {
  std::int64_t stream_id = 0;
  EventCategory category = EventCategory::other;
  std::string name;
  std::int64_t start_us = 0;
  std::int64_t duration_us = 0;

  std::int64_t end_us() const { return start_us + duration_us; }
  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Maps a Chrome trace (cat, name) pair to an event category.
inline EventCategory classify_event(std::string_view cat, std::string_view name) {
  if (cat.find("kernel") != std::string_view::npos) return EventCategory::kernel;
  if (cat.find("gpu_memcpy") != std::string_view::npos) {
    if (name.find("HtoD") != std::string_view::npos) return EventCategory::memcpy_h2d;
    if (name.find("DtoH") != std::string_view::npos) return EventCategory::memcpy_d2h;
    if (name.find("DtoD") != std::string_view::npos) return EventCategory::memcpy_d2d;
  }
  return EventCategory::other;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Timestamps may be emitted as JSON numbers with a fractional part; they are
// rounded to the nearest microsecond. Strings and other types are rejected.
inline std::int64_t trace_microseconds(const nlohmann::json& rec, const char* key, std::ptrdiff_t index) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(std::string("missing '") + key + "'", index);
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) {
    double v = it->get<double>();
    if (!std::isfinite(v)) throw ParseError(std::string("non-finite '") + key + "'", index);
    return std::llround(v);
  }
  throw ParseError(std::string("non-numeric '") + key + "'", index);
}

}  // namespace detail

inline std::vector<TraceEvent> parse_trace_json(const nlohmann::json& doc) {
  const nlohmann::json* events = &doc;
  if (doc.is_object()) {
    auto it = doc.find("traceEvents");
    if (it == doc.end()) throw ParseError("object trace without 'traceEvents'");
    events = &*it;
  }
  if (!events->is_array()) throw ParseError("trace events must be a JSON array");

  std::vector<TraceEvent> out;
  std::ptrdiff_t index = 0;
  for (const auto& rec : *events) {
    if (!rec.is_object()) throw ParseError("event is not an object", index);
    auto ph = rec.find("ph");
    if (ph == rec.end() || !ph->is_string()) throw ParseError("missing 'ph'", index);
    if (ph->get<std::string>() != "X") {  // metadata, instants, counters
      ++index;
      continue;
    }
    TraceEvent ev;
    ev.start_us = detail::trace_microseconds(rec, "ts", index);
    ev.duration_us = detail::trace_microseconds(rec, "dur", index);
    if (ev.start_us < 0) throw ParseError("negative timestamp", index);
    if (ev.duration_us < 0) throw ParseError("negative duration", index);
    std::string cat, name;
    if (auto it = rec.find("cat"); it != rec.end() && it->is_string()) cat = it->get<std::string>();
    if (auto it = rec.find("name"); it != rec.end() && it->is_string()) name = it->get<std::string>();
    if (auto it = rec.find("tid"); it != rec.end()) {
      if (!it->is_number_integer()) throw ParseError("non-integer 'tid'", index);
      ev.stream_id = it->get<std::int64_t>();
    }
    ev.category = classify_event(cat, name);
    ev.name = std::move(name);
    out.push_back(std::move(ev));
    ++index;
  }
  return out;
}

inline std::vector<TraceEvent> parse_trace(std::string_view text) {
  auto doc = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ParseError("trace is not valid JSON");
  return parse_trace_json(doc);
}

inline std::vector<TraceEvent> parse_trace_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("trace file does not exist: " + path.string());
  return parse_trace(read_file(path));
}

inline std::string_view chrome_category(EventCategory c) {
  switch (c) {
    case EventCategory::kernel: return "kernel";
    case EventCategory::memcpy_h2d:
    case EventCategory::memcpy_d2h:
    case EventCategory::memcpy_d2d: return "gpu_memcpy";
    case EventCategory::other: return "cuda_runtime";
  }
  return "cuda_runtime";
}

inline nlohmann::ordered_json trace_to_json(const std::vector<TraceEvent>& events) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& ev : events) {
    nlohmann::ordered_json j;
    // Copy direction is read back from the name, so make sure it carries one.
    std::string name = ev.name;
    if (classify_event(chrome_category(ev.category), name) != ev.category) {
      const char* dir = ev.category == EventCategory::memcpy_h2d   ? "HtoD"
                        : ev.category == EventCategory::memcpy_d2h ? "DtoH"
                                                                   : "DtoD";
      name = std::string("Memcpy ") + dir;
    }
    j["name"] = name;
    j["cat"] = chrome_category(ev.category);
    j["ph"] = "X";
    j["ts"] = ev.start_us;
    j["dur"] = ev.duration_us;
    j["pid"] = 0;
    j["tid"] = ev.stream_id;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline void write_trace_file(const std::filesystem::path& path, const std::vector<TraceEvent>& events) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write trace " + path.string());
  out << trace_to_json(events).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Interval sets

struct Interval {
  std::int64_t begin = 0;
  std::int64_t end = 0;  // exclusive

  std::int64_t length() const { return end - begin; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Disjoint, sorted, non-adjacent half-open intervals.
class IntervalSet {
 public:
  IntervalSet() = default;

  // Accepts arbitrary (possibly overlapping, unsorted) intervals. Empty
  // intervals are dropped.
  static IntervalSet from_unsorted(std::vector<Interval> raw) {
    std::erase_if(raw, [](const Interval& i) { return i.end <= i.begin; });
    std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
    IntervalSet s;
    for (const auto& iv : raw) {
      if (!s.items_.empty() && iv.begin <= s.items_.back().end)
        s.items_.back().end = std::max(s.items_.back().end, iv.end);
      else
        s.items_.push_back(iv);
    }
    return s;
  }

  const std::vector<Interval>& intervals() const { return items_; }
  bool empty() const { return items_.empty(); }

  std::int64_t total_length() const {
    std::int64_t n = 0;
    for (const auto& iv : items_) n += iv.length();
    return n;
  }

  IntervalSet intersect(const IntervalSet& other) const {
    IntervalSet out;
    std::size_t i = 0, j = 0;
    while (i < items_.size() && j < other.items_.size()) {
      auto b = std::max(items_[i].begin, other.items_[j].begin);
      auto e = std::min(items_[i].end, other.items_[j].end);
      if (b < e) out.items_.push_back({b, e});
      if (items_[i].end < other.items_[j].end)
        ++i;
      else
        ++j;
    }
    return out;
  }

  IntervalSet subtract(const IntervalSet& other) const {
    IntervalSet out;
    std::size_t j = 0;
    for (auto iv : items_) {
      while (j < other.items_.size() && other.items_[j].end <= iv.begin) ++j;
      auto cur = iv.begin;
      for (auto k = j; k < other.items_.size() && other.items_[k].begin < iv.end; ++k) {
        if (other.items_[k].begin > cur) out.items_.push_back({cur, other.items_[k].begin});
        cur = std::max(cur, other.items_[k].end);
      }
      if (cur < iv.end) out.items_.push_back({cur, iv.end});
    }
    return out;
  }

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

 private:
  std::vector<Interval> items_;
};

// Union of [start, start+duration) over events whose category is in `cats`,
// merged across streams.
inline IntervalSet union_intervals(const std::vector<TraceEvent>& events,
                                   std::initializer_list<EventCategory> cats) {
  std::vector<Interval> raw;
  for (const auto& ev : events)
    if (std::find(cats.begin(), cats.end(), ev.category) != cats.end())
      raw.push_back({ev.start_us, ev.end_us()});
  return IntervalSet::from_unsorted(std::move(raw));
}

// ---------------------------------------------------------------------------
// Decomposition

struct Decomposition {
  double active_fraction = 0.0;
  double movement_fraction = 0.0;
  double idle_fraction = 1.0;
  std::int64_t wall_time_us = 0;

  // Integer microsecond components; active + movement + idle == wall_time.
  std::int64_t active_us = 0;
  std::int64_t movement_us = 0;
  std::int64_t idle_us = 0;

  // Validates the fractions of a caller-built target decomposition.
  void validate_fractions() const {
    for (double f : {active_fraction, movement_fraction, idle_fraction})
      if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("decomposition fraction outside [0,1]");
    if (std::abs(active_fraction + movement_fraction + idle_fraction - 1.0) > 1e-9)
      throw ValidationError("decomposition fractions do not sum to 1");
  }

  static Decomposition from_fractions(double active, double movement, double idle) {
    Decomposition d;
    d.active_fraction = active;
    d.movement_fraction = movement;
    d.idle_fraction = idle;
    return d;
  }
};

inline Decomposition decompose(const std::vector<TraceEvent>& events, std::int64_t wall_time_us) {
  if (wall_time_us <= 0) throw ValidationError("wall_time must be > 0");
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].start_us < 0 || events[i].duration_us < 0)
      throw ValidationError("event " + std::to_string(i) + " has negative start or duration");
    if (events[i].end_us() > wall_time_us)
      throw ValidationError("event " + std::to_string(i) + " ends at " + std::to_string(events[i].end_us()) +
                            " us, past wall_time " + std::to_string(wall_time_us) + " us");
  }

  auto active = union_intervals(events, {EventCategory::kernel, EventCategory::memcpy_d2d});
  auto copies = union_intervals(events, {EventCategory::memcpy_h2d, EventCategory::memcpy_d2h});
  auto movement = copies.subtract(active);

  Decomposition d;
  d.wall_time_us = wall_time_us;
  d.active_us = active.total_length();
  d.movement_us = movement.total_length();
  d.idle_us = wall_time_us - d.active_us - d.movement_us;
  const auto w = static_cast<double>(wall_time_us);
  d.active_fraction = static_cast<double>(d.active_us) / w;
  d.movement_fraction = static_cast<double>(d.movement_us) / w;
  d.idle_fraction = static_cast<double>(d.idle_us) / w;
  return d;
}

}  // namespace benchguard
