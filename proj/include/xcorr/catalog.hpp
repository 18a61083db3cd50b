#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xcorr/error.hpp"
#include "xcorr/points.hpp"

namespace xcorr {

enum class Component { inner, intermediate, outer };

inline std::string_view to_string(Component c) noexcept {
  switch (c) {
    case Component::inner: return "inner";
    case Component::intermediate: return "intermediate";
    case Component::outer: return "outer";
  }
  return "?";
}

inline std::optional<Component> parse_component(std::string_view s) noexcept {
  if (s == "inner") return Component::inner;
  if (s == "intermediate") return Component::intermediate;
  if (s == "outer") return Component::outer;
  return std::nullopt;
}

/// One galaxy: log10 stellar mass, effective radius in kpc, optional redshift.
struct GalaxyRecord {
  double mass = 0.0;
  double size = 0.0;
  std::optional<double> redshift;
  std::string source;
  std::optional<Component> component;

  /// Empty string when the record is valid, otherwise the violated invariant.
  std::string violation() const {
    if (!std::isfinite(mass)) return "mass not finite";
    if (!std::isfinite(size) || !(size > 0.0)) return "size must be finite and > 0";
    if (redshift && (!std::isfinite(*redshift) || *redshift < 0.0)) {
      return "redshift must be finite and >= 0";
    }
    return {};
  }

  friend bool operator==(const GalaxyRecord&, const GalaxyRecord&) = default;
};

struct AxisMeta {
  double mass_min = 0.0, mass_max = 0.0;
  double size_min = 0.0, size_max = 0.0;
};

/// Labeled, immutable list of records. Axis metadata is computed once at
/// construction from the records it describes.
class Catalog {
 public:
  Catalog() = default;

  Catalog(std::string label, std::vector<GalaxyRecord> records)
      : label_(std::move(label)), records_(std::move(records)) {
    for (const auto& r : records_) {
      if (auto why = r.violation(); !why.empty()) {
        throw InvalidArgument("catalog '" + label_ + "': " + why);
      }
    }
    if (!records_.empty()) {
      meta_ = {records_[0].mass, records_[0].mass, records_[0].size, records_[0].size};
      for (const auto& r : records_) {
        meta_.mass_min = std::min(meta_.mass_min, r.mass);
        meta_.mass_max = std::max(meta_.mass_max, r.mass);
        meta_.size_min = std::min(meta_.size_min, r.size);
        meta_.size_max = std::max(meta_.size_max, r.size);
      }
    }
  }

  const std::string& label() const noexcept { return label_; }
  std::span<const GalaxyRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const GalaxyRecord& operator[](std::size_t i) const noexcept { return records_[i]; }
  const AxisMeta& axis_meta() const noexcept { return meta_; }

  /// Same label, records picked by index (repeats allowed).
  Catalog select(std::span<const std::size_t> idx) const {
    std::vector<GalaxyRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(records_.at(i));
    return Catalog(label_, std::move(out));
  }

 private:
  std::string label_;
  std::vector<GalaxyRecord> records_;
  AxisMeta meta_{};
};

// ---------------------------------------------------------------------------
// Delimited-text ingestion

/// Column names in the input header. Mass and size are mandatory.
struct ColumnSchema {
  std::string mass = "mass";
  std::string size = "size";
  std::optional<std::string> redshift;
  std::optional<std::string> source;
  std::optional<std::string> component;
};

struct LoadResult {
  Catalog catalog;
  std::size_t rejected = 0;
  std::vector<std::string> rejections;  // one "line N: reason" per rejected row
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

// RFC-4180-ish: double quotes protect delimiters, "" is a literal quote.
inline std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) noexcept {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\n\t") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Parses a header row plus data rows. Comma or tab delimited (detected from
/// the header). Rows breaking a record invariant are rejected and reported.
inline LoadResult parse_catalog(std::istream& in, const ColumnSchema& schema, std::string label) {
  std::string header;
  if (!std::getline(in, header)) throw IoError("catalog '" + label + "': no header row");
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  const auto names = detail::split_fields(header, delim);

  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  };
  auto required = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw InvalidArgument("catalog '" + label + "': missing column '" + name + "'");
    return *c;
  };
  auto optional = [&](const std::optional<std::string>& name) -> std::optional<std::size_t> {
    if (!name) return std::nullopt;
    return required(*name);
  };

  const auto mass_col = required(schema.mass);
  const auto size_col = required(schema.size);
  const auto z_col = optional(schema.redshift);
  const auto src_col = optional(schema.source);
  const auto comp_col = optional(schema.component);

  LoadResult result;
  std::vector<GalaxyRecord> records;
  std::string line;
  std::size_t line_no = 1;
  auto reject = [&](const std::string& why) {
    ++result.rejected;
    result.rejections.push_back("line " + std::to_string(line_no) + ": " + why);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line, delim);
    if (f.size() != names.size()) {
      reject("expected " + std::to_string(names.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    GalaxyRecord r;
    auto mass = detail::parse_double(f[mass_col]);
    auto size = detail::parse_double(f[size_col]);
    if (!mass || !size) {
      reject("unparsable mass or size");
      continue;
    }
    r.mass = *mass;
    r.size = *size;
    if (z_col && !f[*z_col].empty()) {
      auto z = detail::parse_double(f[*z_col]);
      if (!z) {
        reject("unparsable redshift");
        continue;
      }
      r.redshift = *z;
    }
    r.source = src_col ? f[*src_col] : label;
    if (comp_col && !f[*comp_col].empty()) {
      r.component = parse_component(f[*comp_col]);
      if (!r.component) {
        reject("unknown component '" + f[*comp_col] + "'");
        continue;
      }
    }
    if (auto why = r.violation(); !why.empty()) {
      reject(why);
      continue;
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw InvalidArgument("catalog '" + label + "': zero valid rows");
  result.catalog = Catalog(std::move(label), std::move(records));
  return result;
}

inline LoadResult load_catalog(const std::string& path, const ColumnSchema& schema, std::string label) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog file '" + path + "'");
  return parse_catalog(in, schema, std::move(label));
}

/// Schema matching the layout written by `write_catalog_csv`.
inline ColumnSchema canonical_schema() {
  return ColumnSchema{"mass", "size", "redshift", "source", "component"};
}

/// Fixed column order mass,size,redshift,source,component; 17 significant digits.
inline void write_catalog_csv(std::ostream& out, const Catalog& c) {
  out << "mass,size,redshift,source,component\n";
  for (const auto& r : c.records()) {
    out << detail::format_double(r.mass) << ',' << detail::format_double(r.size) << ',';
    if (r.redshift) out << detail::format_double(*r.redshift);
    out << ',' << detail::csv_quote(r.source) << ',';
    if (r.component) out << to_string(*r.component);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Selection

/// Records with z_lo < z <= z_hi. Every record must carry a redshift.
inline Catalog select_redshift_bin(const Catalog& c, double z_lo, double z_hi) {
  if (!(z_lo < z_hi)) throw InvalidArgument("redshift bin requires z_lo < z_hi");
  std::vector<GalaxyRecord> out;
  for (const auto& r : c.records()) {
    if (!r.redshift) {
      throw InvalidArgument("catalog '" + c.label() + "': record without redshift in redshift selection");
    }
    if (z_lo < *r.redshift && *r.redshift <= z_hi) out.push_back(r);
  }
  return Catalog(c.label(), std::move(out));
}

inline Catalog filter_mass_floor(const Catalog& c, double floor) {
  std::vector<GalaxyRecord> out;
  for (const auto& r : c.records()) {
    if (r.mass >= floor) out.push_back(r);
  }
  return Catalog(c.label(), std::move(out));
}

inline Catalog filter_component(const Catalog& c, Component which) {
  std::vector<GalaxyRecord> out;
  for (const auto& r : c.records()) {
    if (r.component == which) out.push_back(r);
  }
  return Catalog(c.label(), std::move(out));
}

inline Catalog merge_catalogs(std::span<const Catalog> parts, std::string label) {
  std::vector<GalaxyRecord> out;
  for (const auto& c : parts) out.insert(out.end(), c.records().begin(), c.records().end());
  return Catalog(std::move(label), std::move(out));
}

inline Catalog relabel(const Catalog& c, std::string label) {
  return Catalog(std::move(label), {c.records().begin(), c.records().end()});
}

// ---------------------------------------------------------------------------
// Feature space

// pow10 undoes a stored log10, e.g. to measure distances in linear mass.
enum class AxisScale { identity, log10, pow10 };

struct AxisTransform {
  AxisScale scale = AxisScale::identity;
  bool rescale = true;  // min-max to [0,1] after `scale`

  friend bool operator==(const AxisTransform&, const AxisTransform&) = default;
};

/// Axis 0 is mass (already log10), axis 1 is size.
struct AxisTransformSpec {
  std::array<AxisTransform, 2> axes{};

  std::string canonical() const {
    std::string s;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      if (d) s += ';';
      s += axes[d].scale == AxisScale::log10 ? "log10" : axes[d].scale == AxisScale::pow10 ? "pow10" : "identity";
      s += axes[d].rescale ? "+minmax" : "";
    }
    return s;
  }

  friend bool operator==(const AxisTransformSpec&, const AxisTransformSpec&) = default;
};

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline Point<2> scaled_point(const GalaxyRecord& r, const AxisTransformSpec& t) {
  Point<2> p{r.mass, r.size};
  for (std::size_t d = 0; d < 2; ++d) {
    if (t.axes[d].scale == AxisScale::log10) {
      if (!(p[d] > 0.0)) {
        throw InvalidArgument("log10 transform of non-positive value on axis " + std::to_string(d));
      }
      p[d] = std::log10(p[d]);
    } else if (t.axes[d].scale == AxisScale::pow10) {
      p[d] = std::pow(10.0, p[d]);
      if (!std::isfinite(p[d])) throw InvalidArgument("pow10 transform overflows on axis " + std::to_string(d));
    }
  }
  return p;
}

}  // namespace detail

/// Per-axis range after the log step, pooled over several catalogs. Passing
/// the pooled range to `to_point_set` puts every catalog on one common scale.
inline AxisRange<2> scaled_range(std::span<const Catalog* const> catalogs, const AxisTransformSpec& t) {
  AxisRange<2> r{};
  bool first = true;
  for (const Catalog* c : catalogs) {
    for (const auto& rec : c->records()) {
      const auto p = detail::scaled_point(rec, t);
      for (std::size_t d = 0; d < 2; ++d) {
        if (first || p[d] < r.lo[d]) r.lo[d] = p[d];
        if (first || p[d] > r.hi[d]) r.hi[d] = p[d];
      }
      first = false;
    }
  }
  if (first) throw InvalidArgument("scaled_range: no records");
  return r;
}

/// One point per record, in record order. Rescaled axes use `ranges` when
/// given, otherwise the catalog's own range.
inline PointSet to_point_set(const Catalog& c, const AxisTransformSpec& t,
                             std::optional<AxisRange<2>> ranges = std::nullopt) {
  std::vector<Point<2>> pts;
  pts.reserve(c.size());
  for (const auto& r : c.records()) pts.push_back(detail::scaled_point(r, t));

  const bool any_rescale = t.axes[0].rescale || t.axes[1].rescale;
  std::string prov = c.label() + "#" + t.canonical();
  if (any_rescale && !pts.empty()) {
    if (!ranges) {
      const Catalog* self[] = {&c};
      ranges = scaled_range(self, t);
    }
    for (std::size_t d = 0; d < 2; ++d) {
      if (!t.axes[d].rescale) continue;
      const double lo = ranges->lo[d], hi = ranges->hi[d];
      if (!(hi > lo)) {
        throw InvalidArgument("min-max rescale of degenerate axis " + std::to_string(d) + " in '" +
                              c.label() + "'");
      }
      for (auto& p : pts) p[d] = (p[d] - lo) / (hi - lo);
      prov += "|" + detail::format_double(lo) + ":" + detail::format_double(hi);
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(prov)));
  return PointSet(std::move(pts), c.label() + "#" + hex);
}

}  // namespace xcorr
