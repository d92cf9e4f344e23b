#include "solarmon/fleet.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "solarmon/number_format.hpp"

namespace solarmon {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

std::string where(std::string_view source, std::size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no) + ": ";
}

template <typename Row, typename ParseRow>
std::vector<Row> parse_rows(std::istream& in, std::string_view source,
                            std::string_view header_first_field,
                            std::size_t min_fields, std::size_t max_fields,
                            ParseRow parse_row) {
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(t);
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformed, where(source, line_no) + e.what());
    }
    if (first) {
      first = false;
      if (!fields.empty() && fields[0] == header_first_field) continue;
    }
    if (fields.size() < min_fields || fields.size() > max_fields) {
      throw Error(ErrorCode::kMalformed,
                  where(source, line_no) + "expected " + std::to_string(min_fields) +
                      " fields, got " + std::to_string(fields.size()));
    }
    try {
      rows.push_back(parse_row(fields));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformed, where(source, line_no) + e.what());
    }
  }
  return rows;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

// Fields may be double-quoted, with "" for a literal quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos < line.size() && line[pos] == '"') {
      std::string field;
      std::size_t i = pos + 1;
      for (; i < line.size(); ++i) {
        if (line[i] != '"') {
          field += line[i];
        } else if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          break;
        }
      }
      if (i >= line.size()) throw Error(ErrorCode::kMalformed, "unterminated quoted field");
      const std::size_t comma = line.find(',', i + 1);
      if (!trim(line.substr(i + 1, comma == std::string_view::npos ? line.npos : comma - i - 1)).empty()) {
        throw Error(ErrorCode::kMalformed, "text after quoted field");
      }
      out.push_back(std::move(field));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
      continue;
    }
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos
                                                                       : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

namespace {

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"") == std::string_view::npos && trim(v) == v) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

double parse_double_field(std::string_view field, std::string_view what) {
  auto v = parse_double(field);
  if (!v || !std::isfinite(*v)) {
    throw Error(ErrorCode::kMalformed,
                "bad " + std::string(what) + " '" + std::string(field) + "'");
  }
  return *v;
}

std::int64_t parse_int_field(std::string_view field, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw Error(ErrorCode::kMalformed,
                "bad " + std::string(what) + " '" + std::string(field) + "'");
  }
  return v;
}

Fleet::Fleet(std::vector<SiteSpec> sites, std::vector<PanelSpec> panels)
    : sites_(std::move(sites)), panels_(std::move(panels)) {
  site_panels_.resize(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    require(is_valid_id(s.site_id), "invalid site id '" + s.site_id + "'");
    require(s.latitude_deg >= -90 && s.latitude_deg <= 90, "latitude out of range: " + s.site_id);
    require(s.longitude_deg >= -180 && s.longitude_deg <= 180,
            "longitude out of range: " + s.site_id);
    require(s.utc_offset_min >= -720 && s.utc_offset_min <= 840,
            "utc offset out of range: " + s.site_id);
    require(site_by_id_.emplace(s.site_id, i).second, "duplicate site id " + s.site_id);
  }
  panel_site_.reserve(panels_.size());
  for (std::size_t i = 0; i < panels_.size(); ++i) {
    const auto& p = panels_[i];
    require(is_valid_id(p.panel_id), "invalid panel id '" + p.panel_id + "'");
    require(p.rated_watts_peak > 0, "rated power must be positive: " + p.panel_id);
    require(p.tilt_deg >= 0 && p.tilt_deg <= 90, "tilt out of range: " + p.panel_id);
    require(p.azimuth_deg >= 0 && p.azimuth_deg < 360, "azimuth out of range: " + p.panel_id);
    require(p.temp_coeff_per_c <= 0, "temperature coefficient must be <= 0: " + p.panel_id);
    require(panel_by_id_.emplace(p.panel_id, i).second, "duplicate panel id " + p.panel_id);
    auto site = site_by_id_.find(p.site_id);
    require(site != site_by_id_.end(), "panel " + p.panel_id + " has unknown site " + p.site_id);
    panel_site_.push_back(site->second);
    site_panels_[site->second].push_back(i);
  }
}

std::optional<std::size_t> Fleet::panel_index(std::string_view panel_id) const {
  auto it = panel_by_id_.find(panel_id);
  if (it == panel_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Fleet::site_index(std::string_view site_id) const {
  auto it = site_by_id_.find(site_id);
  if (it == site_by_id_.end()) return std::nullopt;
  return it->second;
}

const PanelSpec* Fleet::find_panel(std::string_view panel_id) const {
  auto idx = panel_index(panel_id);
  return idx ? &panels_[*idx] : nullptr;
}

const SiteSpec* Fleet::find_site(std::string_view site_id) const {
  auto idx = site_index(site_id);
  return idx ? &sites_[*idx] : nullptr;
}

Fleet make_uniform_fleet(const UniformFleetOptions& opts) {
  std::vector<SiteSpec> sites;
  std::vector<PanelSpec> panels;
  char buf[32];
  for (std::size_t s = 0; s < opts.n_sites; ++s) {
    std::snprintf(buf, sizeof buf, "S%02zu", s + 1);
    const std::string site_id = buf;
    sites.push_back({site_id, "Site " + std::to_string(s + 1), opts.latitude_deg,
                     opts.longitude_deg, opts.utc_offset_min});
    for (std::size_t p = 0; p < opts.panels_per_site; ++p) {
      std::snprintf(buf, sizeof buf, "-P%04zu", p + 1);
      PanelSpec spec;
      spec.panel_id = site_id + buf;
      spec.site_id = site_id;
      spec.rated_watts_peak = opts.rated_watts_peak;
      spec.tilt_deg = 15;
      spec.azimuth_deg = 0;
      panels.push_back(std::move(spec));
    }
  }
  return Fleet(std::move(sites), std::move(panels));
}

std::vector<SiteSpec> parse_sites(std::istream& in, std::string_view source) {
  return parse_rows<SiteSpec>(in, source, "site_id", 5, 5, [](const auto& f) {
    SiteSpec s;
    s.site_id = f[0];
    s.name = f[1];
    s.latitude_deg = parse_double_field(f[2], "latitude");
    s.longitude_deg = parse_double_field(f[3], "longitude");
    s.utc_offset_min = static_cast<int>(parse_int_field(f[4], "utc_offset_min"));
    return s;
  });
}

std::vector<PanelSpec> parse_panels(std::istream& in, std::string_view source) {
  return parse_rows<PanelSpec>(in, source, "panel_id", 5, 6, [](const auto& f) {
    PanelSpec p;
    p.panel_id = f[0];
    p.site_id = f[1];
    p.rated_watts_peak = parse_double_field(f[2], "rated_wp");
    p.tilt_deg = parse_double_field(f[3], "tilt");
    p.azimuth_deg = parse_double_field(f[4], "azimuth");
    if (f.size() == 6 && !f[5].empty()) {
      p.temp_coeff_per_c = parse_double_field(f[5], "temp_coeff");
    }
    return p;
  });
}

Fleet load_fleet(const std::filesystem::path& fleet_file,
                 const std::filesystem::path& sites_file) {
  std::ifstream fin(fleet_file);
  if (!fin) throw Error(ErrorCode::kIo, "cannot open fleet file " + fleet_file.string());
  std::ifstream sin(sites_file);
  if (!sin) throw Error(ErrorCode::kIo, "cannot open sites file " + sites_file.string());
  auto sites = parse_sites(sin, sites_file.string());
  auto panels = parse_panels(fin, fleet_file.string());
  return Fleet(std::move(sites), std::move(panels));
}

void write_sites(std::ostream& out, const std::vector<SiteSpec>& sites) {
  out << "site_id,name,lat,lon,utc_offset_min\n";
  for (const auto& s : sites) {
    out << s.site_id << ',' << csv_field(s.name) << ',' << format_double(s.latitude_deg) << ','
        << format_double(s.longitude_deg) << ',' << s.utc_offset_min << '\n';
  }
}

void write_panels(std::ostream& out, const std::vector<PanelSpec>& panels) {
  out << "panel_id,site_id,rated_wp,tilt,azimuth,temp_coeff\n";
  for (const auto& p : panels) {
    out << p.panel_id << ',' << p.site_id << ',' << format_double(p.rated_watts_peak) << ','
        << format_double(p.tilt_deg) << ',' << format_double(p.azimuth_deg) << ','
        << format_double(p.temp_coeff_per_c) << '\n';
  }
}

}  // namespace solarmon
