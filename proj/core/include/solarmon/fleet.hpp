#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/model.hpp"

namespace solarmon {

// Static fleet registry: sites and the panels that belong to them. Panels and
// sites are addressed by dense indices in file order.
class Fleet {
 public:
  Fleet() = default;
  // Throws Error(kInvalidArgument) on duplicate ids, orphan panels, or out of
  // range specs.
  Fleet(std::vector<SiteSpec> sites, std::vector<PanelSpec> panels);

  const std::vector<SiteSpec>& sites() const { return sites_; }
  const std::vector<PanelSpec>& panels() const { return panels_; }
  std::size_t panel_count() const { return panels_.size(); }
  std::size_t site_count() const { return sites_.size(); }

  std::optional<std::size_t> panel_index(std::string_view panel_id) const;
  std::optional<std::size_t> site_index(std::string_view site_id) const;
  std::size_t site_of_panel(std::size_t panel_idx) const { return panel_site_[panel_idx]; }
  const std::vector<std::size_t>& panels_of_site(std::size_t site_idx) const {
    return site_panels_[site_idx];
  }

  const PanelSpec* find_panel(std::string_view panel_id) const;
  const SiteSpec* find_site(std::string_view site_id) const;

 private:
  std::vector<SiteSpec> sites_;
  std::vector<PanelSpec> panels_;
  std::map<std::string, std::size_t, std::less<>> panel_by_id_;
  std::map<std::string, std::size_t, std::less<>> site_by_id_;
  std::vector<std::size_t> panel_site_;
  std::vector<std::vector<std::size_t>> site_panels_;
};

struct UniformFleetOptions {
  std::size_t n_sites = 1;
  std::size_t panels_per_site = 10;
  double latitude_deg = -18.14;
  double longitude_deg = 178.44;
  int utc_offset_min = 720;
  double rated_watts_peak = 300.0;
};

// Sites S01.., panels S01-P0001.. at one shared location.
Fleet make_uniform_fleet(const UniformFleetOptions& opts);

// CSV readers. Errors are Error(kMalformed) with "<source>:<line>: ..." text.
std::vector<SiteSpec> parse_sites(std::istream& in, std::string_view source = "sites");
std::vector<PanelSpec> parse_panels(std::istream& in, std::string_view source = "fleet");
Fleet load_fleet(const std::filesystem::path& fleet_file,
                 const std::filesystem::path& sites_file);

void write_sites(std::ostream& out, const std::vector<SiteSpec>& sites);
void write_panels(std::ostream& out, const std::vector<PanelSpec>& panels);

// Shared CSV helpers.
std::vector<std::string> split_csv_line(std::string_view line);
double parse_double_field(std::string_view field, std::string_view what);
std::int64_t parse_int_field(std::string_view field, std::string_view what);
std::string trim(std::string_view s);

}  // namespace solarmon
