#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/io.hpp"

namespace rlogist::slidegen {

struct GenConfig {
  std::size_t dim = 16;
  std::size_t sub_patches = 16;
  std::size_t min_regions = 32;
  std::size_t max_regions = 128;
  double min_positive_region_fraction = 0.05;
  double max_positive_region_fraction = 0.20;
  double positive_subpatch_fraction = 0.5;
  // Shift along the first basis direction carried by positive sub-patches.
  double class_signal = 2.0;
  double sigma_sub = 1.0;
  double sigma_scan = 0.55;
  double sigma_slide = 1.0;
  double class_balance = 0.5;
  std::uint64_t seed = 1;

  // Zero noise scales are accepted so degenerate limits can be generated.
  void validate() const {
    if (dim == 0 || sub_patches == 0) throw ConfigError("gen: dim and sub_patches must be positive");
    if (min_regions == 0 || min_regions > max_regions) throw ConfigError("gen: region range is empty");
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(min_positive_region_fraction) || !in_unit(max_positive_region_fraction) ||
        min_positive_region_fraction > max_positive_region_fraction) {
      throw ConfigError("gen: positive region fraction range must lie in (0,1)");
    }
    if (!(positive_subpatch_fraction > 0.0 && positive_subpatch_fraction <= 1.0)) {
      throw ConfigError("gen: positive sub-patch fraction must lie in (0,1]");
    }
    if (!in_unit(class_balance)) throw ConfigError("gen: class balance must lie in (0,1)");
    if (class_signal < 0.0 || sigma_sub < 0.0 || sigma_scan < 0.0 || sigma_slide < 0.0) {
      throw ConfigError("gen: scales must be nonnegative");
    }
  }

  std::string digest() const { return io::fnv1a_hex(nlohmann::json(*this).dump()); }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(GenConfig, dim, sub_patches, min_regions, max_regions,
                                              min_positive_region_fraction, max_positive_region_fraction,
                                              positive_subpatch_fraction, class_signal, sigma_sub, sigma_scan,
                                              sigma_slide, class_balance, seed)
};

}  // namespace rlogist::slidegen
