#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/io.hpp"
#include "rlogist/numkernel/tensor.hpp"

namespace rlogist::slidegen {

// One slide's two-level feature pyramid.
//
// scan_features holds one low-magnification vector per region (N x d). sub_features holds
// the K high-magnification vectors of every region, region-major then sub-patch then
// dimension. region_truth marks planted positive regions and is never shown to a learner.
struct SlideBundle {
  std::string slide_id;
  std::uint8_t label = 0;
  std::size_t n_regions = 0;
  std::size_t sub_patches = 0;
  std::size_t dim = 0;
  nk::Tensor<float> scan_features;
  std::vector<float> sub_features;
  std::optional<std::vector<std::uint8_t>> region_truth;

  std::span<const float> region_sub(std::size_t region) const {
    const std::size_t stride = sub_patches * dim;
    return {sub_features.data() + region * stride, stride};
  }

  nk::Tensor<float> region_sub_tensor(std::size_t region) const {
    const auto s = region_sub(region);
    return nk::Tensor<float>(sub_patches, dim, std::vector<float>(s.begin(), s.end()));
  }

  // Plain mean of a region's sub-patch features.
  std::vector<float> region_mean(std::size_t region) const {
    const auto s = region_sub(region);
    std::vector<double> acc(dim, 0.0);
    for (std::size_t j = 0; j < sub_patches; ++j)
      for (std::size_t c = 0; c < dim; ++c) acc[c] += s[j * dim + c];
    std::vector<float> out(dim);
    for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(sub_patches));
    return out;
  }

  void validate() const {
    if (n_regions == 0 || sub_patches == 0 || dim == 0) {
      throw FormatError(FormatErrorKind::dimension_mismatch, "bundle '" + slide_id + "' has a zero dimension");
    }
    if (scan_features.rows() != n_regions || scan_features.cols() != dim) {
      throw FormatError(FormatErrorKind::dimension_mismatch,
                        "bundle '" + slide_id + "': scan features are " + scan_features.shape_string());
    }
    if (sub_features.size() != n_regions * sub_patches * dim) {
      throw FormatError(FormatErrorKind::dimension_mismatch, "bundle '" + slide_id + "': sub feature length mismatch");
    }
    if (label > 1) throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': label must be 0 or 1");
    if (!scan_features.all_finite()) {
      throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': non-finite scan feature");
    }
    for (float v : sub_features) {
      if (!std::isfinite(v)) throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': non-finite sub feature");
    }
    if (region_truth) {
      if (region_truth->size() != n_regions) {
        throw FormatError(FormatErrorKind::dimension_mismatch, "bundle '" + slide_id + "': region truth length mismatch");
      }
      std::size_t positives = 0;
      for (auto z : *region_truth) {
        if (z > 1) throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': region truth must be 0 or 1");
        positives += z;
      }
      if (label == 0 && positives != 0) {
        throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': negative slide with positive regions");
      }
      if (label == 1 && positives == 0) {
        throw FormatError(FormatErrorKind::invalid_value, "bundle '" + slide_id + "': positive slide without positive regions");
      }
    }
  }

  friend bool operator==(const SlideBundle&, const SlideBundle&) = default;
};

inline constexpr char kBundleMagic[4] = {'R', 'L', 'G', 'B'};
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::size_t kBundleHeaderBytes = 22;

inline std::size_t bundle_byte_size(std::size_t n, std::size_t k, std::size_t d, bool has_truth) {
  return kBundleHeaderBytes + 4 * n * d + 4 * n * k * d + (has_truth ? n : 0);
}

inline std::string encode_bundle(const SlideBundle& b) {
  b.validate();
  io::ByteWriter w;
  w.bytes(std::string_view(kBundleMagic, 4));
  w.u32(kBundleVersion);
  w.u32(static_cast<std::uint32_t>(b.n_regions));
  w.u32(static_cast<std::uint32_t>(b.sub_patches));
  w.u32(static_cast<std::uint32_t>(b.dim));
  w.u8(b.label);
  w.u8(b.region_truth ? 1 : 0);
  w.f32s(b.scan_features.data());
  w.f32s(b.sub_features);
  if (b.region_truth) {
    for (auto z : *b.region_truth) w.u8(z);
  }
  return w.buffer();
}

inline SlideBundle decode_bundle(std::string_view data, const std::string& slide_id) {
  const std::string ctx = "bundle '" + slide_id + "'";
  io::ByteReader r(data, ctx);
  r.require(kBundleHeaderBytes, kBundleHeaderBytes);
  const auto magic = r.bytes(4);
  if (magic != std::string_view(kBundleMagic, 4)) throw FormatError(FormatErrorKind::bad_magic, ctx + ": bad magic");
  const auto version = r.u32();
  if (version != kBundleVersion) {
    throw FormatError(FormatErrorKind::unsupported_version,
                      ctx + ": unsupported version " + std::to_string(version));
  }
  SlideBundle b;
  b.slide_id = slide_id;
  b.n_regions = r.u32();
  b.sub_patches = r.u32();
  b.dim = r.u32();
  b.label = r.u8();
  const auto has_truth = r.u8();
  if (b.n_regions == 0 || b.sub_patches == 0 || b.dim == 0) {
    throw FormatError(FormatErrorKind::dimension_mismatch, ctx + ": zero dimension in header");
  }
  if (has_truth > 1) throw FormatError(FormatErrorKind::invalid_value, ctx + ": bad region-truth flag");
  const auto expected = bundle_byte_size(b.n_regions, b.sub_patches, b.dim, has_truth == 1);
  if (data.size() < expected) {
    throw FormatError(FormatErrorKind::truncated, ctx + ": truncated file, expected " + std::to_string(expected) +
                                                      " bytes but found " + std::to_string(data.size()));
  }
  if (data.size() > expected) {
    throw FormatError(FormatErrorKind::dimension_mismatch, ctx + ": " + std::to_string(data.size() - expected) +
                                                               " trailing bytes beyond the declared dimensions");
  }
  b.scan_features = nk::Tensor<float>(b.n_regions, b.dim);
  r.f32s(b.scan_features.data());
  b.sub_features.resize(b.n_regions * b.sub_patches * b.dim);
  r.f32s(b.sub_features);
  if (has_truth) {
    std::vector<std::uint8_t> truth(b.n_regions);
    for (auto& z : truth) z = r.u8();
    b.region_truth = std::move(truth);
  }
  b.validate();
  return b;
}

inline void write_bundle(const SlideBundle& bundle, const std::filesystem::path& path) {
  io::write_file(path, encode_bundle(bundle));
}

// The slide id defaults to the file stem.
inline SlideBundle read_bundle(const std::filesystem::path& path, std::optional<std::string> slide_id = std::nullopt) {
  return decode_bundle(io::read_file(path), slide_id.value_or(path.stem().string()));
}

}  // namespace rlogist::slidegen
