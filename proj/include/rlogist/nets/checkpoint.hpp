#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/io.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/numkernel/adam.hpp"

namespace rlogist::nets {

// File layout (little-endian):
//   "RLGN" | u32 version | u32 descriptor length | descriptor JSON
//   then per block: u32 name length | name | rows*cols float32
// The descriptor lists every block's name and shape in file order, plus free-form metadata.
inline constexpr char kCheckpointMagic[4] = {'R', 'L', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlock {
  std::string name;
  nk::Tensor<float> value;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedBlock> blocks;

  const NamedBlock* find(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.name == name) return &b;
    return nullptr;
  }
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json desc;
  desc["meta"] = ck.meta;
  desc["blocks"] = nlohmann::json::array();
  for (const auto& b : ck.blocks) desc["blocks"].push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}});
  const std::string text = desc.dump();
  io::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& b : ck.blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name);
    w.f32s(b.value.data());
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::string_view data, const std::string& context) {
  io::ByteReader r(data, context);
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError(FormatErrorKind::bad_magic, context + ": not a network checkpoint");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::unsupported_version, context + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = r.u32();
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(r.bytes(len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatErrorKind::invalid_value, context + ": bad descriptor: " + e.what());
  }
  Checkpoint ck;
  ck.meta = desc.value("meta", nlohmann::json::object());
  for (const auto& b : desc.at("blocks")) {
    const auto name = b.at("name").get<std::string>();
    const auto rows = b.at("rows").get<std::size_t>(), cols = b.at("cols").get<std::size_t>();
    const auto stored = r.bytes(r.u32());
    if (stored != name) throw FormatError(FormatErrorKind::invalid_value, context + ": block '" + std::string(stored) + "' out of order");
    nk::Tensor<float> t(rows, cols);
    r.f32s(t.data());
    ck.blocks.push_back({name, std::move(t)});
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::dimension_mismatch, context + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), "checkpoint '" + path.string() + "'");
}

inline void append_params(Checkpoint& ck, const nk::ParamRefs<float>& params, const std::string& prefix = "") {
  for (const auto* p : params) ck.blocks.push_back({prefix + p->name, p->value});
}

// Copies blocks into existing parameters, matching by name and shape.
inline void restore_params(const Checkpoint& ck, const nk::ParamRefs<float>& params, const std::string& prefix = "") {
  for (auto* p : params) {
    const auto* b = ck.find(prefix + p->name);
    if (!b) throw FormatError(FormatErrorKind::invalid_value, "checkpoint lacks block '" + prefix + p->name + "'");
    if (b->value.shape() != p->value.shape()) {
      throw FormatError(FormatErrorKind::dimension_mismatch, "checkpoint block '" + b->name + "' has shape " +
                                                                 b->value.shape_string() + ", expected " +
                                                                 p->value.shape_string());
    }
    p->value = b->value;
  }
}

inline void append_adam(Checkpoint& ck, const nk::AdamState<float>& s, const std::string& key) {
  ck.meta["optimizers"][key] = {{"step_count", s.step_count},
                                {"learning_rate", s.learning_rate},
                                {"epsilon", s.epsilon},
                                {"beta1", s.beta1},
                                {"beta2", s.beta2},
                                {"slots", s.first_moment.size()}};
  for (std::size_t k = 0; k < s.first_moment.size(); ++k) {
    ck.blocks.push_back({key + ".m." + std::to_string(k), s.first_moment[k]});
    ck.blocks.push_back({key + ".v." + std::to_string(k), s.second_moment[k]});
  }
}

inline nk::AdamState<float> restore_adam(const Checkpoint& ck, const std::string& key) {
  const auto& j = ck.meta.at("optimizers").at(key);
  nk::AdamState<float> s;
  s.step_count = j.at("step_count").get<std::uint64_t>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  const auto slots = j.at("slots").get<std::size_t>();
  for (std::size_t k = 0; k < slots; ++k) {
    const auto* m = ck.find(key + ".m." + std::to_string(k));
    const auto* v = ck.find(key + ".v." + std::to_string(k));
    if (!m || !v) throw FormatError(FormatErrorKind::invalid_value, "checkpoint lacks optimizer moments for '" + key + "'");
    s.first_moment.push_back(m->value);
    s.second_moment.push_back(v->value);
  }
  return s;
}

inline Checkpoint bundle_checkpoint(const NetworkBundle<float>& nets) {
  Checkpoint ck;
  ck.meta["kind"] = "network_bundle";
  ck.meta["arch"] = nets.arch;
  auto copy = nets;
  append_params(ck, copy.all_refs());
  return ck;
}

inline NetworkBundle<float> bundle_from_checkpoint(const Checkpoint& ck) {
  if (!ck.meta.contains("arch")) throw FormatError(FormatErrorKind::invalid_value, "checkpoint has no architecture descriptor");
  auto nets = make_network_bundle<float>(ck.meta.at("arch").get<NetArch>(), 0);
  restore_params(ck, nets.all_refs());
  return nets;
}

inline void save_network_bundle(const NetworkBundle<float>& nets, const std::filesystem::path& path) {
  save_checkpoint(bundle_checkpoint(nets), path);
}

inline NetworkBundle<float> load_network_bundle(const std::filesystem::path& path) {
  return bundle_from_checkpoint(load_checkpoint(path));
}

}  // namespace rlogist::nets
