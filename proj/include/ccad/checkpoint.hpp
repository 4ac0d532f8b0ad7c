#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "ccad/detector.hpp"

namespace ccad {

/**
 * @brief Flat container of named float32 arrays plus a JSON metadata block.
 *
 * Layout (little-endian):
 *   magic "CCADCKPT" | uint32 version | uint32 cycle_index
 *   uint32 meta_len | meta_len bytes of JSON (config, config_hash, ...)
 *   uint32 n_arrays
 *   n_arrays x { uint32 name_len | name | uint32 rows | uint32 cols | rows*cols float32 }
 */
struct Checkpoint {
  std::uint32_t cycle_index = 0;
  nlohmann::json meta;
  std::map<std::string, MatR<float>> arrays;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'C', 'A', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ConfigError("truncated checkpoint");
  return v;
}
}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os.write(kCheckpointMagic, 8);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u32(os, ck.cycle_index);
    const std::string meta = ck.meta.dump();
    detail::put_u32(os, static_cast<std::uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& [name, m] : ck.arrays) {
      detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
      detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(4 * m.size()));
    }
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ConfigError("not a checkpoint: " + path.string());
  if (detail::get_u32(is) != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
  Checkpoint ck;
  ck.cycle_index = detail::get_u32(is);
  std::string meta(detail::get_u32(is), '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  ck.meta = nlohmann::json::parse(meta);
  const std::uint32_t n = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name(detail::get_u32(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint32_t rows = detail::get_u32(is), cols = detail::get_u32(is);
    MatR<float> m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(4 * m.size()));
    if (!is) throw ConfigError("truncated checkpoint array " + name);
    ck.arrays.emplace(std::move(name), std::move(m));
  }
  return ck;
}

inline std::map<std::string, MatR<float>> export_parameters(const Detector<float>& model) {
  std::map<std::string, MatR<float>> out;
  for (const auto* p : model.all_params()) out.emplace(p->name, p->value);
  return out;
}

/// Loads every parameter by name; shape or name mismatches are errors.
inline void import_parameters(Detector<float>& model, const std::map<std::string, MatR<float>>& arrays) {
  const auto params = model.all_params();
  if (params.size() != arrays.size()) throw ConfigError("checkpoint does not match the model architecture");
  for (auto* p : params) {
    auto it = arrays.find(p->name);
    if (it == arrays.end() || it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ConfigError("checkpoint does not match the model architecture at " + p->name);
    p->value = it->second;
  }
  model.mark_initialized();
}

}  // namespace ccad
