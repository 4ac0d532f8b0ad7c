#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccad/rng.hpp"
#include "ccad/synthetic.hpp"

namespace ccad {

namespace fs = std::filesystem;
using json = nlohmann::json;

/**
 * @brief Generated images plus a fixed train/test split.
 *
 * Active learning pools are drawn from `train_ids` only; `test_ids` are
 * reserved for evaluation.
 */
struct Dataset {
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  std::vector<SyntheticSample> samples;  // samples[i].image_id == i
  std::vector<ImageId> train_ids;
  std::vector<ImageId> test_ids;

  const SyntheticSample& get(ImageId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= samples.size())
      throw InvariantError("unknown image id " + std::to_string(id));
    return samples[static_cast<std::size_t>(id)];
  }
};

/// Deterministic split: ids ordered by a seeded hash, the first test_fraction go to test.
inline void split_train_test(std::size_t q, double test_fraction, std::uint64_t seed, std::vector<ImageId>& train,
                             std::vector<ImageId>& test) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must be in (0,1)");
  std::vector<std::pair<std::uint64_t, ImageId>> keyed;
  for (std::size_t i = 0; i < q; ++i)
    keyed.push_back({derive_seed(seed, {tag(Stream::kSplit), static_cast<std::uint64_t>(i)}), static_cast<ImageId>(i)});
  std::sort(keyed.begin(), keyed.end());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(q)));
  train.clear();
  test.clear();
  for (std::size_t i = 0; i < keyed.size(); ++i) (i < n_test ? test : train).push_back(keyed[i].second);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

inline Dataset make_dataset(std::uint64_t seed, int q, const GeneratorConfig& cfg, double test_fraction = 0.2) {
  Dataset d;
  d.seed = seed;
  d.generator = cfg;
  d.samples = generate_dataset(seed, q, cfg);
  split_train_test(d.samples.size(), test_fraction, seed, d.train_ids, d.test_ids);
  return d;
}

// ---- JSON ---------------------------------------------------------------

inline void to_json(json& j, const SizeRange& r) { j = json::array({r.min, r.max}); }
inline void from_json(const json& j, SizeRange& r) {
  r.min = j.at(0).get<int>();
  r.max = j.at(1).get<int>();
}

inline void to_json(json& j, const RegimeConfig& r) {
  j = json{{"objects", r.objects},
           {"object_side", r.object_side},
           {"clutter", json::array({r.clutter_min, r.clutter_max})},
           {"max_overlap_iou", r.max_overlap_iou}};
}
inline void from_json(const json& j, RegimeConfig& r) {
  RegimeConfig d = r;
  d.objects = j.value("objects", r.objects);
  d.object_side = j.value("object_side", r.object_side);
  if (j.contains("clutter")) {
    d.clutter_min = j.at("clutter").at(0).get<double>();
    d.clutter_max = j.at("clutter").at(1).get<double>();
  }
  d.max_overlap_iou = j.value("max_overlap_iou", r.max_overlap_iou);
  r = d;
}

inline void to_json(json& j, const GeneratorConfig& g) {
  j = json{{"image_size", g.image_size},       {"channels", g.channels},
           {"num_classes", g.num_classes},     {"max_objects", g.max_objects},
           {"min_object_area", g.min_object_area}, {"hard_fraction", g.hard_fraction},
           {"noise_std", g.noise_std},         {"hard", g.hard},
           {"easy", g.easy}};
}
inline void from_json(const json& j, GeneratorConfig& g) {
  GeneratorConfig d;
  d.image_size = j.value("image_size", d.image_size);
  d.channels = j.value("channels", d.channels);
  d.num_classes = j.value("num_classes", d.num_classes);
  d.max_objects = j.value("max_objects", d.max_objects);
  d.min_object_area = j.value("min_object_area", d.min_object_area);
  d.hard_fraction = j.value("hard_fraction", d.hard_fraction);
  d.noise_std = j.value("noise_std", d.noise_std);
  if (j.contains("hard")) from_json(j.at("hard"), d.hard);
  if (j.contains("easy")) from_json(j.at("easy"), d.easy);
  g = d;
}

// ---- flat array files ---------------------------------------------------
//
// Layout (little-endian): 8-byte magic "CCADARR1", uint32 dtype (1 = float32),
// uint32 ndim, ndim x uint32 dims, then prod(dims) float32 values.

inline constexpr char kArrayMagic[8] = {'C', 'C', 'A', 'D', 'A', 'R', 'R', '1'};

inline void write_array_file(const fs::path& path, const std::vector<std::uint32_t>& dims,
                             const std::vector<float>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os.write(kArrayMagic, 8);
  const std::uint32_t dtype = 1, ndim = static_cast<std::uint32_t>(dims.size());
  os.write(reinterpret_cast<const char*>(&dtype), 4);
  os.write(reinterpret_cast<const char*>(&ndim), 4);
  os.write(reinterpret_cast<const char*>(dims.data()), static_cast<std::streamsize>(4 * dims.size()));
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(4 * data.size()));
}

inline std::vector<float> read_array_file(const fs::path& path, std::vector<std::uint32_t>& dims) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kArrayMagic, 8) != 0) throw ConfigError("bad array file header: " + path.string());
  std::uint32_t dtype = 0, ndim = 0;
  is.read(reinterpret_cast<char*>(&dtype), 4);
  is.read(reinterpret_cast<char*>(&ndim), 4);
  if (dtype != 1 || ndim > 8) throw ConfigError("unsupported array file: " + path.string());
  dims.resize(ndim);
  is.read(reinterpret_cast<char*>(dims.data()), static_cast<std::streamsize>(4 * ndim));
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  std::vector<float> data(n);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(4 * n));
  if (!is) throw ConfigError("truncated array file: " + path.string());
  return data;
}

// ---- dataset directory --------------------------------------------------
//
//   manifest.json   generator config, seed, split
//   index.jsonl     one record per image: id, path, split, annotations
//   images/*.bin    per-image arrays (channels, height, width)

inline json annotations_to_json(const std::vector<Annotation>& anns) {
  json out = json::array();
  for (const auto& a : anns)
    out.push_back({{"class_id", a.class_id}, {"box", {a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max}}});
  return out;
}

inline void save_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::vector<bool> is_test(d.samples.size(), false);
  for (ImageId id : d.test_ids) is_test[static_cast<std::size_t>(id)] = true;
  {
    std::ofstream index(dir / "index.jsonl");
    for (const auto& s : d.samples) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%06lld.bin", static_cast<long long>(s.image_id));
      const fs::path rel = fs::path("images") / name;
      write_array_file(dir / rel,
                       {static_cast<std::uint32_t>(s.channels), static_cast<std::uint32_t>(s.height),
                        static_cast<std::uint32_t>(s.width)},
                       s.image);
      json rec{{"image_id", s.image_id},
               {"path", rel.generic_string()},
               {"split", is_test[static_cast<std::size_t>(s.image_id)] ? "test" : "train"},
               {"hard", s.hard},
               {"clutter_level", s.clutter_level},
               {"annotations", annotations_to_json(s.annotations)}};
      index << rec.dump() << '\n';
    }
  }
  json manifest{{"format", "ccad-dataset"}, {"version", 1},           {"seed", d.seed},
                {"num_images", d.samples.size()}, {"generator", d.generator}, {"train_ids", d.train_ids},
                {"test_ids", d.test_ids}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json"))
    throw ConfigError("no dataset at " + dir.string() + " (create one with: ccad generate --config <file> --out " +
                      dir.string() + ")");
  json manifest = json::parse(std::ifstream(dir / "manifest.json"));
  Dataset d;
  d.seed = manifest.at("seed").get<std::uint64_t>();
  d.generator = manifest.at("generator").get<GeneratorConfig>();
  d.train_ids = manifest.at("train_ids").get<std::vector<ImageId>>();
  d.test_ids = manifest.at("test_ids").get<std::vector<ImageId>>();
  d.samples.resize(manifest.at("num_images").get<std::size_t>());
  std::ifstream index(dir / "index.jsonl");
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const auto id = rec.at("image_id").get<ImageId>();
    if (id < 0 || static_cast<std::size_t>(id) >= d.samples.size()) throw ConfigError("index id out of range");
    SyntheticSample& s = d.samples[static_cast<std::size_t>(id)];
    s.image_id = id;
    s.hard = rec.value("hard", false);
    s.clutter_level = rec.value("clutter_level", 0.0);
    for (const auto& a : rec.at("annotations")) {
      const auto& b = a.at("box");
      s.annotations.push_back(
          {a.at("class_id").get<int>(), {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()}});
    }
    std::vector<std::uint32_t> dims;
    s.image = read_array_file(dir / rec.at("path").get<std::string>(), dims);
    if (dims.size() != 3) throw ConfigError("image array must be 3-D");
    s.channels = static_cast<int>(dims[0]);
    s.height = static_cast<int>(dims[1]);
    s.width = static_cast<int>(dims[2]);
  }
  return d;
}

}  // namespace ccad
