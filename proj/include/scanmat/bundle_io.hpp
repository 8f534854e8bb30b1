#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "scanmat/image_io.hpp"
#include "scanmat/material.hpp"

namespace scanmat::io {

// On-disk material bundle: a directory with fixed filenames
//   albedo.png normals.png specular.png roughness.png opacity.png
//   transmittance.png
// plus a material.json manifest carrying ppi and channel semantics.
// Albedo is stored sRGB-encoded; normals as (n+1)/2; everything else linear.

inline constexpr const char* kBundleManifestName = "material.json";

inline void save_material(const MaterialMaps& maps,
                          const std::filesystem::path& dir) {
  maps.validate();
  std::filesystem::create_directories(dir);
  save_png(maps.albedo, dir / "albedo.png", Transfer::srgb, 16);
  TextureMap enc_normals = maps.normals;
  for (double& v : enc_normals.data) v = (v + 1.0) * 0.5;
  save_png(enc_normals, dir / "normals.png", Transfer::linear, 16);
  save_png(maps.specular, dir / "specular.png", Transfer::linear, 16);
  save_png(maps.roughness, dir / "roughness.png", Transfer::linear, 16);
  save_png(maps.opacity, dir / "opacity.png", Transfer::linear, 8);
  save_png(maps.transmittance, dir / "transmittance.png", Transfer::linear, 16);

  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["ppi"] = maps.ppi();
  j["width"] = maps.width();
  j["height"] = maps.height();
  j["maps"] = nlohmann::ordered_json{
      {"albedo", {{"file", "albedo.png"}, {"channels", 3}, {"transfer", "srgb"}}},
      {"normals",
       {{"file", "normals.png"}, {"channels", 3}, {"transfer", "linear"}, {"encoding", "unit_vector_half_offset"}}},
      {"specular", {{"file", "specular.png"}, {"channels", 1}, {"transfer", "linear"}}},
      {"roughness", {{"file", "roughness.png"}, {"channels", 1}, {"transfer", "linear"}}},
      {"opacity", {{"file", "opacity.png"}, {"channels", 1}, {"transfer", "linear"}, {"encoding", "binary"}}},
      {"transmittance", {{"file", "transmittance.png"}, {"channels", 1}, {"transfer", "linear"}}},
  };
  std::ofstream out(dir / kBundleManifestName);
  if (!out) throw io_error("cannot write " + (dir / kBundleManifestName).string());
  out << j.dump(2) << "\n";
}

inline MaterialMaps load_material(const std::filesystem::path& dir) {
  auto manifest_path = dir / kBundleManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw io_error("missing material manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error(manifest_path.string() + ": " + e.what());
  }
  double ppi = j.at("ppi").get<double>();
  if (!(ppi > 0)) throw io_error(manifest_path.string() + ": ppi must be > 0");

  auto load_map = [&](const char* key, Transfer fallback) {
    std::string file = std::string(key) + ".png";
    Transfer transfer = fallback;
    if (j.contains("maps") && j["maps"].contains(key)) {
      const auto& entry = j["maps"][key];
      if (entry.contains("file")) file = entry["file"].get<std::string>();
      if (entry.contains("transfer"))
        transfer = entry["transfer"].get<std::string>() == "srgb"
                       ? Transfer::srgb
                       : Transfer::linear;
    }
    TextureMap m = load_png(dir / file, transfer);
    m.ppi = ppi;
    return m;
  };

  MaterialMaps maps;
  maps.albedo = load_map("albedo", Transfer::srgb);
  maps.normals = load_map("normals", Transfer::linear);
  maps.specular = load_map("specular", Transfer::linear);
  maps.roughness = load_map("roughness", Transfer::linear);
  maps.opacity = load_map("opacity", Transfer::linear);
  maps.transmittance = load_map("transmittance", Transfer::linear);

  // Undo the normal encoding; renormalize to absorb quantization.
  for (int y = 0; y < maps.normals.height; ++y)
    for (int x = 0; x < maps.normals.width; ++x) {
      Vec3 n = maps.normals.rgb_at(x, y) * 2.0 - Vec3{1, 1, 1};
      maps.normals.set_rgb(x, y, normalize(n));
    }
  // Snap opacity to exact {0,1} (8-bit storage is already exact, this guards
  // against foreign files with mid values).
  for (double& v : maps.opacity.data) v = v >= 0.5 ? 1.0 : 0.0;
  maps.validate();
  return maps;
}

}  // namespace scanmat::io
