#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scanmat/datasetgen.hpp"
#include "scanmat/metrics.hpp"
#include "scanmat/shading.hpp"

using namespace scanmat;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("scanmat_dgen_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

double luminance_autocorr(const TextureMap& albedo, int lag) {
  const int w = albedo.width, h = albedo.height;
  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  double mean = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Vec3 c = albedo.rgb_at(x, y);
      lum[static_cast<std::size_t>(y) * w + x] = (c.x + c.y + c.z) / 3.0;
      mean += lum[static_cast<std::size_t>(y) * w + x];
    }
  mean /= static_cast<double>(lum.size());
  double acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      acc += (lum[static_cast<std::size_t>(y) * w + x] - mean) *
             (lum[static_cast<std::size_t>(y) * w + (x + lag) % w] - mean);
  return acc;
}

}  // namespace

TEST_SUITE_BEGIN("datasetgen");

TEST_CASE("every family generates a valid bundle, deterministically") {
  for (auto family : {datagen::MaterialFamily::weave, datagen::MaterialFamily::grain,
                      datagen::MaterialFamily::mesh}) {
    datagen::MaterialRecipe recipe;
    recipe.family = family;
    recipe.size = 64;
    recipe.seed = 99;
    MaterialMaps a = datagen::generate_material(recipe);
    CHECK_NOTHROW(a.validate());
    MaterialMaps b = datagen::generate_material(recipe);
    CHECK(a.albedo.data == b.albedo.data);
    CHECK(a.normals.data == b.normals.data);
    CHECK(a.transmittance.data == b.transmittance.data);
  }
}

TEST_CASE("mesh with zero hole density is fully opaque") {
  datagen::MaterialRecipe recipe;
  recipe.family = datagen::MaterialFamily::mesh;
  recipe.size = 64;
  recipe.hole_density = 0.0;
  MaterialMaps m = datagen::generate_material(recipe);
  for (double v : m.opacity.data) CHECK(v == 1.0);
}

TEST_CASE("mesh with holes produces transparent pixels gated by opacity") {
  datagen::MaterialRecipe recipe;
  recipe.family = datagen::MaterialFamily::mesh;
  recipe.size = 64;
  recipe.hole_density = 1.0;
  MaterialMaps m = datagen::generate_material(recipe);
  int holes = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (m.opacity.at(x, y) == 0.0) {
        ++holes;
        CHECK(m.transmittance.at(x, y) == 1.0);
        CHECK(m.albedo.at(x, y, 0) == 0.0);  // no material, no reflectance
      }
  CHECK(holes > 0);
}

TEST_CASE("weave albedo autocorrelation peaks at the thread period") {
  datagen::MaterialRecipe recipe;
  recipe.family = datagen::MaterialFamily::weave;
  recipe.size = 128;
  recipe.thread_period = 16;
  recipe.seed = 3;
  MaterialMaps m = datagen::generate_material(recipe);
  double at_period = luminance_autocorr(m.albedo, 16);
  for (int lag = 4; lag <= 28; ++lag) {
    if (std::abs(lag - 16) <= 1) continue;
    CHECK(at_period > luminance_autocorr(m.albedo, lag));
  }
}

TEST_CASE("recipe validation rejects out-of-range parameters") {
  datagen::MaterialRecipe recipe;
  recipe.size = 16;
  CHECK_THROWS_AS(datagen::generate_material(recipe), std::invalid_argument);
  recipe.size = 64;
  recipe.hole_density = 1.5;
  CHECK_THROWS_AS(datagen::generate_material(recipe), std::invalid_argument);
  recipe.hole_density = 0.5;
  recipe.transmittance_level = 0.95;
  CHECK_THROWS_AS(datagen::generate_material(recipe), std::invalid_argument);
}

TEST_CASE("pair of a specular-free sample: I_d equals intensity * albedo") {
  datagen::MaterialRecipe recipe;
  recipe.family = datagen::MaterialFamily::grain;
  recipe.size = 48;
  recipe.specular_min = recipe.specular_max = 0.0;
  MaterialMaps m = datagen::generate_material(recipe);
  auto [i_d, i_l] = datagen::generate_pair(m, 55.0, 1.25);
  CHECK(mean_abs_diff(i_d, scale(m.albedo, 1.25)) <= 1e-9);
  CHECK(i_d.width == i_l.width);
  CHECK(i_d.height == i_l.height);
}

TEST_CASE("directional images carry more variance than diffuse on bumpy samples") {
  int more_variance = 0;
  for (int i = 0; i < 20; ++i) {
    datagen::MaterialRecipe recipe;
    recipe.family = datagen::MaterialFamily::grain;
    recipe.size = 48;
    recipe.seed = 500 + i;
    recipe.bump_amplitude = 0.3;
    datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
    auto variance = [](const TextureMap& img) {
      double mean = pairwise_sum(img.data) / img.data.size();
      double var = 0;
      for (double v : img.data) var += (v - mean) * (v - mean);
      return var / img.data.size();
    };
    // Normalize by mean^2: I_l is darker overall, compare relative variation.
    double mean_l = pairwise_sum(s.i_l.data) / s.i_l.data.size();
    double mean_d = pairwise_sum(s.i_d.data) / s.i_d.data.size();
    if (variance(s.i_l) / (mean_l * mean_l) >
        variance(s.i_d) / (mean_d * mean_d))
      ++more_variance;
  }
  CHECK(more_variance == 20);
}

TEST_CASE("augment: empty op chain is identity") {
  datagen::MaterialRecipe recipe;
  recipe.size = 64;
  datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
  datagen::Sample out = datagen::augment(s, {}, 7);
  CHECK(out.maps.albedo.data == s.maps.albedo.data);
  CHECK(out.i_l.data == s.i_l.data);
}

TEST_CASE("augment: flip keeps all maps and images pixel-aligned") {
  datagen::MaterialRecipe recipe;
  recipe.size = 64;
  recipe.family = datagen::MaterialFamily::weave;
  datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
  std::vector<datagen::AugmentOp> ops = {datagen::AugmentOp::flip_horizontal()};
  datagen::Sample out = datagen::augment(s, ops, 7);
  CHECK(out.i_d.data == flip_h(s.i_d).data);
  CHECK(out.i_l.data == flip_h(s.i_l).data);
  CHECK(out.maps.specular.data == flip_h(s.maps.specular).data);
  // Normal x component mirrors with the pixels.
  CHECK(out.maps.normals.at(5, 9, 0) ==
        doctest::Approx(-s.maps.normals.at(64 - 1 - 5, 9, 0)));
  CHECK(out.maps.normals.at(5, 9, 1) ==
        doctest::Approx(s.maps.normals.at(64 - 1 - 5, 9, 1)));
}

TEST_CASE("augment: oversized crop throws") {
  datagen::MaterialRecipe recipe;
  recipe.size = 64;
  datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
  std::vector<datagen::AugmentOp> ops = {datagen::AugmentOp::crop128()};
  CHECK_THROWS_AS(datagen::augment(s, ops, 0), std::invalid_argument);
}

TEST_CASE("augment: rescaled ground truth is self-consistent under metrics") {
  datagen::MaterialRecipe recipe;
  recipe.size = 64;
  recipe.family = datagen::MaterialFamily::mesh;
  datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
  std::vector<datagen::AugmentOp> ops = {datagen::AugmentOp::rescale(300.0)};
  datagen::Sample out = datagen::augment(s, ops, 1);
  CHECK(out.maps.ppi() == doctest::Approx(300.0));
  CHECK_NOTHROW(out.maps.validate());
  auto dirs = metrics::DirectionSet::fibonacci(10, 0);
  metrics::MetricReport r = metrics::compute_report(out.maps, out.maps, dirs);
  CHECK(r.l1_albedo == 0.0);
  CHECK(r.angular_normals <= 1e-6);
  CHECK(r.jaccard_opacity == 1.0);
  CHECK(r.l_bsdf == 0.0);
}

TEST_CASE("pair alignment: augmented render matches re-render of augmented GT") {
  datagen::MaterialRecipe recipe;
  recipe.size = 256;
  recipe.seed = 12;
  recipe.family = datagen::MaterialFamily::grain;
  datagen::Sample s = datagen::make_sample(recipe, 55.0, 1.0);
  std::vector<datagen::AugmentOp> ops = {datagen::AugmentOp::rescale(600.0),
                                         datagen::AugmentOp::crop128(),
                                         datagen::AugmentOp::flip_horizontal()};
  datagen::Sample out = datagen::augment(s, ops, 21);

  // Diffuse light is isotropic: direct re-render comparison.
  TextureMap re_d = shading::render(out.maps, shading::IlluminationModel::diffuse(1.0));
  CHECK(mean_abs_diff(re_d, out.i_d) <= 0.02);

  // The horizontal flip mirrors the LED azimuth.
  Vec3 l = shading::scanner_light_direction(55.0);
  l.x = -l.x;
  TextureMap re_l =
      shading::render(out.maps, shading::IlluminationModel::directional(l, 1.0));
  CHECK(mean_abs_diff(re_l, out.i_l) <= 0.02);
}

TEST_CASE("corpus stats: constants, mixed corpus, oracle") {
  datagen::Sample a, b;
  a.i_d = TextureMap(8, 8, 3, 300, 0.25);
  a.i_l = TextureMap(8, 8, 3, 300, 0.0);
  b.i_d = TextureMap(8, 8, 3, 300, 0.25);
  b.i_l = TextureMap(8, 8, 3, 300, 1.0);
  std::vector<datagen::Sample> corpus = {a, b};
  datagen::CorpusStats st = datagen::corpus_stats(corpus);
  CHECK(st.mean_d.x == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(st.std_d.x == doctest::Approx(0.0));
  CHECK(st.mean_l.y == doctest::Approx(0.5).epsilon(1e-12));

  // Streaming two-pass oracle over a random corpus.
  Rng rng(31);
  std::vector<datagen::Sample> rand_corpus(3);
  for (auto& smp : rand_corpus) {
    smp.i_d = TextureMap(6, 6, 3, 300);
    smp.i_l = TextureMap(6, 6, 3, 300);
    for (double& v : smp.i_d.data) v = rng.next_double();
    for (double& v : smp.i_l.data) v = rng.next_double();
  }
  datagen::CorpusStats rs = datagen::corpus_stats(rand_corpus);
  double sum = 0;
  std::size_t n = 0;
  for (auto& smp : rand_corpus)
    for (std::size_t p = 0; p < smp.i_d.pixel_count(); ++p) {
      sum += smp.i_d.data[p * 3];
      ++n;
    }
  double mu = sum / n;
  double var = 0;
  for (auto& smp : rand_corpus)
    for (std::size_t p = 0; p < smp.i_d.pixel_count(); ++p)
      var += (smp.i_d.data[p * 3] - mu) * (smp.i_d.data[p * 3] - mu);
  var /= n;
  CHECK(std::abs(rs.mean_d.x - mu) <= 1e-9);
  CHECK(std::abs(rs.std_d.x - std::sqrt(var)) <= 1e-9);

  std::vector<datagen::Sample> empty;
  CHECK_THROWS_AS(datagen::corpus_stats(empty), std::invalid_argument);
}

TEST_CASE("standardize removes the corpus mean and scale") {
  Rng rng(67);
  std::vector<datagen::Sample> corpus(4);
  for (auto& s : corpus) {
    s.i_d = TextureMap(8, 8, 3, 300);
    s.i_l = TextureMap(8, 8, 3, 300);
    for (double& v : s.i_d.data) v = rng.uniform(0.2, 0.8);
    for (double& v : s.i_l.data) v = rng.uniform(0.0, 0.4);
  }
  datagen::CorpusStats st = datagen::corpus_stats(corpus);
  double sum = 0, sum_sq = 0;
  std::size_t n = 0;
  for (auto& s : corpus) {
    TextureMap norm = datagen::standardize(s.i_d, st.mean_d, st.std_d);
    for (std::size_t p = 0; p < norm.pixel_count(); ++p) {
      sum += norm.data[p * 3];
      sum_sq += norm.data[p * 3] * norm.data[p * 3];
      ++n;
    }
  }
  CHECK(std::abs(sum / n) <= 1e-9);                    // zero mean
  CHECK(std::sqrt(sum_sq / n) == doctest::Approx(1.0).epsilon(1e-9));  // unit std
}

TEST_CASE("dataset writer: manifest round trip and bit-identical regeneration") {
  fs::path dir = temp_dir("write");
  datagen::DatasetWriteOptions opt;
  opt.count = 2;
  opt.size = 160;
  opt.seed = 5;
  opt.augment_per_sample = 1;
  fs::path manifest_path = datagen::write_dataset(dir, opt);

  std::ifstream in(manifest_path);
  nlohmann::json manifest;
  in >> manifest;
  CHECK(manifest["schema"] == 1);
  REQUIRE(manifest["samples"].size() == 2);
  for (const auto& entry : manifest["samples"]) {
    CHECK(fs::exists(dir / entry["gt_bundle"].get<std::string>() / "albedo.png"));
    CHECK(fs::exists(dir / entry["i_d"].get<std::string>()));
    CHECK(fs::exists(dir / entry["i_l"].get<std::string>()));
    for (const auto& aug : entry["augmentations"])
      CHECK(fs::exists(dir / aug["i_l"].get<std::string>()));
  }

  // Regenerate the first sample from its recorded recipe: bit-identical files.
  datagen::MaterialRecipe recipe =
      datagen::recipe_from_json(manifest["samples"][0]["recipe"]);
  datagen::Sample regen = datagen::make_sample(
      recipe, manifest["led_elevation_deg"].get<double>(),
      manifest["intensity"].get<double>());
  fs::path redo = temp_dir("regen");
  io::save_png(regen.i_l, redo / "i_l.png", io::Transfer::linear, 16);
  CHECK(file_bytes(redo / "i_l.png") ==
        file_bytes(dir / manifest["samples"][0]["i_l"].get<std::string>()));
}

TEST_SUITE_END();
