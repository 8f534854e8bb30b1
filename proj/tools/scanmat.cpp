// scanmat: SVBSDF capture toolkit for flatbed-scanner material digitization.
// Subcommands: render, delight, fit, metrics, gen, selftest.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scanmat/bundle_io.hpp"
#include "scanmat/datasetgen.hpp"
#include "scanmat/fit.hpp"
#include "scanmat/image_io.hpp"
#include "scanmat/metrics.hpp"
#include "scanmat/selftest.hpp"
#include "scanmat/shading.hpp"

namespace fs = std::filesystem;
using namespace scanmat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;     // usage / input error
constexpr int kExitMismatch = 3;  // data mismatch
constexpr int kExitSelftest = 4;  // selftest failure

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  std::string config;
  double ppi = 1200.0;
  double elevation = 55.0;  // scanner LED elevation (config default, not a
                            // hardware claim)
  double intensity = 1.0;
  int iterations = 100;
  double lr = 0.002;
  std::string out;
};

// TOML-style key = value config; CLI flags take precedence. Unknown keys are
// rejected so typos fail loudly.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  static const std::vector<std::string> known = {
      "seed",       "threads", "ppi", "elevation", "intensity",
      "iterations", "lr",      "out", "lambda_l1", "lambda_freq",
      "tv_weight",  "reg_weight", "levels"};
  std::map<std::string, std::string> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line.substr(0, line.find('#'));
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    trimmed.erase(trimmed.begin(),
                  std::find_if(trimmed.begin(), trimmed.end(), notspace));
    trimmed.erase(std::find_if(trimmed.rbegin(), trimmed.rend(), notspace).base(),
                  trimmed.end());
    if (trimmed.empty()) continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value");
    std::string key = trimmed.substr(0, eq);
    std::string val = trimmed.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    val.erase(val.begin(), std::find_if(val.begin(), val.end(), notspace));
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    values[key] = val;
  }
  return values;
}

struct FitFlags {
  int levels = 3;
  double lambda_l1 = 1.0;
  double lambda_freq = 0.2;
  double tv_weight = 1e-3;
  double reg_weight = 1e-4;
};

fit::FitConfig make_fit_config(const GlobalOpts& g, const FitFlags& f) {
  fit::FitConfig cfg;
  cfg.iterations = g.iterations;
  cfg.learning_rate = g.lr;
  cfg.coarse_levels = f.levels;
  cfg.weights.l1 = f.lambda_l1;
  cfg.weights.frequency = f.lambda_freq;
  cfg.normal_tv_weight = f.tv_weight;
  cfg.spec_rough_l2_weight = f.reg_weight;
  cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

io::Transfer transfer_from_name(const std::string& s) {
  if (s == "linear") return io::Transfer::linear;
  if (s == "srgb") return io::Transfer::srgb;
  throw std::invalid_argument("unknown transfer '" + s + "' (linear|srgb)");
}

shading::IlluminationModel illum_from_json(const nlohmann::json& j,
                                           double default_intensity) {
  std::string kind = j.at("kind").get<std::string>();
  double intensity = j.value("intensity", default_intensity);
  if (kind == "diffuse") return shading::IlluminationModel::diffuse(intensity);
  if (kind == "backlight") return shading::IlluminationModel::backlight(intensity);
  if (kind == "directional") {
    double elev = j.at("elevation").get<double>();
    double azim = j.value("azimuth", 0.0) * shading::kPi / 180.0;
    if (!(elev > 0 && elev < 90))
      throw std::invalid_argument("illumination: elevation must be in (0,90)");
    double e = elev * shading::kPi / 180.0;
    Vec3 l{std::cos(e) * std::cos(azim), std::cos(e) * std::sin(azim), std::sin(e)};
    return shading::IlluminationModel::directional(l, intensity);
  }
  throw std::invalid_argument("illumination: unknown kind '" + kind + "'");
}

int cmd_render(const GlobalOpts& g, const std::string& material_dir,
               const std::string& illum_name, const std::string& exr_out) {
  MaterialMaps maps = io::load_material(material_dir);
  shading::IlluminationModel illum;
  if (illum_name == "directional")
    illum = shading::IlluminationModel::directional(
        shading::scanner_light_direction(g.elevation), g.intensity);
  else if (illum_name == "diffuse")
    illum = shading::IlluminationModel::diffuse(g.intensity);
  else if (illum_name == "backlight")
    illum = shading::IlluminationModel::backlight(g.intensity);
  else
    throw std::invalid_argument("render: unknown illumination '" + illum_name + "'");
  TextureMap img = shading::render(maps, illum);
  if (g.out.empty()) throw std::invalid_argument("render: --out is required");
  io::save_png(img, g.out, io::Transfer::srgb, 16);
  if (!exr_out.empty()) io::save_exr(img, exr_out);
  std::printf("rendered %dx%d (%s) -> %s\n", img.width, img.height,
              illum_name.c_str(), g.out.c_str());
  return kExitOk;
}

int cmd_delight(const GlobalOpts& g, const FitFlags& ff,
                const std::string& input, const std::string& transfer_name) {
  if (g.out.empty()) throw std::invalid_argument("delight: --out is required");
  TextureMap i_l = io::load_png(input, transfer_from_name(transfer_name));
  i_l.ppi = g.ppi;
  fit::FitConfig cfg = make_fit_config(g, ff);
  fit::DelightResult res = fit::delight(i_l, g.elevation, g.intensity, cfg);
  fs::create_directories(g.out);
  fs::path out_dir(g.out);
  io::save_png(res.i_d_hat, out_dir / "i_d_hat.png", io::Transfer::linear, 16);
  // Residual is signed; store (r+1)/2.
  TextureMap enc = res.residual;
  for (double& v : enc.data) v = (v + 1.0) * 0.5;
  io::save_png(enc, out_dir / "residual.png", io::Transfer::linear, 16);
  io::save_material(res.maps, out_dir / "material");
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["final_objective"] = res.final_objective;
  j["elevation"] = g.elevation;
  j["intensity"] = g.intensity;
  j["residual_encoding"] = "offset_half";
  std::ofstream report(out_dir / "delight.json");
  report << j.dump(2) << "\n";
  std::printf("delighted %s -> %s (objective %.6g)\n", input.c_str(),
              g.out.c_str(), res.final_objective);
  return kExitOk;
}

int cmd_fit(const GlobalOpts& g, const FitFlags& ff, const std::string& manifest) {
  if (g.out.empty()) throw std::invalid_argument("fit: --out is required");
  std::ifstream in(manifest);
  if (!in) throw std::invalid_argument("fit: cannot open " + manifest);
  nlohmann::json j;
  in >> j;
  std::vector<fit::Observation> obs;
  fs::path base = fs::path(manifest).parent_path();
  for (const auto& e : j.at("observations")) {
    fit::Observation o;
    fs::path img = base / e.at("image").get<std::string>();
    o.image = io::load_png(img, transfer_from_name(e.value("transfer", "linear")));
    o.image.ppi = g.ppi;
    o.illum = illum_from_json(e.at("illum"), g.intensity);
    obs.push_back(std::move(o));
  }
  fit::FitConfig cfg = make_fit_config(g, ff);
  fit::FitResult res = fit::fit_material(obs, cfg);
  io::save_material(res.maps, g.out);
  nlohmann::ordered_json rep;
  rep["schema"] = 1;
  rep["final_objective"] = res.final_objective;
  rep["observations"] = obs.size();
  std::ofstream report(fs::path(g.out) / "fit.json");
  report << rep.dump(2) << "\n";
  std::printf("fitted %zu observation(s) -> %s (objective %.6g)\n", obs.size(),
              g.out.c_str(), res.final_objective);
  return kExitOk;
}

int cmd_metrics(const GlobalOpts& g, const std::string& gt_dir,
                const std::string& pred_dir, const std::string& csv_out,
                int direction_count) {
  MaterialMaps gt = io::load_material(gt_dir);
  MaterialMaps pred = io::load_material(pred_dir);
  auto dirs = metrics::DirectionSet::fibonacci(direction_count, g.seed);
  metrics::MetricReport report = metrics::compute_report(gt, pred, dirs);
  std::string json_text = metrics::report_to_json(report).dump(2) + "\n";
  if (g.out.empty()) {
    std::fputs(json_text.c_str(), stdout);
  } else {
    std::ofstream out(g.out);
    if (!out) throw io::io_error("cannot write " + g.out);
    out << json_text;
  }
  if (!csv_out.empty()) {
    bool fresh = !fs::exists(csv_out);
    std::ofstream csv(csv_out, std::ios::app);
    if (!csv) throw io::io_error("cannot write " + csv_out);
    if (fresh) csv << metrics::report_csv_header() << "\n";
    csv << metrics::report_csv_row(report) << "\n";
  }
  return kExitOk;
}

int cmd_gen(const GlobalOpts& g, const std::string& out_dir, int count,
            int size, const std::string& family, int augment) {
  datagen::DatasetWriteOptions opt;
  opt.count = count;
  opt.size = size;
  opt.ppi = g.ppi;
  opt.led_elevation_deg = g.elevation;
  opt.intensity = g.intensity;
  opt.seed = g.seed;
  opt.family = family;
  opt.augment_per_sample = augment;
  fs::path manifest = datagen::write_dataset(out_dir, opt);
  std::printf("wrote %d sample(s) -> %s\n", count, manifest.string().c_str());
  return kExitOk;
}

int cmd_selftest() {
  auto results = selftest::run_all();
  bool all_pass = true;
  std::printf("%-22s %-6s %s\n", "check", "status", "detail");
  for (const auto& r : results) {
    std::printf("%-22s %-6s %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scanmat: SVBSDF material capture toolkit for flatbed scanners"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain valid after the subcommand name

  GlobalOpts g;
  auto* seed_opt = app.add_option("--seed", g.seed, "base random seed");
  auto* threads_opt = app.add_option("--threads", g.threads, "worker threads");
  app.add_option("--config", g.config, "key = value config file");
  auto* ppi_opt = app.add_option("--ppi", g.ppi, "pixels per inch metadata");
  auto* elev_opt =
      app.add_option("--elevation", g.elevation, "LED elevation in degrees");
  auto* inten_opt = app.add_option("--intensity", g.intensity, "light intensity");
  auto* iter_opt =
      app.add_option("--iterations", g.iterations, "fit iterations per level");
  auto* lr_opt = app.add_option("--lr", g.lr, "initial learning rate");
  auto* out_opt = app.add_option("--out", g.out, "output path");

  FitFlags ff;
  auto* levels_opt = app.add_option("--levels", ff.levels, "coarse-to-fine levels");
  auto* l1_opt = app.add_option("--lambda-l1", ff.lambda_l1, "pixel loss weight");
  auto* freq_opt =
      app.add_option("--lambda-freq", ff.lambda_freq, "frequency loss weight");
  auto* tv_opt =
      app.add_option("--tv-weight", ff.tv_weight, "normal smoothness prior");
  auto* reg_opt = app.add_option("--reg-weight", ff.reg_weight,
                                 "specular/roughness prior");
  double ggx_perturb = 0.0;
  app.add_option("--ggx-perturb", ggx_perturb)->group("");  // test hook

  auto* render_cmd = app.add_subcommand("render", "render a material bundle");
  std::string material_dir, illum_name = "directional", exr_out;
  render_cmd->add_option("material_dir", material_dir, "bundle directory")->required();
  render_cmd->add_option("--illum", illum_name, "directional|diffuse|backlight");
  render_cmd->add_option("--exr", exr_out, "also write linear EXR");

  auto* delight_cmd =
      app.add_subcommand("delight", "recover the albedo-like image from a scan");
  std::string input_image, input_transfer = "linear";
  delight_cmd->add_option("input", input_image, "directional scan (png)")->required();
  delight_cmd->add_option("--input-transfer", input_transfer, "linear|srgb");

  auto* fit_cmd = app.add_subcommand("fit", "fit a material to observations");
  std::string fit_manifest;
  fit_cmd->add_option("manifest", fit_manifest, "observation manifest (json)")
      ->required();

  auto* metrics_cmd =
      app.add_subcommand("metrics", "compare two material bundles");
  std::string gt_dir, pred_dir, csv_out;
  int direction_count = 50;
  metrics_cmd->add_option("gt_dir", gt_dir, "ground-truth bundle")->required();
  metrics_cmd->add_option("pred_dir", pred_dir, "predicted bundle")->required();
  metrics_cmd->add_option("--csv", csv_out, "append a CSV row here");
  metrics_cmd->add_option("--directions", direction_count,
                          "direction pairs for render-aware metrics");

  auto* gen_cmd = app.add_subcommand("gen", "generate a procedural dataset");
  std::string gen_out, gen_family;
  int gen_count = 3, gen_size = 256, gen_augment = 0;
  gen_cmd->add_option("out_dir", gen_out, "dataset directory")->required();
  gen_cmd->add_option("--count", gen_count, "number of samples");
  gen_cmd->add_option("--size", gen_size, "sample resolution");
  gen_cmd->add_option("--family", gen_family, "weave|grain|mesh (default: cycle)");
  gen_cmd->add_option("--augment", gen_augment, "augmented variants per sample");

  auto* selftest_cmd =
      app.add_subcommand("selftest", "run the built-in verification suite");
  (void)selftest_cmd;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion")
      return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (!g.config.empty()) {
      auto values = parse_config_file(g.config);
      auto apply = [&](const char* key, CLI::Option* opt, auto& target) {
        auto it = values.find(key);
        if (it != values.end() && opt->count() == 0) {
          std::istringstream ss(it->second);
          ss >> target;
          if (ss.fail())
            throw std::invalid_argument(std::string("config: bad value for ") + key);
        }
      };
      apply("seed", seed_opt, g.seed);
      apply("threads", threads_opt, g.threads);
      apply("ppi", ppi_opt, g.ppi);
      apply("elevation", elev_opt, g.elevation);
      apply("intensity", inten_opt, g.intensity);
      apply("iterations", iter_opt, g.iterations);
      apply("lr", lr_opt, g.lr);
      apply("out", out_opt, g.out);
      apply("levels", levels_opt, ff.levels);
      apply("lambda_l1", l1_opt, ff.lambda_l1);
      apply("lambda_freq", freq_opt, ff.lambda_freq);
      apply("tv_weight", tv_opt, ff.tv_weight);
      apply("reg_weight", reg_opt, ff.reg_weight);
    }
    if (g.threads < 1) throw std::invalid_argument("--threads must be >= 1");
    thread_count() = g.threads;
    shading::detail::ggx_perturbation() = ggx_perturb;

    if (render_cmd->parsed()) return cmd_render(g, material_dir, illum_name, exr_out);
    if (delight_cmd->parsed()) return cmd_delight(g, ff, input_image, input_transfer);
    if (fit_cmd->parsed()) return cmd_fit(g, ff, fit_manifest);
    if (metrics_cmd->parsed())
      return cmd_metrics(g, gt_dir, pred_dir, csv_out, direction_count);
    if (gen_cmd->parsed())
      return cmd_gen(g, gen_out, gen_count, gen_size, gen_family, gen_augment);
    if (selftest_cmd->parsed()) return cmd_selftest();
  } catch (const shape_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMismatch;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
