#include "cli_app.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "drum/checkpoint.hpp"
#include "drum/errors.hpp"
#include "drum/io.hpp"
#include "drum/metrics.hpp"
#include "run_config.hpp"

namespace drum::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Short spellings accepted next to the dotted keys.
const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> a{{"guidance.scale", "--guidance-scale"},
                                                    {"sampler.cycles", "--cycles"},
                                                    {"sampler.t-init", "--t-init"}};
  return a;
}

struct Common {
  std::string config_path;
  unsigned jobs = 1;
  std::map<std::string, std::string> raw;  // dotted key -> flag text
  std::map<std::string, CLI::Option*> options;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "JSON file of dotted-key settings");
  cmd->add_option("--jobs", common.jobs, "worker threads for batch work")->check(CLI::Range(1u, 256u));
  for (const ConfigKey& k : config_keys()) {
    std::string names = "--" + k.key;
    if (auto it = aliases().find(k.key); it != aliases().end()) names += "," + it->second;
    common.options[k.key] = cmd->add_option(names, common.raw[k.key], k.help)->group("Pipeline settings");
  }
}

RunConfig resolve(const Common& common) {
  RunConfig cfg;
  if (!common.config_path.empty()) apply_json_file(cfg, common.config_path);
  for (const auto& [key, opt] : common.options) {
    if (opt->count() > 0) apply_text(cfg, key, common.raw.at(key));
  }
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << std::setw(2) << doc << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Runs body(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// .drum range images, or KITTI .bin clouds projected with the configured sensor.
RangeImage load_scan(const fs::path& path, const SensorIntrinsics& sensor) {
  if (path.extension() == ".bin") return project(load_kitti_bin(path), sensor);
  return load_range_image(path);
}

std::vector<fs::path> list_scans(const fs::path& dir) {
  std::vector<fs::path> files = list_files(dir, ".drum");
  for (auto& p : list_files(dir, ".bin")) files.push_back(p);
  std::sort(files.begin(), files.end());
  return files;
}

std::uint64_t scene_seed(std::uint64_t corpus_seed, Domain domain, std::size_t index) {
  Rng rng = make_rng(corpus_seed, 2 * index + (domain == Domain::real ? 1 : 0));
  return rng();
}

std::string scene_name(const char* prefix, std::size_t i) {
  std::ostringstream s;
  s << prefix << '_' << std::setw(5) << std::setfill('0') << i << ".drum";
  return s.str();
}

void export_pngs(const fs::path& dir, const std::string& stem, const RangeImage& img) {
  write_png(dir / (stem + "_range.png"), img, PngChannel::range);
  write_png(dir / (stem + "_reflectance.png"), img, PngChannel::reflectance);
}

// ---------------------------------------------------------------------------

int cmd_make_toy(const Common& common, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = resolve(common);
  make_dir(out_dir / "sim");
  make_dir(out_dir / "real");

  struct Job {
    Domain domain;
    std::size_t index;
    std::string file;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < cfg.toy_sim_count; ++i) {
    jobs.push_back({Domain::sim, i, "sim/" + scene_name("sim", i), scene_seed(cfg.toy.seed, Domain::sim, i)});
  }
  for (std::size_t i = 0; i < cfg.toy_real_count; ++i) {
    jobs.push_back({Domain::real, i, "real/" + scene_name("real", i), scene_seed(cfg.toy.seed, Domain::real, i)});
  }
  parallel_for(jobs.size(), common.jobs, [&](std::size_t k) {
    ToySceneConfig scene = cfg.toy;
    scene.domain = jobs[k].domain;
    scene.seed = jobs[k].seed;
    save_range_image(out_dir / jobs[k].file, gen_toy_scene(scene, cfg.sensor));
  });

  json manifest{{"sim", json::array()}, {"real", json::array()}};
  for (const Job& j : jobs) {
    manifest[j.domain == Domain::sim ? "sim" : "real"].push_back({{"file", j.file}, {"seed", j.seed}});
  }
  write_json(out_dir / "manifest.json", manifest);
  write_json(out_dir / "config.json", to_json(cfg));
  out << "wrote " << jobs.size() << " files to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Common& common, const fs::path& data_dir, const fs::path& ckpt, const std::string& resume,
              std::ostream& out) {
  const RunConfig cfg = resolve(common);
  std::vector<Tensor> dataset;
  for (const fs::path& p : list_scans(data_dir)) dataset.push_back(normalize(load_scan(p, cfg.sensor)));
  if (dataset.empty()) throw InsufficientData("no .drum or .bin files in " + data_dir.string());

  TrainOptions options;
  if (!resume.empty()) {
    Checkpoint c = load_checkpoint(resume);
    options.arch = c.network.arch();
    options.start_step = c.step;
    options.resume = std::move(c.network);
    out << "resuming from step " << options.start_step << '\n';
  }
  options.on_epoch = [&out](const TrainProgress& p) {
    out << "epoch " << p.epoch << " step " << p.step << " train_loss " << p.train_loss << " holdout_loss "
        << p.holdout_loss << std::endl;
  };
  if (!ckpt.parent_path().empty()) make_dir(ckpt.parent_path());
  const TrainResult result = train_denoiser(dataset, cfg.train, std::move(options));
  save_checkpoint(ckpt, result.network, result.step);

  json history = json::array();
  for (const TrainProgress& p : result.history) {
    history.push_back({{"epoch", p.epoch}, {"step", p.step}, {"train_loss", p.train_loss}, {"holdout_loss", p.holdout_loss}});
  }
  write_json(fs::path(ckpt).concat(".report.json"), {{"step", result.step},
                                                       {"initial_holdout_loss", result.initial_holdout_loss},
                                                       {"final_holdout_loss", result.final_holdout_loss},
                                                       {"history", history}});
  write_json(fs::path(ckpt).concat(".config.json"), to_json(cfg));
  out << "final holdout loss " << result.final_holdout_loss << " (initial " << result.initial_holdout_loss
      << ", step " << result.step << ")\n";
  return kExitOk;
}

// Every pixel kept by the final mask carries the input range; every other pixel is a drop.
bool label_consistent(const RangeImage& sim, const RangeImage& written, const RaydropMask& mask0) {
  if (written.pixels() != sim.pixels()) return false;
  for (std::size_t i = 0; i < sim.pixels(); ++i) {
    const bool kept = mask0.bits[i] != 0;
    if (kept && static_cast<float>(written.range[i]) != static_cast<float>(sim.range[i])) return false;
    if (!kept && !written.is_drop(i)) return false;
  }
  return true;
}

int cmd_translate(const Common& common, const fs::path& ckpt, const fs::path& sim_dir, const fs::path& out_dir,
                  const std::string& method_name, bool png, bool verify, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(common);
  const std::map<std::string, TranslationMethod> methods{
      {"drum", TranslationMethod::drum}, {"sdedit", TranslationMethod::sdedit}, {"pigdm", TranslationMethod::pigdm}};
  const TranslationMethod method = methods.at(method_name);
  const std::vector<fs::path> inputs = list_scans(sim_dir);
  make_dir(out_dir);
  const auto net = std::make_shared<const DenoiserNetwork>(load_checkpoint(ckpt).network);
  const NeuralScoreModel model(net);

  struct Outcome {
    std::string status = "ok";
    std::string message;
    double drop_ratio = 0.0;
    bool consistent = false;
  };
  std::vector<Outcome> outcomes(inputs.size());
  parallel_for(inputs.size(), common.jobs, [&](std::size_t k) {
    const fs::path& in = inputs[k];
    const std::string name = in.filename().string();
    const RangeImage sim = load_scan(in, cfg.sensor);
    Outcome& o = outcomes[k];
    try {
      const RangeTranslation t = translate_range_image(sim, model, cfg.sampler, fnv1a(name), method);
      const fs::path target = out_dir / (in.stem().string() + ".drum");
      save_range_image(target, t.output);
      if (png) export_pngs(out_dir, in.stem().string(), t.output);
      o.drop_ratio = raydrop_ratio(t.output);
      if (verify) o.consistent = label_consistent(sim, load_range_image(target), t.result.mask0);
    } catch (const NumericFailure& e) {
      o.status = "numeric-failure";
      o.message = e.what();
    }
  });

  json report = json::array();
  std::size_t failures = 0, inconsistent = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Outcome& o = outcomes[k];
    const std::string name = inputs[k].filename().string();
    json entry{{"file", name}, {"status", o.status}};
    if (o.status == "ok") {
      entry["drop_ratio"] = o.drop_ratio;
      if (verify) entry["label_consistent"] = o.consistent;
      if (verify && !o.consistent) {
        ++inconsistent;
        err << name << ": label-consistency audit failed\n";
      }
    } else {
      ++failures;
      entry["message"] = o.message;
      err << name << ": " << o.message << '\n';
    }
    report.push_back(entry);
  }
  write_json(out_dir / "translate_report.json", report);
  write_json(out_dir / "config.json", to_json(cfg));
  out << "translated " << inputs.size() - failures << " of " << inputs.size() << " scans";
  if (verify) out << ", " << inputs.size() - failures - inconsistent << " label-consistent";
  out << '\n';
  return failures || inconsistent ? kExitNumeric : kExitOk;
}

FeatureSet scan_features(const std::vector<fs::path>& files, const SensorIntrinsics& sensor, unsigned jobs,
                         std::vector<double>& drop_ratios) {
  std::vector<std::vector<double>> rows(files.size());
  drop_ratios.assign(files.size(), 0.0);
  parallel_for(files.size(), jobs, [&](std::size_t k) {
    const RangeImage img = load_scan(files[k], sensor);
    rows[k] = builtin_features(img);
    drop_ratios[k] = raydrop_ratio(img);
  });
  return FeatureSet::from_rows(rows);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json column_means(const FeatureSet& fs, std::size_t begin, std::size_t count) {
  json out = json::array();
  for (std::size_t j = begin; j < begin + count; ++j) out.push_back(fs.vectors.col(static_cast<Eigen::Index>(j)).mean());
  return out;
}

int cmd_eval(const Common& common, const std::string& dir_a, const std::string& dir_b,
             const std::vector<std::string>& features, const fs::path& report_path, const std::string& save_features_dir,
             std::ostream& out) {
  const RunConfig cfg = resolve(common);
  json report;
  std::optional<FeatureSet> fa, fb;
  if (!dir_a.empty() || !dir_b.empty()) {
    if (dir_a.empty() || dir_b.empty()) throw InvalidArgument("eval needs both --a and --b");
    const auto files_a = list_scans(dir_a);
    const auto files_b = list_scans(dir_b);
    if (files_a.empty() || files_b.empty()) throw InsufficientData("eval: empty input directory");
    std::vector<double> drops_a, drops_b;
    fa = scan_features(files_a, cfg.sensor, common.jobs, drops_a);
    fb = scan_features(files_b, cfg.sensor, common.jobs, drops_b);
    report["a"] = {{"dir", dir_a},
                   {"count", files_a.size()},
                   {"mean_drop_ratio", mean(drops_a)},
                   {"range_histogram", column_means(*fa, 0, kRangeBins)},
                   {"reflectance_histogram", column_means(*fa, kRangeBins, kReflectanceBins)}};
    report["b"] = {{"dir", dir_b},
                   {"count", files_b.size()},
                   {"mean_drop_ratio", mean(drops_b)},
                   {"range_histogram", column_means(*fb, 0, kRangeBins)},
                   {"reflectance_histogram", column_means(*fb, kRangeBins, kReflectanceBins)}};
    out << "mean drop ratio  a " << mean(drops_a) << "  b " << mean(drops_b) << '\n';
    if (!save_features_dir.empty()) {
      make_dir(save_features_dir);
      save_features(fs::path(save_features_dir) / "a.feat", fa->to_matrix());
      save_features(fs::path(save_features_dir) / "b.feat", fb->to_matrix());
    }
  }
  if (!features.empty()) {
    fa = FeatureSet::from_matrix(load_features(features[0]));
    fb = FeatureSet::from_matrix(load_features(features[1]));
    report["features"] = {features[0], features[1]};
  }
  if (!fa) throw InvalidArgument("eval needs --a/--b directories or --features files");
  const double fd = frechet_distance(fit_gaussian(*fa), fit_gaussian(*fb));
  report["feature_source"] = features.empty() ? "builtin" : "imported";
  report["frechet_distance"] = fd;
  out << "frechet distance " << std::setprecision(10) << fd << '\n';
  out << std::setprecision(6);
  if (report.contains("a")) {
    for (const char* side : {"a", "b"}) {
      out << "range histogram " << side << ':';
      for (double v : report[side]["range_histogram"]) out << ' ' << v;
      out << "\nreflectance histogram " << side << ':';
      for (double v : report[side]["reflectance_histogram"]) out << ' ' << v;
      out << '\n';
    }
  }
  if (report_path.has_parent_path()) make_dir(report_path.parent_path());
  write_json(report_path, report);
  write_json(fs::path(report_path).concat(".config.json"), to_json(cfg));
  return kExitOk;
}

int cmd_export_png(const Common& common, const fs::path& in, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = resolve(common);
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    files = list_scans(in);
  } else {
    files.push_back(in);
  }
  make_dir(out_dir);
  parallel_for(files.size(), common.jobs,
               [&](std::size_t k) { export_pngs(out_dir, files[k].stem().string(), load_scan(files[k], cfg.sensor)); });
  out << "exported " << files.size() << " scans\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Raydrop-aware diffusion translation of simulated LiDAR range images", "drum"};
  app.require_subcommand(1);

  Common c_toy, c_train, c_translate, c_eval, c_png;

  std::string toy_out;
  auto* toy = app.add_subcommand("make-toy", "generate a procedural sim/real corpus");
  toy->add_option("--out", toy_out, "output directory")->required();
  add_common(toy, c_toy);

  std::string data_dir, ckpt_out, resume;
  auto* train = app.add_subcommand("train-prior", "train the real-domain denoiser");
  train->add_option("--data", data_dir, "directory of real-domain scans")->required();
  train->add_option("--ckpt", ckpt_out, "checkpoint to write")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");
  add_common(train, c_train);

  std::string t_ckpt, sim_dir, t_out, method = "drum";
  bool png = false, verify = false;
  auto* translate = app.add_subcommand("translate", "translate simulated scans into the real domain");
  translate->add_option("--ckpt", t_ckpt, "trained checkpoint")->required();
  translate->add_option("--sim", sim_dir, "directory of simulated scans")->required();
  translate->add_option("--out", t_out, "output directory")->required();
  translate->add_option("--method", method, "drum, sdedit or pigdm")
      ->check(CLI::IsMember({"drum", "sdedit", "pigdm"}));
  translate->add_flag("--png", png, "also write range and reflectance PNGs");
  translate->add_flag("--verify", verify, "audit label consistency of every output");
  add_common(translate, c_translate);

  std::string dir_a, dir_b, save_feat;
  std::vector<std::string> features;
  std::string report = "eval_report.json";
  auto* eval = app.add_subcommand("eval", "compare two scan sets");
  eval->add_option("--a", dir_a, "first scan directory");
  eval->add_option("--b", dir_b, "second scan directory");
  eval->add_option("--features", features, "two DRUMFEAT files used instead of built-in features")->expected(2);
  eval->add_option("--report", report, "JSON report path");
  eval->add_option("--save-features", save_feat, "write built-in features as a.feat and b.feat here");
  add_common(eval, c_eval);

  std::string png_in, png_out;
  auto* export_png = app.add_subcommand("export-png", "render scans as grayscale PNGs");
  export_png->add_option("--in", png_in, "scan file or directory")->required();
  export_png->add_option("--out", png_out, "output directory")->required();
  add_common(export_png, c_png);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (toy->parsed()) return cmd_make_toy(c_toy, toy_out, out);
    if (train->parsed()) return cmd_train(c_train, data_dir, ckpt_out, resume, out);
    if (translate->parsed()) return cmd_translate(c_translate, t_ckpt, sim_dir, t_out, method, png, verify, out, err);
    if (eval->parsed()) return cmd_eval(c_eval, dir_a, dir_b, features, report, save_feat, out);
    if (export_png->parsed()) return cmd_export_png(c_png, png_in, png_out, out);
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateTime& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace drum::cli
