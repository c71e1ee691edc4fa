#include "forge/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "forge/binarizer.hpp"
#include "forge/config.hpp"
#include "forge/dataset.hpp"
#include "forge/detector.hpp"
#include "forge/embedder.hpp"
#include "forge/errors.hpp"
#include "forge/experiment.hpp"
#include "forge/masterprint.hpp"
#include "forge/minutiae.hpp"
#include "forge/pipeline.hpp"
#include "forge/renderer.hpp"
#include "forge/warp.hpp"

namespace forge::cli {

namespace {

using nlohmann::json;

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

// --- dataset ---------------------------------------------------------------

void cmd_dataset_validate(const std::string& root, const std::string& manifest) {
  const Dataset ds = load_dataset(root, manifest);
  int lives = 0;
  std::set<std::string> fingers, materials;
  for (const auto& r : ds.records) {
    lives += r.is_live ? 1 : 0;
    fingers.insert(r.finger_id);
    materials.insert(r.material);
  }
  emit({{"records", ds.records.size()},
        {"fingers", fingers.size()},
        {"live", lives},
        {"spoof", ds.records.size() - lives},
        {"materials", materials}});
}

void cmd_dataset_import(const std::string& root, const std::string& pattern,
                        const std::string& manifest_out) {
  const Dataset ds = import_directory(root, pattern);
  write_manifest(ds, manifest_out);
  emit({{"records", ds.records.size()}, {"manifest", manifest_out}});
}

void cmd_dataset_export(const std::string& root, const std::string& manifest,
                        const std::string& out_root) {
  const Dataset ds = load_dataset(root, manifest);
  const auto out = export_dataset(ds, out_root);
  emit({{"records", ds.records.size()}, {"manifest", out.string()}});
}

// --- basis -----------------------------------------------------------------

void cmd_basis_synth(int grid, int t, std::uint64_t seed, double lambda1,
                     const std::string& out) {
  const DeformationBasis basis = synthesize_basis(grid, grid, t, seed, lambda1);
  save_basis(basis, out);
  emit({{"grid_w", basis.grid_w},
        {"grid_h", basis.grid_h},
        {"modes", basis.modes()},
        {"file", out}});
}

void cmd_basis_inspect(const std::string& file) {
  const DeformationBasis basis = load_basis(file);
  std::vector<double> eigenvalues(basis.eigenvalues.data(),
                                  basis.eigenvalues.data() + basis.modes());
  double mean_max = 0.0;
  for (int p = 0; p < basis.grid_w * basis.grid_h; ++p)
    mean_max = std::max(mean_max, std::hypot(basis.mean_field[2 * p],
                                             basis.mean_field[2 * p + 1]));
  emit({{"grid_w", basis.grid_w},
        {"grid_h", basis.grid_h},
        {"modes", basis.modes()},
        {"eigenvalues", eigenvalues},
        {"mean_field_max_px", mean_max}});
}

// --- training --------------------------------------------------------------

Dataset load_from_config(const ConfigFile& cfg, const std::string& section) {
  return load_dataset(cfg.get_str(section, "root"), cfg.get_str(section, "manifest"));
}

void cmd_train_masterprint(const std::string& config_path) {
  const ConfigFile cfg = ConfigFile::parse_file(config_path);
  Dataset ds = load_from_config(cfg, "data");
  MasterGanConfig mc;
  mc.base_channels = static_cast<int>(cfg.get_int("train", "base_channels", 64));
  mc.min_channels = static_cast<int>(cfg.get_int("train", "min_channels", 4));
  mc.steps = static_cast<int>(cfg.get_int("train", "steps", 500));
  mc.batch = static_cast<int>(cfg.get_int("train", "batch", 4));
  mc.lr_g = static_cast<float>(cfg.get_double("train", "lr_g", 2e-4));
  mc.lr_d = static_cast<float>(cfg.get_double("train", "lr_d", 2e-4));
  mc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 1));
  mc.loss_log = cfg.get_str("train", "loss_log", "");
  const auto out = cfg.get_str("train", "checkpoint");

  auto result = train_masterprint_gan(ds, mc);
  result.gan.save(out, mc.steps);
  emit({{"checkpoint", out},
        {"steps", mc.steps},
        {"final_loss_G", result.loss_g.back()},
        {"final_loss_D", result.loss_d.back()}});
}

void cmd_train_binarizer(const std::string& config_path) {
  const ConfigFile cfg = ConfigFile::parse_file(config_path);
  Dataset ds = load_from_config(cfg, "data");
  BinarizerTrainConfig bc;
  bc.base_channels = static_cast<int>(cfg.get_int("train", "base_channels", 8));
  bc.steps = static_cast<int>(cfg.get_int("train", "steps", 2000));
  bc.batch = static_cast<int>(cfg.get_int("train", "batch", 4));
  bc.crop = static_cast<int>(cfg.get_int("train", "crop", 96));
  bc.lr = static_cast<float>(cfg.get_double("train", "lr", 1e-3));
  bc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 7));
  bc.loss_log = cfg.get_str("train", "loss_log", "");
  const auto out = cfg.get_str("train", "checkpoint");

  // Teacher pairs come from the classical path.
  std::vector<std::pair<Image, Image>> pairs;
  for (const auto& r : ds.records) {
    Image gray = resize_short_crop(ds.load_image(r), 256);
    pairs.push_back({gray, classical_binarize(gray)});
  }
  auto result = train_binarizer(pairs, bc);
  result.net.save(out, bc.steps);
  emit({{"checkpoint", out}, {"steps", bc.steps}, {"final_loss", result.final_loss}});
}

void cmd_train_renderer(const std::string& config_path, const std::string& material,
                        const std::string& init_path) {
  const ConfigFile cfg = ConfigFile::parse_file(config_path);
  Dataset ds = load_from_config(cfg, "data");

  RendererTrainConfig rc;
  rc.base_channels = static_cast<int>(cfg.get_int("train", "base_channels", 8));
  rc.disc_channels = static_cast<int>(cfg.get_int("train", "disc_channels", 24));
  rc.train_resolution = static_cast<int>(cfg.get_int("train", "resolution", 256));
  rc.steps = static_cast<int>(cfg.get_int("train", "steps", 500));
  rc.batch = static_cast<int>(cfg.get_int("train", "batch", 2));
  rc.lr_g = static_cast<float>(cfg.get_double("train", "lr_g", 2e-4));
  rc.lr_d = static_cast<float>(cfg.get_double("train", "lr_d", 2e-4));
  rc.weights.adv = cfg.get_double("train", "weight_adv", 1.0);
  rc.weights.dp = cfg.get_double("train", "weight_dp", 2.0);
  rc.weights.pixel = cfg.get_double("train", "weight_pixel", 10.0);
  rc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 3));
  rc.finetune_epochs = static_cast<int>(cfg.get_int("train", "finetune_epochs", 3));
  rc.loss_log = cfg.get_str("train", "loss_log", "");

  Binarizer binarizer = Binarizer::load(cfg.get_str("train", "binarizer"));
  CnnEmbedder embedder =
      cfg.has("train", "embedder")
          ? CnnEmbedder::load(cfg.get_str("train", "embedder"))
          : CnnEmbedder(8, static_cast<std::uint64_t>(cfg.get_int("train", "seed", 3)));

  std::optional<TextureRenderer> init;
  if (!init_path.empty()) init = TextureRenderer::load(init_path);

  const auto out = cfg.get_str("train", "checkpoint");
  auto result = train_renderer(ds, init, material, embedder, binarizer, rc);
  if (init.has_value()) result.renderer.set_parent(init_path);
  result.renderer.save(out);
  emit({{"checkpoint", out},
        {"material", material},
        {"final_L_i", result.pixel_log.back()}});
}

void cmd_train_detector(const std::string& config_path, const std::string& branch) {
  const ConfigFile cfg = ConfigFile::parse_file(config_path);
  Dataset ds = load_from_config(cfg, "data");
  DetectorTrainConfig dc;
  dc.backbone = cfg.get_str("train", "backbone", "small_cnn");
  dc.input_size = static_cast<int>(cfg.get_int("train", "input_size", 96));
  dc.steps = static_cast<int>(cfg.get_int("train", "steps", 2000));
  dc.batch = static_cast<int>(cfg.get_int("train", "batch", 8));
  dc.lr = static_cast<float>(cfg.get_double("train", "lr", 0.01));
  dc.decay_every = static_cast<int>(cfg.get_int("train", "decay_every", 500));
  dc.decay_gamma = static_cast<float>(cfg.get_double("train", "decay_gamma", 0.5));
  dc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 5));
  dc.loss_log = cfg.get_str("train", "loss_log", "");
  const auto out = cfg.get_str("train", "checkpoint");

  const auto kind =
      branch == "patch" ? DetectorBranchKind::patch : DetectorBranchKind::whole;
  auto result = train_detector(ds, kind, dc);
  result.branch.save(out);
  emit({{"checkpoint", out},
        {"branch", branch},
        {"val_accuracy", result.val_accuracy}});
}

// --- inference helpers -------------------------------------------------------

void cmd_binarize(const std::string& image_path, const std::string& out_path,
                  const std::string& params_path) {
  const Image gray = read_png_gray(image_path);
  Image result;
  if (params_path.empty()) {
    result = classical_binarize(gray);
  } else {
    Binarizer net = Binarizer::load(params_path);
    result = net.binarize(gray);
  }
  write_png_gray(out_path, result);
  emit({{"input", image_path}, {"output", out_path},
        {"mode", params_path.empty() ? "classical" : "autoencoder"}});
}

void cmd_stats(const std::string& root, const std::string& manifest,
               const std::string& out_csv, const std::string& nfiq2) {
  const Dataset ds = load_dataset(root, manifest);
  const FingerprintStats stats = fingerprint_stats(ds, classical_binarize, nfiq2);
  write_stats_csv(stats, out_csv);
  emit({{"images", stats.image_count},
        {"total_minutiae_mean", stats.total_mean},
        {"minutiae_per_megapixel", stats.minutiae_per_megapixel},
        {"csv", out_csv}});
}

void cmd_eval_match(const std::string& root, const std::string& manifest,
                    const std::string& pairing, const std::string& material,
                    const std::string& embedder_path, std::uint64_t seed,
                    const std::string& out_csv) {
  const Dataset ds = load_dataset(root, manifest);
  std::unique_ptr<Embedder> embedder;
  if (!embedder_path.empty())
    embedder = std::make_unique<CnnEmbedder>(CnnEmbedder::load(embedder_path));
  else
    embedder = std::make_unique<ProjectionEmbedder>(seed);

  ScoreDistributionConfig sdc;
  sdc.pairing = pairing == "live-spoof" ? Pairing::live_spoof : Pairing::live_live;
  sdc.spoof_material = material;
  const ScoreSet scores = score_distributions(ds, *embedder, sdc);
  write_score_csv(scores, pairing == "live-spoof" ? "live_spoof" : "live_live", out_csv);
  emit({{"genuine_pairs", scores.genuine.size()},
        {"imposter_pairs", scores.imposter.size()},
        {"csv", out_csv}});
}

void cmd_eval_leakage(const std::string& synth_root, const std::string& synth_manifest,
                      const std::string& train_root, const std::string& train_manifest,
                      double threshold, const std::string& embedder_path,
                      std::uint64_t seed, const std::string& out_json) {
  const Dataset synthetic = load_dataset(synth_root, synth_manifest);
  const Dataset training = load_dataset(train_root, train_manifest);
  std::unique_ptr<Embedder> embedder;
  if (!embedder_path.empty())
    embedder = std::make_unique<CnnEmbedder>(CnnEmbedder::load(embedder_path));
  else
    embedder = std::make_unique<ProjectionEmbedder>(seed);

  const LeakageReport report = leakage_check(synthetic, training, *embedder, threshold);
  if (!out_json.empty()) {
    std::ofstream out(out_json, std::ios::trunc);
    out << report.to_json().dump(2) << "\n";
  }
  emit(report.to_json());
}

void cmd_experiment(const std::string& config_path) {
  const ConfigFile cfg = ConfigFile::parse_file(config_path);
  const Dataset real = load_dataset(cfg.get_str("real", "root"),
                                    cfg.get_str("real", "manifest"));
  Dataset synthetic = load_dataset(cfg.get_str("synthetic", "root"),
                                   cfg.get_str("synthetic", "manifest"));
  synthetic.provenance = "synthetic";

  AugmentationConfig ac;
  ac.out_dir = cfg.get_str("experiment", "out_dir");
  if (cfg.has("experiment", "real_fractions"))
    ac.real_fractions = cfg.get_double_list("experiment", "real_fractions");
  ac.fdr_target = cfg.get_double("experiment", "fdr_target", 0.002);
  ac.seed = static_cast<std::uint64_t>(cfg.get_int("experiment", "seed", 17));
  ac.jobs = static_cast<int>(cfg.get_int("experiment", "jobs", 1));
  ac.detector.steps = static_cast<int>(cfg.get_int("detector", "steps", 400));
  ac.detector.input_size = static_cast<int>(cfg.get_int("detector", "input_size", 64));
  ac.detector.batch = static_cast<int>(cfg.get_int("detector", "batch", 8));
  ac.detector.lr = static_cast<float>(cfg.get_double("detector", "lr", 0.01));

  std::vector<Dataset> eval_storage;
  std::vector<NamedEvalSet> evals;
  for (const auto& name : cfg.keys("eval_sets"))
    eval_storage.push_back(load_dataset(
        std::filesystem::path(cfg.get_str("eval_sets", name)).parent_path(),
        cfg.get_str("eval_sets", name)));
  const auto names = cfg.keys("eval_sets");
  for (size_t i = 0; i < names.size(); ++i)
    evals.push_back({names[i], &eval_storage[i]});

  const auto result = run_augmentation_experiment(real, synthetic, evals, ac);
  emit({{"cells", result.cells.size()},
        {"results_csv", result.results_csv.string()},
        {"plot_csv", result.plot_csv.string()}});
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"synthetic fingerprint pipeline"};
  app.require_subcommand(1);

  // dataset
  auto* dataset = app.add_subcommand("dataset", "manifest tooling");
  dataset->require_subcommand(1);
  std::string ds_root = ".", ds_manifest, ds_out, ds_pattern;
  auto* validate = dataset->add_subcommand("validate", "check a manifest");
  validate->add_option("--root", ds_root);
  validate->add_option("--manifest", ds_manifest)->required();
  auto* import = dataset->add_subcommand("import", "adapter-based ingestion");
  import->add_option("--root", ds_root)->required();
  import->add_option("--pattern", ds_pattern)->required();
  import->add_option("--out", ds_out)->required();
  auto* exportc = dataset->add_subcommand("export", "re-encode a dataset");
  exportc->add_option("--root", ds_root);
  exportc->add_option("--manifest", ds_manifest)->required();
  exportc->add_option("--out", ds_out)->required();

  // basis
  auto* basis = app.add_subcommand("basis", "deformation basis tooling");
  basis->require_subcommand(1);
  int basis_grid = 16, basis_t = 8;
  std::uint64_t basis_seed = 13;
  double basis_lambda1 = 4000.0;
  std::string basis_file;
  auto* bsynth = basis->add_subcommand("synth", "synthesize a random smooth basis");
  bsynth->add_option("--grid", basis_grid);
  bsynth->add_option("--modes", basis_t);
  bsynth->add_option("--seed", basis_seed);
  bsynth->add_option("--lambda1", basis_lambda1);
  bsynth->add_option("--out", basis_file)->required();
  auto* binspect = basis->add_subcommand("inspect", "summarize a basis file");
  binspect->add_option("file", basis_file)->required();

  // train
  auto* train = app.add_subcommand("train", "train one pipeline stage");
  train->require_subcommand(1);
  std::string train_config, renderer_material = "live", renderer_init, detector_branch = "whole";
  auto* tmp_master = train->add_subcommand("masterprint", "stage-1 identity GAN");
  tmp_master->add_option("--config", train_config)->required();
  auto* tmp_bin = train->add_subcommand("binarizer", "differentiable binarizer");
  tmp_bin->add_option("--config", train_config)->required();
  auto* tmp_rend = train->add_subcommand("renderer", "texture renderer");
  tmp_rend->add_option("--config", train_config)->required();
  tmp_rend->add_option("--material", renderer_material);
  tmp_rend->add_option("--init", renderer_init);
  auto* tmp_det = train->add_subcommand("detector", "spoof detector branch");
  tmp_det->add_option("--config", train_config)->required();
  tmp_det->add_option("--branch", detector_branch);

  // binarize
  auto* binz = app.add_subcommand("binarize", "binarize one image");
  std::string bin_in, bin_out = "binarized.png", bin_params;
  binz->add_option("image", bin_in)->required();
  binz->add_option("--out", bin_out);
  binz->add_option("--params", bin_params);

  // generate
  auto* gen = app.add_subcommand("generate", "run the full synthesis pipeline");
  std::string gen_config;
  gen->add_option("--config", gen_config)->required();

  // stats
  auto* stats = app.add_subcommand("stats", "fingerprint statistics for a manifest");
  std::string stats_manifest, stats_root = "", stats_csv = "stats.csv", stats_nfiq2;
  stats->add_option("manifest", stats_manifest)->required();
  stats->add_option("--root", stats_root);
  stats->add_option("--out", stats_csv);
  stats->add_option("--nfiq2", stats_nfiq2);

  // eval
  auto* eval = app.add_subcommand("eval", "matcher-based evaluations");
  eval->require_subcommand(1);
  std::string eval_root = ".", eval_manifest, eval_pairing = "live-live";
  std::string eval_material, eval_embedder, eval_csv = "scores.csv";
  std::uint64_t eval_seed = 21;
  auto* match = eval->add_subcommand("match", "genuine/imposter score distributions");
  match->add_option("--root", eval_root);
  match->add_option("--manifest", eval_manifest)->required();
  match->add_option("--pairing", eval_pairing)
      ->check(CLI::IsMember({"live-live", "live-spoof"}));
  match->add_option("--material", eval_material);
  match->add_option("--embedder", eval_embedder);
  match->add_option("--seed", eval_seed);
  match->add_option("--out", eval_csv);
  std::string leak_synth_root = ".", leak_synth_manifest, leak_train_root = ".";
  std::string leak_train_manifest, leak_json;
  double leak_threshold = 0.9;
  auto* leakage = eval->add_subcommand("leakage", "identity leakage audit");
  leakage->add_option("--synthetic-root", leak_synth_root);
  leakage->add_option("--synthetic-manifest", leak_synth_manifest)->required();
  leakage->add_option("--training-root", leak_train_root);
  leakage->add_option("--training-manifest", leak_train_manifest)->required();
  leakage->add_option("--threshold", leak_threshold);
  leakage->add_option("--embedder", eval_embedder);
  leakage->add_option("--seed", eval_seed);
  leakage->add_option("--out", leak_json);

  // experiment
  auto* experiment = app.add_subcommand("experiment", "training-composition studies");
  experiment->require_subcommand(1);
  std::string exp_config;
  auto* aug = experiment->add_subcommand("augmentation", "real/synthetic composition table");
  aug->add_option("--config", exp_config)->required();

  // report
  auto* report = app.add_subcommand("report", "full quantitative protocol bundle");
  std::string report_config;
  report->add_option("--config", report_config)->required();

  try {
    app.parse(argc, argv);

    if (validate->parsed()) cmd_dataset_validate(ds_root, ds_manifest);
    else if (import->parsed()) cmd_dataset_import(ds_root, ds_pattern, ds_out);
    else if (exportc->parsed()) cmd_dataset_export(ds_root, ds_manifest, ds_out);
    else if (bsynth->parsed())
      cmd_basis_synth(basis_grid, basis_t, basis_seed, basis_lambda1, basis_file);
    else if (binspect->parsed()) cmd_basis_inspect(basis_file);
    else if (tmp_master->parsed()) cmd_train_masterprint(train_config);
    else if (tmp_bin->parsed()) cmd_train_binarizer(train_config);
    else if (tmp_rend->parsed())
      cmd_train_renderer(train_config, normalize_material(renderer_material), renderer_init);
    else if (tmp_det->parsed()) cmd_train_detector(train_config, detector_branch);
    else if (binz->parsed()) cmd_binarize(bin_in, bin_out, bin_params);
    else if (gen->parsed()) {
      const Dataset ds = generate_dataset(GenerationConfig::from_file(gen_config));
      emit({{"records", ds.records.size()},
            {"manifest", (ds.root / "manifest.csv").string()}});
    } else if (stats->parsed()) {
      cmd_stats(stats_root, stats_manifest, stats_csv, stats_nfiq2);
    } else if (match->parsed()) {
      cmd_eval_match(eval_root, eval_manifest, eval_pairing, eval_material,
                     eval_embedder, eval_seed, eval_csv);
    } else if (leakage->parsed()) {
      cmd_eval_leakage(leak_synth_root, leak_synth_manifest, leak_train_root,
                       leak_train_manifest, leak_threshold, eval_embedder, eval_seed,
                       leak_json);
    } else if (aug->parsed()) {
      cmd_experiment(exp_config);
    } else if (report->parsed()) {
      const auto summary = replicate_eval_protocol(ReportConfig::from_file(report_config));
      emit({{"summary", summary.string()}});
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump()
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "InternalError"}, {"message", e.what()}}}}.dump()
              << std::endl;
    return 1;
  }
}

}  // namespace forge::cli
