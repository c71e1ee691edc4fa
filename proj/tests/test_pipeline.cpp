#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "forge/binarizer.hpp"
#include "forge/cli.hpp"
#include "forge/embedder.hpp"
#include "forge/errors.hpp"
#include "forge/masterprint.hpp"
#include "forge/pipeline.hpp"
#include "forge/renderer.hpp"
#include "forge/warp.hpp"
#include "toy.hpp"

using namespace forge;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Minimal trained artifacts shared by the generation tests; quality does not
// matter here, determinism and plumbing do.
struct Checkpoints {
  std::filesystem::path master, basis, live, ecoflex;
};

Checkpoints make_checkpoints(const std::filesystem::path& dir) {
  Checkpoints ck;
  ck.master = dir / "master.ckpt";
  ck.basis = dir / "basis.fbasis";
  ck.live = dir / "live.ckpt";
  ck.ecoflex = dir / "ecoflex.ckpt";

  const Dataset bin_ds = testsupport::write_toy_binary_dataset(dir / "bin", 6, 70);
  MasterGanConfig mc;
  mc.base_channels = 8;
  mc.min_channels = 4;
  mc.steps = 3;
  mc.batch = 2;
  mc.seed = 4;
  auto gan = train_masterprint_gan(bin_ds, mc);
  gan.gan.save(ck.master, mc.steps);

  save_basis(synthesize_basis(16, 16, 6, 3), ck.basis);

  const Dataset tex_ds =
      testsupport::write_toy_dataset(dir / "tex", 2, 2, {"live", "ecoflex"}, 71, 64);
  CnnEmbedder embedder(4, 1);
  Binarizer binarizer(4, 2);
  RendererTrainConfig rc;
  rc.base_channels = 4;
  rc.disc_channels = 8;
  rc.train_resolution = 64;
  rc.steps = 3;
  rc.batch = 2;
  rc.seed = 6;
  auto live = train_renderer(tex_ds, std::nullopt, "live", embedder, binarizer, rc);
  live.renderer.save(ck.live);
  rc.seed = 7;
  auto eco = train_renderer(tex_ds, std::nullopt, "all_spoof", embedder, binarizer, rc);
  eco.renderer.set_material("ecoflex");
  eco.renderer.save(ck.ecoflex);
  return ck;
}

GenerationConfig make_generation_config(const Checkpoints& ck,
                                        const std::filesystem::path& out_root) {
  GenerationConfig cfg;
  cfg.n_fingers = 2;
  cfg.impressions_per_finger = 3;
  cfg.materials = {"live", "ecoflex"};
  cfg.root_seed = 99;
  cfg.masterprint_checkpoint = ck.master;
  cfg.basis_file = ck.basis;
  cfg.renderer_checkpoints = {{"live", ck.live}, {"ecoflex", ck.ecoflex}};
  cfg.out_root = out_root;
  cfg.dump_warped = true;
  cfg.output_size = 128;  // desk-scale output for test speed
  return cfg;
}

}  // namespace

TEST_CASE("generate: arithmetic, determinism, shared warped binaries, resume") {
  const auto dir = testsupport::make_temp_dir("pipe_gen");
  const Checkpoints ck = make_checkpoints(dir / "ck");

  const auto cfg1 = make_generation_config(ck, dir / "run1");
  const Dataset ds = generate_dataset(cfg1);
  CHECK(ds.records.size() == 2 * 3 * 2);
  CHECK(ds.provenance == "synthetic");

  int files = 0;
  for (const auto& entry :
       std::filesystem::directory_iterator(dir / "run1" / "images"))
    if (entry.is_regular_file()) ++files;
  CHECK(files == 12);

  // one warped binary per (finger, impression), shared across materials
  int warped_files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "run1" / "warped"))
    if (entry.is_regular_file()) ++warped_files;
  CHECK(warped_files == 6);

  // byte-identical second run
  const auto cfg2 = make_generation_config(ck, dir / "run2");
  generate_dataset(cfg2);
  CHECK(read_file(dir / "run1" / "manifest.csv") == read_file(dir / "run2" / "manifest.csv"));
  for (const auto& r : ds.records)
    CHECK(read_file(dir / "run1" / r.image_path) == read_file(dir / "run2" / r.image_path));

  // resumable: delete a few outputs, re-run, bytes identical again
  std::filesystem::remove(dir / "run1" / ds.records[3].image_path);
  std::filesystem::remove(dir / "run1" / ds.records[7].image_path);
  generate_dataset(cfg1);
  for (const auto& r : ds.records)
    CHECK(read_file(dir / "run1" / r.image_path) == read_file(dir / "run2" / r.image_path));
}

TEST_CASE("generate: missing renderer checkpoint is ConfigError") {
  const auto dir = testsupport::make_temp_dir("pipe_missing");
  const Checkpoints ck = make_checkpoints(dir / "ck");
  auto cfg = make_generation_config(ck, dir / "out");
  cfg.materials.push_back("gelatine");  // no checkpoint configured
  try {
    generate_dataset(cfg);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == "ConfigError");
  }
}

TEST_CASE("generation config file parsing") {
  const auto dir = testsupport::make_temp_dir("pipe_cfg");
  const Checkpoints ck = make_checkpoints(dir / "ck");
  std::ofstream out(dir / "gen.toml");
  out << "[generate]\n"
      << "n_fingers = 1\n"
      << "impressions_per_finger = 2\n"
      << "materials = [\"live\", \"ecoflex\"]\n"
      << "root_seed = 5\n"
      << "out_root = \"" << (dir / "out").string() << "\"\n"
      << "output_size = 128\n"
      << "[checkpoints]\n"
      << "masterprint = \"" << ck.master.string() << "\"\n"
      << "basis = \"" << ck.basis.string() << "\"\n"
      << "[renderers]\n"
      << "live = \"" << ck.live.string() << "\"\n"
      << "ecoflex = \"" << ck.ecoflex.string() << "\"\n";
  out.close();

  const auto cfg = GenerationConfig::from_file(dir / "gen.toml");
  CHECK(cfg.n_fingers == 1);
  CHECK(cfg.impressions_per_finger == 2);
  CHECK(cfg.materials == std::vector<std::string>{"live", "ecoflex"});
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.records.size() == 4);
}

TEST_CASE("report bundle: exactly four artifacts plus deterministic summary") {
  const auto dir = testsupport::make_temp_dir("pipe_report");
  testsupport::write_toy_dataset(dir / "synth", 2, 2, {"live", "ecoflex"}, 80, 64,
                                 "train", 0.0, "synthetic");
  testsupport::write_toy_dataset(dir / "real", 2, 2, {"live"}, 81, 64);

  ReportConfig cfg;
  cfg.synthetic_root = dir / "synth";
  cfg.synthetic_manifest = dir / "synth" / "manifest.csv";
  cfg.real_root = dir / "real";
  cfg.real_manifest = dir / "real" / "manifest.csv";
  cfg.out_dir = dir / "bundle";
  cfg.leakage_threshold = 0.95;
  cfg.far_targets = {0.5, 0.25};

  const auto summary_path = replicate_eval_protocol(cfg);
  const auto summary = nlohmann::json::parse(read_file(summary_path));

  REQUIRE(summary.contains("artifacts"));
  const auto artifacts = summary["artifacts"].get<std::vector<std::string>>();
  CHECK(artifacts == std::vector<std::string>{"stats.csv", "scores.csv", "tars.csv",
                                              "leakage.json"});
  for (const auto& a : artifacts) CHECK(std::filesystem::exists(dir / "bundle" / a));

  // live-spoof pairing present for the configured material
  const std::string scores = read_file(dir / "bundle" / "scores.csv");
  CHECK(scores.find("live_live_genuine") != std::string::npos);
  CHECK(scores.find("live_ecoflex_genuine") != std::string::npos);

  // identical re-run
  cfg.out_dir = dir / "bundle2";
  const auto summary2 = nlohmann::json::parse(read_file(replicate_eval_protocol(cfg)));
  CHECK(summary == summary2);
}

TEST_CASE("cli: dataset validate and basis tools run in-process") {
  const auto dir = testsupport::make_temp_dir("pipe_cli");
  testsupport::write_toy_dataset(dir / "ds", 2, 1, {"live"}, 90, 64);
  const std::string manifest = (dir / "ds" / "manifest.csv").string();
  const std::string root = (dir / "ds").string();

  {
    const char* argv[] = {"forge", "dataset", "validate", "--root", root.c_str(),
                          "--manifest", manifest.c_str()};
    CHECK(forge::cli::run(7, argv) == 0);
  }
  {
    const std::string basis = (dir / "b.fbasis").string();
    const char* argv[] = {"forge", "basis", "synth", "--out", basis.c_str()};
    CHECK(forge::cli::run(5, argv) == 0);
    const char* argv2[] = {"forge", "basis", "inspect", basis.c_str()};
    CHECK(forge::cli::run(4, argv2) == 0);
  }
  {
    // failure path: nonzero exit on a missing manifest
    const char* argv[] = {"forge", "dataset", "validate", "--manifest", "/no/such.csv"};
    CHECK(forge::cli::run(5, argv) != 0);
  }
}

TEST_CASE("cli: binarize and stats subcommands") {
  const auto dir = testsupport::make_temp_dir("pipe_cli2");
  const Dataset ds = testsupport::write_toy_dataset(dir / "ds", 1, 1, {"live"}, 91, 128);
  const std::string img = (dir / "ds" / ds.records[0].image_path).string();
  const std::string out = (dir / "bin.png").string();
  {
    const char* argv[] = {"forge", "binarize", img.c_str(), "--out", out.c_str()};
    CHECK(forge::cli::run(5, argv) == 0);
    CHECK(std::filesystem::exists(out));
  }
  {
    const std::string manifest = (dir / "ds" / "manifest.csv").string();
    const std::string root = (dir / "ds").string();
    const std::string csv = (dir / "stats.csv").string();
    const char* argv[] = {"forge", "stats",  manifest.c_str(), "--root",
                          root.c_str(), "--out", csv.c_str()};
    CHECK(forge::cli::run(7, argv) == 0);
    CHECK(std::filesystem::exists(csv));
  }
}
