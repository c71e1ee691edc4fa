#include "forge/pipeline.hpp"

#include <fstream>
#include <set>

#include "forge/binarizer.hpp"
#include "forge/embedder.hpp"
#include "forge/errors.hpp"
#include "forge/masterprint.hpp"
#include "forge/minutiae.hpp"
#include "forge/renderer.hpp"
#include "forge/warp.hpp"

#include <json.hpp>

namespace forge {

GenerationConfig GenerationConfig::from_file(const std::filesystem::path& path) {
  const ConfigFile cfg = ConfigFile::parse_file(path);
  GenerationConfig g;
  g.n_fingers = static_cast<int>(cfg.get_int("generate", "n_fingers"));
  g.impressions_per_finger =
      static_cast<int>(cfg.get_int("generate", "impressions_per_finger"));
  for (const auto& m : cfg.get_str_list("generate", "materials"))
    g.materials.push_back(normalize_material(m));
  g.root_seed = static_cast<std::uint64_t>(cfg.get_int("generate", "root_seed", 0));
  g.out_root = cfg.get_str("generate", "out_root");
  g.split = cfg.get_str("generate", "split", "train");
  g.dump_warped = cfg.get_bool("generate", "dump_warped", false);
  g.output_size = static_cast<int>(cfg.get_int("generate", "output_size", 512));
  g.masterprint_checkpoint = cfg.get_str("checkpoints", "masterprint");
  g.basis_file = cfg.get_str("checkpoints", "basis");
  for (const auto& key : cfg.keys("renderers"))
    g.renderer_checkpoints[normalize_material(key)] = cfg.get_str("renderers", key);
  return g;
}

void GenerationConfig::validate() const {
  require(n_fingers >= 1, "ConfigError", "n_fingers must be >= 1");
  require(impressions_per_finger >= 1, "ConfigError",
          "impressions_per_finger must be >= 1");
  require(!materials.empty(), "ConfigError", "at least one material required");
  require(output_size % 16 == 0, "ConfigError", "output_size must be divisible by 16");
  require(std::filesystem::exists(masterprint_checkpoint), "ConfigError",
          "missing master-print checkpoint " + masterprint_checkpoint.string());
  require(std::filesystem::exists(basis_file), "ConfigError",
          "missing deformation basis " + basis_file.string());
  for (const auto& m : materials) {
    const auto it = renderer_checkpoints.find(m);
    require(it != renderer_checkpoints.end(), "ConfigError",
            "no renderer checkpoint configured for material '" + m + "'");
    require(std::filesystem::exists(it->second), "ConfigError",
            "missing renderer checkpoint " + it->second.string());
  }
}

namespace {

std::string finger_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "f%04d", index);
  return buf;
}

}  // namespace

Dataset generate_dataset(const GenerationConfig& config) {
  config.validate();

  MasterPrintGan gan = MasterPrintGan::load(config.masterprint_checkpoint);
  const DeformationBasis basis = load_basis(config.basis_file);
  std::map<std::string, TextureRenderer> renderers;
  for (const auto& m : config.materials)
    renderers.emplace(m, TextureRenderer::load(config.renderer_checkpoints.at(m)));

  std::error_code ec;
  std::filesystem::create_directories(config.out_root / "images", ec);

  Dataset ds;
  ds.root = config.out_root;
  ds.provenance = "synthetic";

  const int out_size = config.output_size;
  for (int f = 0; f < config.n_fingers; ++f) {
    const std::string fid = finger_name(f);
    const auto latent =
        sample_identity_latent(derive_seed(config.root_seed, {"identity", fid}));
    const MasterPrint master = gan.generate(latent);

    for (int j = 0; j < config.impressions_per_finger; ++j) {
      Rng warp_rng(derive_seed(config.root_seed, {"warp", fid, std::to_string(j)}));
      const auto [pose, coeffs] = sample_pose_and_coeffs(warp_rng, basis);
      const DistortionSample field = compose_distortion_field(
          basis, coeffs, kMasterPrintSize, kMasterPrintSize);
      // One warped binary per impression, shared by every material render.
      const Image warped = apply_warp(master.image, pose, field);
      const Image warped_up = resize_bilinear(warped, out_size, out_size);

      if (config.dump_warped) {
        const auto wpath =
            config.out_root / "warped" / (fid + "_" + std::to_string(j) + ".png");
        if (!std::filesystem::exists(wpath)) write_png_gray(wpath, warped_up);
      }

      for (const auto& m : config.materials) {
        const auto z = sample_texture_latent(
            derive_seed(config.root_seed, {"texture", fid, std::to_string(j), m}));
        ImpressionRecord rec;
        rec.finger_id = fid;
        rec.impression_id = j;
        rec.material = m;
        rec.is_live = (m == "live");
        rec.split = config.split;
        rec.image_path =
            "images/" + fid + "_" + std::to_string(j) + "_" + m + ".png";
        rec.width = out_size;
        rec.height = out_size;
        rec.dpi = 500;

        const auto file = config.out_root / rec.image_path;
        if (!std::filesystem::exists(file)) {
          const Image rendered = renderers.at(m).render(warped_up, z);
          write_png_gray(file, rendered, rec.dpi);
        }
        ds.records.push_back(std::move(rec));
      }
    }
  }

  write_manifest(ds, config.out_root / "manifest.csv");
  return ds;
}

// ---------------------------------------------------------------------------
// Evaluation protocol

ReportConfig ReportConfig::from_file(const std::filesystem::path& path) {
  const ConfigFile cfg = ConfigFile::parse_file(path);
  ReportConfig r;
  r.synthetic_root = cfg.get_str("report", "synthetic_root");
  r.synthetic_manifest = cfg.get_str("report", "synthetic_manifest");
  r.real_root = cfg.get_str("report", "real_root");
  r.real_manifest = cfg.get_str("report", "real_manifest");
  r.out_dir = cfg.get_str("report", "out_dir");
  r.embedder_checkpoint = cfg.get_str("report", "embedder", "");
  r.projection_seed =
      static_cast<std::uint64_t>(cfg.get_int("report", "projection_seed", 21));
  r.leakage_threshold = cfg.get_double("report", "leakage_threshold", 0.9);
  if (cfg.has("report", "far_targets"))
    r.far_targets = cfg.get_double_list("report", "far_targets");
  r.imposter_cap = cfg.get_int("report", "imposter_cap", 200000);
  r.nfiq2_binary = cfg.get_str("report", "nfiq2_binary", "");
  return r;
}

std::filesystem::path replicate_eval_protocol(const ReportConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);

  nlohmann::json summary;
  summary["artifacts"] = nlohmann::json::array();
  summary["steps"] = nlohmann::json::object();

  const Dataset synthetic = load_dataset(config.synthetic_root, config.synthetic_manifest);
  const Dataset real = load_dataset(config.real_root, config.real_manifest);

  std::unique_ptr<Embedder> embedder;
  if (!config.embedder_checkpoint.empty())
    embedder = std::make_unique<CnnEmbedder>(CnnEmbedder::load(config.embedder_checkpoint));
  else
    embedder = std::make_unique<ProjectionEmbedder>(config.projection_seed);

  const auto record_failure = [&](const std::string& step, const Error& e) {
    summary["steps"][step] = {{"status", "failed"}, {"code", e.code()},
                              {"message", e.what()}};
  };
  const auto record_ok = [&](const std::string& step, const std::string& artifact) {
    summary["steps"][step] = {{"status", "ok"}, {"artifact", artifact}};
    summary["artifacts"].push_back(artifact);
  };

  // 1. fingerprint statistics for both datasets
  try {
    const auto stats_path = config.out_dir / "stats.csv";
    std::ofstream out(stats_path, std::ios::trunc);
    out << "dataset,measure,mean,std_dev\n";
    const auto emit = [&](const std::string& name, const Dataset& ds) {
      const FingerprintStats s =
          fingerprint_stats(ds, classical_binarize, config.nfiq2_binary);
      const auto row = [&](const std::string& measure, double m, double sd) {
        out << name << ',' << measure << ',' << m << ',' << sd << "\n";
      };
      row("Total Minutiae Count", s.total_mean, s.total_std);
      row("Ridge Ending Minutiae Count", s.ending_mean, s.ending_std);
      row("Ridge Bifurcation Minutiae Count", s.bifurcation_mean, s.bifurcation_std);
      row("Minutiae Quality", s.quality_mean, s.quality_std);
      row("Fingerprint Area (Megapixels)", s.area_mp_mean, s.area_mp_std);
      if (s.nfiq2_mean)
        row("Fingerprint Image Quality (NFIQ2)", *s.nfiq2_mean, *s.nfiq2_std);
      else
        out << name << ",Fingerprint Image Quality (NFIQ2),n/a,n/a\n";
      out << name << ",Minutiae per Megapixel," << s.minutiae_per_megapixel << ",n/a\n";
    };
    emit("synthetic", synthetic);
    emit("real", real);
    record_ok("fingerprint_stats", "stats.csv");
  } catch (const Error& e) {
    record_failure("fingerprint_stats", e);
  }

  // 2 + 3. score distributions and TAR@FAR, live-live then live-spoof per
  // material present in the synthetic data
  try {
    const auto scores_path = config.out_dir / "scores.csv";
    const auto tars_path = config.out_dir / "tars.csv";
    std::ofstream tars(tars_path, std::ios::trunc);
    tars << "pairing,far,threshold,tar\n";

    bool first = true;
    const auto run_pairing = [&](const std::string& label,
                                 const ScoreDistributionConfig& sdc) {
      const ScoreSet scores = score_distributions(synthetic, *embedder, sdc);
      write_score_csv(scores, label, scores_path, !first);
      first = false;
      if (!scores.imposter.empty()) {
        for (const auto& t : tar_at_far(scores, config.far_targets))
          tars << label << ',' << t.far << ',' << t.threshold << ',' << t.tar << "\n";
      }
    };

    ScoreDistributionConfig live_cfg;
    live_cfg.pairing = Pairing::live_live;
    live_cfg.imposter_cap = config.imposter_cap;
    run_pairing("live_live", live_cfg);

    std::set<std::string> materials;
    for (const auto& r : synthetic.records)
      if (!r.is_live) materials.insert(r.material);
    for (const auto& m : materials) {
      ScoreDistributionConfig sp_cfg;
      sp_cfg.pairing = Pairing::live_spoof;
      sp_cfg.spoof_material = m;
      sp_cfg.imposter_cap = config.imposter_cap;
      run_pairing("live_" + m, sp_cfg);
    }
    record_ok("score_distributions", "scores.csv");
    record_ok("tar_at_far", "tars.csv");
  } catch (const Error& e) {
    record_failure("score_distributions", e);
    record_failure("tar_at_far", e);
  }

  // 4. identity leakage audit of synthetic against the real training set
  try {
    const LeakageReport report =
        leakage_check(synthetic, real, *embedder, config.leakage_threshold);
    const auto leak_path = config.out_dir / "leakage.json";
    std::ofstream out(leak_path, std::ios::trunc);
    out << report.to_json().dump(2) << "\n";
    record_ok("leakage_check", "leakage.json");
  } catch (const Error& e) {
    record_failure("leakage_check", e);
  }

  summary["synthetic_records"] = synthetic.records.size();
  summary["real_records"] = real.records.size();
  const auto summary_path = config.out_dir / "summary.json";
  std::ofstream out(summary_path, std::ios::trunc);
  out << summary.dump(2) << "\n";
  return summary_path;
}

}  // namespace forge
