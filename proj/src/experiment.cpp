#include "forge/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "forge/errors.hpp"
#include "forge/random.hpp"

namespace forge {

std::string composition_name(Composition c) {
  switch (c) {
    case Composition::synthetic_only: return "synthetic_only";
    case Composition::synthetic_plus_real_live: return "synthetic_plus_real_live";
    case Composition::real_only: return "real_only";
    case Composition::real_plus_synthetic: return "real_plus_synthetic";
  }
  return "?";
}

std::vector<Composition> all_compositions() {
  return {Composition::synthetic_only, Composition::synthetic_plus_real_live,
          Composition::real_only, Composition::real_plus_synthetic};
}

namespace {

// Training list for one cell: the synthetic block (when the composition
// includes it) plus a seeded, fraction-sized sample of the real records.
// Paths are made absolute so records from both source trees can share one
// in-memory dataset.
std::vector<ImpressionRecord> cell_records(const Dataset& real, const Dataset& synthetic,
                                           Composition comp, double fraction_percent,
                                           std::uint64_t seed) {
  std::vector<ImpressionRecord> out;
  const bool use_synth = comp != Composition::real_only;
  const bool use_real = comp != Composition::synthetic_only;
  const bool real_live_only = comp == Composition::synthetic_plus_real_live;

  const auto add_abs = [&out](const Dataset& ds, const ImpressionRecord& r) {
    ImpressionRecord copy = r;
    copy.image_path = (ds.root / r.image_path).string();
    out.push_back(std::move(copy));
  };

  if (use_synth)
    for (const auto& r : filter_split(synthetic.records, "train"))
      add_abs(synthetic, r);

  if (use_real && fraction_percent > 0.0) {
    std::vector<ImpressionRecord> pool = filter_split(real.records, "train");
    if (real_live_only) {
      std::vector<ImpressionRecord> lives;
      for (auto& r : pool)
        if (r.is_live) lives.push_back(r);
      pool = std::move(lives);
    }
    Rng rng(seed);
    for (size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.below(i)]);
    const auto take = static_cast<size_t>(std::min<double>(
        static_cast<double>(pool.size()),
        std::ceil(static_cast<double>(pool.size()) * fraction_percent / 100.0)));
    for (size_t i = 0; i < take; ++i) add_abs(real, pool[i]);
  }
  return out;
}

}  // namespace

AugmentationResult run_augmentation_experiment(const Dataset& real,
                                               const Dataset& synthetic,
                                               const std::vector<NamedEvalSet>& eval_sets,
                                               const AugmentationConfig& config) {
  require(real.provenance != synthetic.provenance, "ExperimentError",
          "real and synthetic datasets must carry distinct provenance flags (both are '" +
              real.provenance + "')");
  require(!eval_sets.empty(), "ExperimentError", "no evaluation sets");

  struct CellJob {
    Composition comp;
    double fraction;
  };
  std::vector<CellJob> jobs;
  for (const auto comp : config.compositions)
    for (const double f : config.real_fractions) jobs.push_back({comp, f});

  std::vector<std::vector<ExperimentCell>> results(jobs.size());

  const auto run_cell = [&](size_t j) {
    const auto [comp, fraction] = jobs[j];
    const std::string comp_name = composition_name(comp);
    const std::uint64_t cell_seed =
        derive_seed(config.seed, {comp_name, std::to_string(fraction)});

    const auto records = cell_records(real, synthetic, comp, fraction, cell_seed);
    bool has_live = false, has_spoof = false;
    for (const auto& r : records) (r.is_live ? has_live : has_spoof) = true;

    if (records.empty() || !has_live || !has_spoof) {
      ExperimentCell cell;
      cell.composition = comp_name;
      cell.real_fraction = fraction;
      cell.eval_set = "-";
      cell.skipped = true;
      cell.skip_reason = records.empty() ? "empty_training_set"
                                         : "single_class_training_set";
      results[j].push_back(cell);
      return;
    }

    Dataset train_ds;
    train_ds.root = "";
    train_ds.records = records;

    DetectorTrainConfig dcfg = config.detector;
    dcfg.seed = cell_seed;
    auto trained = train_detector(train_ds, DetectorBranchKind::whole, dcfg);

    for (const auto& eval : eval_sets) {
      DetectionScoreSet scores;
      for (const auto& r : filter_split(eval.dataset->records, "test")) {
        const double s = trained.branch.score_image(eval.dataset->load_image(r));
        (r.is_live ? scores.live_scores : scores.spoof_scores).push_back(s);
      }
      ExperimentCell cell;
      cell.composition = comp_name;
      cell.real_fraction = fraction;
      cell.eval_set = eval.name;
      const TdrAtFdr point = tdr_at_fdr(scores, config.fdr_target);
      cell.tdr = point.tdr;
      cell.threshold = point.threshold;
      results[j].push_back(cell);
    }
  };

  if (config.jobs <= 1) {
    for (size_t j = 0; j < jobs.size(); ++j) run_cell(j);
  } else {
    std::vector<std::thread> workers;
    std::mutex next_mutex;
    size_t next = 0;
    for (int t = 0; t < config.jobs; ++t) {
      workers.emplace_back([&] {
        for (;;) {
          size_t j;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= jobs.size()) return;
            j = next++;
          }
          run_cell(j);
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  AugmentationResult out;
  for (auto& cell_list : results)
    for (auto& c : cell_list) out.cells.push_back(std::move(c));

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  out.results_csv = config.out_dir / "augmentation_results.csv";
  std::ofstream csv(out.results_csv, std::ios::trunc);
  csv << "composition,real_fraction,eval_set,tdr_at_fdr_0.2pct,threshold\n";
  for (const auto& c : out.cells) {
    if (c.skipped)
      csv << c.composition << ',' << c.real_fraction << ",-,skipped:" << c.skip_reason
          << ",n/a\n";
    else
      csv << c.composition << ',' << c.real_fraction << ',' << c.eval_set << ','
          << c.tdr << ',' << c.threshold << "\n";
  }

  out.plot_csv = config.out_dir / "real_fraction_sweep.csv";
  std::ofstream plot(out.plot_csv, std::ios::trunc);
  plot << "real_fraction,eval_set,tdr_at_fdr_0.2pct\n";
  for (const auto& c : out.cells)
    if (!c.skipped && c.composition == composition_name(Composition::real_plus_synthetic))
      plot << c.real_fraction << ',' << c.eval_set << ',' << c.tdr << "\n";
  return out;
}

}  // namespace forge
