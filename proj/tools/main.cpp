// vesselscale command-line front end.
//
// Subcommands:
//   decompose  mask -> skeleton, branch labels, branch table, scale masks
//   evaluate   ground truth vs prediction -> DSC / Jacc / clDSC / HD report
//   stats      branch tables -> per-volume radius statistics
//   synth      phantom spec JSON -> mask + ground-truth labels + table
//   loss       embeddings JSON -> contrastive loss and per-anchor terms
//
// Exit codes: 0 success, 1 data error, 2 usage error. Diagnostics go to
// stderr; machine-readable output goes to files or stdout only.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vesselscale/loss.hpp"
#include "vesselscale/metrics.hpp"
#include "vesselscale/nrrd_io.hpp"
#include "vesselscale/phantom.hpp"
#include "vesselscale/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vesselscale;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

void emit_text(const std::string& text, const std::string& target) {
  if (target == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  detail::write_file_atomic(target, text);
}

json stats_record(const std::string& volume, const RadiusStatistics& s) {
  json j;
  j["volume"] = volume;
  j["n_b"] = s.branch_count;
  auto field = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  j["min"] = field(s.min);
  j["q1"] = field(s.q1);
  j["median"] = field(s.median);
  j["q3"] = field(s.q3);
  j["max"] = field(s.max);
  return j;
}

std::string stats_csv_row(const std::string& volume, const RadiusStatistics& s) {
  auto cell = [](const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string();
  };
  return volume + "," + std::to_string(s.branch_count) + "," + cell(s.min) + "," +
         cell(s.q1) + "," + cell(s.median) + "," + cell(s.q3) + "," + cell(s.max) + "\n";
}

struct DecomposeOptions {
  std::vector<std::string> inputs;
  std::string out_dir;
  int neighbor_count = 8;
  int scale_count = 3;
  std::string format = "nrrd";
  int jobs = 1;
};

std::string volume_extension(const std::string& format) {
  return format == "raw" ? ".raw" : ".nrrd";
}

void run_decompose_one(const DecomposeOptions& opt, const std::string& input) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path in_path(input);
  const std::string stem = in_path.stem().string();
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);

  const MaskVolume mask = load_mask(in_path);
  const double load_ms = ms_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  DecomposeParams params;
  params.neighbor_count = opt.neighbor_count;
  params.scale_count = opt.scale_count;
  const DecomposeResult r = decompose_mask(mask, params);
  const double pipeline_ms = ms_since(t1);

  const auto t2 = std::chrono::steady_clock::now();
  const std::string ext = volume_extension(opt.format);
  std::vector<std::string> outputs;
  auto out_path = [&](const std::string& suffix) {
    return (out_dir / (stem + suffix)).string();
  };

  const std::string skeleton_file = out_path("_skeleton" + ext);
  save_volume(skeleton_to_mask(r.skeleton, mask.spacing()), skeleton_file);
  outputs.push_back(skeleton_file);

  const std::string labels_file = out_path("_branch_labels" + ext);
  save_volume(r.branch_labels, labels_file);
  outputs.push_back(labels_file);

  const std::string table_file = out_path("_branches.csv");
  detail::write_file_atomic(table_file, branch_table_csv(r.table));
  outputs.push_back(table_file);

  for (int s = 1; s <= opt.scale_count; ++s) {
    const std::string scale_file = out_path("_scale" + std::to_string(s) + ext);
    save_volume(r.scales.masks[static_cast<std::size_t>(s - 1)], scale_file);
    outputs.push_back(scale_file);
  }
  const double write_ms = ms_since(t2);

  json manifest;
  manifest["tool"] = "vesselscale";
  manifest["version"] = kToolVersion;
  manifest["input"] = input;
  manifest["parameters"] = {
      {"m", opt.neighbor_count},
      {"scales", opt.scale_count},
      {"format", opt.format},
      {"quantile_estimator", r.thresholds.estimator},
      {"thresholds_mm", r.thresholds.values},
      {"skeleton_connectivity", 26},
      {"surface_background_connectivity", 6},
      {"thinning_direction_order", "U,D,N,S,E,W"},
      {"radius_tie_rule", "distance, then surface linear index"},
      {"reconstruction_tie_rule", "distance, then branch id, then skeleton linear index"},
      {"scale_boundary_rule", "radius equal to a threshold joins the smaller scale"},
  };
  manifest["statistics"] = stats_record(stem, r.statistics);
  manifest["outputs"] = outputs;
  manifest["timings_ms"] = {
      {"load", load_ms}, {"pipeline", pipeline_ms}, {"write", write_ms}};
  detail::write_file_atomic(out_path("_manifest.json"), manifest.dump(2) + "\n");
}

int run_decompose(const DecomposeOptions& opt) {
  if (opt.jobs <= 1 || opt.inputs.size() <= 1) {
    for (const auto& input : opt.inputs) run_decompose_one(opt, input);
    return 0;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= opt.inputs.size() || failed.load()) return;
      try {
        run_decompose_one(opt, opt.inputs[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(opt.jobs, static_cast<int>(opt.inputs.size()));
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failed.load()) throw std::runtime_error(first_error);
  return 0;
}

int run_evaluate(const std::vector<std::string>& gts, const std::vector<std::string>& preds,
                 const std::string& json_target, const std::string& csv_target) {
  if (gts.size() != preds.size())
    throw std::invalid_argument("evaluate: --gt and --pred counts differ");

  json reports = json::array();
  std::string csv = "gt,pred,dsc,jacc,cldsc,hd_mm\n";
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const MaskVolume gt = load_mask(gts[i]);
    const MaskVolume pred = load_mask(preds[i]);
    const MetricsReport r = evaluate_masks(gt, pred);
    json j;
    j["dsc"] = r.dsc;
    j["jacc"] = r.jacc;
    j["cldsc"] = r.cldsc;
    j["hd_mm"] = r.hd_defined() ? json(r.hd_mm) : json(nullptr);
    reports.push_back(j);
    csv += gts[i] + "," + preds[i] + "," + detail::format_double(r.dsc) + "," +
           detail::format_double(r.jacc) + "," + detail::format_double(r.cldsc) + "," +
           (r.hd_defined() ? detail::format_double(r.hd_mm) : std::string()) + "\n";
  }
  if (!json_target.empty()) {
    const json out = reports.size() == 1 ? reports[0] : reports;
    emit_text(out.dump() + "\n", json_target);
  }
  if (!csv_target.empty()) emit_text(csv, csv_target);
  return 0;
}

int run_stats(const std::vector<std::string>& tables, const std::string& json_target,
              const std::string& csv_target) {
  json records = json::array();
  std::string csv = "volume,n_b,min,q1,median,q3,max\n";
  for (const auto& table_path : tables) {
    const BranchTable table =
        parse_branch_table_csv(detail::read_file_bytes(table_path), table_path);
    const RadiusStatistics s = radius_statistics(table);
    std::string name = fs::path(table_path).stem().string();
    if (name.ends_with("_branches")) name.resize(name.size() - 9);
    records.push_back(stats_record(name, s));
    csv += stats_csv_row(name, s);
  }
  if (!json_target.empty()) {
    const json out = records.size() == 1 ? records[0] : records;
    emit_text(out.dump() + "\n", json_target);
  }
  if (!csv_target.empty()) emit_text(csv, csv_target);
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out_dir_str,
              const std::string& format) {
  json spec_json;
  try {
    spec_json = json::parse(detail::read_file_bytes(spec_path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed phantom spec JSON " + spec_path + ": " +
                                e.what());
  }
  const PhantomSpec spec = parse_phantom_spec(spec_json);
  const PhantomTree tree = generate_tree(spec);

  const fs::path out_dir(out_dir_str);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(spec_path).stem().string();
  const std::string ext = volume_extension(format);

  std::vector<std::string> outputs;
  const std::string mask_file = (out_dir / (stem + "_mask" + ext)).string();
  save_volume(tree.mask, mask_file);
  outputs.push_back(mask_file);
  const std::string labels_file = (out_dir / (stem + "_gt_labels" + ext)).string();
  save_volume(tree.labels, labels_file);
  outputs.push_back(labels_file);
  const std::string table_file = (out_dir / (stem + "_gt_table.csv")).string();
  detail::write_file_atomic(table_file, branch_table_csv(tree.table));
  outputs.push_back(table_file);

  json manifest;
  manifest["tool"] = "vesselscale";
  manifest["version"] = kToolVersion;
  manifest["input"] = spec_path;
  manifest["parameters"] = {{"segments", spec.segments.size()}, {"format", format}};
  manifest["outputs"] = outputs;
  detail::write_file_atomic((out_dir / (stem + "_manifest.json")).string(),
                            manifest.dump(2) + "\n");
  return 0;
}

int run_loss(const std::string& embeddings_path, const std::string& json_target) {
  json input;
  try {
    input = json::parse(detail::read_file_bytes(embeddings_path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed embeddings JSON " + embeddings_path + ": " +
                                e.what());
  }
  EmbeddingBatch batch;
  try {
    batch.temperature = input.at("tau").get<double>();
    const auto& vectors = input.at("vectors");
    batch.rows = vectors.size();
    for (const auto& row : vectors) {
      if (batch.dim == 0) batch.dim = row.size();
      for (const auto& v : row) batch.vectors.push_back(v.get<double>());
    }
    for (const auto& s : input.at("scales")) batch.scale_labels.push_back(s.get<int>());
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed embeddings JSON " + embeddings_path + ": " +
                                e.what());
  }
  const ContrastiveResult r = contrastive_loss(batch);

  json out;
  out["l_c"] = r.value;
  out["tau"] = batch.temperature;
  out["contributing_anchors"] = r.contributing_anchors;
  json terms = json::array();
  for (double t : r.anchor_terms) terms.push_back(std::isnan(t) ? json(nullptr) : json(t));
  out["per_anchor"] = terms;
  emit_text(out.dump() + "\n", json_target.empty() ? "-" : json_target);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale vessel decomposition toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  DecomposeOptions dec;
  CLI::App* decompose = app.add_subcommand(
      "decompose", "decompose a binary vessel mask into per-branch scale masks");
  decompose->add_option("--input", dec.inputs, "input mask volume(s)")
      ->required()
      ->expected(-1);
  decompose->add_option("--out-dir", dec.out_dir, "output directory")->required();
  decompose->add_option("--m", dec.neighbor_count, "surface neighbors per radius estimate")
      ->check(CLI::PositiveNumber);
  decompose->add_option("--scales", dec.scale_count, "number of scales S")
      ->check(CLI::Range(2, 64));
  decompose->add_option("--format", dec.format, "output container")
      ->check(CLI::IsMember({"nrrd", "raw"}));
  decompose->add_option("--jobs", dec.jobs, "parallel volumes in batch mode")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> eval_gt, eval_pred;
  std::string eval_json, eval_csv;
  CLI::App* evaluate = app.add_subcommand("evaluate", "compare masks with DSC/Jacc/clDSC/HD");
  evaluate->add_option("--gt", eval_gt, "ground truth mask(s)")->required()->expected(-1);
  evaluate->add_option("--pred", eval_pred, "predicted mask(s)")->required()->expected(-1);
  evaluate->add_option("--json", eval_json, "JSON report target ('-' for stdout)");
  evaluate->add_option("--csv", eval_csv, "CSV report target ('-' for stdout)");

  std::vector<std::string> stats_tables;
  std::string stats_json, stats_csv;
  CLI::App* stats = app.add_subcommand("stats", "radius statistics from branch tables");
  stats->add_option("--table", stats_tables, "branch table CSV(s)")->required()->expected(-1);
  stats->add_option("--json", stats_json, "JSON target ('-' for stdout)");
  stats->add_option("--csv", stats_csv, "CSV target ('-' for stdout)");

  std::string synth_spec, synth_out, synth_format = "nrrd";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic tubular phantom");
  synth->add_option("--spec", synth_spec, "phantom spec JSON")->required();
  synth->add_option("--out-dir", synth_out, "output directory")->required();
  synth->add_option("--format", synth_format, "output container")
      ->check(CLI::IsMember({"nrrd", "raw"}));

  std::string loss_embeddings, loss_json;
  CLI::App* loss = app.add_subcommand("loss", "contrastive loss over labeled embeddings");
  loss->add_option("--embeddings", loss_embeddings, "embeddings JSON")->required();
  loss->add_option("--json", loss_json, "JSON target ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*decompose) return run_decompose(dec);
    if (*evaluate) {
      if (eval_json.empty() && eval_csv.empty()) eval_json = "-";
      return run_evaluate(eval_gt, eval_pred, eval_json, eval_csv);
    }
    if (*stats) {
      if (stats_json.empty() && stats_csv.empty()) stats_json = "-";
      return run_stats(stats_tables, stats_json, stats_csv);
    }
    if (*synth) return run_synth(synth_spec, synth_out, synth_format);
    if (*loss) return run_loss(loss_embeddings, loss_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
