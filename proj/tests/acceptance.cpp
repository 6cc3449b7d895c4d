// Acceptance suite. Each test case covers one acceptance criterion and
// prints exactly one "[criterion N] PASS/FAIL" line; run this binary (or
// `ctest -R acceptance`) to see the full scorecard.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>

#include "json.hpp"
#include "vesselscale/loss.hpp"
#include "support.hpp"
#include "vesselscale/metrics.hpp"
#include "vesselscale/nrrd_io.hpp"
#include "vesselscale/phantom.hpp"
#include "vesselscale/pipeline.hpp"

using namespace vesselscale;
namespace fs = std::filesystem;

namespace {

struct CriterionReporter {
  int number;
  const char* title;
  bool ok = true;
  bool completed = false;

  ~CriterionReporter() {
    const bool pass = ok && completed;
    std::printf("[criterion %d] %s -- %s\n", number, pass ? "PASS" : "FAIL", title);
    std::fflush(stdout);
  }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MaskVolume capsule_mask(Dims3 dims, std::array<double, 3> a, std::array<double, 3> b,
                        double radius) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing = {1, 1, 1};
  spec.segments.push_back({a, b, radius, 1});
  return generate_tree(spec).mask;
}

}  // namespace

TEST_CASE("criterion 1: scale masks partition the source mask", "[acceptance]") {
  CriterionReporter rep{1, "union of the 3 scale masks equals the mask, pairwise disjoint"};
  std::mt19937_64 rng(1001);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims3 dims = trial % 2 == 0 ? Dims3{96, 96, 96} : Dims3{128, 128, 64};
    const PhantomSpec spec = testsupport::random_tree_spec(
        rng, dims, {1, 1, 1}, testsupport::uniform_int(rng, 3, 8), 1.4, 5.0);
    const PhantomTree tree = generate_tree(spec);

    const auto t0 = std::chrono::steady_clock::now();
    const DecomposeResult r = decompose_mask(tree.mask, {});
    const double elapsed = seconds_since(t0);
    rep.ok &= elapsed < 10.0;
    CHECK(elapsed < 10.0);

    REQUIRE(r.scales.masks.size() == 3);
    bool disjoint = true, union_exact = true;
    for (std::int64_t i = 0; i < tree.mask.size(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const int hits = r.scales.masks[0].data()[idx] + r.scales.masks[1].data()[idx] +
                       r.scales.masks[2].data()[idx];
      disjoint &= hits <= 1;
      union_exact &= (hits > 0) == (tree.mask.data()[idx] != 0);
    }
    rep.ok &= disjoint && union_exact;
    CHECK(disjoint);
    CHECK(union_exact);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 2: cylinder radius recovery within 0.8 voxel", "[acceptance]") {
  CriterionReporter rep{2, "radius estimates of r in {2,3,5,8} cylinders within 0.8"};
  for (const double r : {2.0, 3.0, 5.0, 8.0}) {
    const int margin = static_cast<int>(r) + 4;
    const int nxy = 2 * margin + 2;
    const int length = 6 * static_cast<int>(r) + 24;  // keep the caps a minority
    const int nz = length + 2 * margin;
    const double cx = nxy / 2 + 0.5;  // axis through voxel centers
    const MaskVolume mask = capsule_mask(
        {nxy, nxy, nz}, {cx, cx, static_cast<double>(margin)},
        {cx, cx, static_cast<double>(margin + length)}, r);

    const DecomposeResult res = decompose_mask(mask, {});
    // dominant branch = most skeleton voxels
    const BranchRow* main_row = &res.table.rows[0];
    for (const auto& row : res.table.rows)
      if (row.skeleton_voxels > main_row->skeleton_voxels) main_row = &row;

    const bool within = std::abs(main_row->radius_mm - r) <= 0.8;
    rep.ok &= within;
    CHECK(within);
    rep.ok &= res.table.rows.size() == 1;
    CHECK(res.table.rows.size() == 1);

    // independent oracle: brute-force m-nearest-surface radii over the
    // same skeleton, median against the declared radius
    const SurfaceSet surf = extract_surface(mask);
    std::vector<double> sigma;
    for (std::size_t i = 0; i < res.skeleton.voxels.size(); ++i)
      if (res.labeled_skeleton.branch_ids[i] == main_row->id)
        sigma.push_back(testsupport::brute_local_radius(
            res.skeleton.voxels[i], surf.outer_voxels, surf.dims, mask.spacing(), 8));
    const double oracle_median = median_of(sigma);
    rep.ok &= std::abs(oracle_median - r) <= 0.8;
    CHECK(std::abs(oracle_median - r) <= 0.8);
    rep.ok &= oracle_median == main_row->radius_mm;
    CHECK(oracle_median == main_row->radius_mm);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 3: Y-tree scale separation", "[acceptance]") {
  CriterionReporter rep{3, "parent radius 6 in the largest scale, children radius 2 in the smallest"};
  PhantomSpec spec;
  spec.dims = {96, 96, 80};
  spec.spacing = {1, 1, 1};
  spec.segments.push_back({{48.0, 48.0, 10.0}, {48.0, 48.0, 44.0}, 6.0, 1});
  spec.segments.push_back({{48.0, 48.0, 44.0}, {26.0, 48.0, 72.0}, 2.0, 2});
  spec.segments.push_back({{48.0, 48.0, 44.0}, {70.0, 48.0, 72.0}, 2.0, 3});
  const PhantomTree tree = generate_tree(spec);
  const DecomposeResult r = decompose_mask(tree.mask, {});

  rep.ok &= r.table.rows.size() == 3;
  CHECK(r.table.rows.size() == 3);

  if (r.table.rows.size() == 3) {
    // identify parent as the largest-radius branch, children as the rest
    std::vector<BranchRow> rows = r.table.rows;
    std::sort(rows.begin(), rows.end(),
              [](const BranchRow& a, const BranchRow& b) { return a.radius_mm < b.radius_mm; });
    const int parent_scale = scale_of_radius(rows[2].radius_mm, r.thresholds);
    const int child1_scale = scale_of_radius(rows[0].radius_mm, r.thresholds);
    const int child2_scale = scale_of_radius(rows[1].radius_mm, r.thresholds);
    rep.ok &= parent_scale == 3;
    CHECK(parent_scale == 3);
    rep.ok &= child1_scale == 1;
    CHECK(child1_scale == 1);
    rep.ok &= child2_scale == 1;
    CHECK(child2_scale == 1);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 4: metric identities", "[acceptance]") {
  CriterionReporter rep{4, "identity values, Jacc/DSC algebra, exact Hausdorff"};
  std::mt19937_64 rng(1004);

  {
    const PhantomSpec spec = testsupport::random_tree_spec(rng, {48, 48, 48}, {1, 1, 1}, 4, 1.5, 4.0);
    const MaskVolume mask = generate_tree(spec).mask;
    const MetricsReport r = evaluate_masks(mask, mask);
    rep.ok &= r.dsc == 1.0 && r.jacc == 1.0 && r.cldsc == 1.0 && r.hd_mm == 0.0;
    CHECK(r.dsc == 1.0);
    CHECK(r.jacc == 1.0);
    CHECK(r.cldsc == 1.0);
    CHECK(r.hd_mm == 0.0);
  }

  for (int trial = 0; trial < 100; ++trial) {
    const Spacing3 spacing =
        trial % 3 == 0 ? Spacing3{0.8, 1.2, 1.9} : Spacing3{1, 1, 1};
    const MaskVolume a = testsupport::random_mask(rng, {11, 10, 9}, spacing, 0.3);
    const MaskVolume b = testsupport::random_mask(rng, {11, 10, 9}, spacing, 0.3);
    const double d = dice(a, b);
    const double j = jaccard(a, b);
    rep.ok &= std::abs(j - d / (2.0 - d)) < 1e-12;
    CHECK(std::abs(j - d / (2.0 - d)) < 1e-12);

    if (count_foreground(a) > 0 && count_foreground(b) > 0) {
      // well under the 20k-voxel brute-force bound
      const double expected = testsupport::brute_hausdorff(a, b, spacing);
      const double got = hausdorff(a, b, spacing);
      rep.ok &= got == expected;
      CHECK(got == expected);
    }
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 5: clDice is connectivity sensitive", "[acceptance]") {
  CriterionReporter rep{5, "3-voxel gap in a 30-voxel tube: clDSC strictly below DSC"};
  // capsule tube, cylinder length 30 along x, 3-voxel mid-gap
  PhantomSpec spec;
  spec.dims = {44, 13, 13};
  spec.spacing = {1, 1, 1};
  spec.segments.push_back({{7.0, 6.5, 6.5}, {37.0, 6.5, 6.5}, 3.0, 1});
  const MaskVolume full = generate_tree(spec).mask;
  MaskVolume broken = full;
  for (int x = 21; x <= 23; ++x)
    for (int y = 0; y < 13; ++y)
      for (int z = 0; z < 13; ++z) broken.at(x, y, z) = 0;
  const double d = dice(full, broken);
  const double c = cl_dice(full, broken);
  rep.ok &= c < d;
  CHECK(c < d);
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 6: EDT reconstruction equals brute force", "[acceptance]") {
  CriterionReporter rep{6, "branch labels equal the nearest-seed oracle voxel for voxel"};
  std::mt19937_64 rng(1006);
  for (int trial = 0; trial < 25; ++trial) {
    const Spacing3 spacing =
        trial % 4 == 0 ? Spacing3{1.0, 1.3, 0.8} : Spacing3{1, 1, 1};
    const PhantomSpec spec = testsupport::random_tree_spec(
        rng, {40, 40, 40}, spacing, testsupport::uniform_int(rng, 2, 5), 1.2, 3.2);
    const PhantomTree tree = generate_tree(spec);
    REQUIRE(count_foreground(tree.mask) <= 50000);

    const Skeleton skel = skeletonize(tree.mask);
    const LabeledSkeleton ls = label_branches(skel);
    const LabelVolume got = reconstruct_branches(tree.mask, ls, spacing);
    bool all_match = true;
    for (const auto& v : testsupport::foreground_voxels(tree.mask))
      all_match &= got.at(v) == testsupport::brute_nearest_branch(v, ls, spacing);
    rep.ok &= all_match;
    CHECK(all_match);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 7: skeleton topology preservation", "[acceptance]") {
  CriterionReporter rep{7, "component counts match, skeleton within mask, thin line fixed"};
  std::mt19937_64 rng(1007);
  for (int trial = 0; trial < 50; ++trial) {
    const PhantomSpec spec = testsupport::random_tree_spec(
        rng, {36, 36, 36}, {1, 1, 1}, testsupport::uniform_int(rng, 2, 6), 1.2, 3.5);
    const PhantomTree tree = generate_tree(spec);
    const Skeleton skel = skeletonize(tree.mask);

    bool subset = true;
    for (const auto& v : skel.voxels) subset &= tree.mask.at(v) == 1;
    rep.ok &= subset;
    CHECK(subset);

    const auto cc_mask = connected_components(tree.mask, Connectivity::twenty_six);
    const auto cc_skel = connected_components(skeleton_to_mask(skel, tree.mask.spacing()),
                                              Connectivity::twenty_six);
    rep.ok &= cc_mask.count == cc_skel.count;
    CHECK(cc_mask.count == cc_skel.count);
  }
  {
    MaskVolume line({20, 3, 3}, {1, 1, 1});
    for (int x = 1; x < 19; ++x) line.at(x, 1, 1) = 1;
    const Skeleton s = skeletonize(line);
    bool fixed_point = s.voxels.size() == 18;
    for (std::size_t i = 0; fixed_point && i < s.voxels.size(); ++i)
      fixed_point &= s.voxels[i] == VoxelCoord{static_cast<int>(i) + 1, 1, 1};
    rep.ok &= fixed_point;
    CHECK(fixed_point);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 8: loss kernel values and gradients", "[acceptance]") {
  CriterionReporter rep{8, "contrastive closed form, gradient checks, weighted total"};
  std::mt19937_64 rng(1008);

  {  // closed-form contrastive pair with one orthogonal negative
    EmbeddingBatch b;
    b.rows = 3;
    b.dim = 3;
    b.vectors = {1, 0, 0, 1, 0, 0, 0, 1, 0};
    b.scale_labels = {1, 1, 2};
    b.temperature = 1.0;
    const double expected = std::log(1.0 + std::exp(-1.0));
    const double got = contrastive_loss(b).value;
    rep.ok &= std::abs(got - expected) < 1e-9;
    CHECK(std::abs(got - expected) < 1e-9);
  }

  {  // gradient checks
    const MaskVolume gt = testsupport::random_mask(rng, {8, 8, 8}, {1, 1, 1}, 0.5);
    std::vector<double> p(512);
    for (auto& v : p) v = testsupport::uniform(rng, 0.05, 0.95);
    auto dice_fn = [&](std::span<const double> x) {
      ProbabilityField f;
      f.dims = gt.dims();
      f.values.assign(x.begin(), x.end());
      return soft_dice_loss(f, gt);
    };
    const double dice_err = finite_difference_max_rel_error(dice_fn, p, 1e-6);
    rep.ok &= dice_err < 1e-5;
    CHECK(dice_err < 1e-5);

    auto wce_fn = [&](std::span<const double> x) {
      ProbabilityField f;
      f.dims = gt.dims();
      f.values.assign(x.begin(), x.end());
      return weighted_cross_entropy(f, gt, 0.7, 1.9);
    };
    std::vector<double> p2(512);
    for (auto& v : p2) v = testsupport::uniform(rng, 0.1, 0.9);
    const double wce_err = finite_difference_max_rel_error(wce_fn, p2, 1e-6);
    rep.ok &= wce_err < 1e-5;
    CHECK(wce_err < 1e-5);

    EmbeddingBatch batch;
    batch.rows = 12;
    batch.dim = 16;
    batch.temperature = 0.94;
    for (std::size_t i = 0; i < batch.rows * batch.dim; ++i)
      batch.vectors.push_back(testsupport::uniform(rng, -1, 1));
    for (std::size_t i = 0; i < batch.rows; ++i)
      batch.scale_labels.push_back(1 + static_cast<int>(i % 3));
    auto contrast_fn = [&](std::span<const double> x) {
      EmbeddingBatch b = batch;
      b.vectors.assign(x.begin(), x.end());
      const ContrastiveResult r = contrastive_loss(b);
      return ValueGrad{r.value, r.grad};
    };
    const double c_err = finite_difference_max_rel_error(contrast_fn, batch.vectors, 1e-5);
    rep.ok &= c_err < 1e-5;
    CHECK(c_err < 1e-5);
  }

  {  // default weighted total on unit component losses
    LossConfig cfg;  // lambda = (0.78, 0.48, 0.54), lambda_c = 0.53
    const double total = total_loss(1.0, {1.0, 1.0, 1.0}, 1.0, cfg).total;
    rep.ok &= std::abs(total - 3.33) < 1e-12;
    CHECK(std::abs(total - 3.33) < 1e-12);
  }
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 9: 256x256x128 decompose under 60 s", "[acceptance]") {
  CriterionReporter rep{9, "full-scale decompose throughput"};
  std::mt19937_64 rng(1009);
  const PhantomSpec spec = testsupport::random_tree_spec(rng, {256, 256, 128}, {1, 1, 1}, 64,
                                                         2.5, 9.0);
  const PhantomTree tree = generate_tree(spec);

  const auto t0 = std::chrono::steady_clock::now();
  const DecomposeResult r = decompose_mask(tree.mask, {});
  const double elapsed = seconds_since(t0);
  std::printf("[criterion 9] decompose of %lld foreground voxels took %.1f s\n",
              static_cast<long long>(count_foreground(tree.mask)), elapsed);
  rep.ok &= elapsed < 60.0;
  CHECK(elapsed < 60.0);
  rep.ok &= !r.table.rows.empty();
  CHECK(!r.table.rows.empty());
  rep.completed = true;
  REQUIRE(rep.ok);
}

TEST_CASE("criterion 10: byte-identical outputs across runs and job counts",
          "[acceptance]") {
  CriterionReporter rep{10, "pipeline outputs identical across reruns and --jobs settings"};
  const fs::path dir = fs::temp_directory_path() / "vesselscale_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::mt19937_64 rng(1010);
  std::vector<std::string> inputs;
  for (int i = 0; i < 2; ++i) {
    const PhantomSpec spec = testsupport::random_tree_spec(rng, {48, 48, 48}, {1, 1, 1}, 4,
                                                           1.5, 4.0);
    const PhantomTree tree = generate_tree(spec);
    const fs::path p = dir / ("tree" + std::to_string(i) + ".nrrd");
    save_volume(tree.mask, p);
    inputs.push_back(p.string());
  }

  auto run = [&](const std::string& out_dir, int jobs) {
    const std::string cmd = std::string(VESSELSCALE_CLI_PATH) + " decompose --input " +
                            inputs[0] + " " + inputs[1] + " --out-dir " + out_dir +
                            " --jobs " + std::to_string(jobs) + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  rep.ok &= run((dir / "a").string(), 1) == 0;
  rep.ok &= run((dir / "b").string(), 1) == 0;
  rep.ok &= run((dir / "c").string(), 4) == 0;
  REQUIRE(rep.ok);

  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const std::string name = entry.path().filename().string();
    if (name.ends_with("_manifest.json")) continue;
    const std::string bytes = detail::read_file_bytes(entry.path());
    const bool same_rerun = bytes == detail::read_file_bytes(dir / "b" / name);
    const bool same_jobs = bytes == detail::read_file_bytes(dir / "c" / name);
    rep.ok &= same_rerun && same_jobs;
    CHECK(same_rerun);
    CHECK(same_jobs);
    ++compared;
  }
  rep.ok &= compared >= 12;  // 6 artifacts per input, manifests excluded
  CHECK(compared >= 12);
  rep.completed = true;
  REQUIRE(rep.ok);
}
