#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lumen/eval.hpp"
#include "test_util.hpp"

using namespace lumen;

namespace {

torch::Tensor mask_of(std::initializer_list<std::initializer_list<float>> rows) {
  std::vector<float> flat;
  int64_t h = 0, w = 0;
  for (auto& r : rows) {
    ++h;
    w = static_cast<int64_t>(r.size());
    for (float v : r) flat.push_back(v);
  }
  return torch::tensor(flat).reshape({h, w});
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.resolution = 32;
  c.d_cl = 4;
  c.gen_width = 4;
  c.disc_width = 4;
  c.style_hidden = 8;
  c.res_blocks = 1;
  return c;
}

// A small in-distribution polyp set rendered straight from the synthesizer.
std::pair<torch::Tensor, torch::Tensor> polyp_tensor_set(int64_t n, uint64_t seed0) {
  std::vector<torch::Tensor> imgs, masks;
  for (int64_t i = 0; i < n; ++i) {
    auto s = generate_polyp_pair(seed0 + static_cast<uint64_t>(i), 32);
    imgs.push_back(s.image);
    masks.push_back(s.mask);
  }
  return {torch::stack(imgs), torch::stack(masks)};
}

}  // namespace

TEST_CASE("segmentation metrics reproduce hand-computed values", "[eval]") {
  auto a = mask_of({{1, 1, 0}, {0, 0, 0}});
  SECTION("identical masks") {
    CHECK(dice_score(a, a) == 1.0);
    CHECK(iou_score(a, a) == 1.0);
    CHECK(mae_score(a, a) == 0.0);
  }
  SECTION("disjoint masks") {
    auto b = mask_of({{0, 0, 1}, {0, 0, 0}});
    CHECK(dice_score(a, b) == 0.0);
    CHECK(iou_score(a, b) == 0.0);
  }
  SECTION("two pixels each, one shared") {
    auto b = mask_of({{0, 1, 1}, {0, 0, 0}});
    CHECK(dice_score(a, b) == Catch::Approx(0.5));
    CHECK(iou_score(a, b) == Catch::Approx(1.0 / 3.0));
  }
  SECTION("empty against empty counts as perfect") {
    auto e = torch::zeros({2, 3});
    CHECK(dice_score(e, e) == 1.0);
    CHECK(iou_score(e, e) == 1.0);
  }
  SECTION("empty prediction against a full mask scores zero") {
    auto e = torch::zeros({2, 3});
    CHECK(dice_score(e, a) == 0.0);
    CHECK(iou_score(e, a) == 0.0);
  }
  SECTION("probabilities are thresholded at one half") {
    auto soft = mask_of({{0.6f, 0.51f, 0.4f}, {0.1f, 0.0f, 0.49f}});
    CHECK(dice_score(soft, a) == 1.0);
    CHECK(iou_score(soft, a) == 1.0);
  }
  SECTION("mean absolute error on a soft map") {
    auto probs = mask_of({{0.25f, 0.75f, 0.0f}, {0.0f, 0.0f, 0.0f}});
    auto truth = mask_of({{0, 1, 0}, {0, 0, 0}});
    CHECK(mae_score(probs, truth) == Catch::Approx((0.25 + 0.25) / 6.0));
  }
  SECTION("shape mismatch is rejected") {
    CHECK_THROWS_AS(dice_score(a, torch::zeros({3, 3})), ValidationError);
    CHECK_THROWS_AS(iou_score(a, torch::zeros({3, 3})), ValidationError);
    CHECK_THROWS_AS(mae_score(a, torch::zeros({3, 3})), ValidationError);
  }
}

TEST_CASE("dice dominates IoU and both are symmetric", "[eval]") {
  torch::manual_seed(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = (torch::rand({16, 16}) > 0.6).to(torch::kFloat32);
    auto b = (torch::rand({16, 16}) > 0.6).to(torch::kFloat32);
    auto d = dice_score(a, b);
    auto i = iou_score(a, b);
    CHECK(d >= i);
    CHECK(d == dice_score(b, a));
    CHECK(i == iou_score(b, a));
    CHECK((d >= 0.0 && d <= 1.0));
    // Dice and IoU are the same quantity in different units: d = 2i/(1+i).
    CHECK(d == Catch::Approx(2.0 * i / (1.0 + i)).margin(1e-12));
  }
}

TEST_CASE("segmenter training is deterministic in its seed", "[eval]") {
  auto [imgs, masks] = polyp_tensor_set(6, 100);
  SegTrainConfig cfg;
  cfg.epochs = 1;
  cfg.width = 4;
  cfg.seed = 3;

  auto a = train_toy_segmenter(imgs, masks, cfg);
  auto b = train_toy_segmenter(imgs, masks, cfg);
  auto pa = a->parameters();
  auto pb = b->parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));

  cfg.seed = 4;
  auto c = train_toy_segmenter(imgs, masks, cfg);
  CHECK_FALSE(torch::equal(a->parameters()[0], c->parameters()[0]));
}

TEST_CASE("an untrained segmenter scores like a coin flip", "[eval]") {
  auto [imgs, masks] = polyp_tensor_set(8, 200);
  SegTrainConfig cfg;
  cfg.epochs = 0;
  cfg.width = 4;
  auto net = train_toy_segmenter(imgs, masks, cfg);
  auto m = evaluate_segmenter(net, imgs, masks);
  CHECK(std::abs(m.mae - 0.5) < 0.1);
}

TEST_CASE("the segmenter learns in-distribution polyps", "[eval]") {
  auto [train_imgs, train_masks] = polyp_tensor_set(150, 1000);
  auto [test_imgs, test_masks] = polyp_tensor_set(30, 5000);
  SegTrainConfig cfg;
  cfg.epochs = 10;
  cfg.width = 16;
  cfg.seed = 0;
  auto net = train_toy_segmenter(train_imgs, train_masks, cfg);
  auto m = evaluate_segmenter(net, test_imgs, test_masks);
  CHECK(m.dice >= 0.8);
  CHECK(m.iou >= 0.65);
  CHECK(m.mae <= 0.25);
}

TEST_CASE("segmenter input validation", "[eval]") {
  SegTrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_toy_segmenter(torch::zeros({0, 3, 32, 32}), torch::zeros({0, 32, 32}), cfg),
                  ValidationError);
  CHECK_THROWS_AS(train_toy_segmenter(torch::zeros({2, 3, 32, 32}), torch::zeros({3, 32, 32}), cfg),
                  ValidationError);
}

TEST_CASE("the specular mask selects the brightest fraction", "[eval]") {
  auto img = torch::zeros({3, 4, 4});
  img.index_put_({torch::indexing::Slice(), 1, 2}, 0.9f);
  img.index_put_({torch::indexing::Slice(), 3, 0}, 0.5f);

  auto top1 = specular_mask(img, 1.0 / 16.0);
  CHECK(top1.sum().item<float>() == 1.0f);
  CHECK(top1[1][2].item<float>() == 1.0f);

  auto top2 = specular_mask(img, 2.0 / 16.0);
  CHECK(top2.sum().item<float>() == 2.0f);
  CHECK(top2[3][0].item<float>() == 1.0f);
}

TEST_CASE("probe distance helpers behave as identities on equal inputs", "[eval]") {
  torch::manual_seed(8);
  auto img = torch::rand({3, 16, 16});
  CHECK(mean_color_displacement(img, img) == 0.0);
  CHECK(iou_score(specular_mask(img), specular_mask(img)) == 1.0);
}

TEST_CASE("the disentanglement probe runs deterministically", "[eval]") {
  auto models = make_models(tiny_config(), 11);
  auto a = disentanglement_probe(models, 4, 21);
  auto b = disentanglement_probe(models, 4, 21);
  CHECK(a.trials == 4);
  CHECK(a.zcl_color_disp == b.zcl_color_disp);
  CHECK(a.zts_color_disp == b.zts_color_disp);
  CHECK(a.zcl_spec_iou == b.zcl_spec_iou);
  CHECK(a.zts_spec_iou == b.zts_spec_iou);
  for (double v : {a.zcl_spec_iou, a.zts_spec_iou}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.zcl_color_disp >= 0.0);
  CHECK_THROWS_AS(disentanglement_probe(models, 0, 21), ConfigError);

  auto j = to_json(a);
  auto back = probe_report_from_json(j);
  CHECK(back.zcl_color_disp == a.zcl_color_disp);
  CHECK(back.trials == a.trials);
  CHECK(probe_markdown(a).find("z_cl") != std::string::npos);
  CHECK(probe_markdown(a).find("z_ts") != std::string::npos);
}

TEST_CASE("the downstream experiment aggregates per-seed metrics", "[eval]") {
  testutil::TempDir dir;
  DatasetSpec spec;
  spec.n_train = 6;
  spec.n_val = 4;
  spec.n_test = 4;
  spec.resolution = 32;
  spec.seed = 23;
  auto root = dir.str("data");
  write_dataset(root, spec);

  auto models = make_models(tiny_config(), 2);
  DownstreamConfig cfg;
  cfg.aug_levels = {0, 1};
  cfg.seeds = {0, 1};
  cfg.eval_splits = {"val", "test"};
  cfg.seg.epochs = 1;
  cfg.seg.width = 4;
  cfg.work_dir = dir.str("work");

  auto report = run_downstream_experiment(models, root, cfg);

  REQUIRE(report.cells.size() == 4);  // 2 levels x 2 splits
  for (const auto& cell : report.cells) {
    REQUIRE(cell.per_seed.size() == 2);
    double dice = 0, iou = 0, mae = 0;
    for (const auto& s : cell.per_seed) {
      dice += s.metrics.dice;
      iou += s.metrics.iou;
      mae += s.metrics.mae;
    }
    CHECK(cell.mean.dice == Catch::Approx(dice / 2).margin(1e-12));
    CHECK(cell.mean.iou == Catch::Approx(iou / 2).margin(1e-12));
    CHECK(cell.mean.mae == Catch::Approx(mae / 2).margin(1e-12));
  }

  SECTION("cells are addressable and missing cells throw") {
    CHECK(find_cell(report, 0, "val").n_aug == 0);
    CHECK(find_cell(report, 1, "test").split == "test");
    CHECK_THROWS_AS(find_cell(report, 2, "val"), ValidationError);
  }
  SECTION("the report round-trips through JSON") {
    auto back = experiment_report_from_json(to_json(report));
    CHECK(back.aug_levels == report.aug_levels);
    CHECK(back.seeds == report.seeds);
    CHECK(back.splits == report.splits);
    REQUIRE(back.cells.size() == report.cells.size());
    for (size_t i = 0; i < back.cells.size(); ++i) {
      CHECK(back.cells[i].mean.dice == report.cells[i].mean.dice);
      CHECK(back.cells[i].per_seed.size() == report.cells[i].per_seed.size());
    }
  }
  SECTION("the markdown table has one row per level") {
    auto md = experiment_markdown(report);
    CHECK(md.find("| 0 |") != std::string::npos);
    CHECK(md.find("| 1 |") != std::string::npos);
    CHECK(md.find("val Dice") != std::string::npos);
    CHECK(md.find("test MAE") != std::string::npos);
  }
  SECTION("augmented sets land under the work directory") {
    CHECK(std::filesystem::exists(std::filesystem::path(cfg.work_dir) / "aug_1" /
                                  "manifest.jsonl"));
  }
  SECTION("an empty configuration is rejected") {
    DownstreamConfig bad = cfg;
    bad.aug_levels = {};
    CHECK_THROWS_AS(run_downstream_experiment(models, root, bad), ConfigError);
    DownstreamConfig no_work = cfg;
    no_work.work_dir.clear();
    CHECK_THROWS_AS(run_downstream_experiment(models, root, no_work), ConfigError);
  }
}
