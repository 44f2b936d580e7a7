#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "handcam/collect.hpp"
#include "handcam/inverse_model.hpp"

using namespace handcam;

namespace {

EnvConfig cube_env() {
  EnvConfig cfg;
  cfg.id = "inv_cube";
  SpawnSpec cube;
  cube.prototype.id = 0;
  cube.prototype.color = {200, 40, 40};
  cube.prototype.half_size = 0.035f;
  cube.range = Rect{0.3f, 0.3f, 0.7f, 0.7f};
  cfg.objects.push_back(cube);
  cfg.max_steps = 400;
  return cfg;
}

std::vector<Episode> masked(std::vector<Episode> eps) {
  for (Episode& ep : eps)
    for (Transition& t : ep.transitions) t.image = mask_image(t.image);
  return eps;
}

}  // namespace

TEST_CASE("paper preset geometry: 100x100 input through the conv stack") {
  InverseModelConfig cfg = InverseModelConfig::paper();
  CHECK(cfg.spatial_sizes() == std::vector<int>{49, 47, 45, 43});
  CHECK(cfg.flatten_dim() == 43 * 43 * 128);
}

TEST_CASE("desk preset geometry and hand-computed parameter count") {
  InverseModelConfig cfg = InverseModelConfig::desk();
  CHECK(cfg.spatial_sizes() == std::vector<int>{31, 29, 27, 25});
  CHECK(cfg.flatten_dim() == 25 * 25 * 32);

  InverseModel model(cfg, 1);
  // conv1: 32*6*3*3 + 32; conv2..4: 32*32*3*3 + 32 each; bn: 2*32 each
  // ff1: 128*20000 + 128; ff2: 128*128 + 128; bn: 2*128 each; out: 4*128 + 4
  const std::size_t conv = (32 * 6 * 9 + 32) + 3 * (32 * 32 * 9 + 32) + 4 * 64;
  const std::size_t ff = (128 * 20000 + 128) + (128 * 128 + 128) + 2 * 256;
  const std::size_t out = 4 * 128 + 4;
  CHECK(model.params().param_count() == conv + ff + out);
}

TEST_CASE("zero final layer makes every prediction zero") {
  InverseModelConfig cfg;
  InverseModel model(cfg, 3);
  for (auto& [name, t] : model.params().params)
    if (name.rfind("out.", 0) == 0) std::fill(t.vec().begin(), t.vec().end(), 0.0f);
  Rng rng(3);
  Tensor input({2, 6, 64, 64});
  for (std::size_t i = 0; i < input.numel(); ++i) input.data()[i] = (float)rng.uniform(-0.5, 0.5);
  Tensor out = model.forward(nullptr, input, BnMode::kEval);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("training on a single repeated transition memorizes it") {
  EnvConfig env = cube_env();
  Episode ep = collect_play_episode(env, 30, 5);
  Episode tiny;
  tiny.metadata = ep.metadata;
  // one distinctive pair repeated; a second episode supplies the holdout split
  for (int rep = 0; rep < 40; ++rep) {
    tiny.transitions.push_back(ep.transitions[10]);
    tiny.transitions.back().terminal = false;
  }
  tiny.transitions.push_back(ep.transitions[11]);
  tiny.transitions.back().terminal = true;
  Episode other = collect_play_episode(env, 10, 6);
  other.metadata["seed"] = "6";

  InverseTrainConfig tc;
  // identical samples zero the batch variance, so batchnorm blocks the weight
  // path and the fit happens through biases at ~lr per step; budget for that
  tc.epochs = 40;
  tc.batch = 4;
  tc.adam.lr = 5e-3f;
  tc.shift_prob = 0.0;  // memorization sanity: no augmentation noise
  InverseModel model(InverseModelConfig::desk(), 7);
  auto report = train_inverse(model, masked({tiny, other}), tc, 7);
  REQUIRE(report.train_loss.size() == 40);
  CHECK(report.train_loss.back() < 0.01);
}

TEST_CASE("predict guards against unmasked input and is deterministic") {
  EnvConfig env = cube_env();
  Episode ep = collect_play_episode(env, 5, 9);
  InverseModel model(InverseModelConfig::desk(), 11);

  CHECK_THROWS_WITH(predict(model, ep.transitions[0].image, ep.transitions[1].image),
                    Catch::Matchers::ContainsSubstring("unmasked"));

  const Image a = mask_image(ep.transitions[0].image);
  const Image b = mask_image(ep.transitions[1].image);
  const auto p1 = predict(model, a, b);
  const auto p2 = predict(model, a, b);
  for (int d = 0; d < 4; ++d) {
    CHECK(p1[d] == p2[d]);
    CHECK(p1[d] >= -1.0f);
    CHECK(p1[d] <= 1.0f);
  }

  InverseModelConfig unmasked_cfg;
  unmasked_cfg.masked_input = false;
  InverseModel unmasked_model(unmasked_cfg, 11);
  CHECK_NOTHROW(predict(unmasked_model, ep.transitions[0].image, ep.transitions[1].image));
}

TEST_CASE("label_demos drops the final frame and chains grasp states") {
  EnvConfig env = cube_env();
  env.max_steps = 100;
  TaskSpec task;
  task.kind = TaskKind::kGrasp;
  task.target_id = 0;
  std::vector<Episode> demos;
  for (std::uint64_t s = 0; s < 3; ++s) demos.push_back(scripted_expert(env, task, s));
  demos = masked(demos);

  InverseModel model(InverseModelConfig::desk(), 13);
  int skipped = -1;
  const auto labeled = label_demos(model, demos, &skipped);
  CHECK(skipped == 0);
  REQUIRE(labeled.size() == demos.size());
  for (std::size_t e = 0; e < demos.size(); ++e) {
    CHECK(labeled[e].size() == demos[e].size() - 1);
    CHECK(labeled[e].transitions.front().grasp_state == 1);
    CHECK(labeled[e].transitions.back().terminal);
    CHECK(labeled[e].metadata.at("labeled") == "1");
    for (std::size_t t = 0; t + 1 < labeled[e].size(); ++t) {
      const auto& cur = labeled[e].transitions[t];
      const auto& next = labeled[e].transitions[t + 1];
      CHECK(next.grasp_state == (cur.action[3] >= 0 ? 1 : -1));
      CHECK_FALSE(cur.terminal);
    }
  }

  // two-frame episode yields exactly one labeled transition
  Episode two;
  two.metadata = demos[0].metadata;
  two.transitions.assign(demos[0].transitions.begin(), demos[0].transitions.begin() + 2);
  two.transitions[1].terminal = true;
  const auto one = label_demos(model, {two}, &skipped);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 1);

  // one-frame episode is skipped with a warning count
  Episode single;
  single.metadata = demos[0].metadata;
  single.transitions.assign(demos[0].transitions.begin(), demos[0].transitions.begin() + 1);
  single.transitions[0].terminal = true;
  const auto none = label_demos(model, {single}, &skipped);
  CHECK(none.empty());
  CHECK(skipped == 1);
}

TEST_CASE("label_demos is bitwise deterministic") {
  EnvConfig env = cube_env();
  env.max_steps = 100;
  TaskSpec task;
  task.kind = TaskKind::kGrasp;
  task.target_id = 0;
  std::vector<Episode> demos = masked({scripted_expert(env, task, 21)});
  InverseModel model(InverseModelConfig::desk(), 17);
  const auto a = label_demos(model, demos);
  const auto b = label_demos(model, demos);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a[0].size(); ++t) {
    CHECK(std::memcmp(a[0].transitions[t].action.data(), b[0].transitions[t].action.data(),
                      16) == 0);
    CHECK(a[0].transitions[t].grasp_state == b[0].transitions[t].grasp_state);
  }
}

TEST_CASE("validate enforces split hygiene and reports improvements after training") {
  EnvConfig env = cube_env();
  std::vector<Episode> episodes;
  for (std::uint64_t s = 0; s < 12; ++s) episodes.push_back(collect_play_episode(env, 60, 100 + s));
  episodes = masked(episodes);

  InverseModel model(InverseModelConfig::desk(), 19);
  InverseTrainConfig tc;
  tc.epochs = 3;
  tc.batch = 32;
  auto report = train_inverse(model, episodes, tc, 19);
  REQUIRE(report.holdout_loss.size() == 3);

  // training episodes are rejected as validation input
  CHECK_THROWS_WITH(validate(model, episodes), Catch::Matchers::ContainsSubstring("overlap"));

  std::vector<Episode> fresh;
  for (std::uint64_t s = 0; s < 3; ++s) fresh.push_back(collect_play_episode(env, 60, 900 + s));
  fresh = masked(fresh);
  const ValidationReport trained = validate(model, fresh);
  CHECK(trained.pairs == 3 * 60);

  InverseModel untrained(InverseModelConfig::desk(), 23);
  const ValidationReport base = validate(untrained, fresh);
  // training on play data strictly improves position-dimension error and
  // gripper sign accuracy over an untrained network
  for (int d = 0; d < 4; ++d) CHECK(trained.per_dim_l1[d] < base.per_dim_l1[d]);
  CHECK(trained.gripper_sign_accuracy > base.gripper_sign_accuracy);

  // report serialization round-trips
  const ValidationReport back = ValidationReport::deserialize(trained.serialize());
  for (int d = 0; d < 4; ++d)
    CHECK_THAT(back.per_dim_l1[d], Catch::Matchers::WithinRel(trained.per_dim_l1[d], 1e-9));
  CHECK_THAT(back.gripper_sign_accuracy,
             Catch::Matchers::WithinRel(trained.gripper_sign_accuracy, 1e-9));
  CHECK_THAT(back.smoothness, Catch::Matchers::WithinRel(trained.smoothness, 1e-9));
  CHECK(back.pairs == trained.pairs);
}

TEST_CASE("checkpoint round-trip preserves config and predictions") {
  EnvConfig env = cube_env();
  Episode ep = collect_play_episode(env, 4, 31);
  const Image a = mask_image(ep.transitions[0].image);
  const Image b = mask_image(ep.transitions[1].image);

  InverseModel model(InverseModelConfig::desk(), 29);
  model.set_train_episode_ids({123456789ull, 987654321ull});
  const auto before = predict(model, a, b);

  auto path = std::filesystem::temp_directory_path() / "inverse_test.hck";
  model.save(path.string());
  InverseModel loaded = InverseModel::load(path.string());
  CHECK(loaded.config().masked_input == model.config().masked_input);
  CHECK(loaded.train_episode_ids() == model.train_episode_ids());
  const auto after = predict(loaded, a, b);
  for (int d = 0; d < 4; ++d) CHECK(before[d] == after[d]);
}

TEST_CASE("mask-region independence: zeroing masked pixels never changes predictions") {
  EnvConfig env = cube_env();
  Episode ep = collect_play_episode(env, 4, 37);
  Image a = mask_image(ep.transitions[0].image);
  Image b = mask_image(ep.transitions[1].image);
  InverseModel model(InverseModelConfig::desk(), 31);
  const auto p = predict(model, a, b);
  // re-zero the mask region (already zero); prediction must be identical
  Image a2 = mask_image(a);
  Image b2 = mask_image(b);
  const auto q = predict(model, a2, b2);
  for (int d = 0; d < 4; ++d) CHECK(p[d] == q[d]);
}
