#include <doctest.h>

#include <filesystem>

#include "crossuda/losses.hpp"
#include "crossuda/nets.hpp"
#include "oracles.hpp"

using namespace crossuda;
using ad::Var;

namespace {

Tensor<float> rand_input(std::vector<int> shape, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data[i] = float(rng.uniform());
  return t;
}

}  // namespace

TEST_CASE("unet3d emits five scales with the expected shapes") {
  UNetConfig cfg;
  cfg.base_channels = 4;
  UNet3d<float> net(cfg, 7);
  Rng rng(1);
  const auto outs =
      net.forward(Var<float>::leaf(rand_input({2, 1, 32, 64, 64}, 2)), rng, false);
  REQUIRE(outs.size() == 5);
  const int expect[5][3] = {{32, 64, 64}, {16, 32, 32}, {8, 16, 16}, {4, 8, 8}, {2, 4, 4}};
  for (int s = 0; s < 5; ++s) {
    const auto& shp = outs[s].shape();
    CHECK(shp[0] == 2);
    CHECK(shp[1] == 3);
    CHECK(shp[2] == expect[s][0]);
    CHECK(shp[3] == expect[s][1]);
    CHECK(shp[4] == expect[s][2]);
    CHECK(outs[s].value().all_finite());
  }
}

TEST_CASE("unet3d deterministic mode repeats outputs exactly") {
  UNetConfig cfg;
  cfg.base_channels = 2;
  UNet3d<float> net(cfg, 3);
  const Tensor<float> x = rand_input({1, 1, 16, 16, 16}, 5);
  Rng r1(9), r2(10);
  const auto a = net.forward(Var<float>::leaf(x), r1, false);
  const auto b = net.forward(Var<float>::leaf(x), r2, false);
  for (size_t s = 0; s < a.size(); ++s)
    CHECK((a[s].value().data == b[s].value().data).all());

  // training mode dropout perturbs the outputs
  Rng r3(11), r4(12);
  const auto c = net.forward(Var<float>::leaf(x), r3, true);
  const auto d = net.forward(Var<float>::leaf(x), r4, true);
  CHECK((c[0].value().data != d[0].value().data).any());
}

TEST_CASE("unet3d rejects dims not divisible by 2^(levels-1)") {
  UNetConfig cfg;
  cfg.base_channels = 2;
  UNet3d<float> net(cfg, 3);
  Rng rng(1);
  CHECK_THROWS_AS(net.forward(Var<float>::leaf(rand_input({1, 1, 12, 16, 16}, 2)), rng, false),
                  Error);
}

TEST_CASE("gradient of summed unet outputs is finite for every parameter") {
  UNetConfig cfg;
  cfg.base_channels = 2;
  cfg.n_levels = 3;
  cfg.n_output_scales = 3;
  UNet3d<float> net(cfg, 13);
  Rng rng(2);
  const auto outs =
      net.forward(Var<float>::leaf(rand_input({1, 1, 8, 8, 8}, 3)), rng, true);
  Var<float> total;
  for (const auto& o : outs) {
    Var<float> s = ad::sum(o);
    total = total.defined() ? ad::add(total, s) : s;
  }
  ad::backward(total);
  for (auto& [name, p] : net.params().entries) {
    INFO(name);
    CHECK(p.grad().data.isFinite().all());
  }
}

TEST_CASE("parameter ordering and initial values are stable across builds") {
  UNetConfig cfg;
  cfg.base_channels = 2;
  UNet3d<float> a(cfg, 21), b(cfg, 21);
  const ModelParams pa = snapshot(a.params());
  const ModelParams pb = snapshot(b.params());
  REQUIRE(pa.same_layout(pb));
  for (size_t i = 0; i < pa.tensors.size(); ++i)
    CHECK((pa.tensors[i].values == pb.tensors[i].values).all());

  UNet3d<float> c(cfg, 22);  // different seed, same layout, different values
  const ModelParams pc = snapshot(c.params());
  REQUIRE(pc.same_layout(pa));
  bool any_diff = false;
  for (size_t i = 0; i < pa.tensors.size(); ++i)
    if ((pa.tensors[i].values != pc.tensors[i].values).any()) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("generator translates shape-preserving and taps behave") {
  GeneratorConfig cfg;
  cfg.base_channels = 8;
  cfg.n_res_blocks = 2;
  cfg.set_default_taps();
  ResnetGenerator<float> gen(cfg, 31);

  const Tensor<float> x = rand_input({2, 1, 64, 64}, 7);
  auto f = gen.forward(Var<float>::leaf(x));
  CHECK(f.translated.shape() == std::vector<int>{2, 1, 64, 64});
  CHECK(f.translated.value().data.minCoeff() >= 0.0f);
  CHECK(f.translated.value().data.maxCoeff() <= 1.0f);
  CHECK(f.translated.value().all_finite());

  const auto taps = gen.seg_decode(f);
  CHECK(taps[0].shape() == std::vector<int>{2, 3, 64, 64});
  CHECK(taps[1].shape() == std::vector<int>{2, 3, 64, 64});

  const auto feats = gen.nce_features(f);
  REQUIRE(feats.size() == cfg.nce_tap_layers.size());
  int prev_h = 1 << 20;
  for (const auto& t : feats) {
    CHECK(t.shape()[2] <= prev_h);
    prev_h = t.shape()[2];
  }

  gen.set_bypass(true);
  auto g = gen.forward(Var<float>::leaf(x));
  CHECK((g.translated.value().data == x.data).all());
}

TEST_CASE("generator rejects dims not divisible by the downsample factor") {
  GeneratorConfig cfg;
  cfg.base_channels = 4;
  cfg.n_res_blocks = 1;
  cfg.set_default_taps();
  ResnetGenerator<float> gen(cfg, 5);
  CHECK_THROWS_AS(gen.forward(Var<float>::leaf(rand_input({1, 1, 30, 32}, 3))), Error);
}

TEST_CASE("patch discriminator yields a patch-level score map") {
  PatchDiscriminator<float> disc({8}, 41);
  const Tensor<float> x = rand_input({2, 1, 64, 64}, 9);
  Var<float> scores = disc.forward(Var<float>::leaf(x));
  REQUIRE(scores.shape().size() == 4);
  CHECK(scores.shape()[1] == 1);
  CHECK(scores.shape()[2] > 1);
  CHECK(scores.shape()[3] > 1);

  Var<float> again = disc.forward(Var<float>::leaf(x));
  CHECK((scores.value().data == again.value().data).all());

  // gradients w.r.t. the input exist (needed to train the generator)
  Var<float> xin = Var<float>::leaf(x, true);
  Var<float> loss = ad::mean_square_to(disc.forward(xin), 1.0f);
  ad::backward(loss);
  CHECK(xin.grad().data.isFinite().all());
  CHECK((xin.grad().data != 0.0f).any());
}

TEST_CASE("ema_update boundary and formula cases") {
  Rng rng(51);
  ad::ParamRegistry<float> reg;
  reg.add("a", Tensor<float>::randn({4, 3}, rng));
  reg.add("b", Tensor<float>::randn({7}, rng));
  const ModelParams student = snapshot(reg);
  ad::ParamRegistry<float> reg2;
  reg2.add("a", Tensor<float>::randn({4, 3}, rng));
  reg2.add("b", Tensor<float>::randn({7}, rng));
  const ModelParams teacher = snapshot(reg2);

  const ModelParams unchanged = ema_update(teacher, student, 1.0);
  for (size_t i = 0; i < unchanged.tensors.size(); ++i)
    CHECK((unchanged.tensors[i].values == teacher.tensors[i].values).all());

  const ModelParams copied = ema_update(teacher, student, 0.0);
  for (size_t i = 0; i < copied.tensors.size(); ++i)
    CHECK((copied.tensors[i].values == student.tensors[i].values).all());

  ModelParams ones = teacher, zeros = student;
  for (auto& t : ones.tensors) t.values.setConstant(1.0f);
  for (auto& t : zeros.tensors) t.values.setConstant(0.0f);
  const ModelParams blended = ema_update(ones, zeros, 0.9);
  for (const auto& t : blended.tensors)
    for (int64_t i = 0; i < t.values.size(); ++i)
      CHECK(t.values[i] == doctest::Approx(0.9f).epsilon(1e-7));

  // fixed point: teacher == student stays put
  const ModelParams fixed = ema_update(student, student, 0.37);
  for (size_t i = 0; i < fixed.tensors.size(); ++i)
    CHECK((fixed.tensors[i].values - student.tensors[i].values).abs().maxCoeff() < 1e-7f);

  ModelParams wrong = student;
  wrong.tensors[0].name = "renamed";
  CHECK_THROWS_AS(ema_update(teacher, wrong, 0.5), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "crossuda_tests";
  fs::create_directories(dir);

  UNetConfig cfg;
  cfg.base_channels = 2;
  cfg.n_levels = 3;
  cfg.n_output_scales = 3;
  UNet3d<float> net(cfg, 61);

  Checkpoint ckpt;
  ckpt.kind = "unet";
  ckpt.epoch = 17;
  ckpt.config = {{"base_channels", 2}, {"n_levels", 3}};
  ckpt.params = snapshot(net.params());
  const fs::path path = dir / "net.ckpt";
  save_checkpoint(ckpt, path);

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.kind == "unet");
  CHECK(back.epoch == 17);
  CHECK(back.config == ckpt.config);
  REQUIRE(back.params.same_layout(ckpt.params));
  for (size_t i = 0; i < back.params.tensors.size(); ++i)
    CHECK(std::memcmp(back.params.tensors[i].values.data(),
                      ckpt.params.tensors[i].values.data(),
                      size_t(back.params.tensors[i].values.size()) * 4) == 0);

  // loading into a model of the same config works; wrong config errors
  UNet3d<float> other(cfg, 99);
  load_params(other.params(), back.params);
  const ModelParams reloaded = snapshot(other.params());
  for (size_t i = 0; i < reloaded.tensors.size(); ++i)
    CHECK((reloaded.tensors[i].values == ckpt.params.tensors[i].values).all());

  CheckpointPair pair;
  pair.student = ckpt.params;
  pair.teacher = ckpt.params;
  pair.epoch = 3;
  const fs::path pair_path = dir / "pair.ckpt";
  save_checkpoint_pair(pair, {{"note", "test"}}, pair_path);
  const CheckpointPair pback = load_checkpoint_pair(pair_path);
  CHECK(pback.epoch == 3);
  REQUIRE(pback.student.same_layout(ckpt.params));
  REQUIRE(pback.teacher.same_layout(ckpt.params));

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}
