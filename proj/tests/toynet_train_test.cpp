/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "lungsev/toynet/checkpoint.hpp"
#include "lungsev/toynet/optimizer.hpp"
#include "lungsev/toynet/train.hpp"

namespace {

using namespace lungsev::toynet;
namespace fs = std::filesystem;

// A one-scalar parameter set for optimizer tests.
ParamSet scalar_param(double w0) {
  ParamSet ps;
  ps.add("w", {1, 1, 1, 1, 1});
  ps[0].value[0] = w0;
  return ps;
}

TEST(AdaBound, ZeroGradientKeepsParametersAndDecaysMoments) {
  ParamSet ps = scalar_param(1.0);
  AdaBound opt;
  ps[0].grad[0] = 2.0;
  ASSERT_TRUE(opt.step(ps));
  const double w1 = ps[0].value[0];
  const double m1 = opt.first_moments()[0][0];
  const double v1 = opt.second_moments()[0][0];
  ps[0].grad[0] = 0.0;
  ASSERT_TRUE(opt.step(ps));
  EXPECT_NE(ps[0].value[0], w1);  // momentum still carries the earlier gradient
  EXPECT_DOUBLE_EQ(opt.first_moments()[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(opt.second_moments()[0][0], 0.999 * v1);

  ParamSet fresh = scalar_param(1.0);
  AdaBound idle;
  fresh[0].grad[0] = 0.0;
  ASSERT_TRUE(idle.step(fresh));
  EXPECT_EQ(fresh[0].value[0], 1.0);
}

TEST(AdaBound, QuadraticDecreasesMonotonically) {
  ParamSet ps = scalar_param(1.0);
  AdaBound opt;
  std::vector<double> w{1.0};
  for (int t = 0; t < 200; ++t) {
    ps[0].grad[0] = 2.0 * ps[0].value[0];
    opt.step(ps);
    w.push_back(ps[0].value[0]);
  }
  // After a short warm-up the magnitude must strictly decrease every step.
  for (std::size_t t = 10; t + 1 < w.size(); ++t) EXPECT_LT(std::abs(w[t + 1]), std::abs(w[t])) << "step " << t;
  EXPECT_LT(std::abs(w.back()), 1.0);
}

TEST(AdaBound, BoundsConvergeToFinalLr) {
  AdaBound opt;
  const auto b1 = opt.bounds(1);
  EXPECT_NEAR(b1.lower, 0.1 * (1.0 - 1.0 / 1.001), 1e-18);
  EXPECT_NEAR(b1.upper, 0.1 * (1.0 + 1000.0), 1e-12);
  const std::int64_t t = 1'000'000'000;
  const auto b = opt.bounds(t);
  EXPECT_LE(b.lower, b.upper);
  EXPECT_NEAR(b.lower, 0.1, 1e-6);
  EXPECT_NEAR(b.upper, 0.1, 1e-6);
  for (double v : {1e-12, 1e-4, 1.0, 1e6}) EXPECT_NEAR(opt.effective_step_size(t, v), 0.1, 1e-6);
  for (std::int64_t s : {1, 10, 100, 1000, 100000}) {
    for (double v : {0.0, 1e-10, 1e-3, 1.0, 1e8}) {
      const double eta = opt.effective_step_size(s, v);
      EXPECT_GE(eta, opt.bounds(s).lower);
      EXPECT_LE(eta, opt.bounds(s).upper);
    }
  }
}

TEST(AdaBound, NonFiniteGradientSkipsStep) {
  ParamSet ps = scalar_param(1.0);
  AdaBound opt;
  ps[0].grad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(opt.step(ps));
  EXPECT_EQ(ps[0].value[0], 1.0);
  EXPECT_EQ(opt.step_count(), 0);
  EXPECT_EQ(opt.skipped_steps(), 1);
  EXPECT_EQ(opt.first_moments()[0][0], 0.0);
}

TEST(AdaBound, RejectsBadConfig) {
  AdaBoundConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(AdaBound{c}, lungsev::InputError);
  c = {};
  c.lr = 0.0;
  EXPECT_THROW(AdaBound{c}, lungsev::InputError);
}

TEST(Split, TenPercentValidation) {
  auto [train, val] = split_indices(10, 0.1, 5);
  EXPECT_EQ(val.size(), 1u);
  EXPECT_EQ(train.size(), 9u);
  auto [train2, val2] = split_indices(25, 0.1, 5);
  EXPECT_EQ(val2.size(), 2u);
  EXPECT_EQ(train2.size() + val2.size(), 25u);
  for (auto v : val2) EXPECT_EQ(std::count(train2.begin(), train2.end(), v), 0);
  EXPECT_THROW(split_indices(0, 0.1, 1), lungsev::InputError);
  EXPECT_THROW(split_indices(9, 0.1, 1), lungsev::InputError);
}

TEST(Train, EmptyDatasetThrows) {
  ToyNet net(NetConfig{});
  EXPECT_THROW(train(net, TrainConfig{}, {}), lungsev::InputError);
}

TEST(Train, TrivialBackgroundFitsQuickly) {
  // One all-background case, duplicated to satisfy the split.
  const auto one = fixtures::training_set(1, 40, false, 0.5);
  const std::vector<Sample> data(10, one.front());
  NetConfig nc;
  nc.seed = 1;
  ToyNet net(nc);
  TrainConfig tc;
  tc.iterations = 50;
  tc.seed = 2;
  const TrainResult r = train(net, tc, data);
  EXPECT_GT(r.initial_train_loss, 0.9);
  EXPECT_LT(r.final_train_loss, 0.01);
  EXPECT_LT(r.history.back().val_loss, 0.01);
}

TEST(Train, DeterministicAndSelectsBestValidation) {
  const auto data = fixtures::training_set(10, 100);
  auto run = [&] {
    NetConfig nc;
    nc.seed = 1;
    ToyNet net(nc);
    TrainConfig tc;
    tc.iterations = 25;
    tc.seed = 7;
    return train(net, tc, data);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  ASSERT_EQ(a.history.size(), 25u);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.val_indices, b.val_indices);
  EXPECT_EQ(a.val_indices.size(), 1u);
  double best = std::numeric_limits<double>::infinity();
  int best_it = 0;
  for (const auto& h : a.history) {
    if (h.val_loss < best) {
      best = h.val_loss;
      best_it = h.iteration;
    }
  }
  EXPECT_EQ(a.best_iteration, best_it);
  EXPECT_EQ(a.best_val_loss, best);

  // The stored parameters reproduce the selected validation loss.
  NetConfig nc;
  nc.seed = 1;
  ToyNet check(nc);
  for (std::size_t i = 0; i < check.params().size(); ++i) check.params()[i].value = a.best_params[i].value;
  const auto val = prepare(data[a.val_indices[0]], lungsev::WindowSpec{}, nullptr);
  EXPECT_EQ(loss_step(check, val, false), a.best_val_loss);
}

TEST(Train, DifferentSeedDiffers) {
  const auto data = fixtures::training_set(10, 100);
  auto run = [&](std::uint64_t seed) {
    ToyNet net(NetConfig{});
    TrainConfig tc;
    tc.iterations = 5;
    tc.seed = seed;
    return train(net, tc, data).history;
  };
  EXPECT_NE(run(1), run(2));
}

TEST(Checkpoint, RoundTripIsExact) {
  const fs::path dir = fs::temp_directory_path() / "lungsev_ckpt_test";
  fs::create_directories(dir);
  NetConfig nc;
  nc.seed = 11;
  ToyNet a(nc);
  save_params(a.params(), dir / "best.json");
  EXPECT_TRUE(fs::exists(dir / "best.bin"));
  EXPECT_EQ(fs::file_size(dir / "best.bin"), a.params().scalar_count() * 8);
  nc.seed = 12;
  ToyNet b(nc);
  load_params(b.params(), dir / "best.json");
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    for (std::size_t k = 0; k < a.params()[i].value.size(); ++k) {
      ASSERT_EQ(a.params()[i].value[k], b.params()[i].value[k]);
    }
  }
  NetConfig other;
  other.growth_rate = 3;
  ToyNet c(other);
  EXPECT_THROW(load_params(c.params(), dir / "best.json"), lungsev::FormatError);
  fs::remove_all(dir);
}

TEST(Checkpoint, LossCsvLayout) {
  const fs::path p = fs::temp_directory_path() / "lungsev_loss_test.csv";
  write_loss_csv({{1, 0.5, 0.25}, {2, 0.125, 0.0625}}, p);
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), "iteration,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.0625\n");
  fs::remove(p);
}

}  // namespace
