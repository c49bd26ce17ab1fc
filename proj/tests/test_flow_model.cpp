#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "flowgrasp/flow_model.hpp"
#include "flowgrasp/pipeline.hpp"
#include "flowgrasp/rng.hpp"
#include "flowgrasp/sampler.hpp"

using namespace flowgrasp;

namespace {

// Scalar objective sum(C .* output) so that dL/d(output) = C.
double weighted_output(const VelocityModel& m, const MatX& inputs, const MatX& c) {
  return m.forward(inputs).cwiseProduct(c).sum();
}

MatX random_inputs(const VelocityModel& m, Rng& rng, int batch) {
  MatX x(m.input_dim(), batch);
  for (int j = 0; j < batch; ++j) {
    const VecX h = standard_normal(rng, m.state_dim());
    const VecX c = standard_normal(rng, m.cond_dim());
    m.features(h, uniform(rng, 0.0, 1.0), c, x.col(j));
  }
  return x;
}

void check_gradients(Activation act) {
  Rng rng(11);
  VelocityModel m(4, 3, {16, 12}, act, 5);
  const MatX x = random_inputs(m, rng, 6);
  MatX c(m.state_dim(), 6);
  for (int j = 0; j < 6; ++j) c.col(j) = standard_normal(rng, m.state_dim());

  VelocityModel::Tape tape;
  m.forward(x, tape);
  const std::vector<double> analytic = VelocityModel::flatten(m.backward(tape, c));
  std::vector<double> params = m.parameters();
  REQUIRE(analytic.size() == params.size());

  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  constexpr double h = 1e-6;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t i = pick(rng);
    const double saved = params[i];
    params[i] = saved + h;
    m.set_parameters(params);
    const double up = weighted_output(m, x, c);
    params[i] = saved - h;
    m.set_parameters(params);
    const double down = weighted_output(m, x, c);
    params[i] = saved;
    m.set_parameters(params);
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    CHECK(std::abs(fd - analytic[i]) / denom <= 1e-4);
  }
}

}  // namespace

TEST_CASE("probability path endpoints and velocity") {
  const VecX h0 = (VecX(3) << 1.0, -2.0, 0.5).finished();
  const VecX h1 = (VecX(3) << 3.0, 4.0, -1.0).finished();
  const double s = 1e-5;
  CHECK((interpolate_path(h0, h1, 0.0, s) - h0).norm() == 0.0);
  CHECK((interpolate_path(h0, h1, 1.0, s) - (h1 + s * h0)).norm() < 1e-15);
  CHECK((target_velocity(h0, h1, s) - (h1 - (1 - s) * h0)).norm() < 1e-15);
  // Linear in t: the midpoint is the mean of the endpoints.
  const VecX mid = interpolate_path(h0, h1, 0.5, s);
  CHECK((mid - 0.5 * (interpolate_path(h0, h1, 0.0, s) + interpolate_path(h0, h1, 1.0, s)))
            .norm() < 1e-15);
  // Finite-difference derivative matches the closed-form velocity.
  const double t = 0.3, dt = 1e-6;
  const VecX fd = (interpolate_path(h0, h1, t + dt, s) - interpolate_path(h0, h1, t - dt, s)) /
                  (2 * dt);
  CHECK((fd - target_velocity(h0, h1, s)).norm() < 1e-8);
}

TEST_CASE("manual backward pass matches finite differences") {
  SUBCASE("silu") { check_gradients(Activation::SiLU); }
  SUBCASE("tanh") { check_gradients(Activation::Tanh); }
}

TEST_CASE("velocity equals batched forward") {
  VelocityModel m(3, 2, {8}, Activation::SiLU, 1);
  Rng rng(2);
  const VecX h = standard_normal(rng, 3), c = standard_normal(rng, 2);
  MatX x(m.input_dim(), 1);
  m.features(h, 0.25, c, x.col(0));
  CHECK((m.velocity(h, 0.25, c) - m.forward(x).col(0)).norm() == 0.0);
  CHECK(x(3, 0) == 0.25);
  CHECK(x(4, 0) == doctest::Approx(std::sin(0.5 * M_PI)));
  CHECK(x(5, 0) == doctest::Approx(std::cos(0.5 * M_PI)).epsilon(1e-12));
}

TEST_CASE("fm_loss equals a direct recomputation") {
  VelocityModel m(2, 1, {8}, Activation::Tanh, 3);
  std::vector<FmItem> items;
  for (int i = 0; i < 5; ++i)
    items.push_back({(VecX(2) << i, -i).finished(), (VecX(1) << 0.1 * i).finished(),
                     static_cast<std::uint64_t>(100 + i)});
  double expect = 0.0;
  for (const auto& it : items) {
    const FmDraw d = draw_fm_noise(it.noise_seed, 2);
    REQUIRE(d.t >= 0.0);
    REQUIRE(d.t <= 1.0);
    const VecX ht = interpolate_path(d.h0, it.h1, d.t, 1e-5);
    expect += (m.velocity(ht, d.t, it.cond) - target_velocity(d.h0, it.h1, 1e-5)).squaredNorm();
  }
  CHECK(fm_loss(m, items, 1e-5) == doctest::Approx(expect / 5).epsilon(1e-14));
}

TEST_CASE("first Adam step moves every parameter by about lr against its gradient") {
  VelocityModel m(2, 0, {4}, Activation::Tanh, 9);
  const std::vector<double> before = m.parameters();
  VelocityModel::Gradients g;
  Rng rng(4);
  for (const auto& layer : m.layers()) {
    g.weight.push_back(MatX::Random(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(standard_normal(rng, static_cast<int>(layer.bias.size())));
  }
  const std::vector<double> flat = VelocityModel::flatten(g);
  Adam adam(m, 1e-3, 0.9, 0.999, 1e-8);
  adam.step(m, g);
  const std::vector<double> after = m.parameters();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double expect = before[i] - 1e-3 * flat[i] / (std::abs(flat[i]) + 1e-8);
    CHECK(after[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("training is reproducible and rejects bad settings") {
  std::vector<TrainSample> data;
  Rng rng(6);
  for (int i = 0; i < 20; ++i) data.push_back({standard_normal(rng, 2), standard_normal(rng, 1)});
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 42;
  const VelocityModel init(2, 1, {8}, Activation::SiLU, 1);
  const TrainResult a = train(init, data, cfg);
  const TrainResult b = train(init, data, cfg);
  CHECK(a.epoch_loss.size() == 5);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.model.parameters() == b.model.parameters());

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.sigma_min = 0.02;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.sigma_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  VelocityModel broken = init;
  broken.mutable_layers()[0].weight(0, 0) = std::nan("");
  CHECK_THROWS_AS(train(broken, data, cfg), RuntimeFailure);

  std::vector<TrainSample> wrong{{standard_normal(rng, 3), standard_normal(rng, 1)}};
  CHECK_THROWS_AS(train(init, wrong, cfg), ConfigError);
}

TEST_CASE("a single conditional pair is learned") {
  const std::vector<TrainSample> data{{(VecX(2) << 1.5, -0.5).finished(), VecX::Ones(1)}};
  std::vector<FmItem> fresh;
  for (int i = 0; i < 2000; ++i)
    fresh.push_back({data[0].h1, data[0].cond, static_cast<std::uint64_t>(1000 + i)});
  const VelocityModel init(2, 1, {32, 32}, Activation::SiLU, 2);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  const TrainResult r = train(init, data, cfg);
  const double before = fm_loss(init, fresh, cfg.sigma_min);
  const double after = fm_loss(r.model, fresh, cfg.sigma_min);
  CHECK(after < 0.1 * before);
}

TEST_CASE("two-Gaussian sanity flow recovers the mixture means") {
  Rng rng(21);
  std::vector<TrainSample> data;
  for (int i = 0; i < 512; ++i) {
    const double sx = i % 2 == 0 ? 2.0 : -2.0;
    const VecX noise = 0.1 * standard_normal(rng, 2);
    data.push_back({(VecX(2) << sx + noise[0], noise[1]).finished(), VecX(0)});
  }
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 64;
  cfg.learning_rate = 2e-3;
  cfg.seed = 8;
  const TrainResult r = train(VelocityModel(2, 0, {64, 64}, Activation::SiLU, 4), data, cfg);
  VecX pos = VecX::Zero(2), neg = VecX::Zero(2);
  int np = 0, nn = 0;
  for (int i = 0; i < 1000; ++i) {
    const VecX h0 = standard_normal(rng, 2);
    const VecX x =
        integrate(r.model, h0, VecX(0), 100, nullptr, nullptr, nullptr, false).final_state;
    if (x[0] > 0) {
      pos += x;
      ++np;
    } else {
      neg += x;
      ++nn;
    }
  }
  REQUIRE(np > 300);
  REQUIRE(nn > 300);
  CHECK((pos / np - (VecX(2) << 2, 0).finished()).norm() < 0.15);
  CHECK((neg / nn - (VecX(2) << -2, 0).finished()).norm() < 0.15);
}

TEST_CASE("standardizer") {
  std::vector<VecX> xs;
  for (int i = 0; i < 4; ++i) xs.push_back((VecX(3) << i, 2.0 * i + 1.0, 5.0).finished());
  const Standardizer s = Standardizer::fit(xs);
  CHECK(s.mean[0] == doctest::Approx(1.5));
  CHECK(s.mean[1] == doctest::Approx(4.0));
  CHECK(s.scale[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.scale[1] == doctest::Approx(2.0 * std::sqrt(1.25)));
  CHECK(s.scale[2] == 1.0);  // constant dimension keeps unit scale
  for (const auto& x : xs) CHECK((s.inverse(s.forward(x)) - x).norm() < 1e-12);
  VecX m = VecX::Zero(3);
  for (const auto& x : xs) m += s.forward(x);
  CHECK(m.norm() < 1e-12);
  CHECK_THROWS_AS(Standardizer::fit(std::vector<VecX>{}), InputError);
}

TEST_CASE("checkpoint round trip reproduces velocities bit for bit") {
  FlowCheckpoint ck;
  ck.model = VelocityModel(4, 2, {16, 16}, Activation::Tanh, 17);
  ck.standardizer = {(VecX(4) << 0.1, -0.2, 0.3, 1.0 / 3.0).finished(),
                     (VecX(4) << 1.0, 2.0, 0.7, M_PI).finished()};
  ck.config_hash = "abc123";
  const auto path = std::filesystem::temp_directory_path() / "flowgrasp_ckpt_test.json";
  save_checkpoint(ck, path.string());
  const FlowCheckpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);
  CHECK(back.config_hash == "abc123");
  CHECK(back.model.activation() == Activation::Tanh);
  CHECK(back.model.parameters() == ck.model.parameters());
  CHECK(back.standardizer.mean == ck.standardizer.mean);
  CHECK(back.standardizer.scale == ck.standardizer.scale);
  Rng rng(1);
  for (int i = 0; i < 32; ++i) {
    const VecX h = standard_normal(rng, 4), c = standard_normal(rng, 2);
    const double t = uniform(rng, 0.0, 1.0);
    CHECK((back.model.velocity(h, t, c) - ck.model.velocity(h, t, c)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS(load_checkpoint("/nonexistent/flowgrasp.json"));
}

TEST_CASE("loss csv has one row per epoch") {
  const auto path = std::filesystem::temp_directory_path() / "flowgrasp_loss_test.csv";
  write_loss_csv({3.0, 2.0, 1.5}, path.string());
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,loss");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove(path);
}

TEST_CASE("smoothed loss trends down on a synthetic grasp dataset") {
  RunConfig cfg = RunConfig::load(std::string(FLOWGRASP_SOURCE_DIR) + "/configs/small.json");
  cfg.dataset.n_objects = 24;
  cfg.dataset.grasps_per_object = 4;
  cfg.train.epochs = 400;
  cfg.train.batch_size = 16;
  const Dataset ds = build_dataset(cfg.dataset, cfg.oracle, cfg.hand, cfg.dataset_seed());
  const std::vector<double> loss = train_flow(ds, cfg).epoch_loss;
  std::vector<double> blocks;
  for (std::size_t b = 0; b + 10 <= loss.size(); b += 10) {
    double m = 0.0;
    for (std::size_t i = b; i < b + 10; ++i) m += loss[i] / 10.0;
    blocks.push_back(m);
  }
  for (std::size_t i = 1; i < blocks.size(); ++i) CHECK(blocks[i] < blocks.front());
  CHECK(blocks.back() < 0.8 * blocks.front());
}

TEST_CASE("the flow model does not depend on any energy code") {
  for (const char* file : {"/include/flowgrasp/flow_model.hpp", "/src/flow_model.cpp"}) {
    std::ifstream in(std::string(FLOWGRASP_SOURCE_DIR) + file);
    REQUIRE(in.good());
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("#include", 0) != 0) continue;
      CAPTURE(line);
      CHECK(line.find("energy") == std::string::npos);
      CHECK(line.find("guidance") == std::string::npos);
      CHECK(line.find("sampler") == std::string::npos);
      CHECK(line.find("dataset") == std::string::npos);
    }
  }
}
