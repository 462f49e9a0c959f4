// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpmix/gpmix.h"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Dataset {
  gpmix_dataset *p = nullptr;
  ~Dataset() { gpmix_dataset_free(p); }
};

struct Fit {
  gpmix_fit *p = nullptr;
  ~Fit() { gpmix_fit_free(p); }
};

struct Text {
  char *p = nullptr;
  ~Text() { gpmix_string_free(p); }
};

gpmix_run_options quick_run() {
  gpmix_run_options o;
  gpmix_run_options_default(&o);
  o.iterations = 80;
  o.burnin = 20;
  o.thin = 2;
  o.chains = 2;
  o.seed = 5;
  return o;
}

Dataset simulated(std::uint64_t seed) {
  gpmix_sim_options s;
  gpmix_sim_options_default(&s);
  s.per_component = 20;
  s.fractions = 6;
  s.eps = 0.05;
  s.seed = seed;
  Dataset ds;
  REQUIRE(gpmix_simulate(&s, &ds.p) == GPMIX_OK);
  return ds;
}

} // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(gpmix_version()).size() > 0);
  Dataset ds;
  CHECK(gpmix_dataset_load("/nonexistent/file.csv", 0, &ds.p) == GPMIX_ERR_IO);
  CHECK(ds.p == nullptr);
  CHECK(std::string(gpmix_last_error()).find("/nonexistent/file.csv") != std::string::npos);
  CHECK(gpmix_dataset_load(nullptr, 0, &ds.p) == GPMIX_ERR_ARGUMENT);
  gpmix_string_free(nullptr);
  gpmix_dataset_free(nullptr);
  gpmix_fit_free(nullptr);
}

TEST_CASE("simulate, save and reload") {
  auto ds = simulated(1);
  size_t n = 0;
  size_t d = 0;
  size_t k = 0;
  REQUIRE(gpmix_dataset_shape(ds.p, &n, &d, &k) == GPMIX_OK);
  CHECK(n == 60);
  CHECK(d == 6);
  CHECK(k == 3);

  const fs::path dir = fs::temp_directory_path() / "gpmix_c_api";
  fs::create_directories(dir);
  const std::string path = (dir / "sim.csv").string();
  REQUIRE(gpmix_dataset_save(ds.p, path.c_str()) == GPMIX_OK);
  CHECK(gpmix_dataset_save_truth(ds.p, (dir / "truth.csv").string().c_str()) == GPMIX_OK);
  Dataset back;
  REQUIRE(gpmix_dataset_load(path.c_str(), 0, &back.p) == GPMIX_OK);
  std::vector<double> a(n * d);
  std::vector<double> b(n * d);
  gpmix_dataset_profiles(ds.p, a.data());
  gpmix_dataset_profiles(back.p, b.data());
  CHECK(a == b);
  // Reloaded data carry no ground truth.
  CHECK(gpmix_dataset_save_truth(back.p, (dir / "t2.csv").string().c_str()) == GPMIX_ERR_VALIDATION);
  fs::remove_all(dir);
}

TEST_CASE("fit through the C interface") {
  auto ds = simulated(2);
  const auto opts = quick_run();
  Fit fit;
  REQUIRE(gpmix_fit_run(ds.p, &opts, &fit.p) == GPMIX_OK);
  std::vector<double> alloc(60 * 4);
  REQUIRE(gpmix_fit_allocation(fit.p, alloc.data()) == GPMIX_OK);
  for (std::size_t i = 0; i < 60; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c)
      s += alloc[i * 4 + c];
    CHECK(s == doctest::Approx(1.0));
  }
  std::vector<double> entropy(60);
  REQUIRE(gpmix_fit_entropy(fit.p, entropy.data()) == GPMIX_OK);
  Text json;
  REQUIRE(gpmix_fit_summary_json(fit.p, &json.p) == GPMIX_OK);
  const auto doc = nlohmann::json::parse(json.p);
  CHECK(doc["proteins"] == 60);

  Fit again;
  REQUIRE(gpmix_fit_run(ds.p, &opts, &again.p) == GPMIX_OK);
  Text json2;
  gpmix_fit_summary_json(again.p, &json2.p);
  CHECK(std::string(json.p) == std::string(json2.p));

  gpmix_run_options bad = opts;
  bad.thin = 0;
  Fit none;
  CHECK(gpmix_fit_run(ds.p, &bad, &none.p) == GPMIX_ERR_VALIDATION);
  bad = opts;
  bad.sampler = 7;
  CHECK(gpmix_fit_run(ds.p, &bad, &none.p) == GPMIX_ERR_VALIDATION);
  CHECK(gpmix_fit_run(ds.p, nullptr, &none.p) == GPMIX_ERR_ARGUMENT);
}

TEST_CASE("cross-validation through the C interface") {
  auto ds = simulated(3);
  auto run = quick_run();
  run.sampler = GPMIX_SAMPLER_EB;
  run.chains = 1;
  gpmix_cv_options cv;
  gpmix_cv_options_default(&cv);
  cv.splits = 3;
  cv.seed = 9;
  std::vector<double> losses(3);
  Text json;
  double seconds = 0.0;
  REQUIRE(gpmix_cross_validate(ds.p, &run, &cv, losses.data(), &json.p, &seconds) == GPMIX_OK);
  for (double l : losses) {
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
  CHECK(nlohmann::json::parse(json.p)["losses"].size() == 3);
}

TEST_CASE("low-level helpers") {
  const double pred[3] = {0.2, 0.3, 0.5};
  double loss = 0.0;
  REQUIRE(gpmix_quadratic_loss(pred, 3, 2, &loss) == GPMIX_OK);
  CHECK(loss == doctest::Approx(0.04 + 0.09 + 0.25));
  CHECK(gpmix_quadratic_loss(pred, 3, 3, &loss) == GPMIX_ERR_VALIDATION);

  const Eigen::Vector4d row(1.0, 0.5, 0.2, 0.05);
  double ld = 0.0;
  REQUIRE(gpmix_structured_logdet(row.data(), 4, 0.3, 3, &ld) == GPMIX_OK);
  CHECK(ld == doctest::Approx(oracle::logdet(oracle::structured(row, 0.3, 3))).epsilon(1e-12));
  const double indefinite[2] = {1.0, 5.0};
  CHECK(gpmix_structured_logdet(indefinite, 2, 0.01, 2, &ld) == GPMIX_ERR_NUMERICAL);

  std::vector<double> chains(40);
  for (std::size_t i = 0; i < 40; ++i)
    chains[i] = (i % 2 == 0 ? 1.0 : -1.0);
  double rhat = 0.0;
  double upper = 0.0;
  REQUIRE(gpmix_gelman_rubin(chains.data(), 2, 20, &rhat, &upper) == GPMIX_OK);
  CHECK(rhat == doctest::Approx(std::sqrt(0.9)));
  std::vector<double> flat(40, 1.0);
  CHECK(gpmix_gelman_rubin(flat.data(), 2, 20, &rhat, &upper) == GPMIX_ERR_NUMERICAL);

  double ess = 0.0;
  std::vector<double> constant(200, 2.0);
  REQUIRE(gpmix_ess(constant.data(), 200, &ess) == GPMIX_OK);
  CHECK(ess == 1.0);
  CHECK(gpmix_ess(constant.data(), 50, &ess) == GPMIX_ERR_VALIDATION);
}

TEST_CASE("benchmarks through the C interface") {
  gpmix_bench_options b;
  gpmix_bench_options_default(&b);
  b.repeats = 1;
  b.max_dim = 32;
  Text json;
  REQUIRE(gpmix_bench("linalg", &b, &json.p) == GPMIX_OK);
  CHECK(nlohmann::json::parse(json.p)["rows"].size() == 4);
  Text none;
  CHECK(gpmix_bench("gpu", &b, &none.p) == GPMIX_ERR_VALIDATION);
}
