// Copyright 2026 The fpreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "fpreg/fpreg.h"
#include "oracles.hpp"

namespace {

void count_iterations(void* user, size_t, double, int, int) { ++*static_cast<size_t*>(user); }

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::string(fpreg_version()).size() > 0);
  CHECK(std::string(fpreg_status_string(FPREG_OK)) == "ok");
  CHECK(std::string(fpreg_status_string(FPREG_ERR_SIZE)).size() > 0);
}

TEST_CASE("null handles and arguments are rejected") {
  CHECK(fpreg_archive_create(nullptr) == FPREG_ERR_INPUT);
  fpreg_archive* a = nullptr;
  CHECK(fpreg_archive_read(nullptr, &a) == FPREG_ERR_INPUT);
  CHECK(a == nullptr);
  CHECK(fpreg_bank_size(nullptr) == 0);
  fpreg_archive_free(nullptr);
  fpreg_bank_free(nullptr);
  fpreg_gmm_free(nullptr);
  fpreg_run_config_free(nullptr);
}

TEST_CASE("archive to bank to model through handles") {
  oracle::TempDir dir("capi");
  fpreg_archive* a = nullptr;
  REQUIRE(fpreg_archive_create(&a) == FPREG_OK);
  const uint32_t shape[4] = {4, 2, 3, 3};
  std::vector<float> w(72);
  for (size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(i % 9) * 0.1f + static_cast<float>(i / 36);
  REQUIRE(fpreg_archive_add(a, "conv1.weight", shape, 4, w.data()) == FPREG_OK);
  const uint32_t bshape[1] = {4};
  const float bias[4] = {0, 0, 0, 0};
  REQUIRE(fpreg_archive_add(a, "conv1.bias", bshape, 1, bias) == FPREG_OK);
  CHECK(fpreg_archive_add(a, "conv1.bias", bshape, 1, bias) == FPREG_ERR_VALIDATION);
  CHECK(std::string(fpreg_last_error()).find("conv1.bias") != std::string::npos);

  const auto tarc = (dir / "m.tarc").string();
  REQUIRE(fpreg_archive_write(a, tarc.c_str()) == FPREG_OK);
  fpreg_archive* back = nullptr;
  REQUIRE(fpreg_archive_read(tarc.c_str(), &back) == FPREG_OK);
  CHECK(fpreg_archive_size(back) == 2);
  const char* name = nullptr;
  size_t rank = 0;
  const uint32_t* sh = nullptr;
  const float* data = nullptr;
  REQUIRE(fpreg_archive_tensor(back, 0, &name, &rank, &sh, &data) == FPREG_OK);
  CHECK(std::string(name) == "conv1.weight");
  CHECK(rank == 4);
  CHECK(data[71] == w[71]);
  CHECK(fpreg_archive_tensor(back, 2, &name, &rank, &sh, &data) == FPREG_ERR_INPUT);

  fpreg_bank* bank = nullptr;
  REQUIRE(fpreg_bank_extract(back, nullptr, 0, nullptr, 0, &bank) == FPREG_OK);
  CHECK(fpreg_bank_size(bank) == 8);
  CHECK(fpreg_bank_dim(bank) == 9);
  CHECK(fpreg_bank_group_count(bank) == 1);
  size_t count = 0;
  REQUIRE(fpreg_bank_group(bank, 0, &name, &count) == FPREG_OK);
  CHECK(count == 8);
  float row[9];
  REQUIRE(fpreg_bank_row(bank, 5, row) == FPREG_OK);
  CHECK(row[3] == w[5 * 9 + 3]);

  const char* excl[] = {"conv1*"};
  fpreg_bank* none = nullptr;
  CHECK(fpreg_bank_extract(back, nullptr, 0, excl, 1, &none) == FPREG_ERR_EMPTY);
  CHECK(none == nullptr);

  fpreg_em_options opt;
  fpreg_em_options_default(&opt);
  CHECK(opt.components == 64);
  CHECK(opt.max_iters == 200);
  CHECK(opt.rel_tol == 1e-7);
  CHECK(opt.variance_floor == 1e-6);
  fpreg_gmm* model = nullptr;
  fpreg_em_summary sum{};
  CHECK(fpreg_gmm_fit(bank, &opt, nullptr, nullptr, &model, &sum) == FPREG_ERR_SIZE);
  opt.components = 1;
  size_t calls = 0;
  REQUIRE(fpreg_gmm_fit(bank, &opt, count_iterations, &calls, &model, &sum) == FPREG_OK);
  CHECK(calls == sum.iterations);
  CHECK(sum.monotone == 1);
  double mean[9], var[9], weight;
  REQUIRE(fpreg_gmm_get(model, &weight, mean, var) == FPREG_OK);
  CHECK(weight == 1.0);
  for (size_t j = 0; j < 9; ++j) {
    double s = 0;
    for (size_t i = 0; i < 8; ++i) s += w[i * 9 + j];
    CHECK(mean[j] == doctest::Approx(s / 8).epsilon(1e-12));
  }

  const auto gmm_path = (dir / "m.gmm").string();
  REQUIRE(fpreg_gmm_write(model, gmm_path.c_str()) == FPREG_OK);
  fpreg_gmm* reread = nullptr;
  REQUIRE(fpreg_gmm_read(gmm_path.c_str(), &reread) == FPREG_OK);
  double total = 0, avg = 0, total2 = 0, avg2 = 0;
  REQUIRE(fpreg_gmm_score_bank(model, bank, &total, &avg) == FPREG_OK);
  REQUIRE(fpreg_gmm_score_bank(reread, bank, &total2, &avg2) == FPREG_OK);
  CHECK(total == total2);
  CHECK(avg * 8 == doctest::Approx(total));

  const auto bank_path = (dir / "m.fbnk").string();
  REQUIRE(fpreg_bank_write(bank, bank_path.c_str()) == FPREG_OK);
  fpreg_bank* rb = nullptr;
  int odd = -1;
  REQUIRE(fpreg_bank_read(bank_path.c_str(), &rb, &odd) == FPREG_OK);
  CHECK(odd == 0);
  CHECK(fpreg_bank_group_count(rb) == 1);

  char hex[65];
  REQUIRE(fpreg_sha256_file(bank_path.c_str(), hex) == FPREG_OK);
  CHECK(std::string(hex).size() == 64);

  fpreg_analysis_summary as{};
  CHECK(fpreg_analyze(rb, 10, 0, 10, (dir / "an").string().c_str(), &as) == FPREG_ERR_SIZE);
  REQUIRE(fpreg_analyze(rb, 3, 0, 10, (dir / "an").string().c_str(), &as) == FPREG_OK);
  CHECK(as.mean_grids == 3);
  CHECK(as.covariance_files == 3);
  CHECK(as.histogram_total == 8);

  fpreg_bank_free(rb);
  fpreg_gmm_free(reread);
  fpreg_gmm_free(model);
  fpreg_bank_free(bank);
  fpreg_archive_free(back);
  fpreg_archive_free(a);
}

TEST_CASE("mixture evaluation through the C API") {
  const double weights[2] = {0.9, 0.1}, means[2] = {0.0, 10.0}, vars[2] = {1.0, 1.0};
  fpreg_gmm* m = nullptr;
  REQUIRE(fpreg_gmm_create(1, 2, weights, means, vars, &m) == FPREG_OK);
  const double w = 9.0;
  size_t s = 7;
  REQUIRE(fpreg_gmm_select(m, &w, 1, &s) == FPREG_OK);
  CHECK(s == 1);
  double lp = 0, nl = 0, g[1], r[2];
  REQUIRE(fpreg_gmm_logpdf(m, &w, 1, &lp) == FPREG_OK);
  REQUIRE(fpreg_gmm_nll(m, &w, 1, &nl) == FPREG_OK);
  CHECK(nl == -lp);
  REQUIRE(fpreg_gmm_grad(m, &w, 1, FPREG_GRAD_APPROXIMATE, g) == FPREG_OK);
  CHECK(g[0] == -1.0);
  REQUIRE(fpreg_gmm_responsibilities(m, &w, 1, r) == FPREG_OK);
  CHECK(r[0] + r[1] == doctest::Approx(1.0));
  CHECK(fpreg_gmm_logpdf(m, &w, 2, &lp) == FPREG_ERR_INPUT);

  const double bad_w[2] = {0.5, 0.6};
  fpreg_gmm* bad = nullptr;
  CHECK(fpreg_gmm_create(1, 2, bad_w, means, vars, &bad) == FPREG_ERR_VALIDATION);
  CHECK(bad == nullptr);

  fpreg_gradcheck_options go;
  fpreg_gradcheck_options_default(&go);
  CHECK(go.probes == 100);
  fpreg_gradcheck_result gr{};
  REQUIRE(fpreg_gradcheck(m, &go, &gr) == FPREG_OK);
  CHECK(gr.passed == 1);
  CHECK(fpreg_gradcheck(m, nullptr, &gr) == FPREG_ERR_INPUT);
  fpreg_gmm_free(m);

  std::vector<double> w9(9, 0.0), v9(9, 1.0);
  const double one = 1.0;
  REQUIRE(fpreg_gmm_create(9, 1, &one, w9.data(), v9.data(), &m) == FPREG_OK);
  REQUIRE(fpreg_gradcheck(m, &go, &gr) == FPREG_OK);
  CHECK(gr.passed == 1);
  CHECK(gr.single_component_identical == 1);
  fpreg_gmm_free(m);
}

TEST_CASE("run configuration errors surface as status codes") {
  oracle::TempDir dir("capi_cfg");
  {
    std::FILE* f = std::fopen((dir / "c.json").c_str(), "w");
    std::fputs("{\"seed\": 1}", f);
    std::fclose(f);
  }
  fpreg_run_config* cfg = nullptr;
  CHECK(fpreg_run_config_read((dir / "c.json").c_str(), &cfg) == FPREG_ERR_CONFIG);
  CHECK(std::string(fpreg_last_error()).find("batch_size") != std::string::npos);
  CHECK(fpreg_run_config_read((dir / "missing.json").c_str(), &cfg) == FPREG_ERR_IO);
  fpreg_report_summary rs{};
  CHECK(fpreg_report((dir / "none").c_str(), (dir / "out").c_str(), &rs) == FPREG_ERR_IO);
}
