#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinsim.h"

using nlohmann::json;

namespace {

const char* kModelJson = R"({
  "modes": [
    { "omega_hz": 1.37e6, "gamma0_hz": 422.0, "gamma_meas_hz": 13000.0,
      "zeta": 0.0, "n_th": 0.9 }
  ],
  "eta": 0.91,
  "extraneous": null
})";

struct Model {
  spinsim_model* handle = nullptr;
  ~Model() { spinsim_model_free(handle); }
};

std::string take_string(char* s) {
  std::string out(s);
  spinsim_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("model JSON round trip") {
  Model m;
  REQUIRE(spinsim_model_from_json(kModelJson, &m.handle) == SPINSIM_OK);
  CHECK(spinsim_model_mode_count(m.handle) == 1);

  char* text = nullptr;
  REQUIRE(spinsim_model_to_json(m.handle, &text) == SPINSIM_OK);
  const json round = json::parse(take_string(text));
  CHECK(round.at("eta").get<double>() == 0.91);
  CHECK(round.at("modes").size() == 1);
  CHECK(round.at("modes")[0].at("gamma_meas_hz").get<double>() ==
        doctest::Approx(13000.0).epsilon(1e-12));
  CHECK(round.at("extraneous").is_null());
}

TEST_CASE("config errors carry messages") {
  spinsim_model* handle = nullptr;
  CHECK(spinsim_model_from_json("{ not json", &handle) == SPINSIM_ERR_CONFIG);
  CHECK(std::strlen(spinsim_last_error()) > 0);
  CHECK(spinsim_model_from_json("{\"modes\": []}", &handle) == SPINSIM_ERR_CONFIG);
  CHECK(spinsim_model_from_json(nullptr, &handle) == SPINSIM_ERR_CONFIG);
}

TEST_CASE("psd: on-resonance point value through the C API") {
  const char* text = R"({
    "modes": [ { "omega_hz": 1.0, "gamma0_hz": 0.1, "gamma_meas_hz": 1.0,
                 "zeta": 0.0, "n_th": 0.0 } ],
    "eta": 1.0
  })";
  Model m;
  REQUIRE(spinsim_model_from_json(text, &m.handle) == SPINSIM_OK);
  const double freq = 1.0;
  double psd = 0.0;
  REQUIRE(spinsim_psd(m.handle, &freq, 1, 0.0, SPINSIM_METHOD_FULL, 0, &psd) == SPINSIM_OK);
  CHECK(psd == doctest::Approx(441.0).epsilon(1e-12));
  // ... and through the closed form
  REQUIRE(spinsim_psd(m.handle, &freq, 1, 0.0, SPINSIM_METHOD_ANALYTIC, 0, &psd) == SPINSIM_OK);
  CHECK(psd == doctest::Approx(441.0).epsilon(1e-12));
}

TEST_CASE("psd: unstable model maps to the numeric error code") {
  const char* text = R"({
    "modes": [ { "omega_hz": 1.0e6, "gamma0_hz": 10.0, "gamma_meas_hz": 1.0e4,
                 "zeta": -0.4, "n_th": 0.0 } ],
    "eta": 1.0
  })";
  Model m;
  REQUIRE(spinsim_model_from_json(text, &m.handle) == SPINSIM_OK);
  const double freq = 1.0e6;
  double psd = 0.0;
  CHECK(spinsim_psd(m.handle, &freq, 1, 0.0, SPINSIM_METHOD_FULL, 0, &psd) ==
        SPINSIM_ERR_NUMERIC);
  CHECK(std::string(spinsim_last_error()).find("anti-damped") != std::string::npos);
}

TEST_CASE("minimum envelope and closed-form envelope") {
  Model m;
  REQUIRE(spinsim_model_from_json(kModelJson, &m.handle) == SPINSIM_OK);
  std::vector<double> freq;
  for (int k = 0; k < 201; ++k) freq.push_back(1.31e6 + 120e3 * k / 200.0);
  std::vector<double> numeric(freq.size()), phi(freq.size()), formula(freq.size());
  REQUIRE(spinsim_psd_min(m.handle, freq.data(), freq.size(), 0, numeric.data(),
                          phi.data()) == SPINSIM_OK);
  REQUIRE(spinsim_envelope(m.handle, freq.data(), freq.size(), formula.data()) == SPINSIM_OK);
  double numeric_min = 1e300, formula_min = 1e300;
  for (size_t k = 0; k < freq.size(); ++k) {
    numeric_min = std::min(numeric_min, numeric[k]);
    formula_min = std::min(formula_min, formula[k]);
  }
  // C_q = 11 at eta = 0.91: deepest squeezing within ~0.5 dB of -7.8 dB
  CHECK(10.0 * std::log10(formula_min) == doctest::Approx(-7.80).epsilon(0.02));
  CHECK(10.0 * std::log10(numeric_min) > -7.80);
  CHECK(10.0 * std::log10(numeric_min) < -6.9);
}

TEST_CASE("derived rates and clebsch through the C API") {
  spinsim_rates rates;
  REQUIRE(spinsim_derived_rates(1.37e6, 422.0, 13000.0, 0.1, 0.9, &rates) == SPINSIM_OK);
  CHECK(rates.gamma_th_hz == doctest::Approx(2.8 * 422.0).epsilon(1e-12));
  CHECK(rates.gamma_dba_hz == doctest::Approx(2600.0).epsilon(1e-12));
  CHECK(rates.c_q == doctest::Approx(13000.0 / (2.8 * 422.0)).epsilon(1e-12));

  double c = 0.0;
  REQUIRE(spinsim_clebsch(4, 3, &c) == SPINSIM_OK);
  CHECK(c == doctest::Approx(std::sqrt(8.0)));
  CHECK(spinsim_clebsch(4, 4, &c) == SPINSIM_ERR_CONFIG);
}

TEST_CASE("bip through the C API") {
  double v = 0.0;
  REQUIRE(spinsim_bip(0.91, 2.0, 0.054, 15.0, &v) == SPINSIM_OK);
  CHECK(v == doctest::Approx(1.88).epsilon(0.03));
  CHECK(spinsim_bip(0.0, 0.0, 0.0, 1.0, &v) == SPINSIM_ERR_CONFIG);
}

TEST_CASE("ensemble builder through the C API") {
  json config;
  config["cesium"] = {{"f_number", 4},
                      {"populations", {0, 1, 2, 3, 4, 5, 6, 7, 8}},
                      {"larmor_hz", 1.4e6},
                      {"rate_scale_hz", 25.0},
                      {"zeta_common", 0.054},
                      {"gamma0_hz", 150.0}};
  config["eta"] = 0.91;
  Model m;
  REQUIRE(spinsim_model_from_ensemble_json(config.dump().c_str(), &m.handle) == SPINSIM_OK);
  CHECK(spinsim_model_mode_count(m.handle) == 8);
  spinsim_rates rates;
  REQUIRE(spinsim_model_mode_rates(m.handle, 0, &rates) == SPINSIM_OK);
  CHECK(spinsim_model_mode_rates(m.handle, 8, &rates) == SPINSIM_ERR_CONFIG);

  char* text = nullptr;
  REQUIRE(spinsim_model_to_json(m.handle, &text) == SPINSIM_OK);
  const json round = json::parse(take_string(text));
  const double ratios[8] = {8, 14, 18, 20, 20, 18, 14, 8};
  for (int k = 0; k < 8; ++k)
    CHECK(round.at("modes")[k].at("gamma_meas_hz").get<double>() ==
          doctest::Approx(25.0 * ratios[k]).epsilon(1e-12));
}

TEST_CASE("synthesize and fit through the C API") {
  json config;
  config["model"] = json::parse(kModelJson);
  config["grid"] = {{"start_hz", 1.31e6}, {"stop_hz", 1.43e6}, {"points", 101}};
  config["angles"] = {{"count", 5}};
  config["n_avg"] = 500;

  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(spinsim_synthesize(config.dump().c_str(), 42, &a) == SPINSIM_OK);
  REQUIRE(spinsim_synthesize(config.dump().c_str(), 42, &b) == SPINSIM_OK);
  const std::string da = take_string(a), db = take_string(b);
  CHECK(da == db);  // seeded determinism, byte for byte

  json problem;
  problem["initial"] = json::parse(kModelJson);
  problem["initial"]["modes"][0]["gamma_meas_hz"] = 14500.0;
  problem["traces"] = json::parse(da).at("traces");
  problem["free"] = {{"omega", true},   {"gamma_meas", true}, {"zeta", false},
                     {"gamma0", true},  {"angles", true}};

  char* result_text = nullptr;
  REQUIRE(spinsim_fit(problem.dump().c_str(), &result_text) == SPINSIM_OK);
  const json result = json::parse(take_string(result_text));
  CHECK(result.at("converged").get<bool>());
  CHECK(result.at("model").at("modes")[0].at("gamma_meas_hz").get<double>() ==
        doctest::Approx(13000.0).epsilon(0.03));
}

TEST_CASE("tophat design through the C API") {
  json request = {{"w_in_mm", 1.1},  {"fan_angle_rad", 0.035}, {"f1_mm", 200.0},
                  {"F1_mm", 300.0},  {"F2_mm", 200.0},         {"invert", "auto"}};
  char* text = nullptr;
  REQUIRE(spinsim_tophat_design(request.dump().c_str(), &text) == SPINSIM_OK);
  const json design = json::parse(take_string(text));
  CHECK(design.at("residual_max").get<double>() <= 1e-9);
  CHECK(design.at("f2_mm").get<double>() == doctest::Approx(237.288).epsilon(1e-5));
  CHECK(std::abs(design.at("collimated_exit_slope_rad").get<double>()) <= 1e-12 * 0.035);
  CHECK(design.at("ray_table").size() >= 4);
  CHECK(design.at("L1_mm").get<double>() >= 0.0);
}
