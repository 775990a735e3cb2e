#include <gtest/gtest.h>

#include <sstream>

#include "sqz/config.hpp"

using namespace sqz;

namespace {

RunConfig parse(const std::string& s) {
  std::istringstream is(s);
  return parse_config(is);
}

ErrorKind kind_of(const std::string& s) {
  try {
    parse(s);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::undefined;
}

}  // namespace

TEST(Config, DefaultsAreDevice) {
  const auto c = parse("");
  EXPECT_DOUBLE_EQ(c.params.gamma_tot(), device::resonator().gamma_tot());
  EXPECT_EQ(c.grid, device::flux_grid(800.0));
}

TEST(Config, SiUnitsConvertedAtBoundary) {
  const auto c = parse(
      "# device\n"
      "gamma_e = 1.2e9\n"
      "gamma_i = 3.6e8  # intrinsic\n"
      "lambda_nl = 1.4\n"
      "delta_p = -2e8\n"
      "d_int = -1.38e6\n"
      "fsr_m = 5\n"
      "power = 2e-3\n"
      "rep_rate = 1e6\n"
      "duration = 1.2e-9\n"
      "wavelength_pump = 1.55e-6\n"
      "eta_s = 0.1, 0.2\n"
      "eta_i = 0.3\n");
  EXPECT_DOUBLE_EQ(c.params.gamma_e, 1.2e-3);
  EXPECT_DOUBLE_EQ(c.params.gamma_i, 3.6e-4);
  EXPECT_DOUBLE_EQ(c.params.lambda_nl, 1.4e-12);
  EXPECT_DOUBLE_EQ(c.params.delta_p, -2e-4);
  EXPECT_DOUBLE_EQ(c.params.d_int, -1.38e-6);
  EXPECT_EQ(c.params.fsr_count_m, 5);
  EXPECT_DOUBLE_EQ(c.pulse.avg_power, 2e-3);
  EXPECT_DOUBLE_EQ(c.pulse.duration_T, 1200.0);
  EXPECT_DOUBLE_EQ(c.pulse.energy(), 2e-9);
  EXPECT_DOUBLE_EQ(c.pulse.carrier_omega_p, 2.0 * phys::pi * phys::c / 1.55e-6 * 1e-12);
  EXPECT_EQ(c.detection.eta_s, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.detection.eta_i, (std::vector<double>{0.3}));
  EXPECT_EQ(c.grid, device::flux_grid(1200.0));
  EXPECT_EQ(c.entries.at("gamma_i"), "3.6e8");
}

TEST(Config, ExplicitGrid) {
  const auto c = parse("grid.dt = 2e-11\ngrid.n = 40\n");
  EXPECT_EQ(c.grid, (TimeGrid{0.0, 20.0, 40}));
  EXPECT_EQ(parse("grid.dt = 5e-12\n").grid, device::flux_grid(800.0, 5.0));
}

TEST(Config, Errors) {
  EXPECT_EQ(kind_of("bogus = 1\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("gamma_e = fast\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("gamma_e = 1e9x\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("gamma_e\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("gamma_e = -1e9\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("eta_s = 0.7, 0.6\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("grid.n = 0\n"), ErrorKind::config);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), Error);
}

TEST(Config, JsonSnapshot) {
  const auto j = to_json(parse("power = 1e-3\n"));
  EXPECT_DOUBLE_EQ(j["power_w"].get<double>(), 1e-3);
  EXPECT_EQ(j["grid"]["n_points"], device::flux_grid(800.0).n_points);
  EXPECT_EQ(j["eta_s"].size(), 2u);
}
