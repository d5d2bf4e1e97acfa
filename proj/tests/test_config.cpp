#include <gtest/gtest.h>

#include <dfcrystal/config.hpp>

using namespace dfc;

TEST(Config, DefaultsWhenEmpty) {
    const auto c = parse_config_string("# nothing\n\n");
    EXPECT_EQ(c.crystal.ell, 10.0);
    EXPECT_EQ(c.scf.kmax, 2);
    EXPECT_FALSE(c.scf.eps_P.has_value());
    EXPECT_EQ(c.scf.scheme, ExchangeScheme::probe_correction);
}

TEST(Config, AllKeys) {
    const auto c = parse_config_string(R"(
ell = 6.5
z = 1
q = 1   # trailing comment
alpha = 0.01
kmax = 1
kgrid_n = 3
kgrid_shifted = false
eps_P = 4.5
tol_scf = 1e-7
tol_E = 1e-9
max_iter = 12
mixing = 0.5
retract_every = 2
exchange_scheme = omit
anderson = yes
anderson_depth = 3
theta_tol = 1e-8
theta_max_iter = 7
shell_tol = 1e-9
energy_json = out/e.json
iteration_log = out/log.ldjson
checkpoint = out/state.bin
)");
    EXPECT_EQ(c.crystal.ell, 6.5);
    EXPECT_EQ(c.crystal.alpha, 0.01);
    EXPECT_EQ(c.scf.n_per_axis, 3);
    EXPECT_FALSE(c.scf.shifted);
    EXPECT_EQ(*c.scf.eps_P, 4.5);
    EXPECT_EQ(c.scf.max_iter, 12);
    EXPECT_EQ(c.scf.retract_every, 2);
    EXPECT_EQ(c.scf.scheme, ExchangeScheme::omit);
    EXPECT_TRUE(c.scf.anderson);
    EXPECT_EQ(c.scf.anderson_depth, 3);
    EXPECT_EQ(c.scf.theta_max_iter, 7);
    EXPECT_EQ(c.energy_json, "out/e.json");
    EXPECT_EQ(c.checkpoint, "out/state.bin");
}

TEST(Config, AutoPenalty) {
    EXPECT_FALSE(parse_config_string("eps_P = auto\n").scf.eps_P.has_value());
}

TEST(Config, FreeParametersAccepted) {
    const auto c = parse_config_string("z = 0\nalpha = 0\n");
    EXPECT_EQ(c.crystal.z, 0.0);
    EXPECT_EQ(c.crystal.alpha, 0.0);
}

TEST(Config, Errors) {
    for (const char* bad : {"ell = -1\n", "alpha = 1\n", "q = 0\n", "kmax = 1.5\n", "mixing = 2\n", "max_iter = 0\n",
                            "eps_P = -3\n", "nonsense = 1\n", "ell 10\n", "ell = 10\nell = 11\n", "ell = ten\n",
                            "anderson = maybe\n", "exchange_scheme = madelung\n", "kgrid_n = 0\n"})
        EXPECT_THROW(parse_config_string(bad), ConfigError) << bad;
    EXPECT_THROW(load_config("/nonexistent/dfcrystal.conf"), ConfigError);
}
