#include <gtest/gtest.h>

#include <cmath>

#include "attackdet/model.hpp"
#include "attackdet/random.hpp"
#include "attackdet/sim.hpp"

using namespace attackdet;

namespace {

// The model-module scalar example: n = m = m_i = r = 1.
PlantModel scalar_plant() { return PlantModel(Matrix{{-1}}, Matrix{{1}}, Vector{0}); }
NodeSensor scalar_sensor() { return NodeSensor(Matrix{{1}}, Matrix{{0}}, Matrix{{1}}); }

}  // namespace

TEST(Plant, Validation) {
  EXPECT_NO_THROW(PlantModel(Matrix{{1, 0}, {0, 2}}, Matrix{{1}, {0}}, Vector{0, 0}));  // unstable A allowed
  EXPECT_THROW(PlantModel(Matrix{{1, 0}}, Matrix{{1}}, Vector{}), DimensionError);
  EXPECT_THROW(PlantModel(Matrix{{1}}, Matrix{{1}, {2}}, Vector{}), DimensionError);
  EXPECT_THROW(PlantModel(Matrix{{1}}, Matrix{{1}}, Vector{1, 2}), DimensionError);
  EXPECT_EQ(PlantModel(Matrix{{1}}, Matrix{{1}}, Vector{}).x0.size(), 1u);
}

TEST(Sensor, E2MustBePositiveDefinite) {
  EXPECT_NO_THROW(scalar_sensor());
  try {
    NodeSensor(Matrix{{1}}, Matrix{{0}}, Matrix{{0}});
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("E_2i not positive definite"), std::string::npos);
  }
  // r = 2 with a single noise channel: E = d d' is rank one.
  EXPECT_THROW(NodeSensor(Matrix{{1, 0}, {0, 1}}, Matrix{{0}, {0}}, Matrix{{1}, {1}}), ModelError);
  EXPECT_THROW(NodeSensor(Matrix{{1}}, Matrix{{0}, {0}}, Matrix{{1}}), DimensionError);
  EXPECT_DOUBLE_EQ(scalar_sensor().E2()(0, 0), 1.0);
}

TEST(Tracker, LowpassExamples) {
  const TrackerModel t1 = lowpass_tracker(1, 0.5);
  EXPECT_EQ(t1.Omega, (Matrix{{0, 1}, {0, -1}}));
  EXPECT_EQ(t1.Gamma, (Matrix{{0}, {-1}}));
  EXPECT_EQ(t1.order(), 2u);
  const auto ev = eigenvalues(t1.Omega);
  std::vector<double> re{ev[0].real(), ev[1].real()};
  std::sort(re.begin(), re.end());
  EXPECT_NEAR(re[0], -1.0, 1e-14);
  EXPECT_NEAR(re[1], 0.0, 1e-14);

  const TrackerModel t2 = lowpass_tracker(2, 1.0);
  EXPECT_EQ(t2.order(), 4u);
  EXPECT_EQ(t2.Omega.block(2, 2, 2, 2), Matrix::identity(2) * -2.0);
  EXPECT_EQ(t2.Omega.block(0, 2, 2, 2), Matrix::identity(2));
  EXPECT_THROW(lowpass_tracker(1, 0.0), ModelError);
  EXPECT_THROW(lowpass_tracker(1, -1.0), ModelError);
}

TEST(Tracker, ExplicitValidation) {
  EXPECT_THROW(TrackerModel(Matrix{{0}}, Matrix{{1, 0}}), DimensionError);  // n_omega < n
  EXPECT_THROW(TrackerModel(Matrix(2, 3), Matrix(2, 1)), DimensionError);
  EXPECT_NO_THROW(TrackerModel(Matrix{{0}}, Matrix{{-1}}));  // zero eigenvalue allowed
}

TEST(Tracker, LoopTracksConstantInput) {
  // omega' = Omega omega + Gamma ([I 0] omega - f): eta -> f.
  for (double eps : {0.25, 0.5, 2.0}) {
    const TrackerModel tr = lowpass_tracker(2, eps);
    const Vector f{1.0, -0.5};
    auto field = [&](double, std::span<const double> w, std::span<double> dw) {
      Vector nu{w[0] - f[0], w[1] - f[1]};
      Vector d = tr.Omega.apply(w) + tr.Gamma.apply(nu);
      std::copy(d.begin(), d.end(), dw.begin());
    };
    Vector w(4, 0.0);
    Rk4 rk(4);
    // Slowest loop pole of s^2 + 2 eps s + 1.
    const double slow = eps < 1.0 ? eps : eps - std::sqrt(eps * eps - 1.0);
    const double T = 20.0 / slow, h = 0.01;
    for (double t = 0.0; t < T - 1e-12; t += h) rk.step(field, t, h, w);
    EXPECT_LT(std::hypot(w[0] - f[0], w[1] - f[1]), 0.01 * norm(f)) << "eps=" << eps;
  }
}

TEST(Attack, Values) {
  AttackSignal none;
  EXPECT_EQ(attack_value(none, 3.0, 2), (Vector{0, 0}));

  AttackSignal bias{AttackKind::constant_bias, {1.0}, 2.0};
  EXPECT_EQ(attack_value(bias, 1.0, 1), (Vector{0.0}));
  EXPECT_EQ(attack_value(bias, 5.0, 1), (Vector{1.0}));
  EXPECT_EQ(attack_value(bias, 2.0, 1), (Vector{1.0}));

  AttackSignal tr{AttackKind::lowpass_transient, {1.0}, 0.5, 0.0, 1.0};
  EXPECT_NEAR(attack_value(tr, 1.5, 1)[0], 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(attack_value(tr, 1.5, 1)[0], 0.632121, 1e-6);
  EXPECT_EQ(attack_value(tr, 0.1, 1)[0], 0.0);

  AttackSignal pulse{AttackKind::l2_pulse, {2.0}, 1.0, 3.0};
  EXPECT_EQ(attack_value(pulse, 0.5, 1)[0], 0.0);
  EXPECT_EQ(attack_value(pulse, 1.0, 1)[0], 2.0);
  EXPECT_EQ(attack_value(pulse, 2.9, 1)[0], 2.0);
  EXPECT_EQ(attack_value(pulse, 3.0, 1)[0], 0.0);

  EXPECT_THROW(attack_value(bias, 5.0, 2), DimensionError);
}

TEST(Attack, Classification) {
  EXPECT_TRUE((AttackSignal{AttackKind::constant_bias, {1.0}}).has_finite_limit());
  EXPECT_TRUE((AttackSignal{AttackKind::lowpass_transient, {1.0}}).has_finite_limit());
  EXPECT_FALSE((AttackSignal{AttackKind::l2_pulse, {1.0}}).has_finite_limit());
  EXPECT_EQ((AttackSignal{AttackKind::l2_pulse, {1.0}, 1.0, 2.0}).discontinuities(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ((AttackSignal{AttackKind::l2_pulse, {3.0}}).limit(1), (Vector{0.0}));
  EXPECT_EQ(attack_kind_from_string("l2_pulse"), AttackKind::l2_pulse);
  EXPECT_EQ(to_string(AttackKind::lowpass_transient), "lowpass_transient");
  EXPECT_THROW(attack_kind_from_string("ramp"), ConfigError);
}

TEST(Attack, PulseEnergyConverges) {
  AttackSignal pulse{AttackKind::l2_pulse, {1.0, -0.5}, 5.0, 15.0};
  const double expected = (1.0 + 0.25) * 10.0;
  double prev = -1.0;
  for (double T : {20.0, 40.0, 80.0}) {
    double e = 0.0;
    const double h = 1e-3;
    for (double t = 0.5 * h; t < T; t += h) {
      const Vector f = attack_value(pulse, t, 2);
      e += h * dot(f, f);
    }
    EXPECT_NEAR(e, expected, 1e-6);
    if (prev >= 0.0) EXPECT_NEAR(e, prev, 1e-9);
    prev = e;
  }
}

TEST(Augment, ScalarExample) {
  const AugmentedNode nd =
      augment(scalar_plant(), scalar_sensor(), lowpass_tracker(1, 0.5), Matrix::identity(2), Matrix::identity(1));
  EXPECT_EQ(nd.A_mu, (Matrix{{-1, -1, 0}, {0, 0, 1}, {0, 0, -1}}));
  EXPECT_EQ(nd.E2, (Matrix{{1}}));
  EXPECT_EQ(nd.H_mu, (Matrix{{1, 0, 0}}));
  EXPECT_EQ(nd.B1_mu, (Matrix{{1}, {0}, {-1}}));
  EXPECT_EQ(nd.B2_mu, (Matrix{{-1, 0}, {0, 0}, {0, 0}}));
  EXPECT_EQ(nd.C2_mu, (Matrix{{1, 0, 0}}));
  EXPECT_EQ(nd.D2_mu, (Matrix{{0, 1}}));
  EXPECT_EQ(nd.Q_mu, Matrix::identity(3));
}

TEST(Augment, WeightValidation) {
  const auto p = scalar_plant();
  const auto s = scalar_sensor();
  const auto t = lowpass_tracker(1, 0.5);
  EXPECT_THROW(augment(p, s, t, Matrix(2, 2), Matrix::identity(1)), ModelError);       // Q not > 0
  EXPECT_NO_THROW(augment(p, s, t, Matrix::identity(2), Matrix(1, 1)));                // Qbar = 0 allowed
  EXPECT_THROW(augment(p, s, t, Matrix::identity(2), Matrix{{-1}}), ModelError);       // Qbar < 0
  EXPECT_THROW(augment(p, s, t, Matrix::identity(3), Matrix::identity(1)), DimensionError);  // wrong size
  EXPECT_THROW(augment(p, s, lowpass_tracker(2, 0.5), Matrix::identity(4), Matrix::identity(1)), DimensionError);
}

TEST(Augment, DimensionClosedOnRandomDims) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    const std::size_t mi = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    const std::size_t r = 1 + static_cast<std::size_t>(rng.uniform() * std::min<double>(4, mi));
    Matrix A(n, n), B2(n, m), C(r, n), D(r, m), Db(r, mi);
    for (auto* M : {&A, &B2, &C, &D})
      for (double& v : M->data()) v = rng.normal();
    for (std::size_t k = 0; k < r; ++k) Db(k, k) = 1.0;  // full row rank
    const PlantModel p(A, B2, Vector(n, 0.0));
    const NodeSensor s(C, D, Db);
    const AugmentedNode nd = augment(p, s, lowpass_tracker(n, 0.5), Matrix::identity(2 * n), Matrix::identity(n));
    const std::size_t d = 3 * n;
    EXPECT_EQ(nd.A_mu.shape(), Matrix(d, d).shape());
    EXPECT_EQ(nd.B1_mu.shape(), Matrix(d, n).shape());
    EXPECT_EQ(nd.B2_mu.shape(), Matrix(d, m + mi).shape());
    EXPECT_EQ(nd.C2_mu.shape(), Matrix(r, d).shape());
    EXPECT_EQ(nd.D2_mu.shape(), Matrix(r, m + mi).shape());
    EXPECT_EQ(nd.H_mu.shape(), Matrix(n, d).shape());
    EXPECT_EQ(nd.Q_mu.shape(), Matrix(d, d).shape());
    EXPECT_LE((nd.E2_inv * nd.E2 - Matrix::identity(r)).max_abs(), 1e-9);
  }
}

TEST(Augment, BaselineHasNoTrackerBlock) {
  const AugmentedNode nd = augment_baseline(scalar_plant(), scalar_sensor(), Matrix::identity(1));
  EXPECT_TRUE(nd.baseline());
  EXPECT_EQ(nd.dim(), 1u);
  EXPECT_EQ(nd.nu_dim(), 0u);
  EXPECT_EQ(nd.A_mu, (Matrix{{-1}}));
  EXPECT_EQ(nd.H_mu, Matrix::identity(1));
}

TEST(Residual, Outputs) {
  const DirectedGraph g(3, {{1, 0}, {2, 0}});
  const NodeSensor s(Matrix{{1, 0}}, Matrix{{0}}, Matrix{{1}});
  std::vector<Vector> est{{1.0, 1.0}, {2.0, 1.0}, {1.0, 2.0}};
  const Vector y{1.0};  // = C xhat_0
  const auto out = residual_outputs(est, y, s, g, 0);
  EXPECT_EQ(out.zeta, (Vector{0.0}));
  EXPECT_EQ(out.zeta_bar, (Vector{1.0, 1.0}));

  std::vector<Vector> same{{3.0, 4.0}, {3.0, 4.0}, {3.0, 4.0}};
  EXPECT_EQ(residual_outputs(same, Vector{0.0}, s, g, 0).zeta_bar, (Vector{0.0, 0.0}));

  std::vector<Vector> missing{{1.0, 1.0}, {}, {1.0, 2.0}};
  EXPECT_THROW(residual_outputs(missing, y, s, g, 0), DimensionError);
  std::vector<Vector> short_list{{1.0, 1.0}};
  EXPECT_THROW(residual_outputs(short_list, y, s, g, 0), DimensionError);
}
