#include <gtest/gtest.h>

#include "../support.hpp"

using namespace svbr;

namespace {

ImageGrid vertical_step(int h, int w, double left, double right) {
  ImageGrid img(h, w, 3, left);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = w / 2; x < w; ++x) img.at(c, y, x) = right;
  return img;
}

BlurField ramp_field(int h, int w) {
  FieldPatternSpec spec;
  spec.kind = PatternKind::linear_ramp;
  spec.angle_deg = 0.0;
  spec.start_index = 2;
  spec.end_index = 20;
  return generate_blur_field(spec, h, w);
}

}  // namespace

// ---------------------------------------------------------------------------
// Edges

TEST(Edges, ConstantImageHasNone) {
  const Mask m = detect_edges(ImageGrid(32, 32, 3, 0.4));
  for (auto v : m.data) EXPECT_EQ(v, 0);
}

TEST(Edges, VerticalStepGivesOneColumn) {
  const Mask m = detect_edges(vertical_step(24, 32, 0.2, 0.8));
  for (int y = 0; y < 24; ++y) {
    int count = 0;
    for (int x = 0; x < 32; ++x) count += m(y, x);
    EXPECT_EQ(count, 1) << "row " << y;
    EXPECT_TRUE(m(y, 15) || m(y, 16));
  }
  int col = -1;
  for (int x = 0; x < 32; ++x)
    if (m(0, x)) col = x;
  for (int y = 0; y < 24; ++y) EXPECT_EQ(m(y, col), 1);
}

TEST(Edges, DensityOnSceneCrops) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mask m = detect_edges(oracle::toy_scene(64, 64, seed));
    double d = 0;
    for (auto v : m.data) d += v;
    d /= static_cast<double>(m.size());
    EXPECT_GT(d, 0.01) << seed;
    EXPECT_LT(d, 0.30) << seed;
  }
}

TEST(Edges, RejectsBadThresholds) {
  const ImageGrid img(8, 8, 3);
  EXPECT_EQ(oracle::error_code_of([&] { detect_edges(img, 0.2, 0.1); }), ErrorCode::domain);
  EXPECT_EQ(oracle::error_code_of([&] { detect_edges(img, 0.0, 1.5); }), ErrorCode::domain);
}

// ---------------------------------------------------------------------------
// Sparsification

TEST(Sparsify, FullMaskIsDense) {
  const BlurField f = ramp_field(32, 32);
  const SparseBlurMap s = sparsify_at_edges(f, Mask(32, 32, 1));
  EXPECT_EQ(s.known_count(), 1024u);
  EXPECT_TRUE(s.values == f.radii);
}

TEST(Sparsify, EmptyMaskHasNoConstraints) {
  const BlurField f = ramp_field(16, 16);
  const SparseBlurMap s = sparsify_at_edges(f, Mask(16, 16, 0));
  EXPECT_EQ(s.known_count(), 0u);
  const ImageGrid img = oracle::random_image(16, 16, 3, 1);
  EXPECT_EQ(oracle::error_code_of([&] { propagate_matting(s, img); }), ErrorCode::no_constraints);
  EXPECT_EQ(oracle::error_code_of([&] { propagate_dt(s, img); }), ErrorCode::no_constraints);
}

TEST(Sparsify, Checkerboard) {
  const BlurField f = ramp_field(16, 16);
  Mask m(16, 16, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) m(y, x) = (x + y) % 2 == 0;
  const SparseBlurMap s = sparsify_at_edges(f, m);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if ((x + y) % 2 == 0) {
        EXPECT_EQ(s.values(y, x), f(y, x));
      }
  EXPECT_EQ(oracle::error_code_of([&] { sparsify_at_edges(f, Mask(16, 15)); }), ErrorCode::shape_mismatch);
}

// ---------------------------------------------------------------------------
// Matting Laplacian

TEST(MattingLaplacian, MatchesDenseOracle) {
  const ImageGrid img = oracle::random_image(7, 8, 3, 2);
  MattingConfig cfg;
  cfg.epsilon = 1e-3;
  const Eigen::MatrixXd L(matting_laplacian(img, cfg));
  const Eigen::MatrixXd oracle = oracle::dense_laplacian(img, 1e-3);
  EXPECT_LE((L - oracle).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
}

TEST(MattingLaplacian, ZeroRowSumsAndSymmetry) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ImageGrid img = oracle::random_image(8, 8, 3, seed);
    const SparseMatrix L = matting_laplacian(img);
    const Eigen::MatrixXd D(L);
    const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    EXPECT_LE((D * Eigen::VectorXd::Ones(64)).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_LE((D - D.transpose()).cwiseAbs().maxCoeff(), 1e-12 * scale);
  }
}

TEST(MattingLaplacian, ConstantColorIsUniformWindowLaplacian) {
  // Zero covariance: every window contributes δ_ij − 1/9 to each pair it holds.
  const ImageGrid img(5, 5, 3, 0.6);
  const Eigen::MatrixXd L(matting_laplacian(img));
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) {
      int windows = 0;
      for (int cy = 1; cy <= 3; ++cy)
        for (int cx = 1; cx <= 3; ++cx) {
          auto in = [&](int p) { return std::abs(p / 5 - cy) <= 1 && std::abs(p % 5 - cx) <= 1; };
          windows += in(i) && in(j);
        }
      EXPECT_NEAR(L(i, j), windows * ((i == j ? 1.0 : 0.0) - 1.0 / 9.0), 1e-12);
    }
}

TEST(MattingLaplacian, PositiveSemidefiniteProbes) {
  const ImageGrid img = oracle::random_image(8, 8, 3, 3);
  const SparseMatrix L = matting_laplacian(img);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(64);
    for (long i = 0; i < 64; ++i) x[i] = n01(rng);
    EXPECT_GE(x.dot(L * x), -1e-8);
  }
}

TEST(MattingLaplacian, NeedsThreeChannels) {
  EXPECT_EQ(oracle::error_code_of([] { matting_laplacian(ImageGrid(8, 8, 1)); }), ErrorCode::domain);
}

// ---------------------------------------------------------------------------
// Conjugate gradient and matting propagation

TEST(ConjugateGradient, ResidualNonincreasingAndExactWithinN) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageGrid img = oracle::random_image(8, 8, 3, 100 + seed);
    const SparseBlurMap s = oracle::random_sparse(8, 8, 200 + seed);
    MattingConfig cfg;
    const MattingSystem sys = matting_system(s, img, cfg);
    const CgResult r = conjugate_gradient(sys.matrix, sys.rhs, 1e-10, 64);
    EXPECT_TRUE(r.converged) << "seed " << seed << " residual " << r.relative_residual;
    EXPECT_LE(r.iterations, 64);
    for (std::size_t k = 1; k < r.residual_history.size(); ++k)
      EXPECT_LE(r.residual_history[k], r.residual_history[k - 1] * (1 + 1e-12))
          << "seed " << seed << " iteration " << k;
  }
}

TEST(ConjugateGradient, ZeroRightHandSide) {
  SparseMatrix a(3, 3);
  a.setIdentity();
  const CgResult r = conjugate_gradient(a, Eigen::VectorXd::Zero(3), 1e-8, 10);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(PropagateMatting, MatchesDenseDirectSolve) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageGrid img = oracle::random_image(8, 8, 3, 300 + seed);
    const SparseBlurMap s = oracle::random_sparse(8, 8, 400 + seed);
    MattingConfig cfg;
    cfg.cg_tol = 1e-13;
    cfg.cg_max_iters = 5000;
    Eigen::MatrixXd A = oracle::dense_laplacian(img, cfg.epsilon);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(64);
    for (int i = 0; i < 64; ++i)
      if (s.mask.data[static_cast<std::size_t>(i)]) {
        A(i, i) += cfg.lambda;
        b[i] = cfg.lambda * s.values.data[static_cast<std::size_t>(i)];
      }
    const Eigen::VectorXd x = A.ldlt().solve(b);
    const PropagationResult r = propagate_matting(s, img, cfg);
    for (int i = 0; i < 64; ++i)
      EXPECT_NEAR(r.field.radii.data[static_cast<std::size_t>(i)], std::clamp(x[i], 0.0, 6.0), 1e-5)
          << "seed " << seed << " pixel " << i;
  }
}

TEST(PropagateMatting, ConstantSeedsGiveConstant) {
  const ImageGrid img = oracle::toy_scene(32, 32, 5);
  SparseBlurMap s = oracle::random_sparse(32, 32, 6, 0.1);
  for (double& v : s.values.data) v = 2.75;
  const PropagationResult r = propagate_matting(s, img);
  EXPECT_TRUE(r.converged);
  for (double v : r.field.radii.data) EXPECT_NEAR(v, 2.75, 1e-4);
}

TEST(PropagateMatting, RespectsColorRegions) {
  ImageGrid img(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool left = x < 8;
      img.at(0, y, x) = left ? 0.9 : 0.1;
      img.at(1, y, x) = 0.2;
      img.at(2, y, x) = left ? 0.1 : 0.9;
    }
  SparseBlurMap s{Grid<double>(16, 16, 0.0), Mask(16, 16, 0)};
  s.mask(8, 3) = 1;
  s.values(8, 3) = 1.0;
  s.mask(8, 12) = 1;
  s.values(8, 12) = 5.0;
  const PropagationResult r = propagate_matting(s, img);
  double worst_left = 0, worst_right = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      if (x < 8) worst_left = std::max(worst_left, std::abs(r.field(y, x) - 1.0));
      else worst_right = std::max(worst_right, std::abs(r.field(y, x) - 5.0));
    }
  EXPECT_LT(worst_left, 0.1);
  EXPECT_LT(worst_right, 0.1);
}

// ---------------------------------------------------------------------------
// Domain transform

TEST(DomainTransform, ConstantGuideUnitSlope) {
  const DomainTransforms dt = domain_transform(ImageGrid(9, 13, 3, 0.5));
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 13; ++x) {
      EXPECT_DOUBLE_EQ(dt.horizontal(y, x), x);
      EXPECT_DOUBLE_EQ(dt.vertical(y, x), y);
    }
}

TEST(DomainTransform, UnitStepJump) {
  ImageGrid g(4, 10, 1, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 5; x < 10; ++x) g.at(0, y, x) = 1.0;
  DtConfig cfg;
  const DomainTransforms dt = domain_transform(g, cfg);
  for (int y = 0; y < 4; ++y) {
    EXPECT_NEAR(dt.horizontal(y, 5) - dt.horizontal(y, 4), 1.0 + cfg.sigma_s / cfg.sigma_r, 1e-12);
    EXPECT_NEAR(dt.horizontal(y, 9) - dt.horizontal(y, 5), 4.0, 1e-12);
  }
}

TEST(DomainTransform, StrictlyIncreasingOnRandomGuides) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DomainTransforms dt = domain_transform(oracle::random_image(20, 30, 3, seed));
    for (int y = 0; y < 20; ++y)
      for (int x = 1; x < 30; ++x) ASSERT_GT(dt.horizontal(y, x), dt.horizontal(y, x - 1));
    for (int x = 0; x < 30; ++x)
      for (int y = 1; y < 20; ++y) ASSERT_GT(dt.vertical(y, x), dt.vertical(y - 1, x));
  }
}

TEST(DomainTransform, FeedbackSchedule) {
  DtConfig cfg;
  const double s0 = cfg.sigma_s * std::sqrt(3.0) * 4.0 / std::sqrt(63.0);
  EXPECT_NEAR(dt_feedback(cfg, 0), std::exp(-std::sqrt(2.0) / s0), 1e-15);
  EXPECT_NEAR(dt_feedback(cfg, 2), std::exp(-std::sqrt(2.0) / (s0 / 4)), 1e-15);
  cfg.iterations = 1;
  EXPECT_NEAR(dt_feedback(cfg, 0), std::exp(-std::sqrt(2.0) / cfg.sigma_s), 1e-15);
}

TEST(DomainTransform, SingleSeedMatchesClosedFormRecursion) {
  const int n = 40, s = 13;
  Grid<double> g(3, n, 0.0);
  g(1, s) = 1.0;
  const DomainTransforms dt = domain_transform(ImageGrid(3, n, 3, 0.3));
  const double a = 0.83;
  dt_horizontal_pass(g, dt, a);
  // Causal pass: y_j = (1-a) a^(j-s) for j >= s. Anti-causal pass expanded:
  // z_i = Σ_{j=i}^{n-2} (1-a) a^(j-i) y_j + a^(n-1-i) y_{n-1}.
  std::vector<double> y(n, 0.0);
  for (int j = s; j < n; ++j) y[static_cast<std::size_t>(j)] = (1 - a) * std::pow(a, j - s);
  for (int i = 0; i < n; ++i) {
    double z = std::pow(a, n - 1 - i) * y[n - 1];
    for (int j = i; j <= n - 2; ++j) z += (1 - a) * std::pow(a, j - i) * y[static_cast<std::size_t>(j)];
    EXPECT_NEAR(g(1, i), z, 1e-6) << i;
    EXPECT_EQ(g(0, i), 0.0);
  }
  for (int i = 1; i <= s; ++i) EXPECT_NEAR(g(1, i - 1) / g(1, i), a, 1e-9);
}

TEST(DomainTransform, DegeneratesToPlainSmoothing) {
  const ImageGrid guide = oracle::random_image(16, 20, 3, 7);
  const ImageGrid flat(16, 20, 3, 0.5);
  Grid<double> values(16, 20);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  for (double& v : values.data) v = u(rng);
  DtConfig cfg{60.0, 1e9, 3};
  const Grid<double> a = dt_filter(values, domain_transform(guide, cfg), cfg);
  const Grid<double> b = dt_filter(values, domain_transform(flat, cfg), cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-6);
}

TEST(PropagateDt, ConstantValuesStayConstant) {
  const ImageGrid img = oracle::toy_scene(48, 40, 9);
  for (double density : {0.02, 0.3}) {
    SparseBlurMap s = oracle::random_sparse(48, 40, 10, density);
    for (double& v : s.values.data) v = 4.25;
    const PropagationResult r = propagate_dt(s, img);
    for (double v : r.field.radii.data) EXPECT_NEAR(v, 4.25, 1e-4);
  }
}

TEST(PropagateDt, EdgeSharpensTransition) {
  auto max_gradient = [](const BlurField& f) {
    double g = 0;
    for (int y = 0; y < f.height(); ++y)
      for (int x = 1; x < f.width(); ++x) g = std::max(g, std::abs(f(y, x) - f(y, x - 1)));
    return g;
  };
  SparseBlurMap s{Grid<double>(16, 32, 0.0), Mask(16, 32, 0)};
  for (int y = 0; y < 16; ++y) {
    s.mask(y, 4) = 1;
    s.values(y, 4) = 1.0;
    s.mask(y, 27) = 1;
    s.values(y, 27) = 5.0;
  }
  const BlurField edge = propagate_dt(s, vertical_step(16, 32, 0.1, 0.9)).field;
  const BlurField flat = propagate_dt(s, ImageGrid(16, 32, 3, 0.5)).field;
  EXPECT_GT(max_gradient(edge), max_gradient(flat));
}

TEST(PropagateDt, FarFromSeedsFallsBackToNearest) {
  // A huge domain-transform distance stops the filter from reaching across.
  ImageGrid img(8, 8, 3, 0.0);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) img.at(c, y, x) = (x + y) % 2;
  SparseBlurMap s{Grid<double>(8, 8, 0.0), Mask(8, 8, 0)};
  s.mask(0, 0) = 1;
  s.values(0, 0) = 3.0;
  const PropagationResult r = propagate_dt(s, img, DtConfig{60, 1e-4, 3});
  for (double v : r.field.radii.data) EXPECT_NEAR(v, 3.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Both propagations at the known pixels and the full pipeline

TEST(Propagation, MattingStaysCloseToKnownValues) {
  const auto bank = default_pattern_bank();
  for (std::size_t p : {3u, 12u, 30u}) {
    const ImageGrid img = oracle::toy_scene(48, 48, p);
    const BlurField f = generate_blur_field(bank[p], 48, 48);
    const SparseBlurMap s = sparsify_at_edges(f, detect_edges(img));
    const BlurField m = propagate_matting(s, img).field;
    double wm = 0;
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      if (s.mask.data[i]) {
        wm = std::max(wm, std::abs(m.radii.data[i] - s.values.data[i]));
      }
    EXPECT_LE(wm, 0.25) << "pattern " << p;
  }
}

TEST(Propagation, DtStaysWithinKnownRange) {
  // Normalized filtering yields convex combinations of the known values.
  const auto bank = default_pattern_bank();
  for (std::size_t p : {3u, 12u, 30u}) {
    const ImageGrid img = oracle::toy_scene(48, 48, p);
    const SparseBlurMap s = sparsify_at_edges(generate_blur_field(bank[p], 48, 48), detect_edges(img));
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      if (s.mask.data[i]) {
        lo = std::min(lo, s.values.data[i]);
        hi = std::max(hi, s.values.data[i]);
      }
    for (double v : propagate_dt(s, img).field.radii.data) {
      EXPECT_GE(v, lo - 1e-9);
      EXPECT_LE(v, hi + 1e-9);
    }
  }
}

TEST(AugmentedVariants, ConstantFieldStaysConstant) {
  const ImageGrid img = oracle::toy_scene(32, 32, 11);
  const AugmentedVariants v = make_augmented_variants(BlurField(32, 32, 3.5), img);
  for (double r : v.matting.radii.data) EXPECT_NEAR(r, 3.5, 1e-4);
  for (double r : v.dt.radii.data) EXPECT_NEAR(r, 3.5, 1e-4);
}

TEST(AugmentedVariants, RampFieldErrorBand) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ImageGrid img = oracle::toy_scene(64, 64, seed);
    const BlurField f = ramp_field(64, 64);
    const AugmentedVariants v = make_augmented_variants(f, img);
    const double em = mae_blur(v.matting, f), ed = mae_blur(v.dt, f);
    EXPECT_GT(em, 0.0);
    EXPECT_LT(em, 1.5);
    EXPECT_GT(ed, 0.0);
    EXPECT_LT(ed, 1.5);
    EXPECT_GT(mae_blur(v.matting, v.dt), 0.0);
  }
}
