#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "geomreid/projection.hpp"
#include "geomreid/saliency.hpp"
#include "geomreid/synth.hpp"

using namespace geomreid;

namespace {

std::vector<ProjectedImages> small_sequence(GenTag tag, int frames = 4, std::uint64_t seed = 3,
                                            int id = 1) {
  const IdentityParams p = sample_identity(70, id);
  const PersonSequence s = generate_sequence(p, {tag, 0.004}, frames, 30.0, seed);
  return render_sequence(s, 64, 64);
}

// Test pipeline: descriptor = flattened rgb pixels of frame 0.
class FlattenExtractor final : public DifferentiableExtractor {
 public:
  explicit FlattenExtractor(Eigen::Index h, Eigen::Index w) : h_(h), w_(w) {}
  DescriptorKind kind() const override { return DescriptorKind::appearance; }
  Eigen::Index dim() const override { return h_ * w_ * 3; }

  Eigen::VectorXd extract(std::span<const ProjectedImages> seq) const override {
    Eigen::VectorXd out(dim());
    Eigen::Index j = 0;
    for (Eigen::Index r = 0; r < h_; ++r)
      for (Eigen::Index c = 0; c < w_; ++c)
        for (int ch = 0; ch < 3; ++ch) out(j++) = seq[0].color[static_cast<std::size_t>(ch)](r, c);
    return out;
  }

  std::vector<PixelGradients> backprop(std::span<const ProjectedImages> seq,
                                       const Eigen::VectorXd& d) const override {
    std::vector<PixelGradients> out(seq.size());
    for (std::size_t f = 0; f < seq.size(); ++f) {
      out[f].depth = Eigen::MatrixXd::Zero(h_, w_);
      out[f].r = Eigen::MatrixXd::Zero(h_, w_);
      out[f].g = Eigen::MatrixXd::Zero(h_, w_);
      out[f].b = Eigen::MatrixXd::Zero(h_, w_);
    }
    Eigen::Index j = 0;
    for (Eigen::Index r = 0; r < h_; ++r)
      for (Eigen::Index c = 0; c < w_; ++c) {
        out[0].r(r, c) = d(j++);
        out[0].g(r, c) = d(j++);
        out[0].b(r, c) = d(j++);
      }
    return out;
  }

 private:
  Eigen::Index h_, w_;
};

}  // namespace

TEST_SUITE("saliency") {

TEST_CASE("soft hue weights: sum to one and match finite differences") {
  const double tau = 0.05;
  CounterRng rng(81);
  for (int trial = 0; trial < 30; ++trial) {
    // stay away from channel ties and the gray singularity
    double r = rng.uniform(0.1, 0.9), g = rng.uniform(0.1, 0.9), b = rng.uniform(0.1, 0.9);
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    if (mx - mn < 0.05) continue;
    bool tie = false;
    for (double u : {r, g, b})
      for (double v : {r, g, b})
        if (u != v && std::abs(u - v) < 1e-3) tie = true;
    if (tie) continue;

    const Eigen::VectorXd w = soft_hue_weights(r, g, b, tau);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.minCoeff() >= 0.0);

    const auto grad = soft_hue_weights_grad(r, g, b, tau);
    const double eps = 1e-7;
    const Eigen::VectorXd wr_p = soft_hue_weights(r + eps, g, b, tau);
    const Eigen::VectorXd wr_m = soft_hue_weights(r - eps, g, b, tau);
    const Eigen::VectorXd wg_p = soft_hue_weights(r, g + eps, b, tau);
    const Eigen::VectorXd wg_m = soft_hue_weights(r, g - eps, b, tau);
    const Eigen::VectorXd wb_p = soft_hue_weights(r, g, b + eps, tau);
    const Eigen::VectorXd wb_m = soft_hue_weights(r, g, b - eps, tau);
    for (int k = 0; k < kHueBins; ++k) {
      CHECK(grad(k, 0) == doctest::Approx((wr_p(k) - wr_m(k)) / (2 * eps)).epsilon(1e-4));
      CHECK(grad(k, 1) == doctest::Approx((wg_p(k) - wg_m(k)) / (2 * eps)).epsilon(1e-4));
      CHECK(grad(k, 2) == doctest::Approx((wb_p(k) - wb_m(k)) / (2 * eps)).epsilon(1e-4));
    }
  }
}

TEST_CASE("appearance backprop matches finite differences end-to-end") {
  auto imgs = small_sequence(GenTag::confounded, 2);
  const AppearanceConfig cfg{HistogramBinning::soft, 0.05, 0.05};
  const auto ex = make_appearance_extractor(cfg);

  // upstream = alternating signs; directional derivative along one pixel's red
  Eigen::VectorXd up(kAppearanceDim);
  for (int k = 0; k < kAppearanceDim; ++k) up(k) = k % 2 == 0 ? 0.7 : -0.4;
  const auto grads = ex->backprop(imgs, up);

  int checked = 0;
  for (Eigen::Index r = 0; r < 64 && checked < 6; r += 7)
    for (Eigen::Index c = 0; c < 64 && checked < 6; c += 5) {
      if (!imgs[0].valid(r, c)) continue;
      const double eps = 1e-6;
      auto perturbed = imgs;
      perturbed[0].color[0](r, c) += eps;
      const Eigen::VectorXd dp = appearance_descriptor(perturbed, cfg).values;
      perturbed[0].color[0](r, c) -= 2 * eps;
      const Eigen::VectorXd dm = appearance_descriptor(perturbed, cfg).values;
      const double numeric = up.dot((dp - dm) / (2 * eps));
      CHECK(grads[0].r(r, c) == doctest::Approx(numeric).epsilon(3e-4));
      ++checked;
    }
  CHECK(checked > 0);
}

TEST_CASE("hard-binned appearance path refuses a gradient pipeline") {
  try {
    make_appearance_extractor({HistogramBinning::hard, 0.05, 0.05});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_differentiable_path);
  }
}

TEST_CASE("constant objective yields the flagged all-zero map") {
  auto imgs = small_sequence(GenTag::confounded, 2);
  const auto ex = make_appearance_extractor({HistogramBinning::soft, 0.05, 0.05});
  const EmbeddingModel model = make_normalizer_model(kAppearanceDim);
  LogitObjective obj{Eigen::MatrixXd::Zero(2, kAppearanceDim), 0};
  const SaliencyMap map = input_gradient_saliency(*ex, model, imgs, SaliencyObjective{obj});
  CHECK(map.all_zero);
  CHECK(map.weights.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear pipeline: map proportional to |w| through the normalizer") {
  auto imgs = small_sequence(GenTag::confounded, 1);
  const FlattenExtractor ex(64, 64);
  const EmbeddingModel model = make_normalizer_model(ex.dim());

  CounterRng rng(91);
  Eigen::MatrixXd head(1, ex.dim());
  for (Eigen::Index k = 0; k < ex.dim(); ++k) head(0, k) = rng.normal();

  const SaliencyMap map =
      input_gradient_saliency(ex, model, imgs, SaliencyObjective{LogitObjective{head, 0}});

  // closed form: d(w.e)/dx = (w - e (e.w)) / ||x||; summed |.| per pixel
  const Eigen::VectorXd x = ex.extract(imgs);
  const Eigen::VectorXd e = x / x.norm();
  const Eigen::VectorXd w = head.row(0).transpose();
  const Eigen::VectorXd dx = (w - e * e.dot(w)) / x.norm();
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(64, 64);
  Eigen::Index j = 0;
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 64; ++c) {
      expect(r, c) = std::abs(dx(j)) + std::abs(dx(j + 1)) + std::abs(dx(j + 2));
      j += 3;
    }
  expect /= expect.sum();
  CHECK((map.weights - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pure linear extractor gradient is exactly |w|") {
  auto imgs = small_sequence(GenTag::confounded, 1);
  const FlattenExtractor ex(64, 64);
  CounterRng rng(92);
  Eigen::VectorXd w(ex.dim());
  for (Eigen::Index k = 0; k < ex.dim(); ++k) w(k) = rng.normal();
  const auto grads = ex.backprop(imgs, w);
  Eigen::Index j = 0;
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 64; ++c) {
      CHECK(grads[0].r(r, c) == w(j));
      CHECK(grads[0].g(r, c) == w(j + 1));
      CHECK(grads[0].b(r, c) == w(j + 2));
      j += 3;
    }
}

TEST_CASE("saliency is deterministic and scale-invariant in the objective") {
  auto imgs = small_sequence(GenTag::confounded, 3);
  const auto ex = make_appearance_extractor({HistogramBinning::soft, 0.05, 0.05});
  const EmbeddingModel model = make_normalizer_model(kAppearanceDim);
  CounterRng rng(93);
  Eigen::MatrixXd head(2, kAppearanceDim);
  for (Eigen::Index i = 0; i < head.size(); ++i) head.data()[i] = rng.normal();

  const SaliencyMap a = input_gradient_saliency(*ex, model, imgs, SaliencyObjective{LogitObjective{head, 0}});
  const SaliencyMap b = input_gradient_saliency(*ex, model, imgs, SaliencyObjective{LogitObjective{head, 0}});
  CHECK(a.weights == b.weights);

  const SaliencyMap c = input_gradient_saliency(
      *ex, model, imgs, SaliencyObjective{LogitObjective{(7.5 * head).eval(), 0}});
  CHECK((a.weights - c.weights).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(a.weights.minCoeff() >= 0.0);
}

TEST_CASE("geometric pipeline map is invariant to uniform recoloring") {
  auto imgs = small_sequence(GenTag::confounded, 3);
  const auto ex = make_geometric_extractor(30.0);
  const EmbeddingModel model = make_model(kGeometricDim, {16}, 8, 5);
  CounterRng rng(94);
  Eigen::VectorXd ref(8);
  for (int k = 0; k < 8; ++k) ref(k) = rng.normal();
  const SaliencyMap a = input_gradient_saliency(*ex, model, imgs, SaliencyObjective{MatchObjective{ref}});

  auto recolored = imgs;
  for (auto& img : recolored)
    for (auto& ch : img.color) ch.setConstant(0.123);
  const SaliencyMap b =
      input_gradient_saliency(*ex, model, recolored, SaliencyObjective{MatchObjective{ref}});
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("region_attribution: uniform map reproduces area shares") {
  auto imgs = small_sequence(GenTag::standardized, 1);
  SaliencyMap map;
  map.weights = Eigen::MatrixXd::Zero(64, 64);
  int labeled = 0;
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 64; ++c)
      if (imgs[0].parts(r, c) >= 0) {
        map.weights(r, c) = 1.0;
        ++labeled;
      }
  map.weights /= static_cast<double>(labeled);
  const RegionShares rs = region_attribution(map, imgs[0].parts);
  double total_s = 0.0, total_a = 0.0;
  for (const auto& [part, share] : rs.saliency_share) {
    CHECK(share == doctest::Approx(rs.area_share.at(part)).epsilon(1e-12));
    CHECK(share >= 0.0);
    CHECK(share <= 1.0);
    total_s += share;
    total_a += rs.area_share.at(part);
  }
  CHECK(total_s == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(total_a == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("region_attribution: point mass on one part") {
  auto imgs = small_sequence(GenTag::standardized, 1);
  // find a feet pixel
  Eigen::Index fr = -1, fc = -1;
  for (Eigen::Index r = 0; r < 64 && fr < 0; ++r)
    for (Eigen::Index c = 0; c < 64 && fr < 0; ++c)
      if (imgs[0].parts(r, c) == kShinFootL) {
        fr = r;
        fc = c;
      }
  REQUIRE(fr >= 0);
  SaliencyMap map;
  map.weights = Eigen::MatrixXd::Zero(64, 64);
  map.weights(fr, fc) = 1.0;
  const RegionShares rs = region_attribution(map, imgs[0].parts);
  CHECK(rs.saliency_share.at(kShinFootL) == 1.0);
  for (const auto& [part, share] : rs.saliency_share)
    if (part != kShinFootL) CHECK(share == 0.0);
}

TEST_CASE("region_attribution: shape mismatch rejected") {
  SaliencyMap map;
  map.weights = Eigen::MatrixXd::Zero(8, 8);
  Eigen::MatrixXi parts = Eigen::MatrixXi::Zero(9, 8);
  try {
    region_attribution(map, parts);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}

TEST_CASE("map entropy: uniform is 1, point mass is 0") {
  SaliencyMap uni;
  uni.weights = Eigen::MatrixXd::Constant(8, 8, 1.0 / 64.0);
  CHECK(map_entropy(uni) == doctest::Approx(1.0).epsilon(1e-12));
  SaliencyMap point;
  point.weights = Eigen::MatrixXd::Zero(8, 8);
  point.weights(3, 3) = 1.0;
  CHECK(map_entropy(point) == 0.0);
}

TEST_CASE("linear probe separates synthetic identities") {
  CounterRng rng(95);
  Eigen::MatrixXd x(12, 5);
  std::vector<std::string> labels;
  for (int i = 0; i < 12; ++i) {
    const int id = i % 3;
    for (int k = 0; k < 5; ++k) x(i, k) = (k == id ? 2.0 : 0.0) + 0.05 * rng.normal();
    labels.push_back("P" + std::to_string(id));
  }
  std::vector<std::string> order;
  const Eigen::MatrixXd head = train_linear_probe(x, labels, &order);
  REQUIRE(order.size() == 3);
  int correct = 0;
  for (int i = 0; i < 12; ++i) {
    Eigen::Index arg;
    (head * x.row(i).transpose()).maxCoeff(&arg);
    correct += order[static_cast<std::size_t>(arg)] == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  CHECK(correct == 12);
}

}  // TEST_SUITE
