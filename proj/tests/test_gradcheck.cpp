#include <doctest.h>

#include <chrono>

#include "iclkit/losses.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using iclkit::ad::Parameter;
using iclkit::ad::Tape;
using iclkit::LossConfig;
using iclkit::Phase;

namespace {

// Sets whether rho participates, returning the <=10-entry trainable set.
std::vector<Parameter*> trainable_of(fixtures::Tiny& tiny, bool check_rho) {
  tiny.model->set_phase(Phase::new_classes);
  if (check_rho) {
    // freeze the new branch instead of rho to stay within 10 parameters
    for (auto* p : tiny.model->all_params())
      if (p->name.rfind("h2.", 0) == 0) p->trainable = false;
  } else {
    tiny.model->rho().trainable = false;
  }
  auto params = tiny.model->trainable_params();
  int total = 0;
  for (auto* p : params) total += static_cast<int>(p->value.size());
  REQUIRE(total <= 10);
  return params;
}

enum class Which { classification, aux, dist, margin, composite_new, composite_old };

double eval_loss(fixtures::Tiny& tiny, const LossConfig& cfg, Which which,
                 bool with_grad) {
  Tape t;
  Tape::NodeId root;
  switch (which) {
    case Which::classification:
      root = classification_loss_node(t, *tiny.model, tiny.batch, tiny.counts,
                                      cfg.beta_new, cfg.gamma_new);
      break;
    case Which::aux:
      root = auxiliary_loss_node(t, *tiny.model, tiny.batch, tiny.counts, cfg.beta_new,
                                 cfg.gamma_new);
      break;
    case Which::dist:
      root = distillation_loss_node(t, *tiny.model, *tiny.snapshot, tiny.batch);
      break;
    case Which::margin:
      root = margin_loss_node(t, *tiny.model, tiny.batch, cfg.margin_m, cfg.top_k);
      break;
    case Which::composite_new:
      root = composite_new_node(t, *tiny.model, tiny.snapshot.get(), tiny.batch,
                                tiny.counts, cfg);
      break;
    case Which::composite_old:
      root = composite_old_node(t, *tiny.model, tiny.snapshot.get(), tiny.batch,
                                tiny.counts, cfg);
      break;
  }
  double v = t.value(root)(0, 0);
  if (with_grad) t.backward(root);
  return v;
}

// Margin hinges sit on a kink at argument zero; reject draws too close to it
// (and top-k selection flips) so the checks stay at interior points.
bool margin_interior(fixtures::Tiny& tiny, double m, int k) {
  Eigen::MatrixXd z = tiny.model->forward_features(tiny.batch.x);
  Eigen::MatrixXd w = tiny.model->weight_matrix();
  std::vector<int> new_rows =
      tiny.model->rows_of_group(static_cast<int>(tiny.model->class_groups().size()) - 1);
  for (Eigen::Index b = 0; b < z.rows(); ++b) {
    if (!tiny.batch.is_memory[b]) continue;
    Eigen::VectorXd sims = iclkit::cosine_similarities(z.row(b).transpose(), w);
    std::vector<double> cand;
    for (int c : new_rows) cand.push_back(sims(c));
    std::sort(cand.begin(), cand.end(), std::greater<>());
    for (std::size_t i = 0; i + 1 < cand.size(); ++i)
      if (std::abs(cand[i] - cand[i + 1]) < 1e-3) return false;  // selection tie
    int true_row = tiny.model->row_of_label(tiny.batch.labels[b]);
    for (int i = 0; i < k && i < static_cast<int>(cand.size()); ++i)
      if (std::abs(cand[i] - sims(true_row) + m) < 1e-3) return false;  // hinge kink
  }
  return true;
}

}  // namespace

TEST_CASE("every loss and both composites match finite differences") {
  auto started = std::chrono::steady_clock::now();
  const LossConfig cfg = fixtures::tiny_loss_config();
  int points = 0;
  std::uint64_t seed = 1000;
  while (points < 20) {
    fixtures::Tiny probe = fixtures::make_tiny_step2(seed);
    if (!margin_interior(probe, cfg.margin_m, cfg.top_k)) {
      ++seed;
      continue;
    }
    for (bool check_rho : {false, true}) {
      for (Which which :
           {Which::classification, Which::aux, Which::dist, Which::margin,
            Which::composite_new}) {
        fixtures::Tiny tiny = fixtures::make_tiny_step2(seed);
        auto params = trainable_of(tiny, check_rho);
        auto eval = [&](bool g) { return eval_loss(tiny, cfg, which, g); };
        double err = oracles::finite_diff_error(params, eval);
        INFO("seed ", seed, " which ", static_cast<int>(which), " rho ", check_rho);
        CHECK(err < 1e-4);
      }
    }
    {
      // the old objective trains V_t and rho only
      fixtures::Tiny tiny = fixtures::make_tiny_step2(seed);
      tiny.model->set_phase(Phase::old_classes);
      auto params = tiny.model->trainable_params();
      int total = 0;
      for (auto* p : params) total += static_cast<int>(p->value.size());
      REQUIRE(total <= 10);
      auto eval = [&](bool g) { return eval_loss(tiny, cfg, Which::composite_old, g); };
      double err = oracles::finite_diff_error(params, eval);
      INFO("seed ", seed, " composite_old");
      CHECK(err < 1e-4);
    }
    ++points;
    ++seed;
  }
  double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  CHECK(elapsed < 30.0);
}

TEST_CASE("margin gradient with a multi-candidate top-k selection") {
  const LossConfig cfg = fixtures::tiny_loss_config();
  int points = 0;
  std::uint64_t seed = 2000;
  while (points < 10) {
    fixtures::Tiny tiny = fixtures::make_tiny_step2(seed, /*new_classes=*/2);
    if (!margin_interior(tiny, cfg.margin_m, 1)) {
      ++seed;
      continue;
    }
    // keep only branch W and V_t trainable: 2 + 4 parameters
    tiny.model->set_phase(Phase::new_classes);
    tiny.model->rho().trainable = false;
    for (auto* p : tiny.model->all_params())
      if (p->name == "cls.r0.c1" || p->name == "cls.r1.c1" || p->name == "cls.r2.c1")
        p->trainable = false;
    auto params = tiny.model->trainable_params();
    int total = 0;
    for (auto* p : params) total += static_cast<int>(p->value.size());
    REQUIRE(total <= 10);
    auto eval = [&](bool g) {
      Tape t;
      auto root = margin_loss_node(t, *tiny.model, tiny.batch, cfg.margin_m, 1);
      double v = t.value(root)(0, 0);
      if (g) t.backward(root);
      return v;
    };
    CHECK(oracles::finite_diff_error(params, eval) < 1e-4);
    ++points;
    ++seed;
  }
}
