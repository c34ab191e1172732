#include <cmath>
#include <random>

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "semitrack/model.hpp"
#include "semitrack/synthgen.hpp"
#include "support.hpp"

using namespace semitrack;
using namespace semitrack::testing;

namespace {

SceneSpec small_scene(std::uint64_t seed) {
  SceneSpec s;
  s.grid_size = 8;
  s.feature_dim = 4;
  s.min_objects = 2;
  s.max_objects = 3;
  s.min_size = 2;
  s.max_size = 3;
  s.entry_exit_prob = 0.0;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("head layout") {
    CHECK(EmbeddingHead({3, 0, 2, false}).num_params() == 3 * 2 + 2);
    CHECK(EmbeddingHead({3, 4, 2, false}).num_params() == 3 * 4 + 4 + 4 * 2 + 2);
    CHECK(EmbeddingHead({3, 4, 2, true}).num_params() == 3 * 4 + 4 + 2 * (4 * 2 + 2));
    CHECK_THROWS_AS(EmbeddingHead({3, 0, 2, true}), std::invalid_argument);
    CHECK_THROWS_AS(EmbeddingHead({0, 0, 2, false}), std::invalid_argument);
    const auto mask = EmbeddingHead({3, 0, 2, false}).bias_mask();
    CHECK(std::count(mask.begin(), mask.end(), true) == 2);
    CHECK(mask[6]);
    CHECK_FALSE(mask[5]);
  }

  TEST_CASE("identity and zero heads") {
    std::mt19937_64 rng(41);
    const Matrix x = random_matrix(rng, 9, 3);
    CHECK(forward_cells(EmbeddingHead::identity(3), x) == x);
    const Matrix z = forward_cells(EmbeddingHead({3, 0, 2, false}), x);
    for (double v : z.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(forward_cells(EmbeddingHead::identity(4), x), std::invalid_argument);
    CHECK_THROWS_AS(forward(EmbeddingHead::identity(3), 4, x), std::invalid_argument);
  }

  TEST_CASE("per-cell locality") {
    std::mt19937_64 rng(42);
    const EmbeddingHead h = EmbeddingHead::random({3, 5, 2, true}, 1);
    Matrix x = random_matrix(rng, 6, 3);
    const Matrix a = forward_cells(h, x);
    x(4, 1) += 1.0;
    const Matrix b = forward_cells(h, x);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 2; ++c) CHECK((a(r, c) == b(r, c)) == (r != 4));
    CHECK_FALSE(forward_cells(h, x, Branch::Video) == forward_cells(h, x, Branch::Image));
  }

  TEST_CASE("linear backward matches x^T u") {
    std::mt19937_64 rng(43);
    const EmbeddingHead h = EmbeddingHead::random({3, 0, 2, false}, 2);
    const Matrix x = random_matrix(rng, 5, 3), u = random_matrix(rng, 5, 2);
    const auto g = backward_chain(h, x, u);
    for (int o = 0; o < 2; ++o) {
      double bias = 0;
      for (int i = 0; i < 3; ++i) {
        double w = 0;
        for (int r = 0; r < 5; ++r) w += u(r, o) * x(r, i);
        CHECK(g[static_cast<std::size_t>(o * 3 + i)] == doctest::Approx(w).epsilon(1e-12));
      }
      for (int r = 0; r < 5; ++r) bias += u(r, o);
      CHECK(g[static_cast<std::size_t>(6 + o)] == doctest::Approx(bias).epsilon(1e-12));
    }
  }

  TEST_CASE("video branch gradient leaves the image layer alone") {
    std::mt19937_64 rng(44);
    const EmbeddingHead h = EmbeddingHead::random({3, 4, 2, true}, 3);
    const auto g = backward_chain(h, random_matrix(rng, 5, 3), random_matrix(rng, 5, 2), Branch::Video);
    const auto [lo, hi] = h.image_layer_range();
    for (std::size_t i = lo; i < hi; ++i) CHECK(g[i] == 0.0);
  }

  TEST_CASE("adam") {
    std::vector<double> p{1.0, -1.0};
    AdamState st;
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    const std::vector<bool> trainable{true, false};
    adam_step(p, std::vector<double>{2.0, 2.0}, st, cfg, &trainable);
    // The first bias-corrected step moves by lr * sign(g).
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p[1] == -1.0);
    cfg.weight_decay = 0.5;
    std::vector<double> q{1.0};
    AdamState s2;
    adam_step(q, std::vector<double>{0.0}, s2, cfg);
    CHECK(q[0] == doctest::Approx(1.0 - 0.1 * 0.5));
    CHECK_THROWS_AS(adam_step(q, std::vector<double>{0.0, 1.0}, s2, cfg), std::invalid_argument);
  }

  TEST_CASE("zero head contra term is log K") {
    const SynthSequence seq = generate_sequence(small_scene(1), 2);
    const auto images = to_image_dataset({seq}, 0);
    REQUIRE_FALSE(images.empty());
    TrainConfig cfg;
    cfg.lambda = 1.0;
    cfg.mu = 0.0;
    const ObjectiveTerms t = supervised_objective(EmbeddingHead({4, 0, 3, false}), images[0], cfg);
    const double k = static_cast<double>(instance_cells(images[0].labels).size());
    CHECK(t.contra == doctest::Approx(std::log(k)));
    CHECK(t.center == 0.0);
  }

  TEST_CASE("supervised training lowers the objective and is deterministic") {
    std::vector<SynthSequence> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(generate_sequence(small_scene(10 + i), 4));
    const auto images = to_image_dataset(seqs, 5);
    TrainConfig cfg;
    cfg.steps = 60;
    cfg.batch_size = 4;
    cfg.seed = 9;
    const EmbeddingHead h0 = EmbeddingHead::random({4, 0, 4, false}, 4);
    const TrainResult a = train_supervised(h0, images, cfg);
    const TrainResult b = train_supervised(h0, images, cfg);
    CHECK(a.head == b.head);
    REQUIRE(a.curve.size() == 60);
    double first = 0, last = 0;
    for (const auto& im : images) {
      first += supervised_objective(h0, im, cfg).total;
      last += supervised_objective(a.head, im, cfg).total;
    }
    CHECK(last < first);
    CHECK(a.curve.front().contra.has_value());
    CHECK_FALSE(a.curve.front().cycle.has_value());
    CHECK_THROWS_AS(train_supervised(h0, {}, cfg), std::invalid_argument);
  }

  TEST_CASE("correspondence training and test-time adaptation") {
    SceneSpec s = small_scene(20);
    s.drift = 0.2;
    const SynthSequence seq = generate_sequence(s, 20);
    const VideoClip clip = make_video_clip(seq);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 2;
    cfg.ttt_learning_rate = 1e-2;
    cfg.sampling = {1, 4};
    const EmbeddingHead h0 = EmbeddingHead::random({4, 0, 4, false}, 5);

    const TrainResult tr = train_correspondence(h0, {clip}, cfg);
    CHECK(sequence_cycle_loss(tr.head, clip, cfg) < sequence_cycle_loss(h0, clip, cfg));
    CHECK(tr.curve.front().cycle.has_value());

    cfg.ttt_iters = 0;
    CHECK(test_time_adapt(h0, clip, cfg) == h0);
    cfg.ttt_iters = 5;
    const EmbeddingHead before = h0;
    const EmbeddingHead adapted = test_time_adapt(h0, clip, cfg);
    CHECK(h0 == before);
    CHECK(adapted == test_time_adapt(h0, clip, cfg));
    CHECK(sequence_cycle_loss(adapted, clip, cfg) < sequence_cycle_loss(h0, clip, cfg));

    const EmbeddingHead split = EmbeddingHead::random({4, 4, 4, true}, 6);
    const EmbeddingHead split_adapted = test_time_adapt(split, clip, cfg);
    const auto [lo, hi] = split.image_layer_range();
    for (std::size_t i = lo; i < hi; ++i) CHECK(split_adapted.params()[i] == split.params()[i]);
  }

  TEST_CASE("video clips and label noise") {
    const SynthSequence seq = generate_sequence(small_scene(30), 6);
    const VideoClip clean = make_video_clip(seq);
    CHECK(clean.length() == 6);
    const VideoClip noisy = make_video_clip(seq, 0.5, 3);
    CHECK(noisy.length() == 6);
    bool changed = false;
    for (int t = 0; t < 6; ++t) {
      REQUIRE(noisy.instances[t].size() == clean.instances[t].size());
      for (int i = 0; i < clean.instances[t].size(); ++i) {
        CHECK(noisy.instances[t].sets[i].size() == clean.instances[t].sets[i].size());
        changed |= noisy.instances[t].sets[i] != clean.instances[t].sets[i];
      }
    }
    CHECK(changed);
    CHECK(make_video_clip(seq, 0.5, 3).instances[0].sets == noisy.instances[0].sets);
    CHECK_THROWS_AS(make_video_clip(seq, 1.5), std::invalid_argument);
  }
}
