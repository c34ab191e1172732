#include <set>

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "semitrack/synthgen.hpp"

using namespace semitrack;

namespace {

SceneSpec scene(std::uint64_t seed) {
  SceneSpec s;
  s.grid_size = 12;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("synthgen") {
  TEST_CASE("shapes and validation") {
    const SynthSequence seq = generate_sequence(scene(1), 5);
    CHECK(seq.length() == 5);
    CHECK(seq.grid_size == 12);
    for (const auto& f : seq.frames) {
      CHECK(f.features.rows() == 144);
      CHECK(f.features.cols() == 8);
      CHECK(f.labels.grid_size == 12);
    }
    SceneSpec bad = scene(1);
    bad.min_objects = 5;
    bad.max_objects = 2;
    CHECK_THROWS_AS(generate_sequence(bad, 5), std::invalid_argument);
    CHECK_THROWS_AS(generate_sequence(scene(1), 0), std::invalid_argument);
  }

  TEST_CASE("static scene") {
    SceneSpec s = scene(2);
    s.min_speed = s.max_speed = 0.0;
    s.entry_exit_prob = 0.0;
    const SynthSequence seq = generate_sequence(s, 6);
    for (const auto& f : seq.frames) {
      REQUIRE(f.objects.size() == seq.frames[0].objects.size());
      for (std::size_t i = 0; i < f.objects.size(); ++i) CHECK(f.objects[i].mask == seq.frames[0].objects[i].mask);
    }
  }

  TEST_CASE("no entries or exits keeps the object count") {
    SceneSpec s = scene(3);
    s.entry_exit_prob = 0.0;
    const SynthSequence seq = generate_sequence(s, 20);
    const auto n = seq.frames[0].objects.size();
    CHECK(n >= 3);
    CHECK(n <= 6);
    for (const auto& f : seq.frames) CHECK(f.objects.size() == n);
  }

  TEST_CASE("determinism") {
    const SynthSequence a = generate_sequence(scene(4), 8), b = generate_sequence(scene(4), 8);
    const SynthSequence c = generate_sequence(scene(5), 8);
    bool same = true, differs = false;
    for (int t = 0; t < 8; ++t) {
      same &= a.frames[t].features == b.frames[t].features;
      differs |= !(a.frames[t].features == c.frames[t].features);
    }
    CHECK(same);
    CHECK(differs);
  }

  TEST_CASE("masks are disjoint and ids are never reused") {
    SceneSpec s = scene(6);
    s.entry_exit_prob = 0.3;
    const SynthSequence seq = generate_sequence(s, 30);
    std::set<int> retired, alive;
    for (const auto& f : seq.frames) {
      std::vector<int> owner(144, -1);
      std::set<int> now;
      for (const auto& o : f.objects) {
        CHECK_FALSE(o.mask.empty());
        CHECK_FALSE(retired.count(o.track_id));
        CHECK(now.insert(o.track_id).second);
        for (int c = 0; c < 144; ++c)
          if (o.mask.bits[c]) {
            CHECK(owner[c] == -1);
            owner[c] = o.track_id;
          }
      }
      for (int id : alive)
        if (!now.count(id)) retired.insert(id);
      alive = now;
    }
    CHECK_FALSE(retired.empty());
  }

  TEST_CASE("label grids refer to objects") {
    const SynthSequence seq = generate_sequence(scene(7), 4);
    for (const auto& f : seq.frames)
      for (int c = 0; c < 144; ++c) {
        const int l = f.labels.labels[c];
        if (l == kBackground) continue;
        REQUIRE(l < static_cast<int>(f.objects.size()));
        CHECK(f.objects[l].mask.bits[c]);
      }
  }

  TEST_CASE("image dataset") {
    std::vector<SynthSequence> seqs{generate_sequence(scene(8), 4), generate_sequence(scene(9), 3)};
    const auto a = to_image_dataset(seqs, 1);
    CHECK(a.size() == 7);
    const auto b = to_image_dataset(seqs, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].features == b[i].features);
      CHECK(a[i].masks.size() == a[i].categories.size());
      CHECK(a[i].masks.size() == a[i].boxes.size());
    }
  }

  TEST_CASE("oracle detections") {
    const SynthSequence seq = generate_sequence(scene(10), 5);
    const OracleDetections d = oracle_detections(seq, EmbeddingHead::identity(8));
    REQUIRE(d.frames.size() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
      REQUIRE(d.frames[t].size() == seq.frames[t].objects.size());
      for (std::size_t i = 0; i < d.frames[t].size(); ++i) {
        CHECK(d.frames[t][i].mask == seq.frames[t].objects[i].mask);
        CHECK(d.frames[t][i].score == 1.0);
        CHECK(d.frames[t][i].embedding.size() == 8);
        CHECK(d.gt_track_ids[t][i] == seq.frames[t].objects[i].track_id);
      }
    }
  }
}
