#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "detdisc/io.hpp"
#include "detdisc/synth.hpp"

using namespace detdisc;

namespace {

SynthConfig small_config(std::uint64_t seed = 2) {
  SynthConfig c;
  c.seed = seed;
  c.num_categories_strong = 2;
  c.num_categories_weak = 2;
  c.bags_per_category = 6;
  c.regions_per_bag = 8;
  c.feature_dim = 8;
  return c;
}

std::string dataset_bytes(const Dataset& d) {
  const auto path = std::filesystem::temp_directory_path() / "synth_bytes.jsonl";
  write_dataset(path.string(), d);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generation is deterministic in the seed, down to the bytes") {
  const auto [d1, g1] = generate(small_config());
  const auto [d2, g2] = generate(small_config());
  CHECK(dataset_bytes(d1) == dataset_bytes(d2));

  const auto [d3, g3] = generate(small_config(9));
  CHECK(dataset_bytes(d1) != dataset_bytes(d3));
}

TEST_CASE("generated datasets satisfy every core invariant") {
  const auto [d, gt] = generate(SynthConfig{});
  CHECK(validate_dataset(d).empty());
  CHECK(d.categories_strong.size() == 5);
  CHECK(d.categories_weak.size() == 5);
  CHECK(int(d.strong_bags.size()) == 5 * 40);
  CHECK(int(d.weak_bags.size()) == 5 * 40);
}

TEST_CASE("every positive weak bag has a planted region the oracle can point at") {
  const auto [d, gt] = generate(small_config());
  for (const Bag& b : d.weak_bags) {
    for (const auto& [cat, y] : b.weak_labels) {
      if (y != 1) continue;
      const int planted = gt.planted.at(b.id).at(cat);
      REQUIRE(planted >= 0);
      REQUIRE(planted < int(b.regions.size()));
      CHECK(!gt.boxes.at(b.id).at(cat).empty());
    }
  }
}

TEST_CASE("vanishing noise makes the oracle recover the planted regions exactly") {
  SynthConfig c = small_config();
  c.noise_sigma = 1e-6;
  const auto [d, gt] = generate(c);
  for (const Bag& b : d.weak_bags) {
    for (const auto& [cat, y] : b.weak_labels) {
      if (y != 1) continue;
      CHECK(bayes_oracle(gt, b, cat) == gt.planted.at(b.id).at(cat));
    }
  }
}

TEST_CASE("default config keeps planted regions close to their generating mean") {
  const auto [d, gt] = generate(SynthConfig{});
  int total = 0, nearest_ok = 0, oracle_ok = 0;
  for (const Bag& b : d.weak_bags) {
    for (const auto& [cat, y] : b.weak_labels) {
      if (y != 1) continue;
      ++total;
      const int planted = gt.planted.at(b.id).at(cat);
      const Eigen::VectorXd& f = b.regions[planted].feature;

      // nearest generating mean must be the planting category's mean
      std::string nearest;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [k, mu] : gt.means) {
        const double dist = (f - mu).squaredNorm();
        if (dist < best) {
          best = dist;
          nearest = k;
        }
      }
      if (nearest == cat) ++nearest_ok;
      if (bayes_oracle(gt, b, cat) == planted) ++oracle_ok;
    }
  }
  REQUIRE(total > 0);
  CHECK(double(nearest_ok) / total >= 0.99);
  CHECK(double(oracle_ok) / total >= 0.99);
}

TEST_CASE("the transform toggle shifts weak features but not labels or boxes") {
  SynthConfig plain = small_config();
  SynthConfig shifted = small_config();
  shifted.enable_transform = true;
  const auto [d0, g0] = generate(plain);
  const auto [d1, g1] = generate(shifted);

  REQUIRE(d0.weak_bags.size() == d1.weak_bags.size());
  bool any_feature_changed = false;
  for (std::size_t i = 0; i < d0.weak_bags.size(); ++i) {
    const Bag& a = d0.weak_bags[i];
    const Bag& b = d1.weak_bags[i];
    CHECK(a.weak_labels == b.weak_labels);
    REQUIRE(a.regions.size() == b.regions.size());
    for (std::size_t r = 0; r < a.regions.size(); ++r) {
      CHECK(a.regions[r].box.x_min == b.regions[r].box.x_min);
      CHECK(a.regions[r].feature == b.regions[r].feature);
    }
    if (whole_image_feature(a) != whole_image_feature(b)) any_feature_changed = true;
  }
  CHECK(any_feature_changed);
  CHECK(g0.planted == g1.planted);
  REQUIRE(g0.boxes.size() == g1.boxes.size());
  for (const auto& [bag, per_cat] : g0.boxes) {
    const auto& other = g1.boxes.at(bag);
    REQUIRE(per_cat.size() == other.size());
    for (const auto& [cat, boxes] : per_cat) {
      const auto& ob = other.at(cat);
      REQUIRE(boxes.size() == ob.size());
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        CHECK(boxes[i].x_min == ob[i].x_min);
        CHECK(boxes[i].y_max == ob[i].y_max);
      }
    }
  }
}

TEST_CASE("infeasible geometry is rejected with a config error") {
  SynthConfig c = small_config();
  c.feature_dim = 2;
  c.num_categories_strong = 40;
  c.num_categories_weak = 40;
  CHECK_THROWS_AS(generate(c), ConfigError);

  SynthConfig bad = small_config();
  bad.regions_per_bag = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
