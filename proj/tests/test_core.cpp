#include <doctest.h>

#include "detdisc/core.hpp"
#include "helpers.hpp"

using namespace detdisc;
using testutil::vec;

namespace {

Dataset two_bag_dataset() {
  Dataset d;
  d.feature_dim = 2;
  d.categories_strong = {"cat"};
  d.categories_weak = {"dog"};

  Bag s;
  s.id = "s0";
  s.source = Source::Strong;
  s.regions.push_back(testutil::region(vec({1, 0}), {0, 0, 10, 10}));
  s.regions.push_back(testutil::region(vec({0, 1}), {20, 20, 30, 30}));
  s.regions[0].strong_labels = Labels{{"cat", 1}};
  s.regions[1].strong_labels = Labels{{"cat", -1}};
  s.weak_labels = {{"cat", 1}};
  d.strong_bags.push_back(std::move(s));

  Bag w;
  w.id = "w0";
  w.source = Source::Weak;
  w.regions.push_back(testutil::region(vec({2, 4}), {0, 0, 5, 5}));
  w.weak_labels = {{"dog", 1}};
  d.weak_bags.push_back(std::move(w));
  return d;
}

}  // namespace

TEST_CASE("validate_dataset accepts a well-formed two-bag dataset") {
  CHECK(validate_dataset(two_bag_dataset()).empty());
}

TEST_CASE("validate_dataset flags an empty region list") {
  Dataset d = two_bag_dataset();
  d.weak_bags[0].regions.clear();
  const auto problems = validate_dataset(d);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("w0") != std::string::npos);
  CHECK(problems[0].find("regions") != std::string::npos);
}

TEST_CASE("validate_dataset flags image-level label inconsistency") {
  Dataset d = two_bag_dataset();
  d.strong_bags[0].weak_labels["cat"] = -1;  // but a region is +1 for cat
  const auto problems = validate_dataset(d);
  CHECK(problems.size() == 1);
}

TEST_CASE("validate_dataset flags bad boxes, labels and duplicate ids") {
  Dataset d = two_bag_dataset();
  d.weak_bags[0].regions[0].box = {5, 5, 5, 10};
  CHECK(validate_dataset(d).size() == 1);

  d = two_bag_dataset();
  d.strong_bags[0].regions[0].strong_labels = Labels{{"cat", 2}};
  CHECK(!validate_dataset(d).empty());

  d = two_bag_dataset();
  d.weak_bags.push_back(d.weak_bags[0]);
  CHECK(!validate_dataset(d).empty());

  d = two_bag_dataset();
  d.weak_bags[0].regions[0].feature = vec({1, 2, 3});
  CHECK(!validate_dataset(d).empty());
}

TEST_CASE("label_of treats absence as negative") {
  Labels l{{"cat", 1}};
  CHECK(label_of(l, "cat") == 1);
  CHECK(label_of(l, "dog") == -1);
}

TEST_CASE("whole_image_feature passes an explicit feature through") {
  Bag b;
  b.regions.push_back(testutil::region(vec({0, 0})));
  b.whole_image_feature = vec({7, 8});
  CHECK(whole_image_feature(b) == vec({7, 8}));
}

TEST_CASE("whole_image_feature averages region features") {
  Bag b;
  b.regions.push_back(testutil::region(vec({0, 0})));
  b.regions.push_back(testutil::region(vec({2, 4})));
  CHECK(whole_image_feature(b) == vec({1, 2}));

  Bag single;
  single.regions.push_back(testutil::region(vec({3, -5})));
  CHECK(whole_image_feature(single) == vec({3, -5}));
}

TEST_CASE("whole_image_feature is permutation invariant") {
  Bag b;
  b.regions.push_back(testutil::region(vec({1, 2})));
  b.regions.push_back(testutil::region(vec({-3, 0.5})));
  b.regions.push_back(testutil::region(vec({4, 4})));
  Bag p = b;
  std::swap(p.regions[0], p.regions[2]);
  CHECK(whole_image_feature(b) == whole_image_feature(p));
}

TEST_CASE("detector_score applies the trailing bias") {
  CHECK(detector_score(testutil::detector({2, -1}, 0.5), vec({3, 4})) == 2 * 3 - 4 + 0.5);
}

TEST_CASE("check_model rejects inconsistent detector dimensions") {
  Model m = testutil::identity_model(2);
  m.detectors["a"] = testutil::detector({1, 0});
  m.detectors["b"] = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(check_model(m), ConfigError);

  m.detectors["b"] = testutil::detector({0, 1});
  CHECK_NOTHROW(check_model(m));

  m.hyper.lambda = 0.0;
  CHECK_THROWS_AS(check_model(m), ConfigError);
}
