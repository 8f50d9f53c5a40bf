#include <algorithm>

#include "doctest.h"

#include "camtrap/csv.hpp"
#include "camtrap/error.hpp"
#include "camtrap/evaluation.hpp"
#include "metrics_oracle.hpp"

using namespace camtrap;
using testing::class_names;

namespace {

ConfusionMatrix from_cells(const std::vector<std::vector<std::uint64_t>>& cells) {
  ConfusionMatrix cm(class_names(cells.size()));
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells.size(); ++c) cm.add(r, c, cells[r][c]);
  }
  return cm;
}

}  // namespace

TEST_CASE("confusion matrix examples") {
  std::vector<int> ten(10);
  for (int i = 0; i < 10; ++i) ten[static_cast<std::size_t>(i)] = i % 3;
  const auto diag = confusion_matrix(ten, ten, class_names(3));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (r != c) CHECK(diag.at(r, c) == 0);
    }
  }
  CHECK(diag.trace() == 10);

  const std::vector<int> t{0, 0, 1, 1}, p{0, 1, 1, 1};
  const auto cm = confusion_matrix(t, p, class_names(2));
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 2);

  const std::vector<int> none;
  const auto empty = confusion_matrix(none, none, class_names(4));
  CHECK(empty.total() == 0);
  CHECK(empty.classes() == 4);
}

TEST_CASE("confusion matrix errors") {
  const std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(confusion_matrix(a, b, class_names(2)), ValidationError);
  const std::vector<int> out{0, 2};
  CHECK_THROWS_AS(confusion_matrix(out, a, class_names(2)), ValidationError);
  const std::vector<std::string> names_t{"Birds", "Owl"}, names_p{"Birds", "Birds"};
  CHECK_THROWS_AS(confusion_matrix(names_t, names_p, {"Birds", "Felis catus"}), ValidationError);
  const std::vector<std::string> ok{"Birds", "Felis catus"};
  CHECK(confusion_matrix(ok, ok, {"Birds", "Felis catus"}).trace() == 2);
}

TEST_CASE("hand-derived two-class metrics") {
  const auto r = metrics(from_cells({{8, 2}, {1, 9}}));
  CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.per_class[0].precision == doctest::Approx(8.0 / 9).epsilon(1e-15));
  CHECK(r.per_class[0].recall == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::abs(r.per_class[0].f1 - 0.8421) < 1e-4);
  CHECK(r.per_class[1].precision == doctest::Approx(9.0 / 11).epsilon(1e-15));
  CHECK(r.per_class[1].recall == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(std::abs(r.per_class[1].f1 - 0.8571) < 1e-4);
  CHECK(std::abs(r.macro_f1 - 0.8496) < 1e-4);
  CHECK(r.per_class[0].f1 == doctest::Approx(16.0 / 19).epsilon(1e-15));
  CHECK(r.per_class[1].f1 == doctest::Approx(18.0 / 21).epsilon(1e-15));
}

TEST_CASE("perfect diagonal and the zero-division rule") {
  const auto perfect = metrics(from_cells({{3, 0, 0}, {0, 5, 0}, {0, 0, 1}}));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  for (const auto& m : perfect.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  const auto gap = metrics(from_cells({{3, 0, 0}, {0, 0, 0}, {1, 0, 2}}));
  CHECK(gap.per_class[1].precision == 0.0);
  CHECK(gap.per_class[1].recall == 0.0);
  CHECK(gap.per_class[1].f1 == 0.0);
  CHECK_FALSE(gap.per_class[1].precision_defined);
  CHECK_FALSE(gap.per_class[1].recall_defined);
  CHECK_FALSE(gap.per_class[1].f1_defined);
  CHECK(gap.per_class[0].precision_defined);

  const auto nothing = metrics(ConfusionMatrix(class_names(2)));
  CHECK(nothing.accuracy == 0.0);
}

TEST_CASE("per-class flags") {
  MetricsReport r;
  for (double f : {0.95, 0.72, 0.81}) {
    ClassMetrics m;
    m.f1 = f;
    r.per_class.push_back(m);
  }
  CHECK(per_class_flags(r, 0.8) == std::vector<std::size_t>{1});
  CHECK(per_class_flags(r, 0.0).empty());
  CHECK(per_class_flags(r, 1.0) == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("property: metrics agree with a brute-force counter") {
  Rng rng(2718);
  for (int i = 0; i < 1000; ++i) {
    const auto inst = testing::random_instance(rng);
    REQUIRE(testing::oracle_discrepancy(inst) <= 1e-12);
  }
}

TEST_CASE("property: accuracy is the support-weighted mean recall") {
  Rng rng(1618);
  for (int i = 0; i < 1000; ++i) {
    const auto inst = testing::random_instance(rng);
    const auto cm = confusion_matrix(inst.truths, inst.preds, class_names(inst.classes));
    const auto r = metrics(cm);
    if (cm.total() == 0) continue;
    double weighted = 0;
    for (std::size_t c = 0; c < inst.classes; ++c) {
      weighted += r.per_class[c].recall * static_cast<double>(cm.row_sum(c)) /
                  static_cast<double>(cm.total());
    }
    REQUIRE(std::abs(weighted - r.accuracy) < 1e-12);
  }
}

TEST_CASE("property: permuting classes permutes per-class metrics only") {
  Rng rng(4669);
  for (int i = 0; i < 500; ++i) {
    const auto inst = testing::random_instance(rng);
    std::vector<int> perm(inst.classes);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> t2, p2;
    for (int t : inst.truths) t2.push_back(perm[static_cast<std::size_t>(t)]);
    for (int p : inst.preds) p2.push_back(perm[static_cast<std::size_t>(p)]);
    const auto a = metrics(confusion_matrix(inst.truths, inst.preds, class_names(inst.classes)));
    const auto b = metrics(confusion_matrix(t2, p2, class_names(inst.classes)));
    REQUIRE(a.accuracy == b.accuracy);
    REQUIRE(std::abs(a.macro_precision - b.macro_precision) < 1e-12);
    REQUIRE(std::abs(a.macro_recall - b.macro_recall) < 1e-12);
    REQUIRE(std::abs(a.macro_f1 - b.macro_f1) < 1e-12);
    for (std::size_t c = 0; c < inst.classes; ++c) {
      const auto& x = a.per_class[c];
      const auto& y = b.per_class[static_cast<std::size_t>(perm[c])];
      REQUIRE(x.precision == y.precision);
      REQUIRE(x.recall == y.recall);
      REQUIRE(x.f1 == y.f1);
    }
  }
}

TEST_CASE("report exports") {
  const auto cm = from_cells({{8, 2}, {1, 9}});
  const auto r = metrics(cm);
  const auto j = to_json(r);
  CHECK(j.at("accuracy").get<double>() == r.accuracy);
  CHECK(j.at("per_class").size() == 2);
  CHECK(j.dump().find("macro") != std::string::npos);

  const auto rows = csv::parse(report_to_csv(r));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == "class");
  CHECK(rows[3][0] == "macro");

  const auto cm_rows = csv::parse(confusion_to_csv(cm));
  REQUIRE(cm_rows.size() == 3);
  CHECK(cm_rows[0] == csv::Row{"true\\predicted", "c0", "c1"});
  CHECK(cm_rows[1] == csv::Row{"c0", "8", "2"});
  CHECK(cm_rows[2] == csv::Row{"c1", "1", "9"});
  CHECK(to_json(cm).at("counts").size() == 2);
}
