#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "vqs/common.hpp"
#include "vqs/ratings.hpp"

using namespace vqs;
using doctest::Approx;

namespace {

RatingMatrix one_subject(const std::vector<double>& scores) { return RatingMatrix::full({scores}); }

}  // namespace

TEST_CASE("subject_stats uses the sample standard deviation") {
  SUBCASE("4, 6, 8") {
    const auto s = subject_stats(one_subject({4, 6, 8}));
    CHECK(s.mean[0] == 6.0);
    CHECK(s.stddev[0] == 2.0);
    CHECK(s.count[0] == 3);
  }
  SUBCASE("constant rater") {
    const auto s = subject_stats(one_subject({5, 5, 5, 5}));
    CHECK(s.mean[0] == 5.0);
    CHECK(s.stddev[0] == 0.0);
  }
  SUBCASE("1 and 10") {
    const auto s = subject_stats(one_subject({1, 10}));
    CHECK(s.mean[0] == 5.5);
    CHECK(s.stddev[0] == Approx(std::sqrt(4.5 * 4.5 * 2.0)).epsilon(1e-15));
    CHECK(s.stddev[0] == Approx(6.364).epsilon(1e-4));
  }
  SUBCASE("fewer than two ratings names the subject") {
    RatingMatrix m({"alice", "bob"}, {"v1", "v2"}, {3, 4, 5, 0}, {1, 1, 1, 0});
    try {
      subject_stats(m);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::degenerate_subject);
      CHECK(std::string(e.what()).find("bob") != std::string::npos);
    }
  }
}

TEST_CASE("RatingMatrix enforces its invariants") {
  CHECK_THROWS_AS(RatingMatrix({"a"}, {"v"}, {11}, {1}), Error);
  CHECK_THROWS_AS(RatingMatrix({"a", "a"}, {"v"}, {1, 2}, {1, 1}), Error);
  CHECK_THROWS_AS(RatingMatrix({"a"}, {"v", "v"}, {1, 2}, {1, 1}), Error);
  CHECK_THROWS_AS(RatingMatrix({"a"}, {"v"}, {1, 2}, {1, 1}), Error);
  // A missing entry may hold any value.
  CHECK_NOTHROW(RatingMatrix({"a"}, {"v"}, {99}, {0}));
  const RatingMatrix m({"a"}, {"v", "w"}, {3, 0}, {1, 0});
  CHECK(m.at(0, 0) == 3.0);
  CHECK_FALSE(m.at(0, 1).has_value());
  CHECK(m.rating_count() == 1);
}

TEST_CASE("zscore_rescale maps the affine z range onto [0, 100]") {
  const RatingMatrix m = one_subject({4, 6, 8});
  const auto stats = subject_stats(m);
  const auto rescaled = zscore_rescale(m, stats);
  CHECK(rescaled.value(0, 1) == 50.0);
  CHECK(rescaled.value(0, 2) == Approx(66.6666666667).epsilon(1e-10));
  CHECK(rescaled.value(0, 0) == Approx(33.3333333333).epsilon(1e-10));

  SUBCASE("z of exactly -3 and +3 hit the endpoints") {
    SubjectStats s{{5.0}, {1.0}, {3}};
    const RatingMatrix r = one_subject({2, 8, 5});
    const auto t = zscore_rescale(r, s);
    CHECK(t.value(0, 0) == 0.0);
    CHECK(t.value(0, 1) == 100.0);
    CHECK(t.value(0, 2) == 50.0);
  }
  SUBCASE("values beyond three deviations are clipped") {
    SubjectStats s{{5.0}, {1.0}, {2}};
    const auto t = zscore_rescale(one_subject({1, 10}), s);
    CHECK(t.value(0, 0) == 0.0);
    CHECK(t.value(0, 1) == 100.0);
  }
  SUBCASE("constant rater is an error naming the subject") {
    RatingMatrix c({"steady"}, {"a", "b"}, {5, 5}, {1, 1});
    try {
      zscore_rescale(c, subject_stats(c));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::constant_rater);
      CHECK(std::string(e.what()).find("steady") != std::string::npos);
    }
  }
}

TEST_CASE("compute_mos") {
  auto table = [](std::vector<double> column) {
    ScoreTable t;
    for (std::size_t i = 0; i < column.size(); ++i) t.subjects.push_back("s" + std::to_string(i));
    t.videos = {"v"};
    t.values = column;
    t.present.assign(column.size(), 1);
    return t;
  };
  SUBCASE("identical scores") {
    const auto mos = compute_mos(table({50, 50, 50}));
    CHECK(mos.entries[0].mos == 50.0);
    CHECK(mos.entries[0].stddev == 0.0);
  }
  SUBCASE("40 and 60") {
    const auto mos = compute_mos(table({40, 60}));
    CHECK(mos.entries[0].mos == 50.0);
    CHECK(mos.entries[0].stddev == Approx(14.142135623730951).epsilon(1e-14));
    CHECK(mos.entries[0].count == 2);
    CHECK(mos.entries[0].ci == Approx(1.959963984540054 * 14.142135623730951 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("symmetric") {
    CHECK(compute_mos(table({0, 50, 100})).entries[0].mos == 50.0);
  }
  SUBCASE("video without ratings") {
    ScoreTable t = table({1, 2});
    t.present = {0, 0};
    CHECK_THROWS_AS(compute_mos(t), Error);
  }
}

TEST_CASE("z_for_level") {
  CHECK(z_for_level(0.95) == Approx(1.959964).epsilon(1e-6));
  CHECK(z_for_level(0.99) == Approx(2.575829).epsilon(1e-6));
  CHECK_THROWS(z_for_level(1.0));
}

TEST_CASE("normalization properties on random studies") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto rows = oracle::synthetic_study(12, 30, seed);
    const RatingMatrix m = RatingMatrix::full(rows);
    const auto stats = subject_stats(m);
    const auto z = zscores(m, stats);
    const auto rescaled = zscore_rescale(m, stats);
    for (std::size_t i = 0; i < m.subject_count(); ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < m.video_count(); ++j) mean += z.value(i, j);
      mean /= static_cast<double>(m.video_count());
      double ss = 0.0;
      for (std::size_t j = 0; j < m.video_count(); ++j) ss += (z.value(i, j) - mean) * (z.value(i, j) - mean);
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::sqrt(ss / static_cast<double>(m.video_count() - 1)) == Approx(1.0).epsilon(1e-9));
      // Order preserving within a subject.
      for (std::size_t a = 0; a < m.video_count(); ++a) {
        for (std::size_t b = 0; b < m.video_count(); ++b) {
          if (m.score(i, a) < m.score(i, b)) CHECK(rescaled.value(i, a) <= rescaled.value(i, b));
        }
      }
    }
    for (double v : rescaled.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
  }
}

TEST_CASE("shifting one subject's ratings leaves its rescaled scores unchanged") {
  const auto rows = oracle::synthetic_study(6, 20, 7);
  auto shifted = rows;
  // Keep inside the scale by shifting a subject that rated away from 10.
  for (auto& v : shifted[2]) v = std::min(v, 8.0);
  auto base = shifted;
  for (auto& v : shifted[2]) v += 1.5;
  const RatingMatrix a = RatingMatrix::full(base);
  const RatingMatrix b = RatingMatrix::full(shifted);
  const auto za = zscore_rescale(a, subject_stats(a));
  const auto zb = zscore_rescale(b, subject_stats(b));
  for (std::size_t j = 0; j < a.video_count(); ++j) CHECK(za.value(2, j) == Approx(zb.value(2, j)).epsilon(1e-12));
}

TEST_CASE("compute_mos is invariant to subject and video order") {
  const auto rows = oracle::synthetic_study(10, 15, 3);
  const RatingMatrix m = RatingMatrix::full(rows);
  const auto mos = mos_from_ratings(m);

  std::vector<std::size_t> perm(m.subject_count());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(9);
  rng.shuffle(perm);
  const auto permuted = mos_from_ratings(m.select_subjects(perm));
  for (std::size_t j = 0; j < m.video_count(); ++j) {
    CHECK(permuted.entries[j].mos == Approx(mos.entries[j].mos).epsilon(1e-12));
  }

  // Reverse the video order.
  std::vector<std::vector<double>> reversed = rows;
  for (auto& r : reversed) std::reverse(r.begin(), r.end());
  const auto rev = mos_from_ratings(RatingMatrix::full(reversed));
  for (std::size_t j = 0; j < m.video_count(); ++j) {
    CHECK(rev.entries[m.video_count() - 1 - j].mos == Approx(mos.entries[j].mos).epsilon(1e-12));
  }
}

TEST_CASE("missing ratings reduce the per-video count") {
  RatingMatrix m({"a", "b", "c"}, {"x", "y", "z"}, {2, 4, 5, 6, 8, 7, 3, 0, 9}, {1, 1, 1, 1, 1, 1, 1, 0, 1});
  const auto mos = mos_from_ratings(m);
  CHECK(mos.entries[0].count == 3);
  CHECK(mos.entries[1].count == 2);
  CHECK(mos.entries[2].count == 3);
}

TEST_CASE("screen_subjects") {
  SUBCASE("a subject on the consensus is never counted") {
    auto rows = oracle::synthetic_study(9, 40, 5);
    std::vector<double> consensus(40);
    for (std::size_t j = 0; j < 40; ++j) {
      double s = 0.0;
      for (const auto& r : rows) s += r[j];
      consensus[j] = s / 9.0;
    }
    rows.push_back(consensus);
    // The mean including the consensus rater equals the consensus itself.
    const auto report = screen_subjects(RatingMatrix::full(rows));
    CHECK(report.subjects.back().above == 0);
    CHECK(report.subjects.back().below == 0);
    CHECK_FALSE(report.subjects.back().rejected);
  }

  SUBCASE("one-sided subject: matches the reference procedure") {
    // 19 subjects near 1, one subject always at 10. A single point among 20
    // cannot exceed sqrt(20) sample deviations and the asymmetry test would
    // excuse it anyway, so the reference procedure keeps the subject.
    Rng rng(11);
    std::vector<std::vector<double>> rows(20, std::vector<double>(600));
    for (std::size_t i = 0; i < 19; ++i) {
      for (auto& v : rows[i]) v = 1.0 + (rng.uniform() < 0.3 ? 1.0 : 0.0);
    }
    std::fill(rows[19].begin(), rows[19].end(), 10.0);
    const auto report = screen_subjects(RatingMatrix::full(rows));
    const auto ref = oracle::bt500(rows);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(report.subjects[i].above == static_cast<std::size_t>(ref.p[i]));
      CHECK(report.subjects[i].below == static_cast<std::size_t>(ref.q[i]));
      CHECK(report.subjects[i].rejected == ref.rejected[i]);
    }
    CHECK_FALSE(report.subjects[19].rejected);
  }

  SUBCASE("symmetric outlier is rejected, and re-screening keeps everyone") {
    Rng rng(12);
    std::vector<std::vector<double>> rows(20, std::vector<double>(600));
    for (std::size_t i = 0; i < 19; ++i) {
      for (auto& v : rows[i]) v = rng.uniform(3.0, 8.0);
    }
    for (std::size_t j = 0; j < 600; ++j) rows[19][j] = (j % 2 == 0) ? 1.0 : 10.0;
    const RatingMatrix m = RatingMatrix::full(rows);
    const auto report = screen_subjects(m);
    const auto ref = oracle::bt500(rows);
    CHECK(report.subjects[19].rejected);
    CHECK(ref.rejected[19]);
    CHECK(report.rejected_count() == 1);
    for (std::size_t i = 0; i < 20; ++i) CHECK(report.subjects[i].rejected == ref.rejected[i]);

    const RatingMatrix kept = exclude_rejected(m, report);
    CHECK(kept.subject_count() == 19);
    CHECK(screen_subjects(kept).rejected_count() == 0);
  }

  SUBCASE("clean studies are a fixed point and match the reference counts") {
    for (std::uint64_t seed = 20; seed < 30; ++seed) {
      const auto rows = oracle::synthetic_study(20, 60, seed);
      const RatingMatrix m = RatingMatrix::full(rows);
      const auto report = screen_subjects(m);
      const auto ref = oracle::bt500(rows);
      for (std::size_t i = 0; i < 20; ++i) {
        CHECK(report.subjects[i].above == static_cast<std::size_t>(ref.p[i]));
        CHECK(report.subjects[i].below == static_cast<std::size_t>(ref.q[i]));
        CHECK(report.subjects[i].above + report.subjects[i].below <= report.subjects[i].rated);
      }
      if (report.rejected_count() == 0) {
        const RatingMatrix again = exclude_rejected(m, report);
        CHECK(again.subject_count() == m.subject_count());
      }
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS(screen_subjects(RatingMatrix::full({})));
    ScreeningPolicy bad;
    bad.kurtosis_low = 5.0;
    CHECK_THROWS(screen_subjects(RatingMatrix::full({{1, 2}, {3, 4}}), bad));
    ScreeningPolicy negative;
    negative.reject_fraction = 0.0;
    CHECK_THROWS(screen_subjects(RatingMatrix::full({{1, 2}, {3, 4}}), negative));
  }
}
