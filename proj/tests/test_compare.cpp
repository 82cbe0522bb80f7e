#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "crvae/compare.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crvae;

namespace {

// Maps each distinct phrase to its own basis vector, so tag-pair cosine is
// exactly 1 for equal phrases and exactly 0 otherwise.
class BasisPhraseBackend : public PhraseBackend {
 public:
  BasisPhraseBackend() : PhraseBackend(BackendConfig{}) {}

  Matd embed(const std::vector<std::string>& phrases) override {
    Matd out = Matd::Zero(static_cast<Eigen::Index>(phrases.size()), kDim);
    for (size_t i = 0; i < phrases.size(); ++i) {
      auto it = index_.try_emplace(phrases[i], static_cast<int>(index_.size())).first;
      out(static_cast<Eigen::Index>(i), it->second) = 1.0;
    }
    return out;
  }

 private:
  std::map<std::string, int> index_;
};

class WrongShapeBackend : public PhraseBackend {
 public:
  WrongShapeBackend() : PhraseBackend(BackendConfig{}) {}
  Matd embed(const std::vector<std::string>& phrases) override {
    return Matd::Zero(static_cast<Eigen::Index>(phrases.size()) + 1, kDim);
  }
};

TagSet make_set(int id, const std::vector<std::string>& tags) {
  TagSet s;
  s.cluster_id = id;
  s.tags = tags;
  return s;
}

std::vector<std::string> tag_range(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(stem + " " + std::to_string(i));
  return out;
}

// Independent recomputation: all pairwise cosines, mean of the largest
// min(10, |A||B|); zero-norm rows contribute cosine 0.
double brute_pair_similarity(const Matd& a, const Matd& b) {
  std::vector<double> cosines;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double na = a.row(i).norm(), nb = b.row(j).norm();
      cosines.push_back(na > 0 && nb > 0 ? (a.row(i) / na).dot(b.row(j) / nb) : 0.0);
    }
  std::sort(cosines.begin(), cosines.end(), std::greater<double>());
  const size_t top = std::min<size_t>(10, cosines.size());
  double sum = 0.0;
  for (size_t k = 0; k < top; ++k) sum += cosines[k];
  return sum / static_cast<double>(top);
}

}  // namespace

TEST_CASE("embed_tags: one row per tag, failures are loud") {
  BackendConfig cfg;
  MockPhraseBackend mock(cfg);
  TagSet set = make_set(0, tag_range("tag", 10));
  Matd m = embed_tags(set, mock);
  CHECK(m.rows() == 10);
  CHECK(m.cols() == 768);

  TagSet bad = make_set(1, {});
  bad.uninterpreted = true;
  CHECK_THROWS_AS(embed_tags(bad, mock), ContractViolation);

  WrongShapeBackend wrong;
  CHECK_THROWS_AS(embed_tags(set, wrong), BackendError);
}

TEST_CASE("pair similarity: identical and orthogonal tag sets") {
  Matd a = Matd::Zero(10, 30), b = Matd::Zero(10, 30);
  for (int i = 0; i < 10; ++i) {
    a(i, i) = 1.0;       // e0..e9
    b(i, 10 + i) = 1.0;  // e10..e19
  }
  CHECK(pair_similarity(a, a) == 1.0);  // ten exact 1.0 cosines on the diagonal
  CHECK(pair_similarity(a, b) == 0.0);  // no overlap at all
  CHECK_THROWS_AS(pair_similarity(Matd(0, 30), a), ContractViolation);
}

TEST_CASE("pair similarity: top-10 mean, symmetry, scale invariance") {
  Rng rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const int na = 2 + static_cast<int>(rng.uniform(0, 6));
    const int nb = 2 + static_cast<int>(rng.uniform(0, 12));
    Matd a = rng.randn<double>(na, 5);
    Matd b = rng.randn<double>(nb, 5);

    const double got = pair_similarity(a, b);
    CHECK(got == doctest::Approx(brute_pair_similarity(a, b)).epsilon(1e-12));
    CHECK(pair_similarity(b, a) == got);  // same multiset of cosines

    // per-row positive rescaling never changes a cosine
    Matd a2 = a;
    for (Eigen::Index i = 0; i < a2.rows(); ++i) a2.row(i) *= 0.3 + i;
    CHECK(pair_similarity(a2, b) == doctest::Approx(got).epsilon(1e-12));
  }

  // fewer than 10 pairs: mean over all of them
  Rng rng2(7);
  Matd a = rng2.randn<double>(2, 4), b = rng2.randn<double>(3, 4);
  CHECK(pair_similarity(a, b) == doctest::Approx(brute_pair_similarity(a, b)).epsilon(1e-12));

  // a zero-norm row scores 0 instead of poisoning the mean
  Matd az = a;
  az.row(1).setZero();
  CHECK(pair_similarity(az, b) == doctest::Approx(brute_pair_similarity(az, b)).epsilon(1e-12));
}

TEST_CASE("similarity matrix: exclusion, sorting, exact values") {
  BasisPhraseBackend basis;
  std::vector<std::string> shared = {"court steps", "verdict day", "appeal filed"};

  std::vector<TagSet> side_a;
  side_a.push_back(make_set(0, tag_range("alpha", 10)));
  side_a.push_back(make_set(1, tag_range("beta", 10)));
  std::vector<std::string> a2 = shared;
  for (const auto& t : tag_range("gamma", 7)) a2.push_back(t);
  side_a.push_back(make_set(2, a2));
  TagSet skip = make_set(3, {});
  skip.uninterpreted = true;
  side_a.push_back(skip);  // must be excluded, not fatal

  std::vector<TagSet> side_b;
  std::vector<std::string> b0 = shared;
  for (const auto& t : tag_range("delta", 7)) b0.push_back(t);
  side_b.push_back(make_set(0, b0));                 // shares 3 tags with A2 -> 0.3
  side_b.push_back(make_set(1, tag_range("alpha", 10)));  // identical to A0 -> 1.0

  std::map<int, std::string> names_a{{0, "storm coverage"}};
  PairSimilarityMatrix m = similarity_matrix(side_a, side_b, basis, names_a, {});

  // rows and columns reordered by best pair similarity, descending
  CHECK(m.row_ids == std::vector<int>{0, 2, 1});
  CHECK(m.col_ids == std::vector<int>{1, 0});
  CHECK(m.row_names == std::vector<std::string>{"storm coverage", "A2", "A1"});
  CHECK(m.col_names == std::vector<std::string>{"B1", "B0"});

  REQUIRE(m.values.rows() == 3);
  REQUIRE(m.values.cols() == 2);
  CHECK(m.values(0, 0) == 1.0);  // A0 x B1: all ten tags coincide
  CHECK(m.values(1, 1) == 0.3);  // A2 x B0: exactly three shared tags
  CHECK(m.values(0, 1) == 0.0);
  CHECK(m.values(1, 0) == 0.0);
  CHECK(m.values(2, 0) == 0.0);
  CHECK(m.values(2, 1) == 0.0);

  // reordering permutes, never rewrites: multiset of scores is preserved
  std::vector<double> direct, sorted_vals;
  for (const auto& ca : {side_a[0], side_a[1], side_a[2]})
    for (const auto& cb : side_b)
      direct.push_back(pair_similarity(embed_tags(ca, basis), embed_tags(cb, basis)));
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) sorted_vals.push_back(m.values(i, j));
  std::sort(direct.begin(), direct.end());
  std::sort(sorted_vals.begin(), sorted_vals.end());
  CHECK(direct == sorted_vals);

  // a side with no interpreted clusters cannot be compared
  std::vector<TagSet> all_skip{skip};
  CHECK_THROWS_AS(similarity_matrix(side_a, all_skip, basis, {}, {}), StageError);
}

TEST_CASE("heatmap export: CSV cells at 4 decimals, names quoted, round-trip") {
  testutil::TempDir tmp("heat");
  PairSimilarityMatrix m;
  m.row_names = {"protest, night", "studio"};
  m.col_names = {"court", "flood \"b-roll\"", "podium"};
  m.values.resize(2, 3);
  m.values << 0.123456, -0.05, 1.0, 0.99995, 0.0, -0.987654;

  const std::string csv_path = tmp.str("heatmap.csv");
  export_heatmap(m, csv_path, tmp.str("heatmap.svg"), "svg", {"crvae v1 seed=2"});

  const std::string text = testutil::slurp(csv_path);
  CHECK(text.rfind("# crvae v1 seed=2\n", 0) == 0);
  CHECK(text.find("0.1235") != std::string::npos);    // rounded, not truncated
  CHECK(text.find("-0.0500") != std::string::npos);   // fixed width
  CHECK(text.find("\"protest, night\"") != std::string::npos);

  PairSimilarityMatrix back = read_heatmap_csv(csv_path);
  CHECK(back.row_names == m.row_names);
  CHECK(back.col_names == m.col_names);
  REQUIRE(back.values.rows() == 2);
  REQUIRE(back.values.cols() == 3);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK(std::abs(back.values(i, j) - m.values(i, j)) <= 1e-4);  // 4-decimal cells

  const std::string svg = testutil::slurp(tmp.str("heatmap.svg"));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("studio") != std::string::npos);

  export_heatmap(m, tmp.str("h2.csv"), tmp.str("h2.ppm"), "ppm", {});
  CHECK(testutil::slurp(tmp.str("h2.ppm")).rfind("P6", 0) == 0);

  CHECK_THROWS_AS(export_heatmap(m, tmp.str("h3.csv"), tmp.str("h3.png"), "png", {}),
                  ConfigError);
  PairSimilarityMatrix empty;
  empty.values.resize(0, 0);
  CHECK_THROWS_AS(export_heatmap(empty, tmp.str("h4.csv"), tmp.str("h4.svg"), "svg", {}),
                  ContractViolation);
}

TEST_CASE("heatmap export: 1x1 matrix and malformed files") {
  testutil::TempDir tmp("heat1");
  PairSimilarityMatrix m;
  m.row_names = {"only"};
  m.col_names = {"one"};
  m.values.resize(1, 1);
  m.values(0, 0) = 0.4242;
  export_heatmap(m, tmp.str("one.csv"), tmp.str("one.svg"), "svg", {});
  PairSimilarityMatrix back = read_heatmap_csv(tmp.str("one.csv"));
  CHECK(back.row_names == std::vector<std::string>{"only"});
  CHECK(back.values(0, 0) == 0.4242);

  testutil::spit(tmp.str("junk.csv"), "pair_id,caption\n1,2\n");
  CHECK_THROWS_AS(read_heatmap_csv(tmp.str("junk.csv")), ParseError);
  testutil::spit(tmp.str("ragged.csv"), ",a,b\nr,0.1\n");
  CHECK_THROWS_AS(read_heatmap_csv(tmp.str("ragged.csv")), ParseError);
}
