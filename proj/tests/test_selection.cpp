#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvbfa/data_io.hpp"
#include "mvbfa/errors.hpp"
#include "mvbfa/selection.hpp"
#include "test_support.hpp"

using namespace mvbfa;
using namespace mvbfa::testing;

namespace {

// Free entries of a d x k loading with zeros above the diagonal, plus d
// noise variances.
long long scaleEntries(int d, int k) {
  long long count = d;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j)
      if (j <= i) ++count;
  return count;
}

long long combinatorialCount(int G, int n, int p, int q, int r) {
  return (G - 1) + G * (static_cast<long long>(n) * p + scaleEntries(n, q) + scaleEntries(p, r));
}

// Rank of the Jacobian of (lower-trapezoidal L, diag) -> vech(diag + L L')
// at a random point.
Eigen::Index jacobianRank(std::mt19937_64& rng, int d, int k) {
  const Matrix l = randomMatrix(rng, d, k);
  std::vector<std::pair<int, int>> free;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j)
      if (j <= i) free.emplace_back(i, j);
  const Eigen::Index rows = d * (d + 1) / 2;
  Matrix jac = Matrix::Zero(rows, static_cast<Eigen::Index>(free.size()) + d);
  Eigen::Index row = 0;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b, ++row) {
      // d(L L')_{ab} / dL_{ij} = delta_{ai} L_{bj} + delta_{bi} L_{aj}
      for (std::size_t c = 0; c < free.size(); ++c) {
        const auto [i, j] = free[c];
        double v = 0.0;
        if (a == i) v += l(b, j);
        if (b == i) v += l(a, j);
        jac(row, static_cast<Eigen::Index>(c)) = v;
      }
      if (a == b) jac(row, static_cast<Eigen::Index>(free.size()) + a) = 1.0;
    }
  }
  Eigen::FullPivLU<Matrix> lu(jac);
  lu.setThreshold(1e-9);
  return lu.rank();
}

DataSet3D unlabeled(const DataSet3D& d) { return DataSet3D{d.obs, {}}; }

}  // namespace

TEST_CASE("countParams") {
  CHECK(countParams(2, 10, 7, 2, 3) == 249);
  CHECK(countParams(1, 4, 3, 0, 0) == 4 * 3 + 4 + 3);
  CHECK_THROWS_AS(countParams(0, 4, 3, 0, 0), ContractError);
  CHECK_THROWS_AS(countParams(1, 4, 3, 4, 0), ContractError);
  CHECK_THROWS_AS(countParams(1, 4, 3, -1, 0), ContractError);

  SUBCASE("matches the entry-counting oracle") {
    for (int G = 1; G <= 4; ++G)
      for (int n = 1; n <= 10; ++n)
        for (int p = 1; p <= 10; ++p)
          for (int q = 0; q < n; ++q)
            for (int r = 0; r < p; ++r)
              REQUIRE(countParams(G, n, p, q, r) == combinatorialCount(G, n, p, q, r));
  }
  SUBCASE("scale counts equal the local dimension where factors reduce") {
    std::mt19937_64 rng(41);
    for (int d = 1; d <= 10; ++d) {
      for (int k = 0; k < d; ++k) {
        if (covarianceReduction(d, k) <= 0.0) continue;
        CHECK(jacobianRank(rng, d, k) == scaleEntries(d, k));
      }
    }
  }
}

TEST_CASE("covarianceReduction") {
  CHECK(covarianceReduction(10, 2) == 26.0);
  CHECK(covarianceReduction(4, 2) < 0.0);
  CHECK(covarianceReduction(7, 3) == 3.0);
}

TEST_CASE("bic") {
  CHECK(bic(0.0, 0, 10) == 0.0);
  CHECK(bic(-100.0, 10, 100) == doctest::Approx(-246.0517).epsilon(1e-6));
  for (long long rho = 1; rho < 50; ++rho) CHECK(bic(-3.0, rho + 1, 37) < bic(-3.0, rho, 37));
}

TEST_CASE("gridSearch on two well separated components") {
  const auto data = generate({presetTruth("sim1"), 200, 1234});
  FitConfig config;
  config.seed = 7;
  config.nStarts = 5;
  GridSpec grid{{1, 2, 3}, {1, 2, 3, 4}, {1, 2, 3, 4}, true};
  const auto result = gridSearch(unlabeled(data), grid, config);
  CHECK(result.best.G == 2);
  CHECK(result.best.q == 2);
  CHECK(result.best.r == 3);
  CHECK(result.records.size() == 48);
  for (const auto& rec : result.records) {
    if (!rec.ok) continue;
    CHECK(rec.bic == bic(rec.logLik, rec.rho, data.size()));
    CHECK(rec.rho == countParams(rec.G, 10, 7, rec.q, rec.r));
    CHECK(rec.logLik == rec.fit->logLik);
  }
}

TEST_CASE("gridSearch prefers the diagonal single component") {
  std::mt19937_64 rng(42);
  MixtureParams truth;
  truth.dims = {4, 3, 0, 0};
  truth.components = {{1.0, randomMatrix(rng, 4, 3), Matrix(4, 0), Matrix(3, 0),
                       randomPositive(rng, 4), randomPositive(rng, 3)}};
  const auto data = generate({truth, 300, 5});
  FitConfig config;
  config.seed = 3;
  config.nStarts = 3;
  const auto result = gridSearch(unlabeled(data), {{1, 2}, {0, 1}, {0, 1}, true}, config);
  CHECK(result.best.G == 1);
  CHECK(result.best.q == 0);
  CHECK(result.best.r == 0);
}

TEST_CASE("gridSearch factor expansion") {
  const auto data = unlabeled(generate({presetTruth("sim1"), 200, 99}));
  FitConfig config;
  config.seed = 11;
  config.nStarts = 3;

  SUBCASE("winner at the top grows the range") {
    const auto result = gridSearch(data, {{2}, {1}, {3}, true}, config);
    CHECK(result.best.q == 2);
    const bool triedThree = std::any_of(result.records.begin(), result.records.end(),
                                        [](const SelectionRecord& r) { return r.q == 3; });
    CHECK(triedThree);
  }
  SUBCASE("no growth when the next count does not reduce") {
    std::mt19937_64 rng(43);
    const auto small = unlabeled(generate({randomMixture(rng, 1, 4, 3, 2, 1), 200, 8}));
    const auto result = gridSearch(small, {{1}, {2}, {1}, true}, config);
    CHECK(result.records.size() == 1);
    CHECK(result.best.q == 2);
  }
  SUBCASE("disabled expansion") {
    const auto result = gridSearch(data, {{2}, {1}, {3}, false}, config);
    CHECK(result.records.size() == 1);
  }
}

TEST_CASE("gridSearch determinism and enumeration order") {
  std::mt19937_64 rng(44);
  const auto truth = randomMixture(rng, 2, 5, 4, 1, 1, 3.0);
  const auto data = unlabeled(generate({truth, 120, 17}));
  FitConfig config;
  config.seed = 21;
  config.nStarts = 3;
  const auto a = gridSearch(data, {{1, 2, 3}, {0, 1, 2}, {0, 1}, true}, config);
  const auto b = gridSearch(data, {{3, 1, 2}, {2, 0, 1}, {1, 0}, true}, config);
  const auto c = gridSearch(data, {{1, 2, 3}, {0, 1, 2}, {0, 1}, true}, config);
  CHECK(a.best.G == b.best.G);
  CHECK(a.best.q == b.best.q);
  CHECK(a.best.r == b.best.r);
  CHECK(a.best.bic == b.best.bic);
  REQUIRE(a.records.size() == c.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].bic == c.records[k].bic);
    CHECK(a.records[k].bic == b.records[k].bic);
  }
}

TEST_CASE("gridSearch contract") {
  const auto data = unlabeled(generate({presetTruth("sim1"), 50, 1}));
  FitConfig config;
  CHECK_THROWS_AS(gridSearch(data, {{}, {1}, {1}, true}, config), ContractError);
  CHECK_THROWS_AS(gridSearch(data, {{1}, {10}, {1}, true}, config), ContractError);
  CHECK_THROWS_AS(gridSearch(data, {{1}, {1}, {7}, true}, config), ContractError);
  config.nStarts = 1;
  CHECK_THROWS_AS(gridSearch(data, {{40}, {1}, {1}, false}, config), FitError);
}

TEST_CASE("betterRecord") {
  SelectionRecord a{2, 1, 1, 0.0, 10, -5.0, true, "", nullptr};
  SelectionRecord b = a;
  b.bic = -6.0;
  CHECK(betterRecord(a, b));
  CHECK_FALSE(betterRecord(b, a));
  b.bic = -5.0;
  b.rho = 11;
  CHECK(betterRecord(a, b));
  b.rho = 10;
  b.G = 3;
  CHECK(betterRecord(a, b));
  b.G = 2;
  b.q = 0;
  CHECK(betterRecord(b, a));
}

TEST_CASE("writeSelectionTable") {
  SelectionRecord ok{1, 0, 1, -12.5, 7, -40.0, true, "", nullptr};
  SelectionRecord bad{2, 1, 1, 0.0, 15, 0.0, false, "empty component", nullptr};
  std::ostringstream out;
  writeSelectionTable(out, {ok, bad});
  CHECK(out.str() ==
        "G,q,r,logLik,rho,bic,converged\n1,0,1,-12.5,7,-40,0\n2,1,1,nan,15,nan,failed\n");
}
