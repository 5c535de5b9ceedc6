#include "mvbfa/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

#include "mvbfa/errors.hpp"
#include "mvbfa/format.hpp"
#include "mvbfa/parallel.hpp"
#include "mvbfa/random.hpp"

namespace mvbfa {

long long countParams(int G, int n, int p, int q, int r) {
  if (G < 1 || n < 1 || p < 1 || q < 0 || r < 0) {
    throw ContractError("countParams: negative or zero dimension");
  }
  if ((q > 0 && q >= n) || (r > 0 && r >= p)) {
    throw ContractError("countParams: need q < n and r < p");
  }
  const long long ln = n, lp = p, lq = q, lr = r;
  const long long rowCov = ln * lq + ln - lq * (lq - 1) / 2;
  const long long colCov = lp * lr + lp - lr * (lr - 1) / 2;
  return (G - 1) + static_cast<long long>(G) * (ln * lp + rowCov + colCov);
}

double covarianceReduction(int d, int k) {
  const double diff = static_cast<double>(d - k);
  return 0.5 * (diff * diff - static_cast<double>(d + k));
}

double bic(double logLik, long long rho, std::size_t N) {
  if (N < 1) throw ContractError("bic: N must be positive");
  return 2.0 * logLik - static_cast<double>(rho) * std::log(static_cast<double>(N));
}

bool betterRecord(const SelectionRecord& a, const SelectionRecord& b) {
  if (a.ok != b.ok) return a.ok;
  if (a.bic != b.bic) return a.bic > b.bic;
  if (a.rho != b.rho) return a.rho < b.rho;
  return std::tie(a.G, a.q, a.r) < std::tie(b.G, b.q, b.r);
}

namespace {

using Cell = std::tuple<int, int, int>;

SelectionRecord fitCell(const DataSet3D& data, const FitConfig& base, Cell cell) {
  const auto [G, q, r] = cell;
  SelectionRecord rec;
  rec.G = G;
  rec.q = q;
  rec.r = r;
  rec.rho = countParams(G, static_cast<int>(data.rows()),
                        static_cast<int>(data.cols()), q, r);
  FitConfig config = base;
  config.G = G;
  config.q = q;
  config.r = r;
  config.seed = deriveSeed(base.seed, {static_cast<std::uint64_t>(G),
                                       static_cast<std::uint64_t>(q),
                                       static_cast<std::uint64_t>(r)});
  try {
    auto fit = std::make_shared<FitResult>(fitMultiStart(data, config));
    rec.logLik = fit->logLik;
    rec.bic = bic(rec.logLik, rec.rho, data.size());
    rec.ok = true;
    rec.fit = std::move(fit);
  } catch (const Error& e) {
    rec.error = e.what();
  }
  return rec;
}

void checkRange(const std::vector<int>& v, const char* name, int lo, int hi) {
  if (v.empty()) throw ContractError(std::string("grid: empty ") + name + " range");
  for (int x : v) {
    if (x < lo || x > hi) {
      throw ContractError(std::string("grid: ") + name + "=" + std::to_string(x) +
                          " outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
    }
  }
}

}  // namespace

SelectionResult gridSearch(const DataSet3D& data, const GridSpec& grid,
                           const FitConfig& config) {
  if (data.empty()) throw InputError("gridSearch: empty dataset");
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  checkRange(grid.Gs, "G", 1, static_cast<int>(data.size()));
  checkRange(grid.qs, "q", 0, n - 1);
  checkRange(grid.rs, "r", 0, p - 1);

  const std::set<int> Gs(grid.Gs.begin(), grid.Gs.end());
  std::set<int> qs(grid.qs.begin(), grid.qs.end());
  std::set<int> rs(grid.rs.begin(), grid.rs.end());
  std::map<Cell, SelectionRecord> done;

  auto fitMissing = [&] {
    std::vector<Cell> todo;
    for (int G : Gs)
      for (int q : qs)
        for (int r : rs)
          if (!done.count({G, q, r})) todo.emplace_back(G, q, r);
    std::vector<SelectionRecord> fitted(todo.size());
    parallelFor(todo.size(),
                [&](std::size_t k) { fitted[k] = fitCell(data, config, todo[k]); });
    for (std::size_t k = 0; k < todo.size(); ++k) done[todo[k]] = std::move(fitted[k]);
  };

  auto winner = [&]() -> const SelectionRecord* {
    const SelectionRecord* best = nullptr;
    for (const auto& [cell, rec] : done) {
      if (rec.ok && (!best || betterRecord(rec, *best))) best = &rec;
    }
    return best;
  };

  fitMissing();
  while (grid.expand) {
    const SelectionRecord* best = winner();
    if (!best) break;
    bool grew = false;
    const int nextQ = best->q + 1;
    if (best->q == *qs.rbegin() && nextQ < n && covarianceReduction(n, nextQ) > 0) {
      qs.insert(nextQ);
      grew = true;
    }
    const int nextR = best->r + 1;
    if (best->r == *rs.rbegin() && nextR < p && covarianceReduction(p, nextR) > 0) {
      rs.insert(nextR);
      grew = true;
    }
    if (!grew) break;
    fitMissing();
  }

  SelectionResult out;
  for (auto& [cell, rec] : done) out.records.push_back(rec);
  const SelectionRecord* best = winner();
  if (!best) {
    std::string message = "every grid cell failed";
    for (const auto& rec : out.records) {
      message += "; (" + std::to_string(rec.G) + "," + std::to_string(rec.q) + "," +
                 std::to_string(rec.r) + "): " + rec.error;
    }
    throw FitError(message);
  }
  out.best = *best;
  return out;
}

void writeSelectionTable(std::ostream& out,
                         const std::vector<SelectionRecord>& records) {
  out << "G,q,r,logLik,rho,bic,converged\n";
  for (const auto& rec : records) {
    out << rec.G << ',' << rec.q << ',' << rec.r << ',';
    if (rec.ok) {
      out << formatDouble(rec.logLik) << ',' << rec.rho << ','
          << formatDouble(rec.bic) << ',' << (rec.fit && rec.fit->converged ? 1 : 0);
    } else {
      out << "nan," << rec.rho << ",nan,failed";
    }
    out << '\n';
  }
}

}  // namespace mvbfa
