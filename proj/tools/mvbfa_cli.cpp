// mvbfa: fit, classify, simulate and evaluate bilinear factor mixtures.
//
// Exit codes:
//   0 success
//   2 bad command line or invalid grid
//   3 unreadable or malformed input
//   4 input whose shape disagrees with its header / model dimensions
//   5 numerical degeneracy
//   6 every start or grid cell failed
//   1 anything else

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvbfa/data_io.hpp"
#include "mvbfa/errors.hpp"
#include "mvbfa/format.hpp"
#include "mvbfa/metrics.hpp"
#include "mvbfa/model_io.hpp"
#include "mvbfa/random.hpp"
#include "mvbfa/selection.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace mvbfa;

namespace {

constexpr const char* kReportSchema = "mvbfa-report/1";

enum ExitCode { kOk = 0, kUsage = 2, kInput = 3, kSchema = 4, kNumerical = 5, kFitFailed = 6 };

std::vector<int> parseRange(const std::string& text, const char* flag) {
  long long lo = 0, hi = 0;
  const auto colon = text.find(':');
  const bool ok = colon == std::string::npos
                      ? parseInt(text, lo) && (hi = lo, true)
                      : parseInt(std::string_view(text).substr(0, colon), lo) &&
                            parseInt(std::string_view(text).substr(colon + 1), hi);
  if (!ok || lo < 0 || hi < lo || hi > 10000) {
    throw ContractError(std::string(flag) + ": expected a:b with 0 <= a <= b, got '" + text + "'");
  }
  std::vector<int> out;
  for (long long v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
  return out;
}

bool isIdx(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char magic[4] = {};
  if (!in.read(reinterpret_cast<char*>(magic), 4)) return false;
  return magic[0] == 0 && magic[1] == 0 && magic[2] == 8 && magic[3] == 3;
}

struct Inputs {
  std::string data;
  std::string labels;
  std::string digits = "1,7";
  bool noPreprocess = false;
};

// T3 with optional label file, or IDX images with --labels as the IDX label
// file. Returned labels are the file's labels (truth or supervision).
DataSet3D loadData(const Inputs& in, std::uint64_t seed) {
  if (!fs::exists(in.data)) throw InputError("cannot open " + in.data);
  if (isIdx(in.data)) {
    if (in.labels.empty()) throw InputError("IDX images need --labels <idx label file>");
    std::set<int> keep;
    std::stringstream ss(in.digits);
    for (std::string tok; std::getline(ss, tok, ',');) {
      long long d;
      if (!parseInt(tok, d)) throw InputError("--digits: bad entry '" + tok + "'");
      keep.insert(static_cast<int>(d));
    }
    IdxOptions opts;
    opts.addNoise = opts.offsetNonzero = !in.noPreprocess;
    opts.seed = deriveSeed(seed, {0x1dull});
    return readIdxImages(in.data, in.labels, keep, opts);
  }
  DataSet3D data = readT3(fs::path(in.data));
  if (!in.labels.empty()) {
    data.labels = readLabels(in.labels);
    if (data.labels.size() != data.size()) {
      throw SchemaError("labels file has " + std::to_string(data.labels.size()) +
                        " entries for " + std::to_string(data.size()) + " observations");
    }
  }
  data.validate();
  return data;
}

struct FitFlags {
  Inputs inputs;
  std::string G = "1:3", q = "1:3", r = "1:3";
  int starts = 10, burn = 10, maxIters = 1000;
  std::uint64_t seed = 0;
  std::string out;
  bool heatmaps = false;
  bool noExpand = false;
  double supervision = -1.0;
};

void addFitOptions(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--data", f.inputs.data, "T3 file or IDX image file")->required();
  cmd->add_option("--labels", f.inputs.labels, "label file (T3) or IDX label file");
  cmd->add_option("--digits", f.inputs.digits, "IDX digits to keep, comma separated");
  cmd->add_flag("--raw-pixels", f.inputs.noPreprocess, "skip IDX noise and offset");
  cmd->add_option("--G", f.G, "component range a:b");
  cmd->add_option("--q", f.q, "column factor range a:b");
  cmd->add_option("--r", f.r, "row factor range a:b");
  cmd->add_option("--starts", f.starts, "emEM random starts")->check(CLI::PositiveNumber);
  cmd->add_option("--burn", f.burn, "burn-in cycles per start")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", f.maxIters, "cycle cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_flag("--heatmaps", f.heatmaps, "write location heatmaps (PGM)");
  cmd->add_flag("--no-expand", f.noExpand, "keep factor ranges fixed");
}

std::string joinRange(const std::vector<int>& v) {
  return std::to_string(v.front()) + ":" + std::to_string(v.back());
}

void writeMetrics(std::ostream& rep, const std::string& scope,
                  const std::vector<int>& truth, const std::vector<int>& pred) {
  rep << "[metrics]\n";
  rep << "scope = " << scope << "\n";
  rep << "count = " << truth.size() << "\n";
  if (truth.size() < 2) return;
  rep << "ari = " << formatDouble(ari(truth, pred)) << "\n";
  rep << "mcr = " << formatDouble(mcr(truth, pred)) << "\n";
  const auto table = confusion(truth, pred);
  rep << "[confusion]\n";
  rep << "truth\\predicted";
  for (int l : table.predictedLabels) rep << ',' << l;
  rep << '\n';
  for (std::size_t a = 0; a < table.truthLabels.size(); ++a) {
    rep << table.truthLabels[a];
    for (Eigen::Index b = 0; b < table.counts.cols(); ++b)
      rep << ',' << table.counts(static_cast<Eigen::Index>(a), b);
    rep << '\n';
  }
}

// Shared by fit and classify. truth holds reference labels for scoring (may
// be empty); scoreMask selects which observations are scored.
int runFit(const std::string& command, const FitFlags& f, DataSet3D data,
           const std::vector<int>& truth, const std::vector<bool>& scoreMask) {
  GridSpec grid{parseRange(f.G, "--G"), parseRange(f.q, "--q"), parseRange(f.r, "--r"),
                !f.noExpand};
  FitConfig config;
  config.nStarts = f.starts;
  config.burnInIters = f.burn;
  config.maxIters = f.maxIters;
  config.seed = f.seed;

  const auto result = gridSearch(data, grid, config);
  const auto& best = result.best;
  const auto& fit = *best.fit;
  const auto predicted = mapClassify(fit.resp);

  const fs::path out(f.out);
  fs::create_directories(out);
  std::ostringstream rep;
  rep << "[report]\nschema = " << kReportSchema << "\ncommand = " << command << "\n";
  rep << "[config]\n";
  rep << "data = " << f.inputs.data << "\n";
  if (!f.inputs.labels.empty()) rep << "labels = " << f.inputs.labels << "\n";
  rep << "N = " << data.size() << "\nn = " << data.rows() << "\np = " << data.cols() << "\n";
  rep << "labeled = " << data.labeledCount() << "\n";
  rep << "G = " << joinRange(grid.Gs) << "\nq = " << joinRange(grid.qs)
      << "\nr = " << joinRange(grid.rs) << "\n";
  rep << "expand = " << (grid.expand ? 1 : 0) << "\n";
  rep << "starts = " << f.starts << "\nburn = " << f.burn << "\nmax-iters = " << f.maxIters
      << "\nseed = " << f.seed << "\n";
  if (f.supervision >= 0.0) rep << "supervision = " << formatDouble(f.supervision) << "\n";
  rep << "[selection]\n";
  writeSelectionTable(rep, result.records);
  rep << "[result]\n";
  rep << "G = " << best.G << "\nq = " << best.q << "\nr = " << best.r << "\n";
  rep << "logLik = " << formatDouble(best.logLik) << "\nrho = " << best.rho
      << "\nbic = " << formatDouble(best.bic) << "\n";
  rep << "converged = " << (fit.converged ? 1 : 0) << "\niterations = " << fit.iterations << "\n";
  rep << "[weights]\ncomponent,weight\n";
  for (std::size_t g = 0; g < fit.params.G(); ++g)
    rep << g + 1 << ',' << formatDouble(fit.params.components[g].weight) << '\n';

  if (!truth.empty()) {
    std::vector<int> t, p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (scoreMask[i]) {
        t.push_back(truth[i]);
        p.push_back(predicted[i]);
      }
    }
    writeMetrics(rep, command == "classify" ? "unlabeled" : "all", t, p);
  }

  std::vector<std::string> artifacts;
  writeModel(fit.params, out / "model.txt");
  artifacts.push_back("model = " + (out / "model.txt").string());
  writeLabels(predicted, out / "classes.txt");
  artifacts.push_back("classes = " + (out / "classes.txt").string());
  {
    std::ostringstream table;
    writeSelectionTable(table, result.records);
    writeFileAtomic(out / "selection.csv", table.str());
    artifacts.push_back("selection = " + (out / "selection.csv").string());
  }
  if (f.heatmaps) {
    for (std::size_t g = 0; g < fit.params.G(); ++g) {
      const fs::path path = out / ("location_" + std::to_string(g + 1) + ".pgm");
      writeHeatmapPgm(fit.params.components[g].location, path);
      artifacts.push_back("heatmap" + std::to_string(g + 1) + " = " + path.string());
    }
  }
  rep << "[artifacts]\n";
  for (const auto& a : artifacts) rep << a << "\n";
  writeFileAtomic(out / "report.txt", rep.str());
  std::cout << rep.str();
  return kOk;
}

int cmdFit(const FitFlags& f) {
  DataSet3D data = loadData(f.inputs, f.seed);
  // Labels given to fit are reference labels only.
  std::vector<int> truth = data.labels;
  data.labels.clear();
  return runFit("fit", f, std::move(data), truth, std::vector<bool>(truth.size(), true));
}

int cmdClassify(const FitFlags& f) {
  DataSet3D data = loadData(f.inputs, f.seed);
  if (!data.hasLabels()) throw InputError("classify needs labels (--labels or a T3 labels line)");
  if (f.supervision < 0.0) {
    // Labels are the supervision; nothing to score against.
    return runFit("classify", f, std::move(data), {}, {});
  }
  if (f.supervision > 1.0) throw ContractError("--supervision must lie in [0, 1]");
  const std::vector<int> truth = data.labels;
  data.labels = maskLabels(truth, f.supervision, deriveSeed(f.seed, {0x5e11ull}));
  std::vector<bool> mask(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) mask[i] = data.labels[i] == 0;
  return runFit("classify", f, std::move(data), truth, mask);
}

struct SimFlags {
  std::string preset = "sim1";
  int reps = 1;
  int N = 200;
  std::uint64_t seed = 0;
  std::string out;
};

int cmdSimulate(const SimFlags& f) {
  const auto truth = presetTruth(f.preset);
  const fs::path out(f.out);
  fs::create_directories(out);
  writeModel(truth, out / "truth.model");
  std::ostringstream manifest;
  manifest << "[manifest]\nschema = " << kReportSchema << "\npreset = " << f.preset
           << "\nreps = " << f.reps << "\nN = " << f.N << "\nseed = " << f.seed
           << "\ntruth = " << (out / "truth.model").string() << "\n[files]\n";
  for (int k = 1; k <= f.reps; ++k) {
    const auto data = generate({truth, static_cast<std::size_t>(f.N),
                                deriveSeed(f.seed, {0x5151ull, static_cast<std::uint64_t>(k)})});
    char name[32];
    std::snprintf(name, sizeof name, "rep_%03d.t3", k);
    writeT3(data, out / name);
    manifest << (out / name).string() << "\n";
  }
  writeFileAtomic(out / "manifest.txt", manifest.str());
  std::cout << manifest.str();
  return kOk;
}

struct EvalFlags {
  std::string truthModel;
  std::vector<std::string> models;
  std::vector<std::string> data;
  std::string labels;
  std::string predicted;
};

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmdEvaluate(const EvalFlags& f) {
  std::ostringstream rep;
  rep << "[report]\nschema = " << kReportSchema << "\ncommand = evaluate\n";
  if (!f.predicted.empty()) {
    if (f.labels.empty()) throw ContractError("--predicted needs --labels");
    const auto truth = readLabels(f.labels);
    const auto pred = readLabels(f.predicted);
    if (truth.size() != pred.size()) {
      throw SchemaError("label files differ in length: " + std::to_string(truth.size()) +
                        " vs " + std::to_string(pred.size()));
    }
    writeMetrics(rep, "labels", truth, pred);
    std::cout << rep.str();
    return kOk;
  }
  if (f.truthModel.empty() || f.models.empty()) {
    throw ContractError("evaluate needs --truth with --model, or --labels with --predicted");
  }
  if (!f.data.empty() && f.data.size() != f.models.size()) {
    throw ContractError("give one --data per --model");
  }
  const auto truth = readModel(fs::path(f.truthModel));
  const std::size_t G = truth.G();
  std::vector<std::vector<double>> norms(G);
  std::vector<double> aris, mcrs;
  rep << "[replicates]\nmodel";
  for (std::size_t g = 0; g < G; ++g) rep << ",norm" << g + 1;
  if (!f.data.empty()) rep << ",ari,mcr";
  rep << '\n';
  for (std::size_t k = 0; k < f.models.size(); ++k) {
    const auto model = readModel(fs::path(f.models[k]));
    if (model.dims.n != truth.dims.n || model.dims.p != truth.dims.p) {
      throw SchemaError(f.models[k] + ": dimensions " + std::to_string(model.dims.n) + "x" +
                        std::to_string(model.dims.p) + " do not match the truth " +
                        std::to_string(truth.dims.n) + "x" + std::to_string(truth.dims.p));
    }
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(model.G()));
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < model.G(); ++h)
        cost(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) =
            matOneNorm(truth.components[g].location - model.components[h].location);
    const auto match = minCostAssignment(cost);
    rep << f.models[k];
    for (std::size_t g = 0; g < G; ++g) {
      const int h = match[g];
      const double v = h < 0 ? std::nan("") : cost(static_cast<Eigen::Index>(g), h);
      if (h >= 0) norms[g].push_back(v);
      rep << ',' << formatDouble(v);
    }
    if (!f.data.empty()) {
      const auto data = readT3(fs::path(f.data[k]));
      if (!data.hasLabels()) throw InputError(f.data[k] + ": no labels line to score against");
      const DataSet3D bare{data.obs, {}};
      const auto pred = mapClassify(responsibilities(bare, model));
      aris.push_back(ari(data.labels, pred));
      mcrs.push_back(mcr(data.labels, pred));
      rep << ',' << formatDouble(aris.back()) << ',' << formatDouble(mcrs.back());
    }
    rep << '\n';
  }
  rep << "[summary]\nreplicates = " << f.models.size() << "\n";
  for (std::size_t g = 0; g < G; ++g) {
    if (norms[g].empty()) continue;
    rep << "norm" << g + 1 << ".mean = " << formatDouble(mean(norms[g])) << "\n";
    rep << "norm" << g + 1 << ".sd = " << formatDouble(sd(norms[g])) << "\n";
  }
  if (!aris.empty()) {
    rep << "ari.mean = " << formatDouble(mean(aris)) << "\nari.sd = " << formatDouble(sd(aris))
        << "\nmcr.mean = " << formatDouble(mean(mcrs)) << "\nmcr.sd = " << formatDouble(sd(mcrs))
        << "\n";
  }
  std::cout << rep.str();
  return kOk;
}

int fail(int code, const std::string& what) {
  std::cerr << "mvbfa: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Per-cycle work matrices are a few MB; without this glibc maps and unmaps
  // them every cycle and the fit spends its time in the kernel.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Mixtures of matrix variate bilinear factor analyzers"};
  app.require_subcommand(1);

  FitFlags fitFlags;
  auto* fit = app.add_subcommand("fit", "cluster with BIC selection over (G, q, r)");
  addFitOptions(fit, fitFlags);

  FitFlags classFlags;
  auto* classify = app.add_subcommand("classify", "semi-supervised classification");
  addFitOptions(classify, classFlags);
  classify->add_option("--supervision", classFlags.supervision,
                       "treat labels as truth and keep this fraction as supervision");

  SimFlags simFlags;
  auto* simulate = app.add_subcommand("simulate", "write replicate datasets from a preset");
  simulate->add_option("--preset", simFlags.preset, "sim1 or sim2");
  simulate->add_option("--reps", simFlags.reps, "replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--N", simFlags.N, "observations per replicate")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", simFlags.seed, "random seed");
  simulate->add_option("--out", simFlags.out, "output directory")->required();

  EvalFlags evalFlags;
  auto* evaluate = app.add_subcommand("evaluate", "score fitted models or label files");
  evaluate->add_option("--truth", evalFlags.truthModel, "ground-truth model file");
  evaluate->add_option("--model", evalFlags.models, "fitted model file (repeatable)");
  evaluate->add_option("--data", evalFlags.data, "labeled T3 per model, for ARI/MCR");
  evaluate->add_option("--labels", evalFlags.labels, "reference label file");
  evaluate->add_option("--predicted", evalFlags.predicted, "predicted label file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fit) return cmdFit(fitFlags);
    if (*classify) return cmdClassify(classFlags);
    if (*simulate) return cmdSimulate(simFlags);
    return cmdEvaluate(evalFlags);
  } catch (const ContractError& e) {
    return fail(kUsage, e.what());
  } catch (const SchemaError& e) {
    return fail(kSchema, e.what());
  } catch (const InputError& e) {
    return fail(kInput, e.what());
  } catch (const NumericalError& e) {
    return fail(kNumerical, e.what());
  } catch (const FitError& e) {
    return fail(kFitFailed, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kInput, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}
