#include "mvbfa/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "mvbfa/errors.hpp"
#include "mvbfa/format.hpp"
#include "mvbfa/random.hpp"

namespace mvbfa {

namespace fs = std::filesystem;

DataSet3D generate(const SyntheticSpec& spec) {
  const MixtureParams& truth = spec.truth;
  truth.validate();
  if (spec.N == 0) throw ContractError("generate: N must be positive");
  const Eigen::Index n = truth.dims.n, p = truth.dims.p, q = truth.dims.q,
                     r = truth.dims.r;

  std::vector<double> weights;
  for (const auto& c : truth.components) weights.push_back(c.weight);
  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal;
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix z(rows, cols);
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
    return z;
  };

  std::vector<Vector> sqrtSigma, sqrtPsi;
  for (const auto& c : truth.components) {
    sqrtSigma.push_back(c.rowNoise.cwiseSqrt());
    sqrtPsi.push_back(c.colNoise.cwiseSqrt());
  }

  DataSet3D out;
  out.obs.reserve(spec.N);
  out.labels.reserve(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    const int g = pick(rng);
    const auto& c = truth.components[static_cast<std::size_t>(g)];
    const auto& ss = sqrtSigma[static_cast<std::size_t>(g)];
    const auto& sp = sqrtPsi[static_cast<std::size_t>(g)];
    const Matrix u = draw(q, r);
    const Matrix eB = draw(q, p) * sp.asDiagonal();
    const Matrix eA = ss.asDiagonal() * draw(n, r);
    const Matrix e = ss.asDiagonal() * draw(n, p) * sp.asDiagonal();
    Matrix x = c.location + e;
    if (q > 0 && r > 0) x.noalias() += c.colLoading * u * c.rowLoading.transpose();
    if (q > 0) x.noalias() += c.colLoading * eB;
    if (r > 0) x.noalias() += eA * c.rowLoading.transpose();
    out.obs.push_back(std::move(x));
    out.labels.push_back(g + 1);
  }
  return out;
}

namespace {

MixtureParams blockPreset(int G, int n, int p, int q, int r,
                          const std::vector<double>& weights, double offset,
                          std::uint64_t seed) {
  MixtureParams m;
  m.dims = {n, p, q, r};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int g = 0; g < G; ++g) {
    ComponentParams c;
    c.weight = weights[static_cast<std::size_t>(g)];
    c.location = Matrix::Zero(n, p);
    const int first = g * n / G;
    const int last = (g + 1) * n / G;
    c.location.middleRows(first, last - first).setConstant(offset);
    c.colLoading.resize(n, q);
    for (Eigen::Index j = 0; j < c.colLoading.size(); ++j) c.colLoading(j) = normal(rng);
    c.rowLoading.resize(p, r);
    for (Eigen::Index j = 0; j < c.rowLoading.size(); ++j) c.rowLoading(j) = normal(rng);
    c.rowNoise = Vector::Ones(n);
    c.colNoise = Vector::Ones(p);
    m.components.push_back(std::move(c));
  }
  return m;
}

}  // namespace

MixtureParams presetTruth(const std::string& name) {
  if (name == "sim1") return blockPreset(2, 10, 7, 2, 3, {0.5, 0.5}, 5.0, 20190601);
  if (name == "sim2") {
    return blockPreset(3, 28, 17, 2, 3, {0.4, 0.2, 0.4}, 5.0, 20190602);
  }
  throw InputError("unknown preset '" + name + "' (expected sim1 or sim2)");
}

std::vector<std::string> presetNames() { return {"sim1", "sim2"}; }

std::vector<int> maskLabels(const std::vector<int>& labels, double fraction,
                            std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InputError("supervision fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto keep = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(labels.size())));
  std::vector<int> out(labels.size(), 0);
  for (std::size_t k = 0; k < keep; ++k) out[order[k]] = labels[order[k]];
  return out;
}

// ---------------------------------------------------------------- T3

namespace {

std::vector<std::string_view> splitCommas(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = line.find(',');
    out.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) break;
    line.remove_prefix(pos + 1);
  }
  return out;
}

}  // namespace

DataSet3D readT3(std::istream& in) {
  std::string line;
  std::size_t lineNo = 0;
  auto nextLine = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineNo;
    return true;
  };

  if (!nextLine() || trim(line).empty()) throw ParseError("T3: missing header", 1);
  long long header[3];
  {
    std::istringstream hs{std::string(trim(line))};
    std::string tok[4];
    int count = 0;
    while (count < 4 && hs >> tok[count]) ++count;
    if (count != 3) throw ParseError("T3: header must be 'N n p'", lineNo);
    for (int k = 0; k < 3; ++k) {
      if (!parseInt(tok[k], header[k])) {
        throw ParseError("T3: header value '" + tok[k] + "' is not an integer", lineNo);
      }
    }
  }
  const long long N = header[0], n = header[1], p = header[2];
  if (N < 1 || n < 1 || p < 1) {
    throw SchemaError("T3: header dimensions must be positive (line 1)");
  }

  DataSet3D data;
  data.obs.reserve(static_cast<std::size_t>(N));
  for (long long i = 0; i < N; ++i) {
    Matrix x(n, p);
    for (long long j = 0; j < n; ++j) {
      if (!nextLine() || trim(line).starts_with("labels:")) {
        throw SchemaError("T3: expected " + std::to_string(N * n) +
                          " data lines, found " + std::to_string(i * n + j) +
                          " (line " + std::to_string(lineNo) + ")");
      }
      const auto fields = splitCommas(trim(line));
      if (static_cast<long long>(fields.size()) != p) {
        throw SchemaError("T3: expected " + std::to_string(p) + " values, found " +
                          std::to_string(fields.size()) + " (line " +
                          std::to_string(lineNo) + ")");
      }
      for (long long k = 0; k < p; ++k) {
        double v;
        if (!parseDouble(fields[static_cast<std::size_t>(k)], v) || !std::isfinite(v)) {
          throw ParseError("T3: bad value '" +
                               std::string(trim(fields[static_cast<std::size_t>(k)])) + "'",
                           lineNo);
        }
        x(j, k) = v;
      }
    }
    data.obs.push_back(std::move(x));
  }

  while (nextLine()) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (!t.starts_with("labels:")) {
      throw SchemaError("T3: more data lines than the header declares (line " +
                        std::to_string(lineNo) + ")");
    }
    if (data.hasLabels()) throw ParseError("T3: duplicate labels line", lineNo);
    const auto fields = splitCommas(trim(t.substr(7)));
    if (static_cast<long long>(fields.size()) != N) {
      throw SchemaError("T3: labels line has " + std::to_string(fields.size()) +
                        " entries, expected " + std::to_string(N) + " (line " +
                        std::to_string(lineNo) + ")");
    }
    for (const auto f : fields) {
      long long v;
      if (!parseInt(f, v) || v < 0) {
        throw ParseError("T3: bad label '" + std::string(trim(f)) + "'", lineNo);
      }
      data.labels.push_back(static_cast<int>(v));
    }
  }
  return data;
}

DataSet3D readT3(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return readT3(in);
}

void writeT3(std::ostream& out, const DataSet3D& data) {
  data.validate();
  if (data.empty()) throw ContractError("writeT3: empty dataset");
  out << data.size() << ' ' << data.rows() << ' ' << data.cols() << '\n';
  for (const auto& x : data.obs) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        if (k) out << ',';
        out << formatDouble(x(j, k));
      }
      out << '\n';
    }
  }
  if (data.hasLabels()) {
    out << "labels: ";
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      if (i) out << ',';
      out << data.labels[i];
    }
    out << '\n';
  }
}

void writeT3(const DataSet3D& data, const fs::path& path) {
  std::ostringstream buf;
  writeT3(buf, data);
  writeFileAtomic(path, buf.str());
}

// ---------------------------------------------------------------- IDX

namespace {

std::vector<unsigned char> readAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t bigEndian32(const std::vector<unsigned char>& bytes, std::size_t at,
                          const fs::path& path) {
  if (at + 4 > bytes.size()) throw ParseError("IDX: truncated header in " + path.string());
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

}  // namespace

DataSet3D readIdxImages(const fs::path& imagesPath, const fs::path& labelsPath,
                        const std::set<int>& keepLabels, const IdxOptions& options) {
  if (keepLabels.empty()) throw InputError("IDX: empty label selection");
  const auto images = readAll(imagesPath);
  const auto labels = readAll(labelsPath);

  if (bigEndian32(images, 0, imagesPath) != 0x00000803u) {
    throw ParseError("IDX: bad image magic in " + imagesPath.string());
  }
  if (bigEndian32(labels, 0, labelsPath) != 0x00000801u) {
    throw ParseError("IDX: bad label magic in " + labelsPath.string());
  }
  const std::size_t count = bigEndian32(images, 4, imagesPath);
  const std::size_t rows = bigEndian32(images, 8, imagesPath);
  const std::size_t cols = bigEndian32(images, 12, imagesPath);
  const std::size_t labelCount = bigEndian32(labels, 4, labelsPath);
  if (labelCount != count) {
    throw SchemaError("IDX: " + std::to_string(count) + " images but " +
                      std::to_string(labelCount) + " labels");
  }
  if (images.size() < 16 + count * rows * cols) {
    throw ParseError("IDX: truncated image data in " + imagesPath.string());
  }
  if (labels.size() < 8 + count) {
    throw ParseError("IDX: truncated label data in " + labelsPath.string());
  }

  const std::vector<int> sortedKeep(keepLabels.begin(), keepLabels.end());
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  DataSet3D data;
  for (std::size_t i = 0; i < count; ++i) {
    const int digit = labels[8 + i];
    const auto it = std::find(sortedKeep.begin(), sortedKeep.end(), digit);
    if (it == sortedKeep.end()) continue;
    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const unsigned char* px = images.data() + 16 + i * rows * cols;
    for (std::size_t j = 0; j < rows; ++j) {
      for (std::size_t k = 0; k < cols; ++k) {
        const double raw = px[j * cols + k];
        double v = raw;
        if (options.addNoise) v += noise(rng);
        if (options.offsetNonzero && raw != 0.0) v += 50.0;
        x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
      }
    }
    data.obs.push_back(std::move(x));
    data.labels.push_back(static_cast<int>(it - sortedKeep.begin()) + 1);
  }
  if (data.empty()) throw InputError("IDX: no images with the requested labels");
  return data;
}

// ---------------------------------------------------------------- PGM / labels

void writeHeatmapPgm(const Eigen::MatrixXd& m, const fs::path& path) {
  if (m.size() == 0) throw ContractError("heatmap: empty matrix");
  if (!m.allFinite()) throw InputError("heatmap: non-finite entries");
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  std::string out = "P5\n" + std::to_string(m.cols()) + " " +
                    std::to_string(m.rows()) + "\n255\n";
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      long v = 128;
      if (hi > lo) v = std::lround(255.0 * (m(j, k) - lo) / (hi - lo));
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0L, 255L))));
    }
  }
  writeFileAtomic(path, out);
}

std::vector<int> readLabels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<int> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    for (const auto f : splitCommas(t)) {
      long long v;
      if (!parseInt(f, v) || v < 0) {
        throw ParseError("labels: bad entry '" + std::string(trim(f)) + "'", lineNo);
      }
      out.push_back(static_cast<int>(v));
    }
  }
  return out;
}

void writeLabels(const std::vector<int>& labels, const fs::path& path) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  writeFileAtomic(path, out);
}

void writeFileAtomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot move " + tmp.string() + " to " + path.string() + ": " +
                     ec.message());
  }
}

}  // namespace mvbfa
