#include "mvbfa/model_io.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvbfa/data_io.hpp"
#include "mvbfa/errors.hpp"
#include "mvbfa/format.hpp"

namespace mvbfa {

namespace {

constexpr const char* kFormat = "mvbfa-model";
constexpr int kVersion = 1;

void writeValues(std::ostream& out, const char* key, const Matrix& m) {
  out << key << " =";
  bool first = true;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      out << (first ? " " : ",") << formatDouble(m(j, k));
      first = false;
    }
  }
  out << '\n';
}

std::vector<double> parseValues(std::string_view text, std::size_t lineNo) {
  std::vector<double> out;
  text = trim(text);
  if (text.empty()) return out;
  while (true) {
    const auto pos = text.find(',');
    double v;
    if (!parseDouble(text.substr(0, pos), v)) {
      throw ParseError("model: bad number '" + std::string(trim(text.substr(0, pos))) + "'",
                       lineNo);
    }
    out.push_back(v);
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return out;
}

Matrix toMatrix(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols,
                const std::string& what) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw SchemaError("model: " + what + " has " + std::to_string(v.size()) +
                      " values, expected " + std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index k = 0; k < cols; ++k) m(j, k) = v[static_cast<std::size_t>(j * cols + k)];
  return m;
}

}  // namespace

void writeModel(std::ostream& out, const MixtureParams& params) {
  params.validate();
  out << "# matrix variate bilinear factor mixture\n";
  out << "format = " << kFormat << '\n' << "version = " << kVersion << '\n';
  out << "G = " << params.G() << '\n'
      << "n = " << params.dims.n << '\n'
      << "p = " << params.dims.p << '\n'
      << "q = " << params.dims.q << '\n'
      << "r = " << params.dims.r << '\n';
  for (std::size_t g = 0; g < params.G(); ++g) {
    const auto& c = params.components[g];
    out << "component = " << g + 1 << '\n';
    out << "weight = " << formatDouble(c.weight) << '\n';
    writeValues(out, "location", c.location);
    writeValues(out, "colLoading", c.colLoading);
    writeValues(out, "rowLoading", c.rowLoading);
    writeValues(out, "rowNoise", c.rowNoise.transpose());
    writeValues(out, "colNoise", c.colNoise.transpose());
  }
}

void writeModel(const MixtureParams& params, const std::filesystem::path& path) {
  std::ostringstream buf;
  writeModel(buf, params);
  writeFileAtomic(path, buf.str());
}

MixtureParams readModel(std::istream& in) {
  MixtureParams m;
  long long G = -1;
  bool sawFormat = false;
  std::string line;
  std::size_t lineNo = 0;
  ComponentParams* current = nullptr;
  auto need = [&](const std::string& key) {
    if (!current) throw ParseError("model: '" + key + "' outside a component", lineNo);
  };
  auto headerInt = [&](std::string_view value, const std::string& key) {
    long long v;
    if (!parseInt(value, v) || v < 0) throw ParseError("model: bad " + key, lineNo);
    return v;
  };

  while (std::getline(in, line)) {
    ++lineNo;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("model: expected 'key = value'", lineNo);
    const std::string key(trim(t.substr(0, eq)));
    const auto value = trim(t.substr(eq + 1));

    if (key == "format") {
      if (value != kFormat) throw ParseError("model: unknown format", lineNo);
      sawFormat = true;
    } else if (key == "version") {
      if (headerInt(value, key) != kVersion) throw ParseError("model: unsupported version", lineNo);
    } else if (key == "G") {
      G = headerInt(value, key);
    } else if (key == "n") {
      m.dims.n = headerInt(value, key);
    } else if (key == "p") {
      m.dims.p = headerInt(value, key);
    } else if (key == "q") {
      m.dims.q = headerInt(value, key);
    } else if (key == "r") {
      m.dims.r = headerInt(value, key);
    } else if (key == "component") {
      if (headerInt(value, key) != static_cast<long long>(m.components.size()) + 1) {
        throw ParseError("model: components must be numbered 1, 2, ...", lineNo);
      }
      m.components.emplace_back();
      current = &m.components.back();
    } else if (key == "weight") {
      need(key);
      const auto v = parseValues(value, lineNo);
      if (v.size() != 1) throw ParseError("model: weight takes one value", lineNo);
      current->weight = v[0];
    } else if (key == "location") {
      need(key);
      current->location = toMatrix(parseValues(value, lineNo), m.dims.n, m.dims.p, key);
    } else if (key == "colLoading") {
      need(key);
      current->colLoading = toMatrix(parseValues(value, lineNo), m.dims.n, m.dims.q, key);
    } else if (key == "rowLoading") {
      need(key);
      current->rowLoading = toMatrix(parseValues(value, lineNo), m.dims.p, m.dims.r, key);
    } else if (key == "rowNoise") {
      need(key);
      current->rowNoise = toMatrix(parseValues(value, lineNo), m.dims.n, 1, key);
    } else if (key == "colNoise") {
      need(key);
      current->colNoise = toMatrix(parseValues(value, lineNo), m.dims.p, 1, key);
    } else {
      throw ParseError("model: unknown key '" + key + "'", lineNo);
    }
  }
  if (!sawFormat) throw ParseError("model: missing format line");
  if (G != static_cast<long long>(m.components.size())) {
    throw SchemaError("model: G=" + std::to_string(G) + " but " +
                      std::to_string(m.components.size()) + " components");
  }
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }
  return m;
}

MixtureParams readModel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return readModel(in);
}

}  // namespace mvbfa
