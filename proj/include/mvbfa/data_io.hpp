#pragma once

// Dataset ingestion and export: synthetic data from the generative model,
// the T3 text format, MNIST-style IDX files, PGM heatmaps and label files.
//
// T3 text format:
//   line 1          "N n p"
//   next N*n lines  p comma-separated decimal values (observation i occupies
//                   lines 2 + i*n .. 1 + (i+1)*n, one matrix row per line)
//   optional line   "labels: l_1,...,l_N"   (0 = unlabeled)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "mvbfa/dataset.hpp"
#include "mvbfa/model.hpp"

namespace mvbfa {

struct SyntheticSpec {
  MixtureParams truth;
  std::size_t N = 0;
  std::uint64_t seed = 0;
};

// Draws the component from the weights, then U, E_B, E_A, E independently
// and assembles X = M + A U B' + A E_B + E_A B' + E. Labels hold the true
// component (1-based).
DataSet3D generate(const SyntheticSpec& spec);

// Built-in ground truths. sim1: G=2, 10x7, q=2, r=3, weights (.5,.5).
// sim2: G=3, 28x17, q=2, r=3, weights (.4,.2,.4). Locations are 0 except for
// a constant offset on the component's own block of rows; loadings are fixed
// standard normal draws; noise diagonals are 1.
MixtureParams presetTruth(const std::string& name);
std::vector<std::string> presetNames();

// Keeps round(fraction * N) labels chosen uniformly at random, zeroes the
// rest.
std::vector<int> maskLabels(const std::vector<int>& labels, double fraction,
                            std::uint64_t seed);

DataSet3D readT3(std::istream& in);
DataSet3D readT3(const std::filesystem::path& path);
void writeT3(std::ostream& out, const DataSet3D& data);
void writeT3(const DataSet3D& data, const std::filesystem::path& path);

struct IdxOptions {
  bool addNoise = true;        // Uniform(0, 1) on every pixel
  bool offsetNonzero = true;   // +50 on originally nonzero pixels
  std::uint64_t seed = 0;
};

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
// keeping images whose label is in keepLabels. Dataset labels are 1-based
// positions in the sorted keepLabels set.
DataSet3D readIdxImages(const std::filesystem::path& imagesPath,
                        const std::filesystem::path& labelsPath,
                        const std::set<int>& keepLabels,
                        const IdxOptions& options = {});

// 8-bit binary PGM, p wide and n tall, min-max scaled to 0..255; a constant
// matrix maps to 128.
void writeHeatmapPgm(const Eigen::MatrixXd& m, const std::filesystem::path& path);

// One integer per line (commas also accepted as separators).
std::vector<int> readLabels(const std::filesystem::path& path);
void writeLabels(const std::vector<int>& labels, const std::filesystem::path& path);

// Writes to a temporary sibling and renames it over path.
void writeFileAtomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mvbfa
