#pragma once

// Plain-text model files. See docs/model-format.md.

#include <filesystem>
#include <iosfwd>

#include "mvbfa/model.hpp"

namespace mvbfa {

void writeModel(std::ostream& out, const MixtureParams& params);
void writeModel(const MixtureParams& params, const std::filesystem::path& path);

// Throws ParseError on malformed lines, SchemaError when the declared
// dimensions disagree with the stored matrices.
MixtureParams readModel(std::istream& in);
MixtureParams readModel(const std::filesystem::path& path);

}  // namespace mvbfa
