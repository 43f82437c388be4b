#pragma once

#include <string>
#include <vector>

#include "mela/dataset.hpp"

namespace mela::io {

// Self-describing binary container for task ensembles so runs are replayable
// without regeneration. Little-endian; layout documented in docs/FORMATS.md.
void save_ensemble(const std::string& path,
                   const std::vector<TaskDataset>& datasets);
std::vector<TaskDataset> load_ensemble(const std::string& path);

}  // namespace mela::io
