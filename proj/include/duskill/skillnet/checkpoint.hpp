#pragma once

#include <cstdint>
#include <filesystem>

#include "duskill/skillnet/trainer.hpp"

namespace duskill::skillnet {

/// Writes a checkpoint directory: manifest.json plus one tensor file per
/// network (`<name>.bin`, tensors `layer<i>.weight` [out, in] row-major and
/// `layer<i>.bias` [out]). Existing files of the same names are replaced.
void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& bundle);

/// Loads and validates a checkpoint. FileError on missing or malformed files.
BundlePtr load_checkpoint(const std::filesystem::path& dir);

/// Hash over the manifest and every tensor file, in a fixed order.
std::uint64_t checkpoint_hash(const std::filesystem::path& dir);

/// Hash of one network's parameters; used to verify a frozen decoder.
std::uint64_t network_hash(const SkillModel<float>& model, const std::string& name);
/// Combined hash of all decoder networks present in the model.
std::uint64_t decoder_hash(const SkillModel<float>& model);

}  // namespace duskill::skillnet
