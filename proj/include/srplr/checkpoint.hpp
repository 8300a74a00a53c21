#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "srplr/model.hpp"

namespace srplr {

/// Writes a versioned binary checkpoint: encoder config, variant, logic
/// settings, id-map fingerprint, config hash, and every named parameter
/// array.
void save_checkpoint(const std::filesystem::path& path, const SrplrModel& model,
                     const std::string& config_hash = "");

struct LoadedCheckpoint {
  SrplrModel model;
  std::string config_hash;
};

/// Restores a model from a checkpoint. When expectations are provided the
/// stored encoder config / id-map fingerprint must match exactly;
/// a mismatch is an error rather than a silent reinterpretation.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<EncoderConfig>& expect_encoder = {},
                                 std::optional<std::uint64_t> expect_fingerprint = {});

}  // namespace srplr
