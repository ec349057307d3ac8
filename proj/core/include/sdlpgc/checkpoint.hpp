#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "sdlpgc/data.hpp"
#include "sdlpgc/model.hpp"
#include "sdlpgc/training.hpp"

namespace sdlpgc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A checkpoint is a directory holding
///   manifest.json  config, norm stats, training state summary, version,
///                  seed, padding length, content hash of params.bin
///   params.bin     little-endian archive of every named tensor (model
///                  parameters and Adam moments)
struct LoadedCheckpoint {
    std::unique_ptr<SDLPGCModel> model;
    data::NormStats norm;
    TrainingState state;
    std::string dataset;
    std::string content_hash;
};

void save_checkpoint(const SDLPGCModel& model, const data::NormStats& norm, const TrainingState& state,
                     const std::filesystem::path& dir, const std::string& dataset = {});

/// Throws CheckpointError on missing, truncated, tampered or unsupported files.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// SHA-1 over "blob <size>\0" + bytes, hex encoded (git object id).
std::string git_blob_sha1(std::string_view bytes);

}  // namespace sdlpgc
