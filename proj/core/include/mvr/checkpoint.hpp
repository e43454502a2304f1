#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mvr/mv_unet.hpp"
#include "mvr/tensor.hpp"

namespace mvr {

/// An ordered list of named float tensors plus a free-form JSON metadata
/// string — the on-disk unit for model checkpoints and optimizer state.
///
/// Binary layout (little-endian):
///   magic "MVRCKPT\0" | u32 version | u64 meta_len, meta bytes (JSON text)
///   | u64 n_tensors | per tensor: u64 name_len, name, u32 ndim,
///   u32 dims[ndim], f32 data[numel].
struct TensorArchive {
    std::string meta_json = "{}";
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    /// nullptr when absent.
    const Tensor<float>* find(const std::string& name) const;
    void add(const std::string& name, Tensor<float> t);
};

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

/// Copies every model parameter into the archive as prefix + param name.
template <typename S>
void store_params(MVUNet<S>& model, TensorArchive& archive,
                  const std::string& prefix = "model.");

/// Restores every model parameter from the archive; throws IoError naming
/// the first missing or shape-mismatched entry.
template <typename S>
void load_params(MVUNet<S>& model, const TensorArchive& archive,
                 const std::string& prefix = "model.");

std::string config_to_json(const MVUNetConfig& config);
MVUNetConfig config_from_json(const std::string& text);

}  // namespace mvr
