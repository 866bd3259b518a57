#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ramp/tensor.hpp"

namespace ramp {

struct Dataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;  // row-major [n, dim], values in [0, 1]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    Tensor batch_features(std::span<const std::size_t> idx) const;
    std::vector<int> batch_labels(std::span<const std::size_t> idx) const;
    Tensor all_features() const;
};

enum class SyntheticKind { Moons, Blobs };

SyntheticKind synthetic_kind_from_string(const std::string& s);
std::string to_string(SyntheticKind kind);

/// Two interleaved half-circles (moons, 2 classes) or seeded Gaussian blobs
/// (num_classes classes), mapped into [0,1]^d. Extra dimensions beyond the
/// generative ones sit at 0.5.
Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, std::size_t d, double noise,
                               std::uint64_t seed, std::size_t num_classes = 2);

/// IDX-format reader (big-endian magic + dims + raw bytes); pixels scaled to
/// [0, 1]. limit == 0 keeps everything.
Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path, std::size_t limit = 0);

/// Seeded shuffle, then head/tail split.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double first_fraction,
                                          std::uint64_t seed);

}  // namespace ramp
