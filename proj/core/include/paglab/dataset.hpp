#pragma once

#include "paglab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace paglab {

/// Immutable labeled sample matrix. Labels are 0-based.
struct Dataset {
    std::size_t dim = 0;
    std::size_t class_count = 0;
    std::vector<double> x; // N x dim, row-major
    std::vector<std::size_t> y;
    std::string split_tag;
    std::string provenance;

    std::size_t size() const { return y.size(); }
    std::span<const double> sample(std::size_t i) const { return {x.data() + i * dim, dim}; }
    Tensor sample_tensor(std::size_t i) const;
    std::vector<std::vector<std::size_t>> indices_by_class() const;
    std::uint64_t content_hash() const;
    void validate() const;
};

struct ToySplits {
    Dataset train;
    Dataset test;
};

/// Two-class dataset on the line x2 = 2*x1. Class 0 modes center on
/// {-50, -10, 30}, class 1 on {-30, 10, 50}; x1 ~ Normal(center, 1).
/// Train and test use disjoint seed substreams.
ToySplits toy_generate(std::uint64_t seed, std::size_t train_per_mode = 1000, std::size_t test_per_mode = 100);

/// Rows of `dim` floats followed by an integer label; optional header line.
/// When expected_classes is set, labels at or above it are rejected;
/// otherwise the class count is inferred as max label + 1.
Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> expected_classes = std::nullopt);

void save_csv(const Dataset& data, const std::filesystem::path& path);

/// Fixed 3073-byte records: 1 label byte + 3072 pixel bytes (R,G,B planes).
/// Pixels scale to [0,1]; `limit` takes the first records only.
Dataset load_image_batches(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);

} // namespace paglab
