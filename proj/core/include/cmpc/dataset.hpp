#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmpc {

// Rows of 0/1 observations. Values are stored flat, row-major.
struct BinaryDataset {
  int num_vars = 0;
  std::vector<std::uint8_t> values;
  std::string split_tag;

  std::size_t num_rows() const {
    return num_vars == 0 ? 0 : values.size() / static_cast<std::size_t>(num_vars);
  }
  std::uint8_t at(std::size_t row, int var) const {
    return values[row * static_cast<std::size_t>(num_vars) + static_cast<std::size_t>(var)];
  }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return {values.data() + r * static_cast<std::size_t>(num_vars),
            static_cast<std::size_t>(num_vars)};
  }

  // Rows (all of them, or a subset by index) as a dense 0.0/1.0 matrix,
  // one row per observation.
  Eigen::MatrixXd as_matrix() const;
  Eigen::MatrixXd rows_as_matrix(std::span<const std::uint32_t> indices) const;
};

// Per-entry observedness flags for a dataset of the same shape; 1 = observed.
// A row may be fully unobserved.
struct MissingMask {
  int num_vars = 0;
  std::vector<std::uint8_t> observed;

  std::size_t num_rows() const {
    return num_vars == 0 ? 0 : observed.size() / static_cast<std::size_t>(num_vars);
  }
  std::uint8_t at(std::size_t row, int var) const {
    return observed[row * static_cast<std::size_t>(num_vars) + static_cast<std::size_t>(var)];
  }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return {observed.data() + r * static_cast<std::size_t>(num_vars),
            static_cast<std::size_t>(num_vars)};
  }
  Eigen::MatrixXd rows_as_matrix(std::span<const std::uint32_t> indices) const;
};

// Parses a comma-separated 0/1 file (no header, LF or CRLF). Throws on I/O
// failure, non-binary tokens, ragged rows, or an expected_vars mismatch.
BinaryDataset load_dataset(const std::filesystem::path& path,
                           std::optional<int> expected_vars = std::nullopt,
                           std::string split_tag = {});

void save_dataset_csv(const BinaryDataset& data, const std::filesystem::path& path);

// Mask files share the dataset CSV shape; 1 = observed.
MissingMask load_mask(const std::filesystem::path& path, const BinaryDataset& data);
void save_mask_csv(const MissingMask& mask, const std::filesystem::path& path);

// Splits row indices into consecutive batches covering every row exactly once;
// the last batch may be smaller. With a seed, the order is a deterministic
// shuffle, reproducible independently per (seed) key.
std::vector<std::vector<std::uint32_t>> make_batches(
    const BinaryDataset& data, int batch_size,
    std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// Marks one contiguous block_h x block_w block per row as unobserved, at a
// uniformly random position inside the image_h x image_w grid (row-major
// pixel order). A zero-sized block leaves everything observed.
MissingMask apply_random_block_mask(const BinaryDataset& data, int block_h, int block_w,
                                    int image_h, int image_w, std::uint64_t seed);

}  // namespace cmpc
