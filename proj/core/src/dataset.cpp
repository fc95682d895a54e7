#include "cmpc/dataset.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cmpc/rng.hpp"

namespace cmpc {

namespace {

std::vector<std::uint8_t> parse_binary_csv(const std::filesystem::path& path, int& num_vars) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path.string());
  }
  std::vector<std::uint8_t> values;
  std::string line;
  num_vars = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // trailing newline
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": empty line");
    }
    int count = 0;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      std::string_view tok(line.data() + pos,
                           (comma == std::string::npos ? line.size() : comma) - pos);
      if (tok != "0" && tok != "1") {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": non-binary token '" + std::string(tok) + "'");
      }
      values.push_back(tok == "1" ? 1 : 0);
      ++count;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (num_vars == 0) {
      num_vars = count;
    } else if (count != num_vars) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": ragged row, expected " + std::to_string(num_vars) +
                               " tokens, got " + std::to_string(count));
    }
  }
  if (in.bad()) {
    throw std::runtime_error("read failure on " + path.string());
  }
  if (values.empty()) {
    throw std::runtime_error(path.string() + ": no rows");
  }
  return values;
}

Eigen::MatrixXd subset_matrix(const std::vector<std::uint8_t>& flat, int num_vars,
                              std::span<const std::uint32_t> indices) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), num_vars);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(indices[static_cast<std::size_t>(r)]) *
                             static_cast<std::size_t>(num_vars);
    for (int v = 0; v < num_vars; ++v) {
      out(r, v) = static_cast<double>(flat[base + static_cast<std::size_t>(v)]);
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd BinaryDataset::as_matrix() const {
  std::vector<std::uint32_t> all(num_rows());
  std::iota(all.begin(), all.end(), 0u);
  return subset_matrix(values, num_vars, all);
}

Eigen::MatrixXd BinaryDataset::rows_as_matrix(std::span<const std::uint32_t> indices) const {
  return subset_matrix(values, num_vars, indices);
}

Eigen::MatrixXd MissingMask::rows_as_matrix(std::span<const std::uint32_t> indices) const {
  return subset_matrix(observed, num_vars, indices);
}

BinaryDataset load_dataset(const std::filesystem::path& path, std::optional<int> expected_vars,
                           std::string split_tag) {
  BinaryDataset data;
  data.values = parse_binary_csv(path, data.num_vars);
  data.split_tag = std::move(split_tag);
  if (expected_vars && *expected_vars != data.num_vars) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(*expected_vars) +
                             " variables, file has " + std::to_string(data.num_vars));
  }
  return data;
}

void save_dataset_csv(const BinaryDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    for (int v = 0; v < data.num_vars; ++v) {
      if (v) out.put(',');
      out.put(data.at(r, v) ? '1' : '0');
    }
    out.put('\n');
  }
  if (!out) throw std::runtime_error("write failure on " + path.string());
}

MissingMask load_mask(const std::filesystem::path& path, const BinaryDataset& data) {
  MissingMask mask;
  mask.observed = parse_binary_csv(path, mask.num_vars);
  if (mask.num_vars != data.num_vars || mask.num_rows() != data.num_rows()) {
    throw std::runtime_error(path.string() + ": mask shape " + std::to_string(mask.num_rows()) +
                             "x" + std::to_string(mask.num_vars) + " does not match dataset " +
                             std::to_string(data.num_rows()) + "x" +
                             std::to_string(data.num_vars));
  }
  return mask;
}

void save_mask_csv(const MissingMask& mask, const std::filesystem::path& path) {
  BinaryDataset shim;
  shim.num_vars = mask.num_vars;
  shim.values = mask.observed;
  save_dataset_csv(shim, path);
}

std::vector<std::vector<std::uint32_t>> make_batches(const BinaryDataset& data, int batch_size,
                                                     std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t n = data.num_rows();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  if (shuffle_seed) {
    CounterRng rng = CounterRng::keyed(*shuffle_seed, {rng_stream::kShuffle});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.next_below(i)]);
    }
  }
  std::vector<std::vector<std::uint32_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

MissingMask apply_random_block_mask(const BinaryDataset& data, int block_h, int block_w,
                                    int image_h, int image_w, std::uint64_t seed) {
  if (image_h < 1 || image_w < 1 || data.num_vars != image_h * image_w) {
    throw std::invalid_argument("image shape does not match dataset variable count");
  }
  if (block_h < 0 || block_w < 0 || block_h > image_h || block_w > image_w) {
    throw std::invalid_argument("block does not fit in image");
  }
  MissingMask mask;
  mask.num_vars = data.num_vars;
  mask.observed.assign(data.values.size(), 1);
  if (block_h == 0 || block_w == 0) return mask;

  CounterRng rng = CounterRng::keyed(seed, {rng_stream::kBlockMask});
  const std::uint64_t pos_h = static_cast<std::uint64_t>(image_h - block_h + 1);
  const std::uint64_t pos_w = static_cast<std::uint64_t>(image_w - block_w + 1);
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    const int top = static_cast<int>(rng.next_below(pos_h));
    const int left = static_cast<int>(rng.next_below(pos_w));
    std::uint8_t* row = mask.observed.data() + r * static_cast<std::size_t>(data.num_vars);
    for (int i = top; i < top + block_h; ++i) {
      for (int j = left; j < left + block_w; ++j) {
        row[i * image_w + j] = 0;
      }
    }
  }
  return mask;
}

}  // namespace cmpc
