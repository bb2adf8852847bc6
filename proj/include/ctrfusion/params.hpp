#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctrfusion/tensor.hpp"

namespace ctrfusion {

enum class Init {
  kUniformFanIn,  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  kZeros,
  kOnes,
};

// Named, ordered set of trainable tensors. Initial values depend only on the
// store seed and the parameter name, so the same seed always yields
// bitwise-identical parameters regardless of registration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  // fan_in == 0 means "use the product of the trailing dimensions".
  // sparse_rows marks embedding tables whose gradients arrive row by row.
  std::size_t add(const std::string& name, std::vector<std::size_t> shape, Init init = Init::kUniformFanIn,
                  std::size_t fan_in = 0, bool sparse_rows = false);

  std::size_t size() const { return tensors_.size(); }
  std::uint64_t seed() const { return seed_; }
  bool contains(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  bool sparse_rows(std::size_t i) const { return sparse_[i]; }

  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::string_view name) { return tensors_[index(name)]; }
  const Tensor& operator[](std::string_view name) const { return tensors_[index(name)]; }

  void zero_grads();
  std::size_t parameter_count() const;
  // FNV-1a over names, shapes and raw value bits.
  std::uint64_t checksum() const;
  std::uint64_t checksum(std::string_view prefix) const;

 private:
  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<bool> sparse_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Per-graph gradient contributions, indexed like the ParamStore they came from.
// Dense parameters accumulate into one buffer; row-sparse tables keep a list
// of touched rows so a single example never materializes a full table.
class GradBuffer {
 public:
  explicit GradBuffer(const ParamStore& store);

  std::span<double> dense(std::size_t param);
  void add_row(std::size_t param, std::size_t row, std::span<const double> g);
  void clear();
  // store.grad += scale * this, parameters in index order, rows in arrival order.
  void add_to(ParamStore& store, double scale) const;

 private:
  struct RowGrad {
    std::size_t row;
    std::size_t offset;
  };
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> row_width_;
  std::vector<std::vector<double>> dense_;
  std::vector<std::vector<RowGrad>> rows_;
  std::vector<std::vector<double>> row_data_;
};

// Self-describing binary parameter file. Values are stored as raw IEEE-754
// bits so load(save(x)) is bit-exact.
struct CheckpointHeader {
  std::string phase;
  std::uint64_t step = 0;
  std::uint64_t plan_hash = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointHeader& header);

struct LoadedCheckpoint {
  CheckpointHeader header;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

// Copies every tensor of `from` whose name exists in `into` with an identical
// shape. A name present in both with different shapes is an error; names that
// have no counterpart are returned.
std::vector<std::string> load_matching(ParamStore& into, const LoadedCheckpoint& from);

}  // namespace ctrfusion
