#include "ctrfusion/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/hashing.hpp"

namespace ctrfusion {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

std::size_t ParamStore::add(const std::string& name, std::vector<std::size_t> shape, Init init,
                            std::size_t fan_in, bool sparse_rows) {
  if (by_name_.contains(name)) throw ConfigError("parameter registered twice: " + name);
  Tensor t = Tensor::zeros(std::move(shape));
  if (fan_in == 0) fan_in = std::max<std::size_t>(1, t.cols());
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(t.values().begin(), t.values().end(), 1.0);
      break;
    case Init::kUniformFanIn: {
      std::mt19937_64 rng(seed_ ^ fnv1a(name));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(rng);
      break;
    }
  }
  by_name_.emplace(name, tensors_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  sparse_.push_back(sparse_rows);
  return tensors_.size() - 1;
}

bool ParamStore::contains(std::string_view name) const { return find(name).has_value(); }

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw ConfigError("unknown parameter: " + std::string(name));
  return *i;
}

void ParamStore::zero_grads() {
  for (auto& t : tensors_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::uint64_t ParamStore::checksum() const { return checksum(""); }

std::uint64_t ParamStore::checksum(std::string_view prefix) const {
  Fnv1a h;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!names_[i].starts_with(prefix)) continue;
    h.update(names_[i]);
    for (std::size_t d : tensors_[i].shape()) h.update_pod(static_cast<std::uint64_t>(d));
    for (double v : tensors_[i].values()) h.update_pod(std::bit_cast<std::uint64_t>(v));
  }
  return h.value();
}

GradBuffer::GradBuffer(const ParamStore& store)
    : sizes_(store.size()), row_width_(store.size(), 0), dense_(store.size()), rows_(store.size()),
      row_data_(store.size()) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    sizes_[i] = store.tensor(i).size();
    if (store.sparse_rows(i)) row_width_[i] = store.tensor(i).cols();
  }
}

std::span<double> GradBuffer::dense(std::size_t param) {
  auto& d = dense_[param];
  if (d.empty()) d.assign(sizes_[param], 0.0);
  return d;
}

void GradBuffer::add_row(std::size_t param, std::size_t row, std::span<const double> g) {
  if (row_width_[param] == 0) {
    // Not registered as row-sparse: fold straight into the dense buffer.
    auto d = dense(param);
    const std::size_t w = g.size();
    for (std::size_t j = 0; j < w; ++j) d[row * w + j] += g[j];
    return;
  }
  auto& data = row_data_[param];
  rows_[param].push_back({row, data.size()});
  data.insert(data.end(), g.begin(), g.end());
}

void GradBuffer::clear() {
  for (auto& d : dense_) d.clear();
  for (auto& r : rows_) r.clear();
  for (auto& r : row_data_) r.clear();
}

void GradBuffer::add_to(ParamStore& store, double scale) const {
  for (std::size_t p = 0; p < sizes_.size(); ++p) {
    Tensor& t = store.tensor(p);
    const bool touched = !dense_[p].empty() || !rows_[p].empty();
    if (!touched) {
      t.ensure_grad();
      continue;
    }
    t.ensure_grad();
    auto g = t.grad();
    if (!dense_[p].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * dense_[p][i];
    }
    const std::size_t w = row_width_[p];
    for (const RowGrad& r : rows_[p]) {
      const double* src = row_data_[p].data() + r.offset;
      double* dst = g.data() + r.row * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += scale * src[j];
    }
  }
}

namespace {

constexpr char kMagic[8] = {'C', 'T', 'F', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(is, path);
  if (n > (1u << 20)) throw IoError("corrupt string length in checkpoint: " + path.string());
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("truncated checkpoint: " + path.string());
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const CheckpointHeader& header) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, kCheckpointVersion);
  put_string(os, header.phase);
  put(os, header.step);
  put(os, header.plan_hash);
  put(os, header.seed);
  put(os, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor& t = store.tensor(i);
    put_string(os, store.name(i));
    put(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) put(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  LoadedCheckpoint out;
  out.header.phase = get_string(is, path);
  out.header.step = get<std::uint64_t>(is, path);
  out.header.plan_hash = get<std::uint64_t>(is, path);
  out.header.seed = get<std::uint64_t>(is, path);
  const auto count = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    out.names.push_back(get_string(is, path));
    const auto ndims = get<std::uint32_t>(is, path);
    if (ndims == 0 || ndims > 8) throw IoError("corrupt tensor rank in checkpoint: " + path.string());
    std::vector<std::size_t> shape(ndims);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
      n *= d;
    }
    std::vector<double> values(n);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    out.tensors.emplace_back(std::move(shape), std::move(values));
  }
  return out;
}

std::vector<std::string> load_matching(ParamStore& into, const LoadedCheckpoint& from) {
  std::vector<std::string> dropped;
  for (std::size_t i = 0; i < from.names.size(); ++i) {
    auto idx = into.find(from.names[i]);
    if (!idx) {
      dropped.push_back(from.names[i]);
      continue;
    }
    Tensor& dst = into.tensor(*idx);
    if (dst.shape() != from.tensors[i].shape()) {
      throw DimensionError("checkpoint parameter " + from.names[i] + " has shape " +
                           shape_string(from.tensors[i].shape()) + ", model expects " + shape_string(dst.shape()));
    }
    std::copy(from.tensors[i].values().begin(), from.tensors[i].values().end(), dst.values().begin());
  }
  return dropped;
}

}  // namespace ctrfusion
