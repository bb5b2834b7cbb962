#include "tsxai/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "tsxai/detail/binary.hpp"
#include "tsxai/error.hpp"

namespace tsxai {
namespace {

constexpr char kMagic[4] = {'I', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

using namespace detail;

void put_config(std::ostream& out, const InceptionConfig& c) {
  put_u64(out, c.depth);
  put_u64(out, c.filters);
  put_u64(out, c.bottleneck_channels);
  for (std::size_t k : c.kernel_lengths) put_u64(out, k);
  put_u64(out, c.num_classes);
  put_u64(out, c.input_channels);
  put_u64(out, c.input_length);
  put_u32(out, c.residual ? 1 : 0);
}

InceptionConfig get_config(std::istream& in) {
  InceptionConfig c;
  c.depth = get_u64(in);
  c.filters = get_u64(in);
  c.bottleneck_channels = get_u64(in);
  for (std::size_t& k : c.kernel_lengths) k = get_u64(in);
  c.num_classes = get_u64(in);
  c.input_channels = get_u64(in);
  c.input_length = get_u64(in);
  c.residual = get_u32(in) != 0;
  return c;
}

}  // namespace

void write_checkpoint(const TrainedModel& model, std::ostream& out) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_config(out, model.config());
  put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(model.fold_id)));
  put_f64(out, model.best_validation_loss);
  put_u64(out, model.best_epoch);
  put_u64(out, model.steps);

  const auto& norm = model.normalization;
  put_u64(out, norm.mean.size());
  for (std::size_t c = 0; c < norm.mean.size(); ++c) {
    put_f64(out, norm.mean[c]);
    put_f64(out, norm.std[c]);
  }

  const auto& entries = model.network.parameters().entries();
  put_u64(out, entries.size());
  for (const auto& e : entries) {
    put_string(out, e.name);
    put_u32(out, e.trainable ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_u64(out, d);
    for (double v : e.value.values()) put_f64(out, v);
  }
  if (!out) throw DataError("write_checkpoint: stream error");
}

void write_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(model, out);
}

TrainedModel read_checkpoint(std::istream& in) {
  try {
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic)) throw DataError("bad magic");
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const InceptionConfig config = get_config(in);
    config.validate();
    const int fold_id = static_cast<int>(static_cast<std::int64_t>(get_u64(in)));
    const double best_loss = get_f64(in);
    const std::size_t best_epoch = get_u64(in);
    const std::size_t steps = get_u64(in);

    ZScoreStats norm;
    const std::uint64_t channels = get_u64(in);
    if (channels != config.input_channels) throw DataError("normalization channel count mismatch");
    for (std::uint64_t c = 0; c < channels; ++c) {
      norm.mean.push_back(get_f64(in));
      norm.std.push_back(get_f64(in));
      if (!(norm.std.back() > 0.0)) throw DataError("normalization std must be positive");
    }

    ParameterSet params;
    const std::uint64_t count = get_u64(in);
    if (count > 100000) throw DataError("implausible parameter count");
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name = get_string(in, 4096);
      const bool trainable = get_u32(in) != 0;
      const std::uint32_t rank = get_u32(in);
      if (rank > kMaxRank) throw DataError("parameter " + name + ": rank out of range");
      Shape shape(rank);
      for (auto& d : shape) d = get_u64(in);
      const std::size_t n = shape_size(shape);
      if (n > (std::size_t{1} << 28)) throw DataError("parameter " + name + ": size out of range");
      std::vector<double> values(n);
      for (double& v : values) v = get_f64(in);
      params.add(std::move(name), Tensor(std::move(shape), std::move(values)), trainable);
    }
    return TrainedModel{InceptionNetwork(config, std::move(params)), std::move(norm), fold_id, best_loss, best_epoch,
                        steps, {}};
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("read_checkpoint: ") + e.what());
  }
}

TrainedModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace tsxai
