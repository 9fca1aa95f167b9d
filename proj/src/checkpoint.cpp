#include "prefrank/checkpoint.hpp"

#include "binary_io.hpp"
#include "prefrank/data.hpp"
#include "prefrank/digest.hpp"

namespace prefrank {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

std::uint32_t encode_mode(HeadMode m) { return m == HeadMode::Shared ? 0 : 1; }

HeadMode decode_mode(std::uint32_t v) {
  if (v == 0) return HeadMode::Shared;
  if (v == 1) return HeadMode::Multiple;
  throw Error(ErrorCode::HeaderCorrupt,
              "checkpoint head_mode " + std::to_string(v));
}

std::uint32_t encode_strategy(AggregationStrategy s) {
  return static_cast<std::uint32_t>(s);
}

AggregationStrategy decode_strategy(std::uint32_t v) {
  if (v > 2) {
    throw Error(ErrorCode::HeaderCorrupt,
                "checkpoint strategy " + std::to_string(v));
  }
  return static_cast<AggregationStrategy>(v);
}

LossKind decode_loss_kind(std::uint32_t v) {
  if (v > 2) {
    throw Error(ErrorCode::HeaderCorrupt,
                "checkpoint loss kind " + std::to_string(v));
  }
  return static_cast<LossKind>(v);
}

void corrupt_if(bool condition, const std::string& what) {
  if (condition) throw Error(ErrorCode::HeaderCorrupt, "checkpoint " + what);
}

}  // namespace

std::string encode_checkpoint(const TrainedModel& model) {
  const auto& arch = model.params.architecture();
  ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(encode_mode(arch.mode));
  w.u32(static_cast<std::uint32_t>(arch.input_dim));
  w.u32(static_cast<std::uint32_t>(arch.hidden.size()));
  for (std::size_t width : arch.hidden) w.u32(static_cast<std::uint32_t>(width));
  const auto layers = arch.trunk_layers();
  w.u32(static_cast<std::uint32_t>(arch.num_trunks()));
  for (std::size_t t = 0; t < arch.num_trunks(); ++t) {
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) {
      w.u32(static_cast<std::uint32_t>(l.out));
      w.u32(static_cast<std::uint32_t>(l.in));
    }
  }
  w.u32(static_cast<std::uint32_t>(model.loss.loss_kind));
  w.u32(encode_strategy(model.loss.strategy));
  w.f64(model.loss.sigma_floor);
  w.f64(model.loss.regression_transform.scale);
  w.f64(model.loss.regression_transform.shift);
  w.u8(model.standardization ? 1 : 0);
  if (model.standardization) {
    for (double v : model.standardization->mean) w.f64(v);
    for (double v : model.standardization->inv_std) w.f64(v);
  }
  w.u64(model.params.size());
  for (double v : model.params.values()) w.f64(v);
  w.u64(model.config_digest);
  return w.data();
}

TrainedModel decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, ErrorCode::HeaderCorrupt, "checkpoint");
  corrupt_if(r.bytes(4) != std::string_view(kCheckpointMagic, 4), "bad magic");
  const std::uint32_t version = r.u32();
  corrupt_if(version != kCheckpointVersion,
             "unsupported version " + std::to_string(version));
  HeadArchitecture arch;
  arch.mode = decode_mode(r.u32());
  arch.input_dim = r.u32();
  const std::uint32_t n_hidden = r.u32();
  corrupt_if(n_hidden > r.remaining() / 4, "hidden layer count");
  arch.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) arch.hidden.push_back(r.u32());
  corrupt_if(arch.input_dim == 0, "zero input width");
  for (std::size_t width : arch.hidden) corrupt_if(width == 0, "zero-width layer");

  const auto expected = arch.trunk_layers();
  corrupt_if(r.u32() != arch.num_trunks(), "trunk count");
  for (std::size_t t = 0; t < arch.num_trunks(); ++t) {
    corrupt_if(r.u32() != expected.size(), "layer count");
    for (const auto& l : expected) {
      const std::uint32_t out = r.u32();
      const std::uint32_t in = r.u32();
      corrupt_if(out != l.out || in != l.in, "layer shape");
    }
  }

  LossConfig loss;
  loss.loss_kind = decode_loss_kind(r.u32());
  loss.strategy = decode_strategy(r.u32());
  loss.sigma_floor = r.f64();
  loss.regression_transform.scale = r.f64();
  loss.regression_transform.shift = r.f64();
  try {
    loss.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::HeaderCorrupt, std::string("checkpoint ") + e.what());
  }

  std::optional<Standardization> standardization;
  const std::uint8_t has_std = r.u8();
  corrupt_if(has_std > 1, "standardization flag");
  if (has_std == 1) {
    Standardization s;
    s.mean.resize(arch.input_dim);
    s.inv_std.resize(arch.input_dim);
    for (double& v : s.mean) v = r.f64();
    for (double& v : s.inv_std) v = r.f64();
    standardization = std::move(s);
  }

  const std::uint64_t n_params = r.u64();
  corrupt_if(n_params != arch.parameter_count(), "parameter count");
  std::vector<double> values(n_params);
  for (double& v : values) v = r.f64();
  const std::uint64_t digest = r.u64();
  corrupt_if(r.remaining() != 0, "has trailing bytes");

  return TrainedModel{HeadParams(std::move(arch), std::move(values)), loss,
                      std::move(standardization), digest, TrainReport{}};
}

void save_checkpoint(const TrainedModel& model,
                     const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(model));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

std::uint64_t checkpoint_digest(const TrainedModel& model) {
  return fnv1a64(encode_checkpoint(model));
}

}  // namespace prefrank
