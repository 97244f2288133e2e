#include "drum/checkpoint.hpp"

#include "binary_io.hpp"

namespace drum {

namespace {
constexpr std::string_view kMagic = "DRUMCKPT";
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserNetwork& net, std::uint64_t step) {
  detail::LeWriter w(path);
  const DenoiserArch& arch = net.arch();
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(arch.in_channels);
  w.u32(static_cast<std::uint32_t>(arch.widths.size()));
  for (std::uint32_t c : arch.widths) w.u32(c);
  w.u32(arch.embed_dim);
  w.u32(arch.hidden_dim);
  w.u64(step);
  w.u64(net.parameters().size());
  for (double v : net.parameters()) w.f32(static_cast<float>(v));
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  detail::LeReader r(path);
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("not a DRUMCKPT file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  DenoiserArch arch;
  arch.in_channels = r.u32();
  const std::uint32_t levels = r.u32();
  if (levels == 0 || levels > 16) throw IoError("corrupt checkpoint level count: " + path.string());
  arch.widths.resize(levels);
  for (auto& c : arch.widths) c = r.u32();
  arch.embed_dim = r.u32();
  arch.hidden_dim = r.u32();
  const std::uint64_t step = r.u64();
  const std::uint64_t count = r.u64();

  DenoiserNetwork net(arch, 0);
  auto params = net.parameters();
  if (count != params.size()) throw IoError("checkpoint parameter count does not match architecture: " + path.string());
  for (double& v : params) v = static_cast<double>(r.f32());
  if (!r.at_end()) throw IoError("trailing bytes in checkpoint: " + path.string());
  return {std::move(net), step};
}

}  // namespace drum
