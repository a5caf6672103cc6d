#include "ecnn/checkpoint.hpp"

#include <algorithm>

#include "ecnn/binary_io.hpp"
#include "ecnn/errors.hpp"

namespace ecnn {
namespace {

constexpr std::uint32_t kVersion = 1;

std::string metadata_value(std::string_view meta, std::string_view key) {
  const std::string prefix = std::string(key) + "=";
  std::size_t start = 0;
  while (start < meta.size()) {
    auto end = meta.find('\n', start);
    if (end == std::string_view::npos) end = meta.size();
    const auto line = meta.substr(start, end - start);
    if (line.substr(0, prefix.size()) == prefix) return std::string(line.substr(prefix.size()));
    start = end + 1;
  }
  return {};
}

void restore(BinaryReader<CorruptCheckpoint>& r, std::span<const NamedTensor> targets, const char* what) {
  const auto count = r.u32();
  if (count != targets.size())
    throw CorruptCheckpoint(std::string("checkpoint holds ") + std::to_string(count) + " " + what + ", model has " +
                            std::to_string(targets.size()));
  for (const auto& target : targets) {
    auto entry = r.tensor();
    if (entry.name != target.name || entry.shape != target.tensor.shape())
      throw CorruptCheckpoint(std::string(what) + " entry '" + entry.name + "' " + shape_str(entry.shape) +
                              " does not match model tensor '" + target.name + "' " +
                              shape_str(target.tensor.shape()));
    std::copy(entry.values.begin(), entry.values.end(), target.tensor.mutable_data().begin());
  }
}

}  // namespace

std::string checkpoint_metadata(const ArchSpec& spec) {
  std::string meta = "family=" + family_name(spec) + "\n";
  meta += "num_classes=" + std::to_string(num_classes(spec)) + "\n";
  meta += "resolution=" + std::to_string(input_resolution(spec)) + "\n";
  for (const auto& [key, value] : to_fields(spec)) meta += "spec." + key + "=" + value + "\n";
  return meta;
}

std::string encode_checkpoint(const Model& model) {
  BinaryWriter w;
  w.bytes("ENSB");
  w.u32(kVersion);
  w.text(checkpoint_metadata(model.spec()));
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) w.tensor(p.name, p.tensor);
  w.u32(static_cast<std::uint32_t>(model.buffers().size()));
  for (const auto& b : model.buffers()) w.tensor(b.name, b.tensor);
  return w.buffer();
}

Model decode_checkpoint(std::string_view bytes, const ArchSpec& spec) {
  BinaryReader<CorruptCheckpoint> r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != "ENSB") throw CorruptCheckpoint("checkpoint: bad magic");
  r.bytes(4);
  if (const auto v = r.u32(); v != kVersion)
    throw CorruptCheckpoint("checkpoint: unsupported format version " + std::to_string(v));
  const std::string stored = r.text();
  const std::string expected = checkpoint_metadata(spec);
  if (stored != expected) {
    const auto stored_family = metadata_value(stored, "family");
    if (stored_family != family_name(spec))
      throw IncompatibleCheckpoint("checkpoint holds a '" + stored_family + "' model, spec describes '" +
                                   family_name(spec) + "'");
    throw IncompatibleCheckpoint("checkpoint metadata does not match the " + family_name(spec) +
                                 " spec:\n--- stored\n" + stored + "--- expected\n" + expected);
  }
  Model model = build_model(spec, 0);
  restore(r, model.parameters(), "parameters");
  restore(r, model.buffers(), "buffers");
  if (r.remaining() != 0) throw CorruptCheckpoint("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) { write_file(path, encode_checkpoint(model)); }

Model load_checkpoint(const std::string& path, const ArchSpec& spec) { return decode_checkpoint(read_file(path), spec); }

}  // namespace ecnn
