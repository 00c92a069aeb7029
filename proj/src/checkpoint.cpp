#include "wgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wgen/error.hpp"

namespace wgen {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw LoadError("checkpoint truncated at offset " + std::to_string(pos_) + " reading " +
                      what + " (" + std::to_string(n) + " bytes wanted, " +
                      std::to_string(remaining()) + " left)");
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelConfig& config, const Parameters<float>& params) {
  check_parameters(config, params);
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_string(out, config.to_text());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& t = params.tensors[i];
    put_string(out, params.names[i]);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* raw = reinterpret_cast<const char*>(t.ptr());
    out.append(raw, t.size() * sizeof(float));
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw LoadError("bad checkpoint magic at offset 0");
  const std::size_t version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + " at offset " +
                    std::to_string(version_at));
  const auto config_len = r.u32("config length");
  Checkpoint ck;
  const std::size_t config_at = r.offset();
  try {
    ck.config = ModelConfig::from_text(r.take(config_len, "config text"));
  } catch (const ConfigError& e) {
    throw LoadError("bad config block at offset " + std::to_string(config_at) + ": " + e.what());
  }
  const ParamLayout layout(ck.config);
  while (!r.done()) {
    const std::size_t at = r.offset();
    const auto idx = ck.params.tensors.size();
    const auto name_len = r.u32("array name length");
    std::string name(r.take(name_len, "array name"));
    if (idx >= layout.names.size() || name != layout.names[idx])
      throw LoadError("unexpected array '" + name + "' at offset " + std::to_string(at));
    const auto rank = r.u32("array rank");
    if (rank != layout.shapes[idx].size())
      throw LoadError("array '" + name + "' has rank " + std::to_string(rank) + " at offset " +
                      std::to_string(at));
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32("array dimension"));
      count *= shape.back();
    }
    if (shape != layout.shapes[idx])
      throw LoadError("array '" + name + "' has shape " + shape_string(shape) + ", expected " +
                      shape_string(layout.shapes[idx]) + " (offset " + std::to_string(at) + ")");
    // The size is validated against the bytes left before anything is allocated.
    const auto payload = r.take(count * sizeof(float), "array payload");
    std::vector<float> data(count);
    std::memcpy(data.data(), payload.data(), payload.size());
    ck.params.names.push_back(std::move(name));
    ck.params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (ck.params.tensors.size() != layout.names.size())
    throw LoadError("checkpoint ends at offset " + std::to_string(r.offset()) + " after " +
                    std::to_string(ck.params.tensors.size()) + " of " +
                    std::to_string(layout.names.size()) + " arrays");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters<float>& params) {
  const auto bytes = serialize_checkpoint(config, params);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace wgen
