#include "safire/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace safire {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::string& config_text, const ParamStore& store) {
  std::string out = "SFRK";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_text.size());
  out += config_text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Cursor in(bytes);
  if (in.get_string(4) != "SFRK") throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_text = in.get_string(in.get<std::uint64_t>());
  const auto records = in.get<std::uint32_t>();
  for (std::uint32_t r = 0; r < records; ++r) {
    std::string name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw CheckpointError("record '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& e : shape) {
      e = in.get<std::uint64_t>();
      if (e == 0 || e > (1u << 30)) throw CheckpointError("record '" + name + "' has invalid extent");
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = in.get<double>();
    ck.params.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint records");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& config_text, const ParamStore& store) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(config_text, store);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void load_params(const Checkpoint& checkpoint, ParamStore& store) {
  auto& entries = store.entries();
  if (entries.size() != checkpoint.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(checkpoint.params.size()) + " records, model has " +
                          std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, src] = checkpoint.params[i];
    auto& [dst_name, dst] = entries[i];
    if (name != dst_name) throw CheckpointError("record " + std::to_string(i) + " is '" + name + "', expected '" + dst_name + "'");
    if (src.shape() != dst.shape()) {
      throw CheckpointError("record '" + name + "' shape " + shape_str(src.shape()) + " vs model " + shape_str(dst.shape()));
    }
    auto out = dst.mutable_data();
    std::copy(src.data().begin(), src.data().end(), out.begin());
  }
}

}  // namespace safire
