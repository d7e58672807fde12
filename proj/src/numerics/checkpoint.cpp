#include "cdpcl/numerics/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "cdpcl/errors.hpp"

namespace cdpcl {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'D', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 8);
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated data");
    offset_ += n;
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() {
    std::array<unsigned char, 8> b{};
    bytes(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " at byte offset " + std::to_string(offset_));
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double x : t.values()) put_f64(out, x);
  }
}

std::vector<NamedTensor> read_tensors(std::istream& in, const std::string& source) {
  Reader r(in, source);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  if (magic != kMagic) r.fail("bad magic (expected CDPT)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    const auto rank = r.u32();
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> values(numel_of(shape));
    for (auto& x : values) x = r.f64();
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  return read_tensors(in, path.string());
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw DataError("checkpoint has no tensor named '" + name + "'");
}

}  // namespace cdpcl
