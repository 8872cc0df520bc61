#include "mkmmd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mkmmd/errors.hpp"

namespace mkmmd {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    static_assert(std::is_unsigned_v<T>);
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  void expect_magic() {
    need(sizeof(kCheckpointMagic));
    if (std::memcmp(bytes_.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
      throw ParseError("checkpoint: bad magic header");
    }
    pos_ += sizeof(kCheckpointMagic);
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint: truncated file");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_network(const Network& net) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint32_t>(net.layer_count()));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.specs()[l];
    const auto& p = net.params()[l];
    put_le(out, static_cast<std::uint64_t>(s.input_width));
    put_le(out, static_cast<std::uint64_t>(s.output_width));
    put_le(out, static_cast<std::uint8_t>(s.activation));
    put_le(out, static_cast<std::uint8_t>(s.trainability));
    put_f64(out, s.lr_multiplier);
    for (Index r = 0; r < p.weight.rows(); ++r) {
      for (Index c = 0; c < p.weight.cols(); ++c) put_f64(out, p.weight(r, c));
    }
    for (Index r = 0; r < p.bias.size(); ++r) put_f64(out, p.bias(r));
  }
  return out;
}

Network deserialize_network(const std::string& bytes) {
  Reader in(bytes);
  in.expect_magic();
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto layers = in.get<std::uint32_t>();
  std::vector<LayerSpec> specs;
  NetworkParams params;
  for (std::uint32_t l = 0; l < layers; ++l) {
    LayerSpec s;
    s.input_width = static_cast<Index>(in.get<std::uint64_t>());
    s.output_width = static_cast<Index>(in.get<std::uint64_t>());
    const auto act = in.get<std::uint8_t>();
    const auto train = in.get<std::uint8_t>();
    if (act > 2 || train > 2) throw ParseError("checkpoint: bad layer enum at layer " + std::to_string(l));
    s.activation = static_cast<Activation>(act);
    s.trainability = static_cast<Trainability>(train);
    s.lr_multiplier = in.get_f64();
    if (s.input_width < 1 || s.output_width < 1 || s.input_width > (1 << 24) || s.output_width > (1 << 24)) {
      throw ParseError("checkpoint: implausible layer width at layer " + std::to_string(l));
    }
    LayerParams p{MatrixXd(s.output_width, s.input_width), VectorXd(s.output_width)};
    for (Index r = 0; r < p.weight.rows(); ++r) {
      for (Index c = 0; c < p.weight.cols(); ++c) p.weight(r, c) = in.get_f64();
    }
    for (Index r = 0; r < p.bias.size(); ++r) p.bias(r) = in.get_f64();
    specs.push_back(s);
    params.push_back(std::move(p));
  }
  if (!in.at_end()) throw ParseError("checkpoint: trailing bytes");
  return Network(std::move(specs), std::move(params));
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_network(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_network(bytes);
}

}  // namespace mkmmd
