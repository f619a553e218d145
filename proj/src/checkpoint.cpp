#include "ngmm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ngmm {

namespace {

constexpr const char* kMagic = "ngmm-checkpoint 1";

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw std::runtime_error("'" + path + "': truncated checkpoint record");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const auto& p = ckpt.params;
  const auto& arch = p.architecture();
  out << kMagic << '\n';
  out << "family " << p.family().name() << '\n';
  out << "input_dim " << arch.input_dim << '\n';
  out << "hidden";
  for (auto h : arch.hidden) out << ' ' << h;
  out << '\n';
  out << "rule " << ckpt.rule.describe() << '\n';
  out << "seed " << ckpt.seed << '\n';
  out << "records " << p.values().segments().size() << "\n\n";
  for (const auto& seg : p.values().segments()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seg.name.size()));
    out.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(seg.rows));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(seg.cols));
    const auto values = p.values().segment(seg.name);
    for (Eigen::Index j = 0; j < seg.cols; ++j)
      for (Eigen::Index i = 0; i < seg.rows; ++i) put_le<double>(out, values(i, j));
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error("'" + path + "' is not an ngmm checkpoint");
  std::map<std::string, std::string> header;
  while (std::getline(in, line) && !line.empty()) {
    const auto space = line.find(' ');
    header[line.substr(0, space)] = space == std::string::npos ? "" : line.substr(space + 1);
  }
  for (const char* key : {"family", "input_dim", "hidden", "rule", "seed", "records"})
    if (!header.count(key)) throw std::runtime_error("'" + path + "': header missing '" + key + "'");

  Checkpoint ckpt;
  const ResponseFamily family = ResponseFamily::parse(header["family"]);
  Architecture arch;
  arch.input_dim = std::stol(header["input_dim"]);
  arch.hidden.clear();
  {
    std::stringstream ss(header["hidden"]);
    for (long h; ss >> h;) arch.hidden.push_back(h);
  }
  ckpt.rule = MarginalRule::parse(header["rule"]);
  ckpt.seed = std::stoull(header["seed"]);
  const std::size_t records = std::stoul(header["records"]);

  std::map<std::string, Eigen::MatrixXd> stored;
  for (std::size_t r = 0; r < records; ++r) {
    const auto len = get_le<std::uint32_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("'" + path + "': truncated record name");
    const auto ndims = get_le<std::uint32_t>(in, path);
    if (ndims != 2) throw std::runtime_error("'" + path + "': record '" + name + "' is not two-dimensional");
    const auto rows = static_cast<Eigen::Index>(get_le<std::uint64_t>(in, path));
    const auto cols = static_cast<Eigen::Index>(get_le<std::uint64_t>(in, path));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = get_le<double>(in, path);
    stored[name] = std::move(m);
  }

  Philox unused(0);
  ckpt.params = NgmmParams::initialize(family, arch, unused, {1.0, 1.0, stored.count("sigma.raw") > 0});
  ParamVector values = ckpt.params.values();
  if (stored.size() != values.segments().size())
    throw std::runtime_error("'" + path + "': record set does not match the architecture");
  for (const auto& seg : values.segments()) {
    auto it = stored.find(seg.name);
    if (it == stored.end()) throw std::runtime_error("'" + path + "': missing record '" + seg.name + "'");
    if (it->second.rows() != seg.rows || it->second.cols() != seg.cols)
      throw std::runtime_error("'" + path + "': record '" + seg.name + "' has the wrong shape");
    values.segment(seg.name) = it->second;
  }
  ckpt.params.set_values(std::move(values));
  return ckpt;
}

}  // namespace ngmm
