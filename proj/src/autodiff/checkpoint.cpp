#include "knreader/autodiff/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace knreader::autodiff {
namespace {

constexpr std::array<char, 8> kMagic = {'K', 'N', 'R', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  U value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(U));
  if (!in) throw FormatError("checkpoint is truncated");
  return value;
}

}  // namespace

template <typename T>
void save_checkpoint(const ParameterSet<T>& params, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(T));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = params[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  save_checkpoint(params, out);
}

template <typename T>
ParameterSet<T> load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("not a knreader checkpoint");
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  if (get<std::uint32_t>(in) != sizeof(T)) throw FormatError("checkpoint precision differs from the requested one");
  const std::uint32_t count = get<std::uint32_t>(in);
  ParameterSet<T> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = static_cast<std::size_t>(get<std::uint64_t>(in));
    const auto cols = static_cast<std::size_t>(get<std::uint64_t>(in));
    const bool trainable = get<std::uint8_t>(in) != 0;
    Tensor<T> value(rows, cols);
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(T)));
    if (!in) throw FormatError("checkpoint is truncated in '" + name + "'");
    params.add(std::move(name), std::move(value), trainable);
  }
  return params;
}

template <typename T>
ParameterSet<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint<T>(in);
}

template void save_checkpoint<float>(const ParameterSet<float>&, std::ostream&);
template void save_checkpoint<double>(const ParameterSet<double>&, std::ostream&);
template void save_checkpoint<float>(const ParameterSet<float>&, const std::string&);
template void save_checkpoint<double>(const ParameterSet<double>&, const std::string&);
template ParameterSet<float> load_checkpoint<float>(std::istream&);
template ParameterSet<double> load_checkpoint<double>(std::istream&);
template ParameterSet<float> load_checkpoint<float>(const std::string&);
template ParameterSet<double> load_checkpoint<double>(const std::string&);

}  // namespace knreader::autodiff
