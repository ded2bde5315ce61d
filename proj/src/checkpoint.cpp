#include "genhead/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace genhead {

namespace {

constexpr char kMagic[8] = {'G', 'H', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  nlohmann::json header;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : params) {
    header["tensors"].push_back({{"name", p->name},
                                 {"shape", p->value.shape()},
                                 {"offset", offset},
                                 {"count", p->value.size()}});
    offset += p->value.size() * sizeof(double);
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) {
    for (double v : p->value.values()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint64_t len = get_u64(bytes.data() + 8);
  if (16 + len > bytes.size()) throw std::runtime_error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  const unsigned char* data = bytes.data() + 16 + len;
  const std::size_t data_len = bytes.size() - 16 - len;

  std::vector<NamedTensor> out;
  for (const auto& t : header.at("tensors")) {
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    if (count != numel(shape) || offset + count * 8 > data_len) {
      throw std::runtime_error("corrupt checkpoint entry " + t.at("name").get<std::string>());
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<double>(get_u64(data + offset + 8 * i));
    }
    out.push_back({t.at("name").get<std::string>(), Tensor(shape, std::move(values))});
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::map<std::string, Tensor> by_name;
  for (auto& nt : read_checkpoint(path)) by_name.emplace(nt.name, nt.value);
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError("checkpoint shape mismatch for " + p->name);
    }
    p->value = it->second;
  }
}

}  // namespace genhead
