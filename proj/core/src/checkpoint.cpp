#include "fsce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "fsce/io_bytes.hpp"

namespace fsce {

std::vector<std::uint8_t> encode_fsm1(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.raw("FSM1", 4);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("fsm1: tensor name longer than 65535 bytes");
    if (t.dims.size() > 0xFF) throw FormatError("fsm1: rank above 255 for " + t.name);
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.data.size()) throw FormatError("fsm1: dims of " + t.name + " do not match its data size");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_fsm1(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "fsm1");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FSM1", 4) != 0) throw FormatError("fsm1: bad magic");
  r.skip(4);
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t len = r.u16();
    t.name = r.str(len);
    const std::uint8_t rank = r.u8();
    std::size_t n = 1;
    for (int k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    r.require(n * 4);
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = r.f32();
    out.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError("fsm1: " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("write to '" + path + "' failed");
}

void write_fsm1(const std::string& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, encode_fsm1(tensors));
}

std::vector<NamedTensor> read_fsm1(const std::string& path) {
  try {
    return decode_fsm1(read_file_bytes(path));
  } catch (const FormatError& e) {
    if (dynamic_cast<const LengthError*>(&e)) throw LengthError(path + ": " + e.what());
    throw FormatError(path + ": " + e.what());
  }
}

template <typename T>
std::vector<NamedTensor> snapshot(const ParamRefs<T>& refs) {
  std::vector<NamedTensor> out;
  auto put = [&](const std::string& name, const std::vector<std::uint32_t>& dims, const Tensor<T>& v) {
    NamedTensor t{name, dims, std::vector<float>(v.size())};
    for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
    out.push_back(std::move(t));
  };
  for (const auto* p : refs.params) put(p->name, p->dims, p->value());
  for (const auto* b : refs.buffers) put(b->name, b->dims, b->value);
  return out;
}

template <typename T>
void restore(const std::vector<NamedTensor>& tensors, ParamRefs<T>& refs) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) throw FormatError("checkpoint: duplicate tensor " + t.name);
  }
  std::size_t used = 0;
  auto take = [&](const std::string& name, const std::vector<std::uint32_t>& dims, Tensor<T>& v) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor " + name);
    if (it->second->dims != dims) throw ShapeError("checkpoint: dims of " + name + " do not match the model");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(it->second->data[i]);
    ++used;
  };
  for (auto* p : refs.params) take(p->name, p->dims, p->value());
  for (auto* b : refs.buffers) take(b->name, b->dims, b->value);
  if (used != tensors.size()) {
    throw FormatError("checkpoint: " + std::to_string(tensors.size() - used) + " tensors do not belong to the model");
  }
}

template std::vector<NamedTensor> snapshot(const ParamRefs<float>&);
template std::vector<NamedTensor> snapshot(const ParamRefs<double>&);
template void restore(const std::vector<NamedTensor>&, ParamRefs<float>&);
template void restore(const std::vector<NamedTensor>&, ParamRefs<double>&);

}  // namespace fsce
