#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsce/layers.hpp"

namespace fsce {

// One named tensor of an FSM1 file.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

// FSM1 layout, little-endian:
//   "FSM1" | u32 count | count x { u16 name_len | name | u8 rank | rank x u32 dim | f32 data }
std::vector<std::uint8_t> encode_fsm1(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_fsm1(const std::vector<std::uint8_t>& bytes);

void write_fsm1(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_fsm1(const std::string& path);

// Parameters then buffers, in collection order.
template <typename T>
std::vector<NamedTensor> snapshot(const ParamRefs<T>& refs);
// Copies values into refs by name; every parameter and buffer must be present
// with matching dims, and the file may not contain unknown names.
template <typename T>
void restore(const std::vector<NamedTensor>& tensors, ParamRefs<T>& refs);

// Byte helpers shared by the file codecs.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace fsce
