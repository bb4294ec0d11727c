#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "swm/tensor.hpp"

namespace swm::io {

// Flat little-endian tensor record:
//   magic "SWMT" | version u32 | rank u32 | extents u64 x rank | payload f64 x count
inline constexpr std::uint32_t kContainerVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Parameter set = concatenated records in one .bin plus a JSON sidecar
// listing name, byte offset and shape per record.
void save_named_tensors(const std::filesystem::path& bin_path,
                        const std::filesystem::path& manifest_path,
                        const NamedTensors& tensors);
NamedTensors load_named_tensors(const std::filesystem::path& bin_path,
                                const std::filesystem::path& manifest_path);

// FNV-1a over the little-endian f64 payload bytes of the given tensors,
// in order. Used for frozen-group verification.
std::uint64_t content_hash(const NamedTensors& tensors);
std::string hash_hex(std::uint64_t h);

}  // namespace swm::io
