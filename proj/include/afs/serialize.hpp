#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "afs/blocks.hpp"
#include "afs/tensor.hpp"

namespace afs {

// Binary tensor container. One record is:
//   magic "TNSR" | version u16 LE (=1) | dtype u8 (0 = f32) | rank u8 |
//   extents rank x u32 LE | payload row-major f32 LE
// A parameter-tree file is a sequence of records, each preceded by a
// u32-LE-length-prefixed UTF-8 name. Payload bytes round-trip exactly,
// including NaN bit patterns.

inline constexpr std::uint16_t kTnsrVersion = 1;

void write_tensor_record(std::ostream& os, const Tensor& t, std::size_t& offset);
Tensor read_tensor_record(std::istream& is, std::size_t& offset);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& items);
std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path);

// Checkpointing: parameter order and names come from the store.
void save_params(const std::string& path, const ParamStore& store);
// Every parameter in the store must be present with a matching shape; unknown
// names in the file are rejected.
void load_params(const std::string& path, ParamStore& store);

}  // namespace afs
