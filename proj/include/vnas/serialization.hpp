#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vnas/qnet.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

// Writes via "<path>.partial" and renames into place, so an interrupted
// write never clobbers an existing file; the .partial is left behind for
// inspection when anything fails.
void atomic_write_file(const std::string& path,
                       const std::function<void(std::ostream&)>& emit);
// Reads a whole file into memory (binary).
std::string read_file_bytes(const std::string& path);

// One entry of a checkpoint: a named fp64 tensor.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Binary checkpoint stream format (little-endian throughout):
//   magic "VNASCKPT", u32 version, u64 tensor count,
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims, fp64 data.
// Raw IEEE-754 bytes round-trip exactly.
void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

// Whole-network checkpointing. Files are written to "<path>.partial" first
// and renamed into place, so an interrupted save never clobbers `path`; the
// .partial file is left behind for inspection.
void save_checkpoint(const std::string& path, const QNetwork& net);
// Strict load: the file must carry exactly the network's parameter set with
// matching shapes.
void load_checkpoint(const std::string& path, QNetwork& net);

// Canonical text form of a searched architecture. Emission is fully
// deterministic (fixed key order, single-space separators, %.17g floats),
// so load(save(spec)) re-emits byte-identical text.
std::string architecture_to_text(const ArchitectureSpec& spec);
ArchitectureSpec architecture_from_text(const std::string& text);
void save_architecture(const std::string& path, const ArchitectureSpec& spec);
ArchitectureSpec load_architecture(const std::string& path);

}  // namespace vnas
