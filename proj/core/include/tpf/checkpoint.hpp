#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpf/state.hpp"

namespace tpf {

// Binary snapshot: 8 magic bytes, a version word, a model-kind tag, the
// mode flags and dimensions, then every block as little-endian 64-bit
// floats in the order the state declares them.

inline constexpr char kCheckpointMagic[8] = {'T', 'P', 'F', 'S',
                                             'T', 'A', 'T', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kModelKindTpf = 0;
inline constexpr std::uint32_t kModelKindDpf = 1;

void checkpoint_save(const VariationalState& state, const std::string& path);

// `expected_cov` guards a caller configured for one covariance structure
// against silently picking up the other.
VariationalState checkpoint_load(
    const std::string& path,
    std::optional<CovStructure> expected_cov = std::nullopt);

// Reads just the model-kind tag so tools can dispatch.
std::uint32_t checkpoint_model_kind(const std::string& path);

namespace detail {

struct CheckpointHeader {
  std::uint32_t model_kind = 0, delta_mode = 0, cov = 0;
  std::uint64_t d = 0, v = 0, k = 0, t = 0, a = 0;
};

class BinaryWriter {
 public:
  BinaryWriter(const std::string& path);
  void u32(std::uint32_t x);
  void u64(std::uint64_t x);
  void f64_block(std::span<const double> xs);
  void raw(const char* data, std::size_t n);
  void finish();

 private:
  std::ofstream out_;
  std::string path_;
};

class BinaryReader {
 public:
  BinaryReader(const std::string& path);
  std::uint32_t u32();
  std::uint64_t u64();
  void f64_block(std::span<double> xs);
  void raw(char* data, std::size_t n);
  void expect_eof();
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

void write_header(BinaryWriter& w, const CheckpointHeader& h);
// Validates the magic bytes and the version before returning the fields.
CheckpointHeader read_header(BinaryReader& r);

}  // namespace detail

}  // namespace tpf
