#include "tpf/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "tpf/armath.hpp"
#include "tpf/errors.hpp"

namespace tpf {

namespace detail {

namespace {

std::uint64_t to_le(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return __builtin_bswap64(x);
  }
  return x;
}

std::uint32_t to_le(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return __builtin_bswap32(x);
  }
  return x;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::string& path)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw io_error("cannot write checkpoint " + path);
}

void BinaryWriter::u32(std::uint32_t x) {
  const std::uint32_t le = to_le(x);
  out_.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

void BinaryWriter::u64(std::uint64_t x) {
  const std::uint64_t le = to_le(x);
  out_.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

void BinaryWriter::f64_block(std::span<const double> xs) {
  for (double x : xs) u64(std::bit_cast<std::uint64_t>(x));
}

void BinaryWriter::raw(const char* data, std::size_t n) {
  out_.write(data, static_cast<std::streamsize>(n));
}

void BinaryWriter::finish() {
  if (!out_.flush()) throw io_error("failed writing checkpoint " + path_);
}

BinaryReader::BinaryReader(const std::string& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw io_error("cannot open checkpoint " + path);
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t x = 0;
  in_.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in_) throw io_error("checkpoint " + path_ + " is truncated");
  return to_le(x);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t x = 0;
  in_.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in_) throw io_error("checkpoint " + path_ + " is truncated");
  return to_le(x);
}

void BinaryReader::f64_block(std::span<double> xs) {
  for (double& x : xs) x = std::bit_cast<double>(u64());
}

void BinaryReader::raw(char* data, std::size_t n) {
  in_.read(data, static_cast<std::streamsize>(n));
  if (!in_) throw io_error("checkpoint " + path_ + " is truncated");
}

void BinaryReader::expect_eof() {
  char c;
  if (in_.read(&c, 1)) {
    throw io_error("checkpoint " + path_ + " has trailing bytes");
  }
}

void write_header(BinaryWriter& w, const CheckpointHeader& h) {
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u32(h.model_kind);
  w.u32(h.delta_mode);
  w.u32(h.cov);
  w.u64(h.d);
  w.u64(h.v);
  w.u64(h.k);
  w.u64(h.t);
  w.u64(h.a);
}

CheckpointHeader read_header(BinaryReader& r) {
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw io_error("checkpoint " + r.path() + " has wrong magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw io_error("checkpoint " + r.path() + " has unsupported version " +
                   std::to_string(version));
  }
  CheckpointHeader h;
  h.model_kind = r.u32();
  h.delta_mode = r.u32();
  h.cov = r.u32();
  h.d = r.u64();
  h.v = r.u64();
  h.k = r.u64();
  h.t = r.u64();
  h.a = r.u64();
  return h;
}

}  // namespace detail

void checkpoint_save(const VariationalState& state, const std::string& path) {
  detail::BinaryWriter w(path);
  detail::CheckpointHeader h;
  h.model_kind = kModelKindTpf;
  h.delta_mode = static_cast<std::uint32_t>(state.delta_mode);
  h.cov = static_cast<std::uint32_t>(state.cov);
  h.d = state.D;
  h.v = state.V;
  h.k = state.K;
  h.t = state.T;
  detail::write_header(w, h);
  w.f64_block(state.theta_shp);
  w.f64_block(state.theta_rte);
  w.f64_block(state.xi_shp);
  w.f64_block(state.xi_rte);
  w.f64_block(state.tau_shp);
  w.f64_block(state.tau_rte);
  w.f64_block(state.delta_loc);
  w.f64_block(state.delta_var);
  w.f64_block(state.mu_loc);
  w.f64_block(state.mu_var);
  w.f64_block(state.h_loc);
  if (state.cov == CovStructure::kDiagonal) {
    w.f64_block(state.h_var);
  } else {
    w.f64_block(state.h_factor);
  }
  w.finish();
}

VariationalState checkpoint_load(const std::string& path,
                                 std::optional<CovStructure> expected_cov) {
  detail::BinaryReader r(path);
  const detail::CheckpointHeader h = detail::read_header(r);
  if (h.model_kind != kModelKindTpf) {
    throw io_error("checkpoint " + path + " holds a different model kind");
  }
  if (h.delta_mode > 2) {
    throw io_error("checkpoint " + path + " has an unknown delta mode");
  }
  if (h.cov > 1) {
    throw io_error("checkpoint " + path + " has an unknown covariance flag");
  }
  VariationalState s;
  s.D = static_cast<int>(h.d);
  s.V = static_cast<int>(h.v);
  s.K = static_cast<int>(h.k);
  s.T = static_cast<int>(h.t);
  s.delta_mode = static_cast<DeltaMode>(h.delta_mode);
  s.cov = static_cast<CovStructure>(h.cov);
  if (expected_cov.has_value() && s.cov != *expected_cov) {
    throw io_error("checkpoint " + path +
                   " stores the other covariance structure than the run "
                   "expects");
  }
  const std::size_t dk = static_cast<std::size_t>(s.D) * s.K;
  const std::size_t kvn = static_cast<std::size_t>(s.K) * s.V;
  const std::size_t kvt = kvn * s.T;
  auto read_block = [&r](std::vector<double>& x, std::size_t n) {
    x.resize(n);
    r.f64_block(x);
  };
  read_block(s.theta_shp, dk);
  read_block(s.theta_rte, dk);
  read_block(s.xi_shp, s.D);
  read_block(s.xi_rte, s.D);
  read_block(s.tau_shp, kvn);
  read_block(s.tau_rte, kvn);
  read_block(s.delta_loc, kvn);
  read_block(s.delta_var, kvn);
  read_block(s.mu_loc, kvn);
  read_block(s.mu_var, kvn);
  read_block(s.h_loc, kvt);
  if (s.cov == CovStructure::kDiagonal) {
    read_block(s.h_var, kvt);
  } else {
    read_block(s.h_factor, kvn * factor_size(s.T));
  }
  r.expect_eof();
  return s;
}

std::uint32_t checkpoint_model_kind(const std::string& path) {
  detail::BinaryReader r(path);
  return detail::read_header(r).model_kind;
}

}  // namespace tpf
