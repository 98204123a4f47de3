#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "eddyscope/errors.hpp"
#include "eddyscope/forward_model.hpp"
#include "eddyscope/io/atomic_file.hpp"

namespace eddyscope::io {

static_assert(std::endian::native == std::endian::little, "MSR files are little-endian");

inline constexpr char kMsrMagic[4] = {'E', 'M', 'S', 'R'};
inline constexpr std::uint32_t kMsrVersion = 1;
inline constexpr std::uint64_t kNoSeed = std::numeric_limits<std::uint64_t>::max();

/// Layout: magic "EMSR", u32 version, u64 N, u64 M, f64 omega, f64 sigma_noise,
/// u64 seed (all ones when clean), f64 q[3], then N*M f64 row-major.
inline std::string encode_msr(const MsrMatrix& a) {
  std::string out;
  auto put = [&out](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.append(kMsrMagic, 4);
  put(kMsrVersion);
  put(static_cast<std::uint64_t>(a.A.rows()));
  put(static_cast<std::uint64_t>(a.A.cols()));
  put(a.omega);
  put(a.sigma_noise);
  put(a.seed.value_or(kNoSeed));
  for (int i = 0; i < 3; ++i) put(a.q(i));
  for (Eigen::Index n = 0; n < a.A.rows(); ++n)
    for (Eigen::Index m = 0; m < a.A.cols(); ++m) put(a.A(n, m));
  return out;
}

inline MsrMatrix decode_msr(const std::string& bytes) {
  std::size_t pos = 0;
  auto get = [&](auto& v) {
    if (pos + sizeof(v) > bytes.size()) fail(ErrorKind::IoError, "truncated MSR file");
    std::memcpy(&v, bytes.data() + pos, sizeof(v));
    pos += sizeof(v);
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMsrMagic, 4) != 0) fail(ErrorKind::IoError, "not an MSR file");
  pos = 4;
  std::uint32_t version = 0;
  get(version);
  if (version != kMsrVersion) fail(ErrorKind::IoError, "unsupported MSR version " + std::to_string(version));
  std::uint64_t n = 0, m = 0, seed = 0;
  MsrMatrix a;
  get(n);
  get(m);
  get(a.omega);
  get(a.sigma_noise);
  get(seed);
  for (int i = 0; i < 3; ++i) get(a.q(i));
  if (n > (1u << 20) || m > (1u << 20) || bytes.size() - pos != n * m * sizeof(double))
    fail(ErrorKind::IoError, "MSR payload size does not match its header");
  if (seed != kNoSeed) a.seed = seed;
  a.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index r = 0; r < a.A.rows(); ++r)
    for (Eigen::Index c = 0; c < a.A.cols(); ++c) get(a.A(r, c));
  return a;
}

inline void write_msr(const std::filesystem::path& path, const MsrMatrix& a) { write_atomic(path, encode_msr(a)); }

inline MsrMatrix read_msr(const std::filesystem::path& path) { return decode_msr(read_file(path)); }

inline std::string msr_to_csv(const MsrMatrix& a) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  for (Eigen::Index n = 0; n < a.A.rows(); ++n) {
    for (Eigen::Index m = 0; m < a.A.cols(); ++m) ss << (m ? "," : "") << a.A(n, m);
    ss << '\n';
  }
  return ss.str();
}

}  // namespace eddyscope::io
