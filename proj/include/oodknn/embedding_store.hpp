#pragma once

// Embedding and logit sets plus their on-disk formats.
//
// Binary layout ("OODB" container, all integers little-endian):
//
//   offset  size  field
//   0       4     magic "OODB"
//   4       2     version (1)
//   6       1     dtype (0 = float32 LE)
//   7       1     reserved (0)
//   8       8     count
//   16      4     dim
//   20      4*count*dim   row-major payload
//   ...     ids: count entries of {u32 byte length, UTF-8 bytes}
//
// A file whose extension is ".csv" is parsed as text instead: one row per
// line, first field the id, the remaining fields the vector components.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "oodknn/error.hpp"

namespace oodknn {

inline constexpr std::array<char, 4> kMagic = {'O', 'O', 'D', 'B'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::size_t kHeaderSize = 20;

// Row policy for penultimate-layer embeddings: finite and not all zero.
struct EmbeddingRows {
  static constexpr const char* kind = "embedding";
  static constexpr std::size_t min_dim = 1;

  static void check_row(std::span<const float> row, std::size_t index) {
    bool nonzero = false;
    for (float v : row) {
      if (!std::isfinite(v)) {
        throw DataError("embedding row " + std::to_string(index) +
                        ": non-finite component");
      }
      nonzero = nonzero || v != 0.0F;
    }
    if (!nonzero) {
      throw DataError("embedding row " + std::to_string(index) +
                      ": all-zero vector (cosine distance undefined)");
    }
  }
};

// Row policy for pre-softmax classifier outputs.
struct LogitRows {
  static constexpr const char* kind = "logit";
  static constexpr std::size_t min_dim = 2;

  static void check_row(std::span<const float> row, std::size_t index) {
    for (float v : row) {
      if (!std::isfinite(v)) {
        throw DataError("logit row " + std::to_string(index) +
                        ": non-finite component");
      }
    }
  }
};

// Immutable row-major matrix of float32 rows, each tagged with a unique id.
template <class RowPolicy>
class VectorSet {
 public:
  VectorSet() = default;

  VectorSet(std::size_t dim, std::vector<float> values,
            std::vector<std::string> ids)
      : dim_(dim), values_(std::move(values)), ids_(std::move(ids)) {
    if (dim_ < RowPolicy::min_dim) {
      throw DataError(std::string(RowPolicy::kind) + " set: dimension " +
                      std::to_string(dim_) + " below minimum " +
                      std::to_string(RowPolicy::min_dim));
    }
    if (values_.size() != dim_ * ids_.size()) {
      throw DataError(std::string(RowPolicy::kind) + " set: " +
                      std::to_string(values_.size()) + " values for " +
                      std::to_string(ids_.size()) + " ids of dimension " +
                      std::to_string(dim_));
    }
    for (std::size_t i = 0; i < count(); ++i) {
      RowPolicy::check_row(row(i), i);
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!seen.insert(ids_[i]).second) {
        throw DataError(std::string(RowPolicy::kind) + " row " +
                        std::to_string(i) + ": duplicate id '" + ids_[i] +
                        "'");
      }
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const float> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const float> values() const noexcept { return values_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const noexcept { return ids_[i]; }

  // Bitwise equality of payload and ids.
  friend bool operator==(const VectorSet& a, const VectorSet& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           a.values_.size() == b.values_.size() &&
           (a.values_.empty() ||
            std::memcmp(a.values_.data(), b.values_.data(),
                        a.values_.size() * sizeof(float)) == 0);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<std::string> ids_;
};

using EmbeddingSet = VectorSet<EmbeddingRows>;

// Logit sets call their dimension "classes".
class LogitSet : public VectorSet<LogitRows> {
 public:
  using VectorSet<LogitRows>::VectorSet;
  LogitSet(VectorSet<LogitRows> base) : VectorSet<LogitRows>(std::move(base)) {}
  std::size_t classes() const noexcept { return dim(); }
};

namespace detail {

struct RawSet {
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::string> ids;
};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
  }
}

template <class T>
T get_le(const char* p) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    v |= static_cast<T>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return v;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failure on '" + path.string() + "'");
  }
  return bytes;
}

inline bool is_csv_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".csv";
}

inline RawSet decode_binary(std::string_view bytes, const std::string& name) {
  if (bytes.size() < kHeaderSize) {
    if (bytes.size() >= 4 && !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
      throw FormatError(name + ": bad magic");
    }
    throw TruncationError(name + ": file shorter than the " +
                          std::to_string(kHeaderSize) + "-byte header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(name + ": bad magic");
  }
  const char* p = bytes.data();
  const auto version = get_le<std::uint16_t>(p + 4);
  if (version != kFormatVersion) {
    throw FormatError(name + ": unsupported version " + std::to_string(version));
  }
  if (static_cast<std::uint8_t>(p[6]) != kDtypeFloat32) {
    throw FormatError(name + ": unsupported dtype " +
                      std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(p[6]))));
  }
  if (p[7] != 0) {
    throw FormatError(name + ": nonzero reserved byte");
  }
  const auto count = get_le<std::uint64_t>(p + 8);
  const auto dim = get_le<std::uint32_t>(p + 16);

  const std::size_t avail = bytes.size() - kHeaderSize;
  // Guard count*dim*4 against overflow before comparing with the payload.
  if (dim != 0 && count > avail / 4 / dim) {
    throw TruncationError(name + ": header declares " + std::to_string(count) +
                          " x " + std::to_string(dim) + " floats but only " +
                          std::to_string(avail / 4) + " are present");
  }
  const std::size_t n_values = static_cast<std::size_t>(count) * dim;

  RawSet raw;
  raw.dim = dim;
  raw.values.resize(n_values);
  const char* payload = p + kHeaderSize;
  for (std::size_t i = 0; i < n_values; ++i) {
    raw.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload + 4 * i));
  }

  std::size_t off = kHeaderSize + 4 * n_values;
  raw.ids.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    if (bytes.size() - off < 4) {
      throw TruncationError(name + ": id block ends before id " + std::to_string(i));
    }
    const auto len = get_le<std::uint32_t>(p + off);
    off += 4;
    if (bytes.size() - off < len) {
      throw TruncationError(name + ": id " + std::to_string(i) + " truncated");
    }
    raw.ids.emplace_back(p + off, len);
    off += len;
  }
  if (off != bytes.size()) {
    throw FormatError(name + ": " + std::to_string(bytes.size() - off) +
                      " trailing bytes after id block");
  }
  return raw;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline RawSet decode_csv(std::string_view text, const std::string& name) {
  RawSet raw;
  bool have_dim = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;

    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = trim(line.substr(start, comma - start));
      if (fields == 0) {
        raw.ids.emplace_back(field);
      } else {
        float v = 0.0F;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
          throw DataError(name + ":" + std::to_string(line_no) + ": cannot parse '" +
                          std::string(field) + "' as a number");
        }
        raw.values.push_back(v);
      }
      ++fields;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const std::size_t row_dim = fields - 1;
    if (!have_dim) {
      raw.dim = row_dim;
      have_dim = true;
    } else if (row_dim != raw.dim) {
      throw DataError(name + ":" + std::to_string(line_no) + ": row has " +
                      std::to_string(row_dim) + " components, expected " +
                      std::to_string(raw.dim));
    }
  }
  return raw;
}

inline RawSet read_raw(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  return is_csv_path(path) ? decode_csv(bytes, path.string())
                           : decode_binary(bytes, path.string());
}

template <class RowPolicy>
VectorSet<RowPolicy> read_set(const std::filesystem::path& path) {
  RawSet raw = read_raw(path);
  try {
    return VectorSet<RowPolicy>(raw.dim, std::move(raw.values), std::move(raw.ids));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <class RowPolicy>
std::string encode_binary(const VectorSet<RowPolicy>& set) {
  std::string out;
  std::size_t id_bytes = 0;
  for (const auto& id : set.ids()) id_bytes += 4 + id.size();
  out.reserve(kHeaderSize + 4 * set.values().size() + id_bytes);

  out.append(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(out, kFormatVersion);
  out.push_back(static_cast<char>(kDtypeFloat32));
  out.push_back('\0');
  put_le<std::uint64_t>(out, set.count());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
  for (float v : set.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  for (const auto& id : set.ids()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  return out;
}

inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw IoError("write failure on '" + path.string() + "'");
  }
}

}  // namespace detail

inline EmbeddingSet read_embedding_file(const std::filesystem::path& path) {
  return detail::read_set<EmbeddingRows>(path);
}

inline LogitSet read_logit_file(const std::filesystem::path& path) {
  return LogitSet(detail::read_set<LogitRows>(path));
}

// Always writes the binary container, whatever the extension.
template <class RowPolicy>
void write_set_file(const VectorSet<RowPolicy>& set, const std::filesystem::path& path) {
  detail::write_bytes(path, detail::encode_binary(set));
}

inline void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_set_file(set, path);
}

inline void write_logit_file(const LogitSet& set, const std::filesystem::path& path) {
  write_set_file<LogitRows>(set, path);
}

}  // namespace oodknn
