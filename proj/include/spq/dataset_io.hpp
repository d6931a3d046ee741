#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "spq/binary_io.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"
#include "spq/parallel.hpp"
#include "spq/rng.hpp"
#include "spq/vector_set.hpp"

namespace spq {

// On-disk record layouts of the TEXMEX corpus (.fvecs/.bvecs/.ivecs): each
// record is a little-endian int32 dimension followed by d payload elements.
enum class VecsFormat { f32, u8, i32 };

inline std::string_view to_string(VecsFormat f) {
  switch (f) {
    case VecsFormat::f32: return "fvecs";
    case VecsFormat::u8: return "bvecs";
    case VecsFormat::i32: return "ivecs";
  }
  return "?";
}

inline VecsFormat parse_vecs_format(std::string_view s) {
  if (s == "fvecs" || s == "f32" || s == "f32-vecs") return VecsFormat::f32;
  if (s == "bvecs" || s == "u8" || s == "u8-vecs") return VecsFormat::u8;
  if (s == "ivecs" || s == "i32" || s == "i32-vecs") return VecsFormat::i32;
  throw ConfigError("unknown vecs format: " + std::string(s));
}

// Picks the format from a .fvecs/.bvecs/.ivecs extension; defaults to f32.
inline VecsFormat format_from_path(std::string_view path) {
  if (path.ends_with(".bvecs")) return VecsFormat::u8;
  if (path.ends_with(".ivecs")) return VecsFormat::i32;
  return VecsFormat::f32;
}

inline std::size_t element_size(VecsFormat f) { return f == VecsFormat::u8 ? 1 : 4; }

inline VectorSet parse_vecs(std::span<const char> bytes, VecsFormat format) {
  if (bytes.empty()) throw FormatError("empty file");
  io::ByteReader in(bytes);
  const std::size_t elem = element_size(format);
  std::size_t d = 0;
  std::size_t n = 0;
  std::vector<float> data;
  while (!in.done()) {
    const std::size_t record_start = in.offset();
    if (in.remaining() < 4) throw FormatError("truncated record header", record_start);
    const std::int32_t dim = in.i32();
    if (dim <= 0) {
      throw FormatError("non-positive dimension " + std::to_string(dim), record_start);
    }
    if (n == 0) {
      d = static_cast<std::size_t>(dim);
      data.reserve((bytes.size() / (4 + d * elem)) * d);
    } else if (static_cast<std::size_t>(dim) != d) {
      throw DimensionMismatch("record " + std::to_string(n) + " at byte offset " +
                              std::to_string(record_start) + " has dimension " +
                              std::to_string(dim) + ", expected " + std::to_string(d));
    }
    if (in.remaining() < d * elem) {
      throw FormatError("malformed record length: record " + std::to_string(n) + " needs " +
                            std::to_string(d * elem) + " payload bytes, " +
                            std::to_string(in.remaining()) + " remain",
                        in.offset());
    }
    for (std::size_t j = 0; j < d; ++j) {
      float v = 0.0f;
      switch (format) {
        case VecsFormat::f32: v = in.f32(); break;
        case VecsFormat::u8: v = static_cast<float>(in.u8()); break;
        case VecsFormat::i32: v = static_cast<float>(in.i32()); break;
      }
      if (!std::isfinite(v)) {
        throw FormatError("non-finite value in record " + std::to_string(n), in.offset() - elem);
      }
      data.push_back(v);
    }
    ++n;
  }
  return VectorSet(n, d, std::move(data));
}

inline VectorSet read_vecs(const std::string& path, VecsFormat format) {
  const auto bytes = io::read_file(path);
  try {
    return parse_vecs(bytes, format);
  } catch (const FormatError& e) {
    throw FormatError::prefixed(path + ": ", e);
  }
}

inline VectorSet read_vecs(const std::string& path) { return read_vecs(path, format_from_path(path)); }

inline std::vector<char> serialize_vecs(const VectorSet& vs, VecsFormat format) {
  if (vs.empty()) throw RangeError("write_vecs: refusing to write an empty set");
  if (vs.d() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw RangeError("write_vecs: dimension does not fit the int32 header");
  }
  io::ByteWriter out;
  for (std::size_t i = 0; i < vs.n(); ++i) {
    out.i32(static_cast<std::int32_t>(vs.d()));
    for (float v : vs.row(i)) {
      switch (format) {
        case VecsFormat::f32: out.f32(v); break;
        case VecsFormat::u8:
          if (v < 0.0f || v > 255.0f || std::floor(v) != v) {
            throw RangeError("write_vecs: value " + std::to_string(v) + " in row " +
                             std::to_string(i) + " is not an integer in [0, 255]");
          }
          out.u8(static_cast<std::uint8_t>(v));
          break;
        case VecsFormat::i32:
          if (std::floor(v) != v || v < -2147483648.0f || v >= 2147483648.0f) {
            throw RangeError("write_vecs: value " + std::to_string(v) + " in row " +
                             std::to_string(i) + " is not an int32");
          }
          out.i32(static_cast<std::int32_t>(v));
          break;
      }
    }
  }
  return out.take();
}

inline void write_vecs(const std::string& path, VecsFormat format, const VectorSet& vs) {
  const auto bytes = serialize_vecs(vs, format);
  io::write_file(path, bytes);
}

// n x d i.i.d. standard normal values; a pure function of (n, d, seed).
inline VectorSet gen_gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw RangeError("gen_gaussian: n and d must be >= 1");
  Rng rng(seed);
  std::vector<float> data(n * d);
  for (float& v : data) v = static_cast<float>(rng.normal());
  return VectorSet(n, d, std::move(data));
}

// Exact t-nearest-neighbour lists, one per query.
struct GroundTruth {
  std::size_t t = 0;
  std::vector<std::vector<std::uint32_t>> ids;
  std::vector<std::vector<float>> dists;

  std::size_t queries() const { return ids.size(); }
};

inline GroundTruth exact_knn(const VectorSet& gallery, const VectorSet& queries, std::size_t t,
                             std::size_t threads = 1) {
  detail::require_same_dim(gallery.d(), queries.d(), "exact_knn");
  if (t < 1 || t > gallery.n()) {
    throw RangeError("exact_knn: t=" + std::to_string(t) + " outside [1, " +
                     std::to_string(gallery.n()) + "]");
  }
  GroundTruth gt;
  gt.t = t;
  gt.ids.resize(queries.n());
  gt.dists.resize(queries.n());
  const std::size_t d = gallery.d();
  parallel_for(queries.n(), threads, [&](std::size_t qi) {
    const float* q = queries.row(qi).data();
    TopK sel(t);
    for (std::size_t j = 0; j < gallery.n(); ++j) {
      const auto dist = static_cast<float>(kernels::sq_l2_unchecked(q, gallery.row(j).data(), d));
      sel.push(static_cast<std::uint32_t>(j), dist);
    }
    for (const ScoredId& s : sel.take_sorted()) {
      gt.ids[qi].push_back(s.id);
      gt.dists[qi].push_back(s.score);
    }
  });
  return gt;
}

// Ground-truth ids as an .ivecs file (one record of t ids per query).
inline void write_id_lists(const std::string& path,
                           const std::vector<std::vector<std::uint32_t>>& rows);

inline void write_groundtruth(const std::string& path, const GroundTruth& gt) {
  write_id_lists(path, gt.ids);
}

// Integer rows of an .ivecs file, read without the float widening of
// read_vecs so ids above 2^24 survive. Rows may differ in length.
inline std::vector<std::vector<std::uint32_t>> read_id_lists(const std::string& path) {
  const auto bytes = io::read_file(path);
  if (bytes.empty()) throw FormatError(path + ": empty file");
  io::ByteReader in(bytes);
  std::vector<std::vector<std::uint32_t>> rows;
  while (!in.done()) {
    const std::size_t start = in.offset();
    const std::int32_t len = in.i32();
    if (len < 0) throw FormatError(path + ": negative record length", start);
    in.need(static_cast<std::size_t>(len) * 4, "id record");
    auto& row = rows.emplace_back();
    for (std::int32_t j = 0; j < len; ++j) {
      const std::int32_t id = in.i32();
      if (id < 0) throw FormatError(path + ": negative id", in.offset() - 4);
      row.push_back(static_cast<std::uint32_t>(id));
    }
  }
  return rows;
}

inline void write_id_lists(const std::string& path,
                           const std::vector<std::vector<std::uint32_t>>& rows) {
  io::ByteWriter out;
  for (const auto& row : rows) {
    out.i32(static_cast<std::int32_t>(row.size()));
    for (std::uint32_t id : row) out.i32(static_cast<std::int32_t>(id));
  }
  io::write_file(path, out.bytes());
}

// Reads an .ivecs id list. Distances are not stored in that format and are
// left empty.
inline GroundTruth read_groundtruth(const std::string& path) {
  GroundTruth gt;
  gt.ids = read_id_lists(path);
  gt.t = gt.ids.empty() ? 0 : gt.ids.front().size();
  for (const auto& row : gt.ids) {
    if (row.size() != gt.t) throw DimensionMismatch(path + ": ragged ground-truth rows");
  }
  return gt;
}

}  // namespace spq
