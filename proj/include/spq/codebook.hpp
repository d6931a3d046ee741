#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spq/binary_io.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"

namespace spq {

inline constexpr std::size_t kMaxCodebookSize = 65536;

// k unit-norm atoms of dimension d_sub plus their Gram matrix.
class Codebook {
 public:
  Codebook() = default;

  // Normalizes each row of `raw` (k x d_sub, row-major). Throws RangeError on
  // a zero-norm row; callers that can re-seed must do so before this point.
  static Codebook from_atoms(std::size_t k, std::size_t d_sub, std::vector<float> raw) {
    check_shape(k, d_sub, raw.size());
    for (std::size_t j = 0; j < k; ++j) {
      float* a = raw.data() + j * d_sub;
      const double norm = std::sqrt(kernels::sq_norm_unchecked(a, d_sub));
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw RangeError("codebook atom " + std::to_string(j) + " has zero norm");
      }
      for (std::size_t t = 0; t < d_sub; ++t) a[t] = static_cast<float>(a[t] / norm);
    }
    Codebook cb;
    cb.k_ = k;
    cb.d_sub_ = d_sub;
    cb.atoms_ = std::move(raw);
    cb.gram_ = compute_gram(cb.atoms_, k, d_sub);
    return cb;
  }

  // Rebuilds a codebook from stored atoms and Gram matrix without touching
  // the values, validating the unit-norm invariant.
  static Codebook from_stored(std::size_t k, std::size_t d_sub, std::vector<float> atoms,
                              std::vector<float> gram) {
    check_shape(k, d_sub, atoms.size());
    if (gram.size() != k * k) throw FormatError("codebook gram matrix has wrong size");
    for (std::size_t j = 0; j < k; ++j) {
      const double n2 = kernels::sq_norm_unchecked(atoms.data() + j * d_sub, d_sub);
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-5) {
        throw FormatError("stored atom " + std::to_string(j) + " is not unit norm");
      }
    }
    Codebook cb;
    cb.k_ = k;
    cb.d_sub_ = d_sub;
    cb.atoms_ = std::move(atoms);
    cb.gram_ = std::move(gram);
    return cb;
  }

  std::size_t k() const { return k_; }
  std::size_t d_sub() const { return d_sub_; }
  std::span<const float> atom(std::size_t j) const { return {atoms_.data() + j * d_sub_, d_sub_}; }
  std::span<const float> atoms() const { return atoms_; }
  std::span<const float> gram() const { return gram_; }
  float gram(std::size_t a, std::size_t b) const { return gram_[a * k_ + b]; }

  friend bool operator==(const Codebook&, const Codebook&) = default;

  static std::vector<float> compute_gram(std::span<const float> atoms, std::size_t k,
                                         std::size_t d_sub) {
    std::vector<float> g(k * k);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a; b < k; ++b) {
        const auto v = static_cast<float>(
            kernels::dot_unchecked(atoms.data() + a * d_sub, atoms.data() + b * d_sub, d_sub));
        g[a * k + b] = v;
        g[b * k + a] = v;
      }
    }
    return g;
  }

 private:
  static void check_shape(std::size_t k, std::size_t d_sub, std::size_t len) {
    if (k == 0 || k > kMaxCodebookSize) {
      throw RangeError("codebook size k=" + std::to_string(k) + " outside [1, 65536]");
    }
    if (d_sub == 0) throw RangeError("codebook subspace dimension must be >= 1");
    if (len != k * d_sub) throw DimensionMismatch("codebook atoms length != k * d_sub");
  }

  std::size_t k_ = 0;
  std::size_t d_sub_ = 0;
  std::vector<float> atoms_;
  std::vector<float> gram_;
};

// k x k matrix of pairwise atom dot products.
inline std::vector<float> gram(const Codebook& cb) {
  return Codebook::compute_gram(cb.atoms(), cb.k(), cb.d_sub());
}

// Column partition of a D-dimensional space into m contiguous subspaces.
class SubspaceLayout {
 public:
  SubspaceLayout() = default;

  explicit SubspaceLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw RangeError("subspace layout needs m >= 1");
    offsets_.reserve(dims_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t d : dims_) {
      if (d == 0) throw RangeError("subspace dimension must be >= 1");
      offsets_.push_back(offsets_.back() + d);
    }
  }

  // Equal split of `dim` into m subspaces.
  static SubspaceLayout uniform(std::size_t dim, std::size_t m) {
    if (m == 0) throw ConfigError("m must be >= 1");
    if (dim % m != 0) {
      throw ConfigError("dimension " + std::to_string(dim) + " is not divisible by m=" +
                        std::to_string(m) + "; pass explicit subspace_dims");
    }
    return SubspaceLayout(std::vector<std::size_t>(m, dim / m));
  }

  std::size_t m() const { return dims_.size(); }
  std::size_t dim() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t width(std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  template <typename T>
  std::span<T> sub(std::span<T> v, std::size_t i) const {
    return v.subspan(offsets_[i], dims_[i]);
  }

  friend bool operator==(const SubspaceLayout&, const SubspaceLayout&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
};

// One unit-norm codebook per subspace; all share the same k.
class ProductCodebook {
 public:
  ProductCodebook() = default;

  ProductCodebook(SubspaceLayout layout, std::vector<Codebook> books)
      : layout_(std::move(layout)), books_(std::move(books)) {
    if (books_.size() != layout_.m()) throw DimensionMismatch("product codebook: m mismatch");
    for (std::size_t i = 0; i < books_.size(); ++i) {
      if (books_[i].d_sub() != layout_.width(i)) {
        throw DimensionMismatch("product codebook: subspace " + std::to_string(i) +
                                " width differs from its codebook");
      }
      if (books_[i].k() != books_[0].k()) {
        throw DimensionMismatch("product codebook: all subspaces must share k");
      }
    }
  }

  std::size_t m() const { return layout_.m(); }
  std::size_t k() const { return books_.empty() ? 0 : books_[0].k(); }
  std::size_t dim() const { return layout_.dim(); }
  const SubspaceLayout& layout() const { return layout_; }
  const Codebook& book(std::size_t i) const { return books_[i]; }

  friend bool operator==(const ProductCodebook&, const ProductCodebook&) = default;

 private:
  SubspaceLayout layout_;
  std::vector<Codebook> books_;
};

// Codebook file: "SPQB", u32 version, u32 m, u32 k, m x u32 subspace dims,
// then the atoms of every subspace, then every Gram matrix (f32 LE).
inline constexpr std::uint32_t kCodebookVersion = 1;

inline void append_product_codebook(io::ByteWriter& out, const ProductCodebook& pcb) {
  out.magic("SPQB");
  out.u32(kCodebookVersion);
  out.u32(static_cast<std::uint32_t>(pcb.m()));
  out.u32(static_cast<std::uint32_t>(pcb.k()));
  for (std::size_t d : pcb.layout().dims()) out.u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < pcb.m(); ++i) out.f32s(pcb.book(i).atoms());
  for (std::size_t i = 0; i < pcb.m(); ++i) out.f32s(pcb.book(i).gram());
}

inline ProductCodebook parse_product_codebook(io::ByteReader& in) {
  in.expect_magic("SPQB");
  const std::size_t version_at = in.offset();
  if (in.u32() != kCodebookVersion) throw FormatError("unsupported codebook version", version_at);
  const std::size_t m = in.u32();
  const std::size_t k = in.u32();
  if (m == 0 || k == 0 || k > kMaxCodebookSize) {
    throw FormatError("codebook header has invalid m or k", in.offset());
  }
  std::vector<std::size_t> dims(m);
  for (auto& d : dims) d = in.u32();
  SubspaceLayout layout(dims);
  std::vector<std::vector<float>> atoms(m);
  for (std::size_t i = 0; i < m; ++i) {
    atoms[i].resize(k * dims[i]);
    in.f32s(atoms[i]);
  }
  std::vector<Codebook> books;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<float> g(k * k);
    in.f32s(g);
    books.push_back(Codebook::from_stored(k, dims[i], std::move(atoms[i]), std::move(g)));
  }
  return ProductCodebook(std::move(layout), std::move(books));
}

inline void save_product_codebook(const std::string& path, const ProductCodebook& pcb) {
  io::ByteWriter out;
  append_product_codebook(out, pcb);
  io::write_file(path, out.bytes());
}

inline ProductCodebook load_product_codebook(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  auto pcb = parse_product_codebook(in);
  if (!in.done()) throw FormatError(path + ": trailing bytes after codebook", in.offset());
  return pcb;
}

}  // namespace spq
