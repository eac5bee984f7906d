#pragma once

#include "oed/linalg.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace oed {

/// Conflicting rewrite, bad magic, checksum mismatch, unreadable file.
class ContainerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F64 = 1, U32 = 2, U64 = 3, Triplet = 4 };

/// One binary array: "OEDBIN01", u8 dtype, u8 rank, rank x u64 dims, row-major payload.
/// Triplet arrays have rank 1 (entry count) and 24-byte entries (u64 row, u64 col, f64 value).
struct Array {
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<unsigned char> payload;

    std::uint64_t elements() const;
    std::vector<unsigned char> encode() const;
    static Array decode(const std::vector<unsigned char>& bytes, const std::string& what);
};

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ULL);

/// A directory holding manifest.txt (sorted "key = value" lines) and one
/// <name>.bin per array. The manifest carries an FNV-1a 64 checksum over all
/// array files in sorted name order. Containers are write-once: saving over an
/// identical container is a no-op, saving over a different one throws.
class Container {
  public:
    Container() = default;

    /// Reads and verifies a container.
    static Container load(const std::filesystem::path& dir);
    static bool exists(const std::filesystem::path& dir);

    /// Writes the container. Returns false when an identical one was already there.
    bool save(const std::filesystem::path& dir) const;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
    void set(const std::string& key, std::uint64_t value);
    void set(const std::string& key, long long value) { set(key, static_cast<std::int64_t>(value)); }
    bool has(const std::string& key) const { return meta_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;

    void put(const std::string& name, const Matrix& m);
    void put(const std::string& name, const Vector& v);
    void put_u32(const std::string& name, const std::vector<std::uint32_t>& v);
    void put_u64(const std::string& name, const std::vector<std::uint64_t>& v);
    void put_sparse(const std::string& name, const SparseMatrix& s);
    bool has_array(const std::string& name) const { return arrays_.count(name) > 0; }
    const Array& array(const std::string& name) const;

    Matrix matrix(const std::string& name) const;
    Vector vector(const std::string& name) const;
    std::vector<std::uint32_t> u32(const std::string& name) const;
    std::vector<std::uint64_t> u64(const std::string& name) const;
    SparseMatrix sparse(const std::string& name) const;

    /// Checksum over the encoded arrays in name order.
    std::string checksum() const;
    const std::map<std::string, std::string>& meta() const noexcept { return meta_; }
    const std::map<std::string, Array>& arrays() const noexcept { return arrays_; }

  private:
    std::string manifest_text() const;
    std::map<std::string, std::string> meta_;
    std::map<std::string, Array> arrays_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace oed
