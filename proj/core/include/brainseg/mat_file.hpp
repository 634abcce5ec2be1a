#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace brainseg::mat {

/// A numeric array read from a MAT v7.3 container. dims are in MATLAB order
/// (rows, cols, ...) and values are column-major, as MATLAB stores them.
struct Array {
  std::vector<std::size_t> dims;
  std::vector<double> values;
  std::string matlab_class;

  std::size_t numel() const noexcept { return values.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row + col * dims.at(0)]; }
};

/// Read-only view of a MAT v7.3 file. v7.3 files are HDF5 containers with a
/// 512-byte MATLAB user block in front; HDF5 stores the arrays with their
/// dimensions reversed.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);
  ~Reader();
  Reader(Reader&&) noexcept;
  Reader& operator=(Reader&&) noexcept;
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(std::string_view dataset) const;
  /// Throws Error(MissingField) when the dataset is absent.
  Array read(std::string_view dataset) const;
  /// Decodes a MATLAB char array (UTF-16 code units) into a string.
  std::string read_string(std::string_view dataset) const;

 private:
  std::int64_t file_ = -1;
  std::filesystem::path path_;
};

/// Version of the linked HDF5 library, e.g. "1.10.10".
std::string hdf5_version();

enum class StorageType { Double, Int16, UInt8, UInt16 };

/// Writes MAT v7.3 containers readable by MATLAB's load() and by Reader.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void create_struct(std::string_view group);
  /// values must be column-major with dims in MATLAB order.
  void write(std::string_view dataset, std::span<const std::size_t> dims,
             std::span<const double> values, StorageType storage,
             std::string_view matlab_class, bool compress = false);
  void write_string(std::string_view dataset, std::string_view text);
  /// Flushes the file and stamps the MATLAB header into the user block.
  void close();

 private:
  std::int64_t file_ = -1;
  std::filesystem::path path_;
};

}  // namespace brainseg::mat
