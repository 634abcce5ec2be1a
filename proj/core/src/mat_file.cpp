#include "brainseg/mat_file.hpp"

#include <hdf5.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include "brainseg/error.hpp"

namespace brainseg::mat {
namespace {

constexpr hsize_t kUserBlockSize = 512;

/// Owns one HDF5 identifier.
class Handle {
 public:
  using Closer = herr_t (*)(hid_t);
  Handle(hid_t id, Closer closer) : id_(id), closer_(closer) {}
  ~Handle() {
    if (id_ >= 0) closer_(id_);
  }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  hid_t get() const { return id_; }
  bool valid() const { return id_ >= 0; }

 private:
  hid_t id_;
  Closer closer_;
};

void silence_hdf5() {
  static const bool once = [] {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    return true;
  }();
  (void)once;
}

std::string read_string_attribute(hid_t object, const char* name) {
  if (H5Aexists(object, name) <= 0) return {};
  Handle attr(H5Aopen(object, name, H5P_DEFAULT), H5Aclose);
  if (!attr.valid()) return {};
  Handle type(H5Aget_type(attr.get()), H5Tclose);
  if (H5Tget_class(type.get()) != H5T_STRING) return {};
  const std::size_t size = H5Tget_size(type.get());
  std::string out(size, '\0');
  Handle mem(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(mem.get(), size);
  if (H5Aread(attr.get(), mem.get(), out.data()) < 0) return {};
  out.erase(std::find(out.begin(), out.end(), '\0'), out.end());
  return out;
}

void write_string_attribute(hid_t object, const char* name, std::string_view value) {
  Handle space(H5Screate(H5S_SCALAR), H5Sclose);
  Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(type.get(), value.size());
  Handle attr(H5Acreate2(object, name, type.get(), space.get(), H5P_DEFAULT, H5P_DEFAULT),
              H5Aclose);
  std::string buf(value);
  H5Awrite(attr.get(), type.get(), buf.data());
}

void write_uint_attribute(hid_t object, const char* name, unsigned value) {
  Handle space(H5Screate(H5S_SCALAR), H5Sclose);
  Handle attr(H5Acreate2(object, name, H5T_STD_I32LE, space.get(), H5P_DEFAULT, H5P_DEFAULT),
              H5Aclose);
  int v = static_cast<int>(value);
  H5Awrite(attr.get(), H5T_NATIVE_INT, &v);
}

hid_t file_type_for(StorageType storage) {
  switch (storage) {
    case StorageType::Double: return H5T_IEEE_F64LE;
    case StorageType::Int16: return H5T_STD_I16LE;
    case StorageType::UInt8: return H5T_STD_U8LE;
    case StorageType::UInt16: return H5T_STD_U16LE;
  }
  return H5T_IEEE_F64LE;
}

}  // namespace

std::string hdf5_version() {
  unsigned major = 0, minor = 0, release = 0;
  H5get_libversion(&major, &minor, &release);
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(release);
}

Reader::Reader(const std::filesystem::path& path) : path_(path) {
  silence_hdf5();
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::UnreadableContainer, path.string() + ": no such file");
  }
  if (H5Fis_hdf5(path.c_str()) <= 0) {
    throw Error(ErrorCode::UnreadableContainer,
                path.string() + ": not an HDF5-based (v7.3) MAT container");
  }
  file_ = H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
  if (file_ < 0) throw Error(ErrorCode::UnreadableContainer, path.string() + ": open failed");
}

Reader::~Reader() {
  if (file_ >= 0) H5Fclose(file_);
}

Reader::Reader(Reader&& other) noexcept : file_(other.file_), path_(std::move(other.path_)) {
  other.file_ = -1;
}

Reader& Reader::operator=(Reader&& other) noexcept {
  if (this != &other) {
    if (file_ >= 0) H5Fclose(file_);
    file_ = other.file_;
    path_ = std::move(other.path_);
    other.file_ = -1;
  }
  return *this;
}

bool Reader::has(std::string_view dataset) const {
  // H5Lexists has to be walked one component at a time.
  std::string path(dataset);
  std::size_t pos = 0;
  while (true) {
    pos = path.find('/', pos + 1);
    const std::string prefix = path.substr(0, pos);
    if (!prefix.empty() && prefix != "/" && H5Lexists(file_, prefix.c_str(), H5P_DEFAULT) <= 0) {
      return false;
    }
    if (pos == std::string::npos) return true;
  }
}

Array Reader::read(std::string_view dataset) const {
  const std::string name(dataset);
  if (!has(name)) {
    throw Error(ErrorCode::MissingField, path_.string() + ": missing entry '" + name + "'");
  }
  Handle ds(H5Dopen2(file_, name.c_str(), H5P_DEFAULT), H5Dclose);
  if (!ds.valid()) {
    throw Error(ErrorCode::MissingField, path_.string() + ": '" + name + "' is not a dataset");
  }
  Handle type(H5Dget_type(ds.get()), H5Tclose);
  const H5T_class_t cls = H5Tget_class(type.get());
  if (cls != H5T_INTEGER && cls != H5T_FLOAT) {
    throw Error(ErrorCode::UnreadableContainer,
                path_.string() + ": '" + name + "' is not numeric");
  }

  Array out;
  out.matlab_class = read_string_attribute(ds.get(), "MATLAB_class");

  Handle space(H5Dget_space(ds.get()), H5Sclose);
  const int rank = H5Sget_simple_extent_ndims(space.get());
  std::vector<hsize_t> h5dims(static_cast<std::size_t>(std::max(rank, 0)));
  if (rank > 0) H5Sget_simple_extent_dims(space.get(), h5dims.data(), nullptr);
  out.dims.assign(h5dims.rbegin(), h5dims.rend());

  // MATLAB writes empty arrays as a placeholder holding the real dims.
  if (H5Aexists(ds.get(), "MATLAB_empty") > 0) {
    out.dims.assign(out.dims.size(), 0);
    return out;
  }

  std::size_t count = 1;
  for (auto d : h5dims) count *= static_cast<std::size_t>(d);
  out.values.resize(count);
  if (count > 0 &&
      H5Dread(ds.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.values.data()) < 0) {
    throw Error(ErrorCode::UnreadableContainer, path_.string() + ": read of '" + name + "' failed");
  }
  return out;
}

std::string Reader::read_string(std::string_view dataset) const {
  const Array chars = read(dataset);
  std::string out;
  out.reserve(chars.numel());
  for (double c : chars.values) {
    const auto code = static_cast<unsigned>(c);
    // Patient ids are ASCII; anything wider is replaced.
    out.push_back(code < 128 ? static_cast<char>(code) : '?');
  }
  return out;
}

Writer::Writer(const std::filesystem::path& path) : path_(path) {
  silence_hdf5();
  Handle fcpl(H5Pcreate(H5P_FILE_CREATE), H5Pclose);
  H5Pset_userblock(fcpl.get(), kUserBlockSize);
  file_ = H5Fcreate(path.c_str(), H5F_ACC_TRUNC, fcpl.get(), H5P_DEFAULT);
  if (file_ < 0) throw Error(ErrorCode::UnwritablePath, path.string() + ": cannot create");
}

Writer::~Writer() {
  try {
    close();
  } catch (...) {
  }
}

void Writer::create_struct(std::string_view group) {
  const std::string name(group);
  Handle g(H5Gcreate2(file_, name.c_str(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Gclose);
  if (!g.valid()) throw Error(ErrorCode::UnwritablePath, "cannot create group " + name);
  write_string_attribute(g.get(), "MATLAB_class", "struct");
}

void Writer::write(std::string_view dataset, std::span<const std::size_t> dims,
                   std::span<const double> values, StorageType storage,
                   std::string_view matlab_class, bool compress) {
  const std::string name(dataset);
  std::vector<hsize_t> h5dims(dims.rbegin(), dims.rend());
  Handle space(H5Screate_simple(static_cast<int>(h5dims.size()), h5dims.data(), nullptr),
               H5Sclose);
  Handle dcpl(H5Pcreate(H5P_DATASET_CREATE), H5Pclose);
  if (compress) {
    H5Pset_chunk(dcpl.get(), static_cast<int>(h5dims.size()), h5dims.data());
    H5Pset_deflate(dcpl.get(), 6);
  }
  Handle ds(H5Dcreate2(file_, name.c_str(), file_type_for(storage), space.get(), H5P_DEFAULT,
                       dcpl.get(), H5P_DEFAULT),
            H5Dclose);
  if (!ds.valid()) throw Error(ErrorCode::UnwritablePath, "cannot create dataset " + name);
  if (H5Dwrite(ds.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, values.data()) < 0) {
    throw Error(ErrorCode::UnwritablePath, "cannot write dataset " + name);
  }
  write_string_attribute(ds.get(), "MATLAB_class", matlab_class);
  if (matlab_class == "logical") write_uint_attribute(ds.get(), "MATLAB_int_decode", 1);
  if (matlab_class == "char") write_uint_attribute(ds.get(), "MATLAB_int_decode", 2);
}

void Writer::write_string(std::string_view dataset, std::string_view text) {
  std::vector<double> codes(text.begin(), text.end());
  const std::array<std::size_t, 2> dims{1, text.size()};
  write(dataset, dims, codes, StorageType::UInt16, "char");
}

void Writer::close() {
  if (file_ < 0) return;
  H5Fclose(file_);
  file_ = -1;

  // 128-byte MAT header: 116 bytes of text, 8-byte subsystem offset,
  // version 0x0200 and the "IM" endian indicator.
  std::array<char, 128> header{};
  std::memset(header.data(), ' ', 116);
  const char text[] = "MATLAB 7.3 MAT-file, Platform: GLNXA64, Created on: brainseg HDF5 schema 1.00 .";
  std::memcpy(header.data(), text, sizeof(text) - 1);
  header[124] = 0x00;
  header[125] = 0x02;
  header[126] = 'I';
  header[127] = 'M';
  std::fstream out(path_, std::ios::in | std::ios::out | std::ios::binary);
  if (!out) throw Error(ErrorCode::UnwritablePath, path_.string() + ": cannot stamp header");
  out.write(header.data(), header.size());
}

}  // namespace brainseg::mat
