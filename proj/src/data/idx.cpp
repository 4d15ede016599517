#include <cmath>
#include <fstream>
#include <iterator>

#include "pai/data.hpp"

namespace pai {
namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t at) {
  return static_cast<std::uint32_t>(buf[at]) << 24 | static_cast<std::uint32_t>(buf[at + 1]) << 16 |
         static_cast<std::uint32_t>(buf[at + 2]) << 8 | static_cast<std::uint32_t>(buf[at + 3]);
}

void put_be32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v >> 24));
  buf.push_back(static_cast<std::uint8_t>(v >> 16));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "idx: cannot open " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "idx: " + path.string() + ": ";
  if (buf.size() < 4) throw IdxError(IdxError::Kind::truncated, where + "file shorter than the magic number");
  IdxArray arr;
  arr.magic = read_be32(buf, 0);
  if (arr.magic != expected_magic) {
    throw IdxError(IdxError::Kind::bad_magic,
                   where + "bad magic " + hex32(arr.magic) + ", expected " + hex32(expected_magic));
  }
  const std::size_t ndims = arr.magic & 0xffu;
  const std::size_t header = 4 + 4 * ndims;
  if (buf.size() < header) throw IdxError(IdxError::Kind::truncated, where + "truncated dimension header");
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    arr.dims.push_back(read_be32(buf, 4 + 4 * d));
    total *= arr.dims.back();
  }
  if (buf.size() < header + total) {
    throw IdxError(IdxError::Kind::truncated, where + "expected " + std::to_string(total) + " data bytes, found " +
                                                  std::to_string(buf.size() - header));
  }
  if (buf.size() > header + total) {
    throw IdxError(IdxError::Kind::count_mismatch, where + std::to_string(buf.size() - header - total) +
                                                       " trailing bytes after the declared payload");
  }
  arr.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(header), buf.end());
  return arr;
}

void write_idx(const IdxArray& array, const std::filesystem::path& path) {
  if ((array.magic & 0xffu) != array.dims.size() || (array.magic & 0xffffff00u) != 0x00000800u) {
    throw std::invalid_argument("write_idx: magic " + hex32(array.magic) + " inconsistent with " +
                                std::to_string(array.dims.size()) + " dimensions");
  }
  std::size_t total = 1;
  for (auto d : array.dims) total *= d;
  if (total != array.bytes.size()) throw std::invalid_argument("write_idx: dims do not match payload size");
  std::vector<std::uint8_t> buf;
  put_be32(buf, array.magic);
  for (auto d : array.dims) put_be32(buf, d);
  buf.insert(buf.end(), array.bytes.begin(), array.bytes.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError(IdxError::Kind::io, "idx: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const IdxArray images = read_idx(images_path, kIdxImagesMagic);
  const IdxArray labels = read_idx(labels_path, kIdxLabelsMagic);
  if (images.dims[0] != labels.dims[0]) {
    throw IdxError(IdxError::Kind::count_mismatch, "idx: " + std::to_string(images.dims[0]) + " images but " +
                                                       std::to_string(labels.dims[0]) + " labels");
  }
  if (images.dims[0] == 0) throw IdxError(IdxError::Kind::count_mismatch, "idx: no examples");
  Dataset d;
  d.feature_shape = {1, images.dims[1], images.dims[2]};
  d.inputs.reserve(images.bytes.size());
  for (std::uint8_t b : images.bytes) d.inputs.push_back(static_cast<double>(b) / 255.0);
  int max_label = 0;
  for (std::uint8_t b : labels.bytes) {
    d.labels.push_back(b);
    max_label = std::max<int>(max_label, b);
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  data.validate();
  if (data.feature_shape.empty() || data.feature_shape.size() > 3) {
    throw std::invalid_argument("save_idx: feature shape must be 1-3 dimensional");
  }
  IdxArray images;
  images.magic = kIdxImagesMagic;
  // IDX images are (n, rows, cols); drop a leading channel of 1 and pad 1-D features.
  Shape fs = data.feature_shape;
  if (fs.size() == 3) {
    if (fs[0] != 1) throw std::invalid_argument("save_idx: only single-channel images are supported");
    fs.erase(fs.begin());
  } else if (fs.size() == 1) {
    fs.insert(fs.begin(), 1);
  }
  images.dims = {static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(fs[0]),
                 static_cast<std::uint32_t>(fs[1])};
  images.bytes.reserve(data.inputs.size());
  for (double v : data.inputs) {
    const double scaled = v * 255.0;
    const double r = std::round(scaled);
    if (r < 0.0 || r > 255.0 || std::abs(scaled - r) > 1e-6) {
      throw std::invalid_argument("save_idx: input value is not a byte/255 pixel");
    }
    images.bytes.push_back(static_cast<std::uint8_t>(r));
  }
  IdxArray labels;
  labels.magic = kIdxLabelsMagic;
  labels.dims = {static_cast<std::uint32_t>(data.size())};
  for (int y : data.labels) {
    if (y > 255) throw std::invalid_argument("save_idx: label does not fit in a byte");
    labels.bytes.push_back(static_cast<std::uint8_t>(y));
  }
  write_idx(images, images_path);
  write_idx(labels, labels_path);
}

}  // namespace pai
