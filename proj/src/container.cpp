#include "nwc/container.hpp"

#include <algorithm>
#include <set>

#include "nwc/bytes.hpp"
#include "nwc/half.hpp"

namespace nwc::prep {

namespace {
constexpr std::uint8_t kMagic[4] = {0x4E, 0x57, 0x54, 0x00};
constexpr std::uint8_t kVersion = 1;

void validate(const Tensor& t) {
  if (t.shape.empty() || t.shape.size() > 2) throw FormatError("tensor '" + t.name + "': ndim must be 1 or 2");
  if (t.values.size() != t.element_count())
    throw FormatError("tensor '" + t.name + "': value count does not match shape");
  if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long");
}
}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : shape) n *= d;
  return n;
}

Matrix Tensor::as_matrix() const {
  if (shape.size() == 2) return Matrix(shape[0], shape[1], values);
  if (shape.size() == 1) return Matrix(1, shape[0], values);
  throw FormatError("tensor '" + name + "' is not 1-D or 2-D");
}

Tensor Tensor::from_matrix(std::string name, const Matrix& m, DType dtype) {
  return Tensor{std::move(name), dtype, {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, m.data};
}

Tensor Tensor::from_vector(std::string name, std::span<const float> v, DType dtype) {
  return Tensor{std::move(name), dtype, {static_cast<std::uint32_t>(v.size())}, {v.begin(), v.end()}};
}

const Tensor* TensorContainer::find(std::string_view name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Tensor& t) { return t.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

const Tensor& TensorContainer::at(std::string_view name) const {
  if (const Tensor* t = find(name)) return *t;
  throw FormatError("container has no tensor named '" + std::string(name) + "'");
}

void TensorContainer::add(Tensor t) {
  if (find(t.name)) throw FormatError("duplicate tensor name '" + t.name + "'");
  validate(t);
  tensors.push_back(std::move(t));
}

std::vector<std::uint8_t> encode_container(const TensorContainer& c) {
  ByteWriter w;
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  std::set<std::string> names;
  for (const Tensor& t : c.tensors) {
    validate(t);
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::uint32_t d : t.shape) w.u32(d);
    if (t.dtype == DType::kF32) {
      w.f32s(t.values);
    } else {
      for (float v : t.values) w.u16(float_to_half(v));
    }
  }
  return w.take();
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not an NWT container (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kVersion) throw UnknownVersionError("unsupported NWT version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  TensorContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const std::uint16_t name_len = r.u16();
    t.name = r.str(name_len);
    const std::uint8_t dtype = r.u8();
    if (dtype > 1) throw FormatError("tensor '" + t.name + "': unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const std::uint8_t ndim = r.u8();
    if (ndim < 1 || ndim > 2) throw FormatError("tensor '" + t.name + "': ndim must be 1 or 2");
    for (std::uint8_t d = 0; d < ndim; ++d) t.shape.push_back(r.u32());
    const std::size_t n = t.element_count();
    const std::size_t width = t.dtype == DType::kF32 ? 4 : 2;
    if (r.remaining() / width < n) throw TruncatedError("tensor '" + t.name + "': payload truncated");
    t.values.resize(n);
    if (t.dtype == DType::kF32) {
      r.f32s(t.values);
    } else {
      for (float& v : t.values) v = half_to_float(r.u16());
    }
    c.add(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after NWT container");
  return c;
}

void write_container(const TensorContainer& c, const std::filesystem::path& path) {
  write_file(path, encode_container(c));
}

TensorContainer read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

}  // namespace nwc::prep
